#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "esci/tensor.hpp"

namespace esci {

struct GradCheckOptions {
  double eps = 1e-5;
  double tol = 1e-4;
  // Gradients below this magnitude are compared in absolute terms; central
  // differences carry rounding noise of roughly 1e-16 * |f| / eps.
  double floor = 1e-6;
};

struct LeafCheck {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  bool passed = false;
  std::string failure;  // set when evaluation itself failed (non-finite values)
};

struct GradCheckReport {
  std::vector<LeafCheck> leaves;
  bool passed() const;
  std::string summary() const;
};

using NamedLeaf = std::pair<std::string, Tensor<double>>;

/// Compares reverse-mode gradients of the scalar `f` against central finite
/// differences, leaf by leaf. Relative error per element is
/// |g_ad - g_fd| / max(|g_ad|, |g_fd|, floor). `f` must rebuild its graph from
/// the leaves on every call.
GradCheckReport grad_check(const std::function<Tensor<double>()>& f, const std::vector<NamedLeaf>& leaves,
                           GradCheckOptions opt = {});

}  // namespace esci
