#include "esci/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace esci {

bool GradCheckReport::passed() const {
  return !leaves.empty() && std::all_of(leaves.begin(), leaves.end(), [](const LeafCheck& l) { return l.passed; });
}

std::string GradCheckReport::summary() const {
  std::ostringstream os;
  for (const auto& l : leaves) {
    os << (l.passed ? "ok   " : "FAIL ") << l.name << " max_rel_err=" << l.max_rel_error << " @" << l.worst_index;
    if (!l.failure.empty()) os << " (" << l.failure << ")";
    os << '\n';
  }
  return os.str();
}

GradCheckReport grad_check(const std::function<Tensor<double>()>& f, const std::vector<NamedLeaf>& leaves,
                           GradCheckOptions opt) {
  GradCheckReport report;
  std::vector<std::vector<double>> analytic;
  for (const auto& [name, leaf] : leaves) {
    Tensor<double> t = leaf;
    t.set_requires_grad(true);
    t.zero_grad();
    report.leaves.push_back({name, 0.0, 0, false, {}});
  }

  try {
    Tape<double> tape;
    Tensor<double> loss;
    {
      TapeScope<double> scope(tape);
      loss = f();
    }
    tape.backward(loss);
    for (const auto& [name, leaf] : leaves) {
      auto g = leaf.grad();
      analytic.emplace_back(g.begin(), g.end());
    }
  } catch (const NumericError& e) {
    for (auto& l : report.leaves) l.failure = std::string("reverse pass: ") + e.what();
    return report;
  }

  NoGradScope<double> no_grad;
  auto eval = [&]() -> double {
    const double v = f().item();
    if (!std::isfinite(v)) throw NumericError("finite-difference evaluation returned a non-finite loss");
    return v;
  };
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    Tensor<double> leaf = leaves[li].second;
    auto data = leaf.mutable_data();
    LeafCheck& rep = report.leaves[li];
    const std::vector<double> backup(data.begin(), data.end());
    try {
      for (std::size_t i = 0; i < data.size(); ++i) {
        const double saved = data[i];
        data[i] = saved + opt.eps;
        const double up = eval();
        data[i] = saved - opt.eps;
        const double down = eval();
        data[i] = saved;
        const double fd = (up - down) / (2.0 * opt.eps);
        const double ad = analytic[li][i];
        const double denom = std::max({std::abs(ad), std::abs(fd), opt.floor});
        const double rel = std::abs(ad - fd) / denom;
        if (rel > rep.max_rel_error) {
          rep.max_rel_error = rel;
          rep.worst_index = i;
        }
      }
      rep.passed = rep.max_rel_error <= opt.tol;
    } catch (const NumericError& e) {
      std::copy(backup.begin(), backup.end(), data.begin());
      rep.failure = std::string("finite differences: ") + e.what();
      rep.passed = false;
    }
  }
  return report;
}

}  // namespace esci
