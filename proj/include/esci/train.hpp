#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "esci/net.hpp"
#include "esci/sci.hpp"

namespace esci {

struct TrainConfig {
  double lr_initial = 1e-4;
  double lr_final = 1e-5;
  std::size_t epochs_phase1 = 30;  // 300 : 40 in the full schedule
  std::size_t epochs_phase2 = 4;
  std::size_t batch_size = 2;
  std::size_t crop_size = 64;
  bool random_crop = true;
  bool random_scale = true;  // zoom factor drawn from [1, 1.25]
  bool random_flip = true;
  std::uint64_t seed = 0;

  // Synthetic data and sensing setup.
  std::size_t dataset_size = 4;
  std::size_t frames = 8;
  std::size_t source_size = 80;  // side of the generated videos before cropping
  double mask_density = 0.5;
  double noise_sigma = 0.0;

  double grad_clip = 0.0;  // global L2 norm; 0 disables
  std::size_t max_steps = 0;  // 0: run all epochs
  std::size_t prefetch_depth = 2;

  /// Throws ConfigError naming the first violated constraint.
  void validate() const;
};

/// Moving-shape videos [B,C,H,W] in [0,1] (C = 1 or 3): a smooth background
/// gradient with 2-4 rectangles and discs translating at 1-3 px per frame.
/// Deterministic in `seed`.
std::vector<VideoCube<float>> make_synthetic_dataset(std::size_t count, std::size_t frames, std::size_t height,
                                                     std::size_t width, std::uint64_t seed,
                                                     std::size_t channels = 1);

/// Mean of squared differences; differentiable in `pred`.
template <typename T>
Tensor<T> mse_loss(const Tensor<T>& pred, const Tensor<T>& truth);
template <typename T>
Tensor<T> mse_loss(const VideoCube<T>& pred, const VideoCube<T>& truth) {
  return mse_loss(pred.frames, truth.frames);
}

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::size_t step = 0;
  std::vector<std::vector<double>> m, v;  // lazily sized on the first step
};

/// One bias-corrected Adam update of every parameter from its stored gradient.
/// Throws NumericError naming the parameter if a gradient is not finite.
template <typename T>
void adam_step(const ParamStore<T>& params, AdamState& state, double lr, const AdamOptions& opt = {});

/// Scales all gradients so their global L2 norm is at most `max_norm`; returns the norm before scaling.
template <typename T>
double clip_grad_norm(const ParamStore<T>& params, double max_norm);

/// Random crop / zoom / flip of a [B,C,H,W] video to `crop` x `crop`, applied
/// identically to every frame. Bilinear resampling keeps values in range.
VideoCube<float> augment(const VideoCube<float>& video, std::size_t crop, bool random_crop, bool random_scale,
                         bool random_flip, std::uint64_t seed);

struct TrainSample {
  VideoCube<float> truth;
  Tensor<float> x_e;
};

/// FIFO queue with a fixed capacity. close() wakes all waiters; pop() on a
/// closed, drained queue returns nullopt.
template <typename V>
class BoundedQueue {
 public:
  explicit BoundedQueue(std::size_t capacity) : capacity_(capacity == 0 ? 1 : capacity) {}

  bool push(V value) {
    std::unique_lock lock(mu_);
    not_full_.wait(lock, [&] { return closed_ || items_.size() < capacity_; });
    if (closed_) return false;
    items_.push_back(std::move(value));
    not_empty_.notify_one();
    return true;
  }

  std::optional<V> pop() {
    std::unique_lock lock(mu_);
    not_empty_.wait(lock, [&] { return closed_ || !items_.empty(); });
    if (items_.empty()) return std::nullopt;
    V v = std::move(items_.front());
    items_.pop_front();
    not_full_.notify_one();
    return v;
  }

  void close() {
    std::lock_guard lock(mu_);
    closed_ = true;
    not_empty_.notify_all();
    not_full_.notify_all();
  }

 private:
  std::size_t capacity_;
  std::deque<V> items_;
  bool closed_ = false;
  std::mutex mu_;
  std::condition_variable not_empty_, not_full_;
};

struct LossRecord {
  std::size_t step = 0;
  std::size_t epoch = 0;
  double lr = 0;
  double loss = 0;
};

struct TrainResult {
  EfficientSci<float> net;
  MaskSet<float> masks;
  std::vector<LossRecord> history;  // one entry per optimizer step
  std::vector<double> epoch_loss;   // mean loss per completed epoch
};

using StepCallback = std::function<void(const LossRecord&)>;

/// Trains on `dataset` with fixed masks. Phase 1 uses lr_initial, phase 2 lr_final.
/// Throws NumericError with step diagnostics if the loss diverges.
TrainResult train(const TrainConfig& config, const NetworkConfig& net_config,
                  const std::vector<VideoCube<float>>& dataset, const StepCallback& on_step = {});
/// As above on make_synthetic_dataset(config.dataset_size, ...).
TrainResult train(const TrainConfig& config, const NetworkConfig& net_config, const StepCallback& on_step = {});

/// CSV with header `step,epoch,lr,loss`.
std::string loss_history_csv(const std::vector<LossRecord>& history);

}  // namespace esci
