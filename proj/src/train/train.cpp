#include <algorithm>
#include <cmath>
#include <exception>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

#include "esci/train.hpp"

namespace esci {

void TrainConfig::validate() const {
  if (!(lr_initial > 0) || !(lr_final > 0)) throw ConfigError("learning rates must be positive");
  if (crop_size == 0 || crop_size % 2 != 0) throw ConfigError("crop_size must be even and positive");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (frames == 0) throw ConfigError("frames must be positive");
  if (dataset_size == 0) throw ConfigError("dataset_size must be positive");
  if (source_size < crop_size) throw ConfigError("source_size must be at least crop_size");
  if (!(mask_density > 0 && mask_density <= 1)) throw ConfigError("mask_density must lie in (0, 1]");
  if (noise_sigma < 0) throw ConfigError("noise_sigma must be non-negative");
  if (grad_clip < 0) throw ConfigError("grad_clip must be non-negative");
}

template <typename T>
Tensor<T> mse_loss(const Tensor<T>& pred, const Tensor<T>& truth) {
  if (pred.dims() != truth.dims())
    throw ShapeError("mse_loss: " + shape_str(pred.dims()) + " vs " + shape_str(truth.dims()));
  const Tensor<T> d = sub(pred, truth);
  return mean(mul(d, d));
}

template <typename T>
void adam_step(const ParamStore<T>& params, AdamState& state, double lr, const AdamOptions& opt) {
  const auto& entries = params.entries();
  if (state.m.empty()) {
    for (const auto& [name, p] : entries) {
      state.m.emplace_back(p.numel(), 0.0);
      state.v.emplace_back(p.numel(), 0.0);
    }
  }
  if (state.m.size() != entries.size()) throw std::logic_error("adam_step: state does not match parameters");
  for (const auto& [name, p] : entries)
    if (p.has_grad()) check_finite<T>(p.grad(), ("gradient of " + name).c_str());

  ++state.step;
  const double c1 = 1.0 - std::pow(opt.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(opt.beta2, static_cast<double>(state.step));
  for (std::size_t k = 0; k < entries.size(); ++k) {
    Tensor<T> p = entries[k].second;
    if (!p.has_grad()) continue;
    const auto g = p.grad();
    auto x = p.mutable_data();
    auto& m = state.m[k];
    auto& v = state.v[k];
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double gi = g[i];
      m[i] = opt.beta1 * m[i] + (1 - opt.beta1) * gi;
      v[i] = opt.beta2 * v[i] + (1 - opt.beta2) * gi * gi;
      x[i] = static_cast<T>(x[i] - lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + opt.eps));
    }
  }
}

template <typename T>
double clip_grad_norm(const ParamStore<T>& params, double max_norm) {
  double sq = 0;
  for (const auto& [name, p] : params.entries())
    if (p.has_grad())
      for (T g : p.grad()) sq += static_cast<double>(g) * g;
  const double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (const auto& [name, p] : params.entries())
      if (p.has_grad())
        for (T& g : p.grad()) g = static_cast<T>(g * s);
  }
  return norm;
}

TrainResult train(const TrainConfig& config, const NetworkConfig& net_config,
                  const std::vector<VideoCube<float>>& dataset, const StepCallback& on_step) {
  config.validate();
  net_config.validate();
  if (dataset.empty()) throw ConfigError("train: dataset is empty");
  const std::size_t want_channels = net_config.color() ? 3 : 1;
  for (const auto& v : dataset)
    if (v.frames.rank() != 4 || v.channels() != want_channels || v.count() != config.frames)
      throw ShapeError("train: sample " + shape_str(v.frames.dims()) + " does not match " +
                       std::to_string(config.frames) + " frames of " + std::to_string(want_channels) + " channel(s)");

  TrainResult result{EfficientSci<float>::build(net_config, config.seed),
                     generate_masks<float>(config.frames, config.crop_size, config.crop_size, config.mask_density,
                                           config.seed + 1),
                     {},
                     {}};
  const std::size_t epochs = config.epochs_phase1 + config.epochs_phase2;
  const std::size_t n = dataset.size();
  const std::size_t steps_per_epoch = (n + config.batch_size - 1) / config.batch_size;
  if (epochs == 0) return result;

  // Producer: augments, encodes and initializes samples in a fixed order.
  BoundedQueue<TrainSample> queue(config.prefetch_depth);
  std::exception_ptr producer_error;
  const MaskSet<float> masks = result.masks;
  std::jthread producer([&](std::stop_token stop) {
    try {
      std::mt19937_64 rng(config.seed + 2);
      std::vector<std::size_t> order(n);
      for (std::size_t e = 0; e < epochs && !stop.stop_requested(); ++e) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t idx : order) {
          VideoCube<float> truth = augment(dataset[idx], config.crop_size, config.random_crop, config.random_scale,
                                           config.random_flip, rng());
          const Measurement<float> y = encode(truth, masks, config.noise_sigma, rng());
          Tensor<float> x_e = estimation_init(y, masks);
          if (!queue.push(TrainSample{std::move(truth), std::move(x_e)})) return;
        }
      }
    } catch (...) {
      producer_error = std::current_exception();
    }
    queue.close();
  });
  struct CloseOnExit {
    BoundedQueue<TrainSample>& q;
    ~CloseOnExit() { q.close(); }
  } close_on_exit{queue};

  const auto& params = result.net.params();
  AdamState adam;
  std::size_t step = 0;
  double last_loss = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t e = 0; e < epochs; ++e) {
    const double lr = e < config.epochs_phase1 ? config.lr_initial : config.lr_final;
    double epoch_total = 0;
    std::size_t epoch_steps = 0;
    for (std::size_t s = 0; s < steps_per_epoch; ++s) {
      if (config.max_steps > 0 && step >= config.max_steps) break;
      const std::size_t count = std::min(config.batch_size, n - s * config.batch_size);
      std::vector<TrainSample> batch;
      for (std::size_t k = 0; k < count; ++k) {
        auto item = queue.pop();
        if (!item) {
          if (producer_error) std::rethrow_exception(producer_error);
          throw std::logic_error("train: data producer stopped early");
        }
        batch.push_back(std::move(*item));
      }

      double loss_value = 0;
      try {
        Tape<float> tape;
        TapeScope<float> scope(tape);
        params.zero_grad();
        Tensor<float> total;
        for (const auto& sample : batch) {
          Tensor<float> l = mse_loss(result.net.forward(sample.x_e), sample.truth.frames);
          total = total.defined() ? add(total, l) : l;
        }
        const Tensor<float> loss = mul_scalar(total, 1.0f / static_cast<float>(batch.size()));
        loss_value = loss.item();
        if (!std::isfinite(loss_value)) throw NumericError("loss is not finite");
        tape.backward(loss);
        if (config.grad_clip > 0) clip_grad_norm(params, config.grad_clip);
        adam_step(params, adam, lr);
      } catch (const NumericError& err) {
        std::ostringstream os;
        os << "training diverged at step " << step << " (epoch " << e << ", lr " << lr << "); last finite loss "
           << last_loss << ": " << err.what();
        throw NumericError(os.str());
      }

      last_loss = loss_value;
      const LossRecord rec{step, e, lr, loss_value};
      result.history.push_back(rec);
      if (on_step) on_step(rec);
      epoch_total += loss_value;
      ++epoch_steps;
      ++step;
    }
    if (epoch_steps == 0) break;
    result.epoch_loss.push_back(epoch_total / static_cast<double>(epoch_steps));
  }
  producer.request_stop();
  queue.close();
  return result;
}

TrainResult train(const TrainConfig& config, const NetworkConfig& net_config, const StepCallback& on_step) {
  config.validate();
  const auto data = make_synthetic_dataset(config.dataset_size, config.frames, config.source_size, config.source_size,
                                           config.seed + 3, net_config.color() ? 3 : 1);
  return train(config, net_config, data, on_step);
}

std::string loss_history_csv(const std::vector<LossRecord>& history) {
  std::ostringstream os;
  os << "step,epoch,lr,loss\n" << std::setprecision(9);
  for (const auto& r : history) os << r.step << ',' << r.epoch << ',' << r.lr << ',' << r.loss << '\n';
  return os.str();
}

template Tensor<float> mse_loss(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> mse_loss(const Tensor<double>&, const Tensor<double>&);
template void adam_step(const ParamStore<float>&, AdamState&, double, const AdamOptions&);
template void adam_step(const ParamStore<double>&, AdamState&, double, const AdamOptions&);
template double clip_grad_norm(const ParamStore<float>&, double);
template double clip_grad_norm(const ParamStore<double>&, double);

}  // namespace esci
