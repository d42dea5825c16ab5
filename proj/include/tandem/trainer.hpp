#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include "tandem/datasets.hpp"
#include "tandem/error.hpp"
#include "tandem/network.hpp"
#include "tandem/ops.hpp"
#include "tandem/rng.hpp"

namespace tandem {

/// Piecewise-constant learning rate: `rate` applies through `until_epoch`
/// inclusive.
struct LrStage {
  std::size_t until_epoch = 0;
  double rate = 0.0;
};

struct TrainConfig {
  std::size_t epochs = 15;
  std::size_t batch_size = 128;
  double base_lr = 0.001;
  std::vector<LrStage> lr_schedule;  // empty: staged_schedule(epochs, base_lr)
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  double weight_decay = 2e-4;
  double dropout_rate = 0.15;
  double init_base_std = 0.7;
  bool augment = true;
  std::uint64_t seed = 1;
};

/// One row per completed epoch; accuracies in [0, 1].
struct MetricsRow {
  std::size_t epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
};

struct MetricsLog {
  std::vector<MetricsRow> rows;
};

/// The reference schedule drops the rate to 1/5 and then 1/25 of base at 60%
/// and 80% of the run, matching boundaries of 90/120 in a 150-epoch run.
/// Boundaries for other totals scale proportionally, rounded to nearest.
inline std::vector<LrStage> staged_schedule(std::size_t total_epochs,
                                            double base_lr = 0.001) {
  if (total_epochs == 0) {
    throw std::invalid_argument("schedule: total epochs must be positive");
  }
  const auto scaled = [&](double epochs150) {
    return static_cast<std::size_t>(
        std::llround(epochs150 * static_cast<double>(total_epochs) / 150.0));
  };
  std::vector<LrStage> stages{{scaled(90.0), base_lr},
                              {scaled(120.0), base_lr / 5.0},
                              {total_epochs, base_lr / 25.0}};
  std::vector<LrStage> out;
  for (const auto& stage : stages) {
    if (!out.empty() && stage.until_epoch <= out.back().until_epoch) continue;
    out.push_back(stage);
  }
  return out;
}

inline void validate_schedule(const std::vector<LrStage>& schedule,
                              std::size_t total_epochs) {
  if (schedule.empty()) throw std::invalid_argument("schedule: empty");
  std::size_t prev = 0;
  for (const auto& stage : schedule) {
    if (stage.until_epoch <= prev) {
      throw std::invalid_argument("schedule: boundaries must strictly increase");
    }
    if (!(stage.rate >= 0.0) || !std::isfinite(stage.rate)) {
      throw std::invalid_argument("schedule: rates must be finite and >= 0");
    }
    prev = stage.until_epoch;
  }
  if (schedule.back().until_epoch < total_epochs) {
    throw std::invalid_argument("schedule: last boundary must cover the run");
  }
}

inline double lr_at_epoch(const std::vector<LrStage>& schedule,
                          std::size_t epoch, std::size_t total_epochs) {
  if (epoch < 1 || epoch > total_epochs) {
    throw std::invalid_argument("lr_at_epoch: epoch " + std::to_string(epoch) +
                                " outside [1," + std::to_string(total_epochs) +
                                "]");
  }
  validate_schedule(schedule, total_epochs);
  for (const auto& stage : schedule) {
    if (epoch <= stage.until_epoch) return stage.rate;
  }
  return schedule.back().rate;
}

/// Adam moment tensors plus the shared step counter.
template <typename T>
struct OptimizerStateT {
  std::vector<TensorT<T>> m;
  std::vector<TensorT<T>> v;
  std::size_t step = 0;

  static OptimizerStateT make(const std::vector<ParameterT<T>*>& params) {
    OptimizerStateT state;
    state.m.reserve(params.size());
    state.v.reserve(params.size());
    for (const auto* p : params) {
      state.m.emplace_back(p->value.shape());
      state.v.emplace_back(p->value.shape());
    }
    return state;
  }
};
using OptimizerState = OptimizerStateT<float>;

/// Bias-corrected Adam step. L2 decay enters as an effective gradient
/// g + lambda*w on weight slots only; biases never decay.
template <typename T>
void adam_step(const std::vector<ParameterT<T>*>& params,
               OptimizerStateT<T>& state, double lr, double weight_decay,
               double beta1 = 0.9, double beta2 = 0.999, double epsilon = 1e-8) {
  if (state.m.size() != params.size()) {
    throw std::invalid_argument("adam_step: state/parameter count mismatch");
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    ParameterT<T>& p = *params[pi];
    if (!p.grad.same_shape(p.value) || !state.m[pi].same_shape(p.value)) {
      throw std::invalid_argument("adam_step: gradient shape mismatch for " +
                                  p.name);
    }
    const double decay = p.decays() ? weight_decay : 0.0;
    T* w = p.value.data();
    const T* g = p.grad.data();
    T* m = state.m[pi].data();
    T* v = state.v[pi].data();
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double gi = static_cast<double>(g[i]) + decay * static_cast<double>(w[i]);
      const double mi = beta1 * static_cast<double>(m[i]) + (1.0 - beta1) * gi;
      const double vi = beta2 * static_cast<double>(v[i]) + (1.0 - beta2) * gi * gi;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      w[i] = static_cast<T>(static_cast<double>(w[i]) -
                            lr * (mi / bc1) / (std::sqrt(vi / bc2) + epsilon));
    }
  }
}

/// Samples every weight slot from a truncated normal with std scaled from
/// base_std by 1/sqrt(fan_in), cut off at two standard deviations. Biases
/// start at zero. Draws consume one stream in parameter order, so a seed
/// pins every value.
template <typename T>
void init_parameters(NetworkT<T>& net, double base_std, Rng& rng) {
  if (!(base_std > 0.0)) {
    throw std::invalid_argument("init_parameters: base_std must be positive");
  }
  for (ParameterT<T>* p : net.parameters()) {
    if (p->is_bias) {
      p->value = TensorT<T>(p->value.shape());
      continue;
    }
    const double std_dev = base_std / std::sqrt(static_cast<double>(p->fan_in));
    p->value = truncated_normal<T>(p->value.shape(), 0.0, std_dev, 2.0, rng);
  }
}

/// Random shift by at most 10% of each spatial extent (vacated pixels zero)
/// and a horizontal flip with probability 1/2. Draw order: dy, dx, flip.
template <typename T>
TensorT<T> augment(const TensorT<T>& image, Rng& rng) {
  if (image.rank() != 3) {
    throw std::invalid_argument("augment: image must be rank-3 CHW");
  }
  const std::size_t c = image.extent(0), h = image.extent(1), w = image.extent(2);
  const long max_dy = static_cast<long>(h / 10);
  const long max_dx = static_cast<long>(w / 10);
  const long dy = -max_dy + static_cast<long>(rng.next_below(2 * max_dy + 1));
  const long dx = -max_dx + static_cast<long>(rng.next_below(2 * max_dx + 1));
  const bool flip = rng.next_double() < 0.5;

  TensorT<T> out(image.shape());
  for (std::size_t ch = 0; ch < c; ++ch) {
    const T* src = image.data() + ch * h * w;
    T* dst = out.data() + ch * h * w;
    for (std::size_t y = 0; y < h; ++y) {
      const long ys = static_cast<long>(y) - dy;
      if (ys < 0 || ys >= static_cast<long>(h)) continue;  // stays zero
      for (std::size_t x = 0; x < w; ++x) {
        long xs = static_cast<long>(x) - dx;
        if (xs < 0 || xs >= static_cast<long>(w)) continue;
        if (flip) xs = static_cast<long>(w) - 1 - xs;
        dst[y * w + x] = src[static_cast<std::size_t>(ys) * w +
                             static_cast<std::size_t>(xs)];
      }
    }
  }
  return out;
}

namespace detail {

inline constexpr std::uint64_t kShuffleStream = 0x73687566ull;   // "shuf"
inline constexpr std::uint64_t kAugmentStream = 0x61756721ull;   // "aug!"
inline constexpr std::uint64_t kDropoutStream = 0x64726f70ull;   // "drop"
inline constexpr std::uint64_t kInitStream = 0x696e6974ull;      // "init"

inline std::vector<std::size_t> epoch_permutation(std::size_t n,
                                                  std::uint64_t seed,
                                                  std::size_t epoch) {
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  Rng rng = Rng(seed).child(kShuffleStream).child(epoch);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const std::size_t j = i + rng.next_below(n - i);
    std::swap(perm[i], perm[j]);
  }
  return perm;
}

/// Gathers dataset rows into a batch tensor, augmenting each sample with its
/// own (seed, epoch, index)-keyed stream so batching never changes results.
inline void fill_batch(const LabeledDataset& ds,
                       const std::vector<std::size_t>& indices,
                       std::size_t begin, std::size_t end, bool do_augment,
                       std::uint64_t seed, std::size_t epoch, Tensor& batch,
                       std::vector<int>& labels) {
  const std::size_t c = ds.images.extent(1), h = ds.images.extent(2),
                    w = ds.images.extent(3);
  const std::size_t stride = c * h * w;
  const std::size_t n = end - begin;
  batch = Tensor({n, c, h, w});
  labels.resize(n);
  Rng epoch_rng = Rng(seed).child(kAugmentStream).child(epoch);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t src_index = indices[begin + i];
    labels[i] = ds.labels[src_index];
    const float* src = ds.images.data() + src_index * stride;
    if (!do_augment) {
      std::copy_n(src, stride, batch.data() + i * stride);
      continue;
    }
    Tensor image({c, h, w}, std::vector<float>(src, src + stride));
    Rng sample_rng = epoch_rng.child(src_index);
    Tensor shifted = augment(image, sample_rng);
    std::copy_n(shifted.data(), stride, batch.data() + i * stride);
  }
}

}  // namespace detail

/// Fraction of argmax-correct predictions in eval mode; ties resolve to the
/// lowest class index.
template <typename T>
double evaluate(NetworkT<T>& net, const LabeledDataset& dataset,
                std::size_t batch_size = 256) {
  if (dataset.size() == 0) {
    throw std::invalid_argument("evaluate: empty dataset");
  }
  if (batch_size == 0) batch_size = 1;
  Rng unused(0);
  std::vector<std::size_t> identity(dataset.size());
  for (std::size_t i = 0; i < identity.size(); ++i) identity[i] = i;
  std::size_t correct = 0;
  Tensor batch;
  std::vector<int> labels;
  for (std::size_t begin = 0; begin < dataset.size(); begin += batch_size) {
    const std::size_t end = std::min(dataset.size(), begin + batch_size);
    detail::fill_batch(dataset, identity, begin, end, false, 0, 0, batch, labels);
    TensorT<T> logits;
    if constexpr (std::is_same_v<T, float>) {
      logits = net.forward(batch, Mode::kEval, unused);
    } else {
      logits = net.forward(batch.template cast<T>(), Mode::kEval, unused);
    }
    const std::size_t k = logits.extent(1);
    for (std::size_t i = 0; i < labels.size(); ++i) {
      std::size_t arg = 0;
      for (std::size_t j = 1; j < k; ++j) {
        if (logits.at(i, j) > logits.at(i, arg)) arg = j;
      }
      if (static_cast<int>(arg) == labels[i]) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(dataset.size());
}

/// Per-epoch callbacks. on_snapshot fires once with epoch 0 right before
/// training (the initialization state) and then after every epoch.
struct RunHooks {
  std::function<void(std::size_t epoch, Network& net)> on_snapshot;
};

/// Full training loop: seeded shuffle, optional augmentation, forward in
/// train mode, softmax cross-entropy plus L2 penalty on weights, backward,
/// Adam with the staged schedule, then a full test-set evaluation per epoch.
/// Throws DivergenceError when the loss stops being finite.
inline MetricsLog run_experiment(Network& net, const TrainConfig& config,
                                 const LabeledDataset& train,
                                 const LabeledDataset& test,
                                 const RunHooks& hooks = {}) {
  if (train.size() == 0 || test.size() == 0) {
    throw std::invalid_argument("run_experiment: empty dataset");
  }
  if (config.batch_size == 0) {
    throw std::invalid_argument("run_experiment: batch size must be positive");
  }
  if (config.epochs == 0) {
    throw std::invalid_argument("run_experiment: need at least one epoch");
  }
  const std::vector<LrStage> schedule =
      config.lr_schedule.empty() ? staged_schedule(config.epochs, config.base_lr)
                                 : config.lr_schedule;
  validate_schedule(schedule, config.epochs);

  auto params = net.parameters();
  auto state = OptimizerState::make(params);
  MetricsLog log;

  if (hooks.on_snapshot) hooks.on_snapshot(0, net);

  const std::size_t n = train.size();
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const double lr = lr_at_epoch(schedule, epoch, config.epochs);
    const auto perm = detail::epoch_permutation(n, config.seed, epoch);
    Rng dropout_rng = Rng(config.seed).child(detail::kDropoutStream).child(epoch);

    double objective_sum = 0.0;
    std::size_t correct = 0;
    Tensor batch;
    std::vector<int> labels;
    for (std::size_t begin = 0; begin < n; begin += config.batch_size) {
      const std::size_t end = std::min(n, begin + config.batch_size);
      detail::fill_batch(train, perm, begin, end, config.augment, config.seed,
                         epoch, batch, labels);
      Tensor logits = net.forward(batch, Mode::kTrain, dropout_rng);
      auto loss = ops::softmax_cross_entropy(logits, labels);

      double penalty = 0.0;
      for (const auto* p : params) {
        if (!p->decays()) continue;
        double acc = 0.0;
        for (std::size_t i = 0; i < p->value.size(); ++i) {
          acc += static_cast<double>(p->value[i]) * static_cast<double>(p->value[i]);
        }
        penalty += acc;
      }
      penalty *= 0.5 * config.weight_decay;

      if (!std::isfinite(loss.mean_loss) || !std::isfinite(penalty)) {
        throw DivergenceError(epoch, "training diverged at epoch " +
                                         std::to_string(epoch) +
                                         ": non-finite loss");
      }
      const std::size_t batch_n = end - begin;
      objective_sum += (loss.mean_loss + penalty) * static_cast<double>(batch_n);
      const std::size_t k = logits.extent(1);
      for (std::size_t i = 0; i < batch_n; ++i) {
        std::size_t arg = 0;
        for (std::size_t j = 1; j < k; ++j) {
          if (logits.at(i, j) > logits.at(i, arg)) arg = j;
        }
        if (static_cast<int>(arg) == labels[i]) ++correct;
      }

      net.backward(loss.logit_grad);
      adam_step(params, state, lr, config.weight_decay, config.adam_beta1,
                config.adam_beta2, config.adam_epsilon);
    }

    MetricsRow row;
    row.epoch = epoch;
    row.lr = lr;
    row.train_loss = objective_sum / static_cast<double>(n);
    row.train_accuracy = static_cast<double>(correct) / static_cast<double>(n);
    row.test_accuracy = evaluate(net, test, config.batch_size);
    log.rows.push_back(row);
    if (hooks.on_snapshot) hooks.on_snapshot(epoch, net);
  }
  return log;
}

inline constexpr const char* kMetricsCsvHeader =
    "epoch,lr,train_loss,train_acc,test_acc";

/// CSV rows with accuracies as percentages with two decimals.
inline void write_metrics_csv(const MetricsLog& log,
                              const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write metrics file " + path.string());
  out << kMetricsCsvHeader << "\n";
  char line[160];
  for (const auto& row : log.rows) {
    std::snprintf(line, sizeof(line), "%zu,%g,%.6f,%.2f,%.2f\n", row.epoch,
                  row.lr, row.train_loss, row.train_accuracy * 100.0,
                  row.test_accuracy * 100.0);
    out << line;
  }
}

}  // namespace tandem
