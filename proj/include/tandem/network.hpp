#pragma once

#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "tandem/blocks.hpp"
#include "tandem/layers.hpp"

namespace tandem {

/// Instance of the three-stage meta-architecture: a 3x3 stem at width w,
/// three stages of blocks at widths w, 2w, 4w with a stride-2 transition into
/// each later stage, global average pooling, and a dense softmax head. Total
/// depth is 6d+2 layers.
struct NetworkSpec {
  BlockKind kind = BlockKind::kConv1x1_1;
  std::size_t d = 1;
  std::size_t w = 16;
  std::size_t classes = 10;
  std::size_t in_channels = 3;
};

inline void validate_network_spec(const NetworkSpec& spec) {
  if (spec.d == 0) throw std::invalid_argument("network: d must be >= 1");
  if (spec.w == 0) throw std::invalid_argument("network: w must be >= 1");
  if (spec.classes < 2) {
    throw std::invalid_argument("network: need at least 2 classes");
  }
  if (spec.in_channels == 0) {
    throw std::invalid_argument("network: in_channels must be >= 1");
  }
  if ((2 * spec.d) % block_layers(spec.kind) != 0) {
    throw std::invalid_argument("network: block layer count must divide 2d");
  }
}

/// Block sequence of the meta-architecture in order.
inline std::vector<BlockSpec> stage_plan(const NetworkSpec& spec,
                                         double dropout_rate = 0.0) {
  validate_network_spec(spec);
  const std::size_t l = block_layers(spec.kind);
  const std::size_t reps = 2 * spec.d / l;
  std::vector<BlockSpec> plan;
  auto add = [&](std::size_t w_in, std::size_t w_out, std::size_t stride) {
    plan.push_back(BlockSpec{spec.kind, l, w_in, w_out, stride, dropout_rate});
  };
  for (std::size_t i = 0; i < reps; ++i) add(spec.w, spec.w, 1);
  add(spec.w, 2 * spec.w, 2);
  for (std::size_t i = 0; i + 1 < reps; ++i) add(2 * spec.w, 2 * spec.w, 1);
  add(2 * spec.w, 4 * spec.w, 2);
  for (std::size_t i = 0; i + 1 < reps; ++i) add(4 * spec.w, 4 * spec.w, 1);
  return plan;
}

template <typename T>
class NetworkT {
 public:
  NetworkT(const NetworkSpec& spec, double dropout_rate) : spec_(spec) {
    auto plan = stage_plan(spec, dropout_rate);
    layers_.push_back(std::make_unique<ConvLayerT<T>>(
        "stem", spec.in_channels, spec.w, 3, 1, true));
    std::size_t index = 0;
    for (const auto& block : plan) {
      layers_.push_back(std::make_unique<TandemBlockT<T>>(
          "block" + std::to_string(++index), block));
    }
    layers_.push_back(std::make_unique<GlobalAvgPoolLayerT<T>>("gap"));
    layers_.push_back(
        std::make_unique<DenseLayerT<T>>("head", 4 * spec.w, spec.classes));
  }

  /// Returns logits (N x classes). The loss head is applied by the caller.
  TensorT<T> forward(const TensorT<T>& input, Mode mode, Rng& rng) {
    TensorT<T> x = input;
    for (auto& layer : layers_) x = layer->forward(x, mode, rng);
    return x;
  }

  TensorT<T> backward(const TensorT<T>& logit_grad) {
    TensorT<T> g = logit_grad;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) {
      g = (*it)->backward(g);
    }
    return g;
  }

  std::vector<ParameterT<T>*> parameters() {
    std::vector<ParameterT<T>*> out;
    for (auto& layer : layers_) layer->collect_parameters(out);
    return out;
  }

  std::size_t param_count() {
    std::size_t n = 0;
    for (auto* p : parameters()) n += p->value.size();
    return n;
  }

  /// Depth in the 6d+2 accounting: stem, activated convs, and the head.
  std::size_t depth() const {
    std::size_t n = 0;
    for (const auto& layer : layers_) n += layer->depth_layers();
    return n;
  }

  const NetworkSpec& spec() const { return spec_; }
  std::vector<std::unique_ptr<LayerT<T>>>& layers() { return layers_; }

  /// The i-th block (1-based, matching layer names like "block3").
  TandemBlockT<T>* block(std::size_t index) {
    std::size_t seen = 0;
    for (auto& layer : layers_) {
      if (auto* b = dynamic_cast<TandemBlockT<T>*>(layer.get())) {
        if (++seen == index) return b;
      }
    }
    return nullptr;
  }

 private:
  NetworkSpec spec_;
  std::vector<std::unique_ptr<LayerT<T>>> layers_;
};
using Network = NetworkT<float>;

template <typename T = float>
NetworkT<T> build_network(const NetworkSpec& spec, double dropout_rate = 0.0) {
  return NetworkT<T>(spec, dropout_rate);
}

/// Closed-form learnable parameter count of the network a spec builds.
inline std::size_t network_param_count(const NetworkSpec& spec) {
  validate_network_spec(spec);
  std::size_t count = 9 * spec.in_channels * spec.w + spec.w;  // stem
  for (const auto& block : stage_plan(spec)) count += block_param_count(block);
  count += 4 * spec.w * spec.classes + spec.classes;  // head
  return count;
}

inline constexpr std::size_t kMaxSolveWidth = 512;

/// Smallest-width integer minimizer of |network_param_count - target| over
/// w in [1, kMaxSolveWidth]. The count is strictly increasing in w, so an
/// exhaustive scan is exact and doubles as its own oracle.
inline std::size_t solve_width(BlockKind kind, std::size_t d,
                               std::size_t classes, std::size_t in_channels,
                               std::size_t target_params) {
  NetworkSpec probe{kind, d, 1, classes, in_channels};
  if (target_params < network_param_count(probe)) {
    throw std::invalid_argument(
        "solve_width: target below the parameter count at w=1");
  }
  probe.w = kMaxSolveWidth;
  if (target_params > network_param_count(probe)) {
    throw std::invalid_argument(
        "solve_width: target above the parameter count at w=" +
        std::to_string(kMaxSolveWidth));
  }
  std::size_t best_w = 1;
  std::size_t best_err = static_cast<std::size_t>(-1);
  for (std::size_t w = 1; w <= kMaxSolveWidth; ++w) {
    probe.w = w;
    const std::size_t count = network_param_count(probe);
    const std::size_t err =
        count > target_params ? count - target_params : target_params - count;
    if (err < best_err) {
      best_err = err;
      best_w = w;
    }
  }
  return best_w;
}

}  // namespace tandem
