#pragma once

#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "tandem/layers.hpp"
#include "tandem/ops.hpp"

namespace tandem {

/// The five tandem block variants: a nonlinear branch of one or two activated
/// 3x3 convolutions in parallel with a linear branch that is an identity, a
/// 1x1 convolution, or an unactivated 3x3 convolution.
enum class BlockKind { kId2, kId1, kConv1x1_2, kConv1x1_1, kConv3x3_1 };

inline constexpr BlockKind kAllBlockKinds[] = {
    BlockKind::kId2, BlockKind::kId1, BlockKind::kConv1x1_2,
    BlockKind::kConv1x1_1, BlockKind::kConv3x3_1};

/// Number of activated conv layers on the nonlinear branch.
inline std::size_t block_layers(BlockKind kind) {
  return (kind == BlockKind::kId2 || kind == BlockKind::kConv1x1_2) ? 2 : 1;
}

inline const char* block_kind_name(BlockKind kind) {
  switch (kind) {
    case BlockKind::kId2: return "id_2";
    case BlockKind::kId1: return "id_1";
    case BlockKind::kConv1x1_2: return "conv1x1_2";
    case BlockKind::kConv1x1_1: return "conv1x1_1";
    case BlockKind::kConv3x3_1: return "conv3x3_1";
  }
  return "?";
}

struct BlockSpec {
  BlockKind kind = BlockKind::kId2;
  std::size_t layers = 2;  // fixed by kind
  std::size_t width_in = 16;
  std::size_t width_out = 16;
  std::size_t stride = 1;
  double dropout_rate = 0.0;
};

inline void validate_block_spec(const BlockSpec& spec) {
  if (spec.layers != block_layers(spec.kind)) {
    throw std::invalid_argument("block: layer count does not match kind");
  }
  if (spec.stride != 1 && spec.stride != 2) {
    throw std::invalid_argument("block: stride must be 1 or 2");
  }
  if (spec.width_in == 0 || spec.width_out == 0) {
    throw std::invalid_argument("block: widths must be positive");
  }
  if (spec.stride == 2 && spec.width_out != 2 * spec.width_in) {
    throw std::invalid_argument("block: stride-2 blocks must double the width");
  }
  if (spec.stride == 1 && spec.width_out != spec.width_in) {
    throw std::invalid_argument("block: stride-1 blocks must preserve the width");
  }
  if (!(spec.dropout_rate >= 0.0 && spec.dropout_rate < 1.0)) {
    throw std::invalid_argument("block: dropout rate must be in [0,1)");
  }
}

/// True when the linear branch carries no parameters (identity kinds at
/// stride 1 with matching widths).
inline bool block_has_identity_branch(const BlockSpec& spec) {
  return (spec.kind == BlockKind::kId2 || spec.kind == BlockKind::kId1) &&
         spec.width_in == spec.width_out && spec.stride == 1;
}

/// Two-branch block. The nonlinear branch applies `layers` repetitions of
/// [3x3 conv, relu] with the stride in the first conv and, for two-layer
/// blocks, dropout after the first relu. The linear branch is an identity or
/// a single unactivated conv. Branch outputs are summed and dropout is
/// applied to the sum; nothing is activated after the sum.
template <typename T>
class TandemBlockT : public LayerT<T> {
 public:
  TandemBlockT(std::string name, const BlockSpec& spec)
      : LayerT<T>(std::move(name)), spec_(spec) {
    validate_block_spec(spec);

    nonlinear_.push_back(std::make_unique<ConvLayerT<T>>(
        this->name_ + ".conv1", spec.width_in, spec.width_out, 3, spec.stride,
        true));
    nonlinear_.push_back(
        std::make_unique<ReluLayerT<T>>(this->name_ + ".relu1"));
    if (spec.layers == 2) {
      nonlinear_.push_back(std::make_unique<DropoutLayerT<T>>(
          this->name_ + ".dropout1", spec.dropout_rate));
      nonlinear_.push_back(std::make_unique<ConvLayerT<T>>(
          this->name_ + ".conv2", spec.width_out, spec.width_out, 3, 1, true));
      nonlinear_.push_back(
          std::make_unique<ReluLayerT<T>>(this->name_ + ".relu2"));
    }

    if (!block_has_identity_branch(spec)) {
      const std::size_t k = spec.kind == BlockKind::kConv3x3_1 ? 3 : 1;
      linear_ = std::make_unique<ConvLayerT<T>>(this->name_ + ".linear",
                                                spec.width_in, spec.width_out,
                                                k, spec.stride, false);
    }

    post_dropout_ = std::make_unique<DropoutLayerT<T>>(
        this->name_ + ".dropout", spec.dropout_rate);
  }

  TensorT<T> forward(const TensorT<T>& input, Mode mode, Rng& rng) override {
    TensorT<T> nl = input;
    for (auto& layer : nonlinear_) nl = layer->forward(nl, mode, rng);
    TensorT<T> lin = linear_ ? linear_->forward(input, mode, rng) : input;
    TensorT<T> sum = ops::add_branches(lin, nl);
    return post_dropout_->forward(sum, mode, rng);
  }

  TensorT<T> backward(const TensorT<T>& upstream) override {
    TensorT<T> d = post_dropout_->backward(upstream);
    TensorT<T> nl_grad = d;
    for (auto it = nonlinear_.rbegin(); it != nonlinear_.rend(); ++it) {
      nl_grad = (*it)->backward(nl_grad);
    }
    TensorT<T> lin_grad = linear_ ? linear_->backward(d) : std::move(d);
    for (std::size_t i = 0; i < nl_grad.size(); ++i) nl_grad[i] += lin_grad[i];
    return nl_grad;
  }

  void collect_parameters(std::vector<ParameterT<T>*>& out) override {
    for (auto& layer : nonlinear_) layer->collect_parameters(out);
    if (linear_) linear_->collect_parameters(out);
  }

  std::size_t depth_layers() const override { return spec_.layers; }

  const BlockSpec& spec() const { return spec_; }
  bool has_identity_branch() const { return linear_ == nullptr; }
  ConvLayerT<T>* linear_conv() { return linear_.get(); }
  const std::vector<std::unique_ptr<LayerT<T>>>& nonlinear_chain() const {
    return nonlinear_;
  }

 private:
  BlockSpec spec_;
  std::vector<std::unique_ptr<LayerT<T>>> nonlinear_;
  std::unique_ptr<ConvLayerT<T>> linear_;
  std::unique_ptr<DropoutLayerT<T>> post_dropout_;
};

template <typename T = float>
std::unique_ptr<TandemBlockT<T>> build_block(std::string name,
                                             const BlockSpec& spec) {
  return std::make_unique<TandemBlockT<T>>(std::move(name), spec);
}

/// Learnable parameter count (weights plus biases) of the block a spec
/// builds. Kept in closed form; tests pin it to slot enumeration of the
/// built block.
inline std::size_t block_param_count(const BlockSpec& spec) {
  validate_block_spec(spec);
  const std::size_t w_in = spec.width_in, w_out = spec.width_out;
  std::size_t count = 9 * w_in * w_out + w_out;  // first nonlinear conv
  if (spec.layers == 2) count += 9 * w_out * w_out + w_out;
  if (!block_has_identity_branch(spec)) {
    const std::size_t k = spec.kind == BlockKind::kConv3x3_1 ? 3 : 1;
    count += k * k * w_in * w_out + w_out;
  }
  return count;
}

}  // namespace tandem
