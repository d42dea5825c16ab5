#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "tandem/ops.hpp"
#include "tandem/rng.hpp"
#include "tandem/tensor.hpp"

namespace tandem {

/// A learnable tensor slot: value, gradient of the same shape, and the
/// metadata the trainer needs (decay applies to weights only, fan_in scales
/// the init standard deviation).
template <typename T>
struct ParameterT {
  std::string name;
  TensorT<T> value;
  TensorT<T> grad;
  bool is_bias = false;
  std::size_t fan_in = 0;

  bool decays() const { return !is_bias; }
};
using Parameter = ParameterT<float>;

/// Node of the model graph. forward caches whatever backward needs; backward
/// consumes the cache, fills the node's parameter gradients, and returns the
/// gradient with respect to the node's input.
template <typename T>
class LayerT {
 public:
  explicit LayerT(std::string name) : name_(std::move(name)) {}
  virtual ~LayerT() = default;

  LayerT(const LayerT&) = delete;
  LayerT& operator=(const LayerT&) = delete;

  virtual TensorT<T> forward(const TensorT<T>& input, Mode mode, Rng& rng) = 0;
  virtual TensorT<T> backward(const TensorT<T>& upstream) = 0;
  virtual void collect_parameters(std::vector<ParameterT<T>*>&) {}

  /// Contribution to the depth accounting (activated conv layers and the
  /// dense head count; linear-branch convs and parameterless nodes do not).
  virtual std::size_t depth_layers() const { return 0; }

  const std::string& name() const { return name_; }

 protected:
  std::string name_;
};

template <typename T>
class ConvLayerT : public LayerT<T> {
 public:
  ConvLayerT(std::string name, std::size_t in_channels, std::size_t out_channels,
             std::size_t kernel, std::size_t stride, bool counts_depth)
      : LayerT<T>(std::move(name)), counts_depth_(counts_depth) {
    weights_ = ParameterT<T>{
        this->name_ + ".weight",
        TensorT<T>({out_channels, in_channels, kernel, kernel}),
        TensorT<T>({out_channels, in_channels, kernel, kernel}),
        false,
        kernel * kernel * in_channels};
    bias_ = ParameterT<T>{this->name_ + ".bias", TensorT<T>({out_channels}),
                          TensorT<T>({out_channels}), true, 0};
    stride_ = stride;
  }

  TensorT<T> forward(const TensorT<T>& input, Mode, Rng&) override {
    cached_input_ = input;
    return ops::conv2d_forward(input, params_view());
  }

  TensorT<T> backward(const TensorT<T>& upstream) override {
    auto grads = ops::conv2d_backward(cached_input_, params_view(), upstream);
    weights_.grad = std::move(grads.weights);
    bias_.grad = std::move(grads.bias);
    return std::move(grads.input);
  }

  void collect_parameters(std::vector<ParameterT<T>*>& out) override {
    out.push_back(&weights_);
    out.push_back(&bias_);
  }

  std::size_t depth_layers() const override { return counts_depth_ ? 1 : 0; }

  ParameterT<T>& weights() { return weights_; }
  ParameterT<T>& bias() { return bias_; }
  std::size_t stride() const { return stride_; }

 private:
  ops::ConvParamsT<T> params_view() const {
    return ops::ConvParamsT<T>{weights_.value, bias_.value, stride_};
  }

  ParameterT<T> weights_;
  ParameterT<T> bias_;
  std::size_t stride_ = 1;
  bool counts_depth_ = true;
  TensorT<T> cached_input_;
};

template <typename T>
class ReluLayerT : public LayerT<T> {
 public:
  explicit ReluLayerT(std::string name) : LayerT<T>(std::move(name)) {}

  TensorT<T> forward(const TensorT<T>& input, Mode, Rng&) override {
    cached_input_ = input;
    return ops::relu(input);
  }

  TensorT<T> backward(const TensorT<T>& upstream) override {
    return ops::relu_backward(cached_input_, upstream);
  }

 private:
  TensorT<T> cached_input_;
};

template <typename T>
class DropoutLayerT : public LayerT<T> {
 public:
  DropoutLayerT(std::string name, double rate)
      : LayerT<T>(std::move(name)), rate_(rate) {}

  TensorT<T> forward(const TensorT<T>& input, Mode mode, Rng& rng) override {
    train_pass_ = (mode == Mode::kTrain && rate_ > 0.0);
    if (!train_pass_) return input;
    auto res = ops::dropout(input, rate_, mode, rng);
    mask_ = std::move(res.mask);
    return std::move(res.output);
  }

  TensorT<T> backward(const TensorT<T>& upstream) override {
    if (!train_pass_) return upstream;
    return ops::dropout_backward(mask_, upstream);
  }

  double rate() const { return rate_; }

 private:
  double rate_;
  bool train_pass_ = false;
  TensorT<T> mask_;
};

template <typename T>
class GlobalAvgPoolLayerT : public LayerT<T> {
 public:
  explicit GlobalAvgPoolLayerT(std::string name) : LayerT<T>(std::move(name)) {}

  TensorT<T> forward(const TensorT<T>& input, Mode, Rng&) override {
    h_ = input.extent(2);
    w_ = input.extent(3);
    return ops::global_avg_pool(input);
  }

  TensorT<T> backward(const TensorT<T>& upstream) override {
    return ops::global_avg_pool_backward(upstream, h_, w_);
  }

 private:
  std::size_t h_ = 0, w_ = 0;
};

template <typename T>
class DenseLayerT : public LayerT<T> {
 public:
  DenseLayerT(std::string name, std::size_t in_features, std::size_t out_features)
      : LayerT<T>(std::move(name)) {
    weights_ = ParameterT<T>{this->name_ + ".weight",
                             TensorT<T>({in_features, out_features}),
                             TensorT<T>({in_features, out_features}), false,
                             in_features};
    bias_ = ParameterT<T>{this->name_ + ".bias", TensorT<T>({out_features}),
                          TensorT<T>({out_features}), true, 0};
  }

  TensorT<T> forward(const TensorT<T>& input, Mode, Rng&) override {
    cached_input_ = input;
    return ops::dense(input, weights_.value, bias_.value);
  }

  TensorT<T> backward(const TensorT<T>& upstream) override {
    auto grads = ops::dense_backward(cached_input_, weights_.value, upstream);
    weights_.grad = std::move(grads.weights);
    bias_.grad = std::move(grads.bias);
    return std::move(grads.input);
  }

  void collect_parameters(std::vector<ParameterT<T>*>& out) override {
    out.push_back(&weights_);
    out.push_back(&bias_);
  }

  std::size_t depth_layers() const override { return 1; }

 private:
  ParameterT<T> weights_;
  ParameterT<T> bias_;
  TensorT<T> cached_input_;
};

}  // namespace tandem
