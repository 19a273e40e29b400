#pragma once

#include "pdmr/core.hpp"

#include <map>
#include <string>
#include <vector>

namespace pdmr {

struct NetworkSpec
{
  int n_blocks = 15;
  int channels = 64;
  int kernel = 3;
  double residual_scale = 0.1;

  void validate() const;
  bool operator==(NetworkSpec const &) const = default;
};

template <typename T>
struct TensorT
{
  std::vector<long> shape;
  std::vector<T> data;

  TensorT() = default;
  explicit TensorT(std::vector<long> dims);
  long numel() const { return static_cast<long>(data.size()); }
  bool operator==(TensorT const &) const = default;
};

using Tensor = TensorT<float>;

template <typename T>
using TensorMap = std::map<std::string, TensorT<T>>;

/// Parameter names and shapes for a spec, in network order:
/// head.{weight,bias}, block{i}.conv{1,2}.{weight,bias}, tail.{weight,bias}.
std::vector<std::pair<std::string, std::vector<long>>> parameter_layout(NetworkSpec const &spec);

/// Float regularizer weights plus the data-fidelity weights that travel with them.
struct WeightStore
{
  NetworkSpec spec;
  TensorMap<float> tensors;
  std::vector<double> mu;
  bool shared_mu = true;

  /// Throws DataError naming the tensor when absent.
  Tensor const &at(std::string const &name) const;
  /// Checks every layer of `spec` is present with the expected shape.
  void validate() const;

  static WeightStore zeros(NetworkSpec const &spec);
  bool operator==(WeightStore const &) const = default;
};

template <typename T>
TensorT<T> const &lookup(TensorMap<T> const &tensors, std::string const &name);

/// C×H×W, channel-major.
template <typename T>
struct FeatureMap
{
  long channels = 0;
  long height = 0;
  long width = 0;
  std::vector<T> data;

  FeatureMap() = default;
  FeatureMap(long c, long h, long w)
      : channels(c), height(h), width(w), data(static_cast<std::size_t>(c * h * w))
  {
  }
  T *channel(long c) { return data.data() + c * height * width; }
  T const *channel(long c) const { return data.data() + c * height * width; }
};

/// Same-size cross-correlation, zero padding (k−1)/2. Each output pixel accumulates
/// input channels in order, then kernel rows, then kernel columns.
template <typename T>
FeatureMap<T> conv2d(FeatureMap<T> const &input, TensorT<T> const &weight, TensorT<T> const &bias);

template <typename T>
FeatureMap<T> to_channels(Image<T> const &x);

template <typename T>
Image<T> from_channels(FeatureMap<T> const &f);

/// Intermediate activations of one forward pass, used for calibration and backprop.
template <typename T>
struct ForwardTape
{
  FeatureMap<T> input;
  FeatureMap<T> head;
  std::vector<FeatureMap<T>> pre_relu; // conv1 outputs
  std::vector<FeatureMap<T>> relu;
  std::vector<FeatureMap<T>> conv2;    // conv2 outputs before residual scaling
  std::vector<FeatureMap<T>> block_out;
  FeatureMap<T> tail;
};

/// head conv → n_blocks × (conv, ReLU, conv, ×residual_scale, + skip) → tail conv → + input.
template <typename T>
Image<T> resnet_apply(Image<T> const &x, NetworkSpec const &spec, TensorMap<T> const &tensors,
                      ForwardTape<T> *tape = nullptr);

ComplexImage resnet_forward(ComplexImage const &x, WeightStore const &w);

} // namespace pdmr
