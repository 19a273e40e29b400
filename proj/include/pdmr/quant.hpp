#pragma once

#include "pdmr/core.hpp"
#include "pdmr/nn.hpp"

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace pdmr {

enum class QScheme { Symmetric, Affine };

/// Per-tensor affine map x ≈ scale · (q − zero_point), q ∈ [−128, 127].
struct QParams
{
  double scale = 1.0;
  int zero_point = 0;
  QScheme scheme = QScheme::Affine;

  void validate() const;
  bool operator==(QParams const &) const = default;
};

inline constexpr double kScaleFloor = 1e-8;

/// Affine activation parameters for an observed range. The range is widened to
/// include 0 so zero padding and ReLU stay exact. Sets *degenerate when max = min.
QParams activation_qparams(double min, double max, bool *degenerate = nullptr);

/// Symmetric weight parameters, scale = max|w| / 127.
QParams weight_qparams(double max_abs, bool *degenerate = nullptr);

std::int8_t quantize_value(double x, QParams const &qp);

/// q = clamp(round_half_away(x / scale) + zero_point, −128, 127).
std::vector<std::int8_t> quantize_tensor(std::span<float const> x, QParams const &qp);

/// x = scale · (q − zero_point).
std::vector<float> dequantize(std::span<std::int8_t const> q, QParams const &qp);

struct QTensor
{
  std::vector<long> shape;
  std::vector<std::int8_t> data;
  QParams qp;
  bool operator==(QTensor const &) const = default;
};

/// int32 bias at scale input_scale · weight_scale, zero point 0.
struct QBias
{
  std::vector<std::int32_t> data;
  double scale = 1.0;
  bool operator==(QBias const &) const = default;
};

struct QFeatureMap
{
  long channels = 0;
  long height = 0;
  long width = 0;
  std::vector<std::int8_t> data;
  QParams qp;
};

/// Activation observation points, in network order: input, head,
/// block{i}.relu, block{i}.conv2, block{i}.out, tail.
std::vector<std::string> activation_points(NetworkSpec const &spec);

/// Input activation point for each convolution layer ("head", "block0.conv1", ..., "tail").
std::string layer_input_point(NetworkSpec const &spec, std::string const &layer);

struct CalibrationResult
{
  std::map<std::string, QParams> activations;
  std::map<std::string, QParams> weights;
  std::map<std::string, std::pair<double, double>> ranges; // observed activation (min, max)
  std::vector<std::string> degenerate;                     // layers whose scale was floored
};

/// Runs float inference over the calibration images and records per-point ranges.
CalibrationResult calibrate(WeightStore const &net, std::vector<ComplexImage> const &calib_images);

struct QuantizedWeightStore
{
  NetworkSpec spec;
  std::vector<double> mu;
  bool shared_mu = true;
  std::map<std::string, QTensor> weights;     // "<layer>.weight"
  std::map<std::string, QBias> biases;        // "<layer>.bias"
  std::map<std::string, QParams> activations; // activation_points(spec)

  QTensor const &weight(std::string const &layer) const;
  QBias const &bias(std::string const &layer) const;
  QParams const &activation(std::string const &point) const;
  void validate() const;
  bool operator==(QuantizedWeightStore const &) const = default;
};

QuantizedWeightStore quantize_network(WeightStore const &net, CalibrationResult const &calib);

QFeatureMap quantize_features(FeatureMap<float> const &f, QParams const &qp);
FeatureMap<float> dequantize_features(QFeatureMap const &q);

/// Integer convolution with int32 accumulation on zero-point-corrected inputs,
/// requantized through the real multiplier in_scale·w_scale/out_scale. When
/// `relu` is set the output is clamped below at the output zero point.
QFeatureMap conv2d_int8(QFeatureMap const &input, QTensor const &weight, QBias const &bias, QParams const &out_qp,
                        bool relu = false);

/// a + factor·b evaluated in int32 at a common scale, requantized to out_qp.
QFeatureMap add_requantize(QFeatureMap const &a, QFeatureMap const &b, double factor, QParams const &out_qp);

ComplexImage resnet_forward_int8(ComplexImage const &x, QuantizedWeightStore const &qw);

} // namespace pdmr
