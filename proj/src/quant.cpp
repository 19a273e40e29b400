#include "pdmr/quant.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace pdmr {

void QParams::validate() const
{
  if (!(scale > 0.0) || !std::isfinite(scale)) {
    throw std::invalid_argument("QParams: scale must be positive and finite");
  }
  if (zero_point < -128 || zero_point > 127) {
    throw std::invalid_argument("QParams: zero point out of int8 range");
  }
  if (scheme == QScheme::Symmetric && zero_point != 0) {
    throw std::invalid_argument("QParams: symmetric scheme requires zero point 0");
  }
}

QParams activation_qparams(double min, double max, bool *degenerate)
{
  min = std::min(min, 0.0);
  max = std::max(max, 0.0);
  bool const flat = !(max > min);
  if (degenerate) {
    *degenerate = flat;
  }
  if (flat) {
    return {kScaleFloor, 0, QScheme::Affine};
  }
  double const scale = std::max((max - min) / 255.0, kScaleFloor);
  long const zp = std::lround(-128.0 - min / scale);
  return {scale, static_cast<int>(std::clamp(zp, -128L, 127L)), QScheme::Affine};
}

QParams weight_qparams(double max_abs, bool *degenerate)
{
  bool const flat = !(max_abs > 0.0);
  if (degenerate) {
    *degenerate = flat;
  }
  return {flat ? kScaleFloor : std::max(max_abs / 127.0, kScaleFloor), 0, QScheme::Symmetric};
}

std::int8_t quantize_value(double x, QParams const &qp)
{
  // std::round rounds halfway cases away from zero.
  double const q = std::round(x / qp.scale) + qp.zero_point;
  return static_cast<std::int8_t>(std::clamp(q, -128.0, 127.0));
}

std::vector<std::int8_t> quantize_tensor(std::span<float const> x, QParams const &qp)
{
  qp.validate();
  std::vector<std::int8_t> q(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    q[i] = quantize_value(x[i], qp);
  }
  return q;
}

std::vector<float> dequantize(std::span<std::int8_t const> q, QParams const &qp)
{
  qp.validate();
  std::vector<float> x(q.size());
  for (std::size_t i = 0; i < q.size(); ++i) {
    x[i] = static_cast<float>(qp.scale * (static_cast<int>(q[i]) - qp.zero_point));
  }
  return x;
}

std::vector<std::string> activation_points(NetworkSpec const &spec)
{
  std::vector<std::string> points{"input", "head"};
  for (int i = 0; i < spec.n_blocks; ++i) {
    std::string const prefix = "block" + std::to_string(i);
    points.push_back(prefix + ".relu");
    points.push_back(prefix + ".conv2");
    points.push_back(prefix + ".out");
  }
  points.push_back("tail");
  return points;
}

std::string layer_input_point(NetworkSpec const &spec, std::string const &layer)
{
  if (layer == "head") {
    return "input";
  }
  if (layer == "tail") {
    return spec.n_blocks > 0 ? "block" + std::to_string(spec.n_blocks - 1) + ".out" : "head";
  }
  for (int i = 0; i < spec.n_blocks; ++i) {
    std::string const prefix = "block" + std::to_string(i);
    if (layer == prefix + ".conv1") {
      return i == 0 ? "head" : "block" + std::to_string(i - 1) + ".out";
    }
    if (layer == prefix + ".conv2") {
      return prefix + ".relu";
    }
  }
  throw std::invalid_argument("unknown layer '" + layer + "'");
}

namespace {

std::vector<std::string> conv_layers(NetworkSpec const &spec)
{
  std::vector<std::string> layers{"head"};
  for (int i = 0; i < spec.n_blocks; ++i) {
    layers.push_back("block" + std::to_string(i) + ".conv1");
    layers.push_back("block" + std::to_string(i) + ".conv2");
  }
  layers.push_back("tail");
  return layers;
}

void observe(std::map<std::string, std::pair<double, double>> &ranges, std::string const &point,
             FeatureMap<float> const &f)
{
  auto [lo, hi] = std::minmax_element(f.data.begin(), f.data.end());
  auto it = ranges.find(point);
  if (it == ranges.end()) {
    ranges[point] = {*lo, *hi};
  } else {
    it->second.first = std::min<double>(it->second.first, *lo);
    it->second.second = std::max<double>(it->second.second, *hi);
  }
}

} // namespace

CalibrationResult calibrate(WeightStore const &net, std::vector<ComplexImage> const &calib_images)
{
  if (calib_images.empty()) {
    throw std::invalid_argument("calibrate: need at least one calibration image");
  }
  net.validate();
  CalibrationResult result;
  for (auto const &img : calib_images) {
    ForwardTape<float> tape;
    resnet_apply(img, net.spec, net.tensors, &tape);
    observe(result.ranges, "input", tape.input);
    observe(result.ranges, "head", tape.head);
    for (int i = 0; i < net.spec.n_blocks; ++i) {
      std::string const prefix = "block" + std::to_string(i);
      auto const idx = static_cast<std::size_t>(i);
      observe(result.ranges, prefix + ".relu", tape.relu[idx]);
      observe(result.ranges, prefix + ".conv2", tape.conv2[idx]);
      observe(result.ranges, prefix + ".out", tape.block_out[idx]);
    }
    observe(result.ranges, "tail", tape.tail);
  }
  for (auto const &point : activation_points(net.spec)) {
    auto const [lo, hi] = result.ranges.at(point);
    bool flat = false;
    result.activations[point] = activation_qparams(lo, hi, &flat);
    if (flat) {
      result.degenerate.push_back(point);
    }
  }
  for (auto const &layer : conv_layers(net.spec)) {
    auto const &w = net.at(layer + ".weight");
    double max_abs = 0.0;
    for (float v : w.data) {
      max_abs = std::max(max_abs, static_cast<double>(std::abs(v)));
    }
    bool flat = false;
    result.weights[layer + ".weight"] = weight_qparams(max_abs, &flat);
    if (flat) {
      result.degenerate.push_back(layer + ".weight");
    }
  }
  return result;
}

QTensor const &QuantizedWeightStore::weight(std::string const &layer) const
{
  auto const it = weights.find(layer + ".weight");
  if (it == weights.end()) {
    throw DataError("missing quantized tensor '" + layer + ".weight'");
  }
  return it->second;
}

QBias const &QuantizedWeightStore::bias(std::string const &layer) const
{
  auto const it = biases.find(layer + ".bias");
  if (it == biases.end()) {
    throw DataError("missing quantized tensor '" + layer + ".bias'");
  }
  return it->second;
}

QParams const &QuantizedWeightStore::activation(std::string const &point) const
{
  auto const it = activations.find(point);
  if (it == activations.end()) {
    throw DataError("missing activation parameters '" + point + "'");
  }
  return it->second;
}

void QuantizedWeightStore::validate() const
{
  for (auto const &[name, shape] : parameter_layout(spec)) {
    std::string const layer = name.substr(0, name.rfind('.'));
    if (name.ends_with(".weight")) {
      auto const &w = weight(layer);
      if (w.shape != shape) {
        throw DataError("quantized tensor '" + name + "' has the wrong shape");
      }
      w.qp.validate();
    } else if (static_cast<long>(bias(layer).data.size()) != shape[0]) {
      throw DataError("quantized tensor '" + name + "' has the wrong length");
    }
  }
  for (auto const &point : activation_points(spec)) {
    activation(point).validate();
  }
}

QuantizedWeightStore quantize_network(WeightStore const &net, CalibrationResult const &calib)
{
  net.validate();
  QuantizedWeightStore q;
  q.spec = net.spec;
  q.mu = net.mu;
  q.shared_mu = net.shared_mu;
  q.activations = calib.activations;
  for (auto const &layer : conv_layers(net.spec)) {
    auto const &w = net.at(layer + ".weight");
    QParams const wqp = calib.weights.at(layer + ".weight");
    q.weights[layer + ".weight"] = QTensor{w.shape, quantize_tensor(w.data, wqp), wqp};

    double const in_scale = calib.activations.at(layer_input_point(net.spec, layer)).scale;
    double const bias_scale = in_scale * wqp.scale;
    auto const &b = net.at(layer + ".bias");
    QBias qb;
    qb.scale = bias_scale;
    for (float v : b.data) {
      double const r = std::round(static_cast<double>(v) / bias_scale);
      if (std::abs(r) > static_cast<double>(std::numeric_limits<std::int32_t>::max())) {
        throw NumericalError("bias of layer '" + layer + "' does not fit in int32");
      }
      qb.data.push_back(static_cast<std::int32_t>(r));
    }
    q.biases[layer + ".bias"] = std::move(qb);
  }
  return q;
}

QFeatureMap quantize_features(FeatureMap<float> const &f, QParams const &qp)
{
  return {f.channels, f.height, f.width, quantize_tensor(f.data, qp), qp};
}

FeatureMap<float> dequantize_features(QFeatureMap const &q)
{
  FeatureMap<float> f(q.channels, q.height, q.width);
  f.data = dequantize(q.data, q.qp);
  return f;
}

namespace {

std::int8_t requantize(double value, int zero_point)
{
  double const q = std::round(value) + zero_point;
  return static_cast<std::int8_t>(std::clamp(q, -128.0, 127.0));
}

} // namespace

QFeatureMap conv2d_int8(QFeatureMap const &input, QTensor const &weight, QBias const &bias, QParams const &out_qp,
                        bool relu)
{
  if (weight.shape.size() != 4 || weight.shape[1] != input.channels || weight.shape[2] != weight.shape[3]) {
    throw DimensionError("conv2d_int8: weight shape does not match input channels");
  }
  if (weight.qp.zero_point != 0) {
    throw std::invalid_argument("conv2d_int8: weights must be symmetric");
  }
  long const c_out = weight.shape[0];
  long const c_in = weight.shape[1];
  long const k = weight.shape[2];
  if (k % 2 == 0) {
    throw DimensionError("conv2d_int8: kernel must be odd");
  }
  if (static_cast<long>(bias.data.size()) != c_out) {
    throw DimensionError("conv2d_int8: bias length must equal output channels");
  }
  long const h = input.height;
  long const w = input.width;
  long const hw = h * w;
  long const pad = (k - 1) / 2;
  int const zp_in = input.qp.zero_point;

  // Worst case |acc| ≤ |bias| + Σ|w|·255 must fit in int32.
  for (long co = 0; co < c_out; ++co) {
    std::int64_t bound = std::abs(static_cast<std::int64_t>(bias.data[static_cast<std::size_t>(co)]));
    for (long i = 0; i < c_in * k * k; ++i) {
      bound += 255 * std::abs(static_cast<std::int64_t>(weight.data[static_cast<std::size_t>(co * c_in * k * k + i)]));
    }
    if (bound > std::numeric_limits<std::int32_t>::max()) {
      throw NumericalError("conv2d_int8: int32 accumulator may overflow for output channel " + std::to_string(co));
    }
  }

  std::vector<std::int16_t> centered(input.data.size());
  for (std::size_t i = 0; i < centered.size(); ++i) {
    centered[i] = static_cast<std::int16_t>(input.data[i] - zp_in);
  }
  double const multiplier = input.qp.scale * weight.qp.scale / out_qp.scale;

  QFeatureMap out{c_out, h, w, std::vector<std::int8_t>(static_cast<std::size_t>(c_out * hw)), out_qp};
  parallel_for(c_out, [&](long co) {
    std::vector<std::int32_t> acc(static_cast<std::size_t>(hw), bias.data[static_cast<std::size_t>(co)]);
    for (long ci = 0; ci < c_in; ++ci) {
      std::int16_t const *in = centered.data() + ci * hw;
      std::int8_t const *wk = weight.data.data() + (co * c_in + ci) * k * k;
      for (long ky = 0; ky < k; ++ky) {
        long const dy = ky - pad;
        long const y0 = std::max(0L, -dy);
        long const y1 = std::min(h, h - dy);
        for (long kx = 0; kx < k; ++kx) {
          long const dx = kx - pad;
          long const x0 = std::max(0L, -dx);
          long const x1 = std::min(w, w - dx);
          std::int32_t const wv = wk[ky * k + kx];
          if (wv == 0) {
            continue;
          }
          for (long y = y0; y < y1; ++y) {
            std::int32_t *arow = acc.data() + y * w;
            std::int16_t const *irow = in + (y + dy) * w + dx;
            for (long x = x0; x < x1; ++x) {
              arow[x] += wv * irow[x];
            }
          }
        }
      }
    }
    std::int8_t *o = out.data.data() + co * hw;
    for (long i = 0; i < hw; ++i) {
      std::int8_t q = requantize(static_cast<double>(acc[static_cast<std::size_t>(i)]) * multiplier, out_qp.zero_point);
      if (relu) {
        q = std::max<std::int8_t>(q, static_cast<std::int8_t>(std::clamp(out_qp.zero_point, -128, 127)));
      }
      o[i] = q;
    }
  });
  return out;
}

namespace {

/// Integer multipliers expressing scales a and b in units of max(a, b)/4096.
struct CommonScale
{
  double unit;
  std::int32_t mult_a;
  std::int32_t mult_b;
};

CommonScale common_scale(double scale_a, double scale_b)
{
  double const unit = std::max(scale_a, scale_b) / 4096.0;
  return {unit, static_cast<std::int32_t>(std::lround(scale_a / unit)),
          static_cast<std::int32_t>(std::lround(scale_b / unit))};
}

} // namespace

QFeatureMap add_requantize(QFeatureMap const &a, QFeatureMap const &b, double factor, QParams const &out_qp)
{
  if (a.channels != b.channels || a.height != b.height || a.width != b.width) {
    throw DimensionError("add_requantize: feature map shapes differ");
  }
  auto const cs = common_scale(a.qp.scale, factor * b.qp.scale);
  double const to_out = cs.unit / out_qp.scale;
  QFeatureMap out{a.channels, a.height, a.width, std::vector<std::int8_t>(a.data.size()), out_qp};
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    std::int32_t const sum = (a.data[i] - a.qp.zero_point) * cs.mult_a + (b.data[i] - b.qp.zero_point) * cs.mult_b;
    out.data[i] = requantize(static_cast<double>(sum) * to_out, out_qp.zero_point);
  }
  return out;
}

ComplexImage resnet_forward_int8(ComplexImage const &x, QuantizedWeightStore const &qw)
{
  qw.spec.validate();
  auto const &spec = qw.spec;
  QFeatureMap const input = quantize_features(to_channels(x), qw.activation("input"));
  QFeatureMap h = conv2d_int8(input, qw.weight("head"), qw.bias("head"), qw.activation("head"));
  for (int i = 0; i < spec.n_blocks; ++i) {
    std::string const prefix = "block" + std::to_string(i);
    QFeatureMap const r = conv2d_int8(h, qw.weight(prefix + ".conv1"), qw.bias(prefix + ".conv1"),
                                      qw.activation(prefix + ".relu"), true);
    QFeatureMap const c = conv2d_int8(r, qw.weight(prefix + ".conv2"), qw.bias(prefix + ".conv2"),
                                      qw.activation(prefix + ".conv2"));
    h = add_requantize(h, c, spec.residual_scale, qw.activation(prefix + ".out"));
  }
  QFeatureMap const t = conv2d_int8(h, qw.weight("tail"), qw.bias("tail"), qw.activation("tail"));

  // Global skip in int32, dequantized once at exit.
  auto const cs = common_scale(input.qp.scale, t.qp.scale);
  long const hw = x.size();
  ComplexImage out(x.n_pe, x.n_ro);
  for (long i = 0; i < hw; ++i) {
    auto const at = [&](long ch) {
      auto const idx = static_cast<std::size_t>(ch * hw + i);
      std::int32_t const sum = (input.data[idx] - input.qp.zero_point) * cs.mult_a + (t.data[idx] - t.qp.zero_point) * cs.mult_b;
      return static_cast<float>(static_cast<double>(sum) * cs.unit);
    };
    out.data[static_cast<std::size_t>(i)] = {at(0), at(1)};
  }
  return out;
}

} // namespace pdmr
