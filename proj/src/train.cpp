#include "pdmr/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace pdmr {

void TrainConfig::validate() const
{
  if (epochs < 1) {
    throw std::invalid_argument("TrainConfig: epochs must be >= 1");
  }
  if (batch_size < 1) {
    throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
  }
  if (!(learning_rate > 0.0)) {
    throw std::invalid_argument("TrainConfig: learning_rate must be > 0");
  }
  net.validate();
}

namespace {

template <typename T>
void reference_norms(Image<T> const &ref, double &l2, double &l1)
{
  l2 = 0.0;
  l1 = 0.0;
  for (auto const &v : ref.data) {
    double const a = std::abs(std::complex<double>(v.real(), v.imag()));
    l2 += a * a;
    l1 += a;
  }
  l2 = std::sqrt(l2);
  if (!(l2 > 0.0) || !(l1 > 0.0)) {
    throw std::invalid_argument("normalized l1-l2 loss: reference image is zero");
  }
}

} // namespace

template <typename T>
double loss_normalized_l1l2(Image<T> const &ref, Image<T> const &est)
{
  require_same_shape(ref, est, "loss_normalized_l1l2");
  double ref_l2 = 0.0, ref_l1 = 0.0;
  reference_norms(ref, ref_l2, ref_l1);
  double res_l2 = 0.0, res_l1 = 0.0;
  for (std::size_t i = 0; i < ref.data.size(); ++i) {
    std::complex<double> const r(ref.data[i].real() - est.data[i].real(), ref.data[i].imag() - est.data[i].imag());
    double const a = std::abs(r);
    res_l2 += a * a;
    res_l1 += a;
  }
  return std::sqrt(res_l2) / ref_l2 + res_l1 / ref_l1;
}

template <typename T>
Image<T> loss_gradient(Image<T> const &ref, Image<T> const &est)
{
  require_same_shape(ref, est, "loss_gradient");
  double ref_l2 = 0.0, ref_l1 = 0.0;
  reference_norms(ref, ref_l2, ref_l1);
  std::vector<std::complex<double>> r(ref.data.size());
  double res_l2 = 0.0;
  for (std::size_t i = 0; i < ref.data.size(); ++i) {
    r[i] = {static_cast<double>(ref.data[i].real()) - est.data[i].real(),
            static_cast<double>(ref.data[i].imag()) - est.data[i].imag()};
    res_l2 += std::norm(r[i]);
  }
  res_l2 = std::sqrt(res_l2);
  Image<T> g(ref.n_pe, ref.n_ro);
  for (std::size_t i = 0; i < r.size(); ++i) {
    std::complex<double> grad = 0.0;
    if (res_l2 > 0.0) {
      grad -= r[i] / (res_l2 * ref_l2);
    }
    double const a = std::abs(r[i]);
    if (a > 0.0) {
      grad -= r[i] / (a * ref_l1);
    }
    g.data[i] = {static_cast<T>(grad.real()), static_cast<T>(grad.imag())};
  }
  return g;
}

template double loss_normalized_l1l2<float>(Image<float> const &, Image<float> const &);
template double loss_normalized_l1l2<double>(Image<double> const &, Image<double> const &);
template Image<float> loss_gradient<float>(Image<float> const &, Image<float> const &);
template Image<double> loss_gradient<double>(Image<double> const &, Image<double> const &);

namespace {

struct ConvGrads
{
  TensorT<double> weight;
  TensorT<double> bias;
};

/// Gradients of a same-size convolution given dL/d(output). Fills grad_input when non-null.
ConvGrads conv2d_backward(FeatureMap<double> const &input, TensorT<double> const &weight,
                          FeatureMap<double> const &grad_out, FeatureMap<double> *grad_input)
{
  long const c_out = weight.shape[0];
  long const c_in = weight.shape[1];
  long const k = weight.shape[2];
  long const h = input.height;
  long const w = input.width;
  long const pad = (k - 1) / 2;
  ConvGrads g{TensorT<double>(weight.shape), TensorT<double>({c_out})};

  parallel_for(c_out, [&](long co) {
    double const *go = grad_out.channel(co);
    g.bias.data[static_cast<std::size_t>(co)] = std::accumulate(go, go + h * w, 0.0);
    for (long ci = 0; ci < c_in; ++ci) {
      double const *in = input.channel(ci);
      double *gw = g.weight.data.data() + (co * c_in + ci) * k * k;
      for (long ky = 0; ky < k; ++ky) {
        long const dy = ky - pad;
        long const y0 = std::max(0L, -dy);
        long const y1 = std::min(h, h - dy);
        for (long kx = 0; kx < k; ++kx) {
          long const dx = kx - pad;
          long const x0 = std::max(0L, -dx);
          long const x1 = std::min(w, w - dx);
          double acc = 0.0;
          for (long y = y0; y < y1; ++y) {
            double const *grow = go + y * w;
            double const *irow = in + (y + dy) * w + dx;
            for (long x = x0; x < x1; ++x) {
              acc += grow[x] * irow[x];
            }
          }
          gw[ky * k + kx] = acc;
        }
      }
    }
  });

  if (grad_input) {
    *grad_input = FeatureMap<double>(c_in, h, w);
    parallel_for(c_in, [&](long ci) {
      double *gi = grad_input->channel(ci);
      for (long co = 0; co < c_out; ++co) {
        double const *go = grad_out.channel(co);
        double const *wk = weight.data.data() + (co * c_in + ci) * k * k;
        for (long ky = 0; ky < k; ++ky) {
          long const dy = ky - pad;
          long const y0 = std::max(0L, -dy);
          long const y1 = std::min(h, h - dy);
          for (long kx = 0; kx < k; ++kx) {
            long const dx = kx - pad;
            long const x0 = std::max(0L, -dx);
            long const x1 = std::min(w, w - dx);
            double const wv = wk[ky * k + kx];
            for (long y = y0; y < y1; ++y) {
              double const *grow = go + y * w;
              double *irow = gi + (y + dy) * w + dx;
              for (long x = x0; x < x1; ++x) {
                irow[x] += wv * grow[x];
              }
            }
          }
        }
      }
    });
  }
  return g;
}

void store(TensorMap<double> &grads, std::string const &layer, ConvGrads &&g)
{
  grads[layer + ".weight"] = std::move(g.weight);
  grads[layer + ".bias"] = std::move(g.bias);
}

} // namespace

BackpropResult backprop_resnet(ComplexImageD const &x, ComplexImageD const &ref, NetworkSpec const &spec,
                               TensorMap<double> const &params)
{
  ForwardTape<double> tape;
  ComplexImageD const est = resnet_apply(x, spec, params, &tape);
  BackpropResult result;
  result.loss = loss_normalized_l1l2(ref, est);

  // out = input + tail(h_n): the tail sees dL/d(out) directly.
  FeatureMap<double> const g_out = to_channels(loss_gradient(ref, est));
  FeatureMap<double> const &h_last = tape.block_out.empty() ? tape.head : tape.block_out.back();
  FeatureMap<double> g_h;
  store(result.grads, "tail", conv2d_backward(h_last, lookup(params, "tail.weight"), g_out, &g_h));

  double const rs = spec.residual_scale;
  for (int i = spec.n_blocks - 1; i >= 0; --i) {
    auto const idx = static_cast<std::size_t>(i);
    std::string const prefix = "block" + std::to_string(i);
    FeatureMap<double> g_c = g_h;
    for (auto &v : g_c.data) {
      v *= rs;
    }
    FeatureMap<double> g_r;
    store(result.grads, prefix + ".conv2",
          conv2d_backward(tape.relu[idx], lookup(params, prefix + ".conv2.weight"), g_c, &g_r));
    auto const &pre = tape.pre_relu[idx];
    for (std::size_t j = 0; j < g_r.data.size(); ++j) {
      if (!(pre.data[j] > 0.0)) {
        g_r.data[j] = 0.0;
      }
    }
    FeatureMap<double> const &h_in = i == 0 ? tape.head : tape.block_out[idx - 1];
    FeatureMap<double> g_skip;
    store(result.grads, prefix + ".conv1",
          conv2d_backward(h_in, lookup(params, prefix + ".conv1.weight"), g_r, &g_skip));
    for (std::size_t j = 0; j < g_h.data.size(); ++j) {
      g_h.data[j] += g_skip.data[j];
    }
  }
  store(result.grads, "head", conv2d_backward(tape.input, lookup(params, "head.weight"), g_h, nullptr));
  return result;
}

TensorMap<double> to_double(TensorMap<float> const &t)
{
  TensorMap<double> out;
  for (auto const &[name, tensor] : t) {
    TensorT<double> d(tensor.shape);
    std::copy(tensor.data.begin(), tensor.data.end(), d.data.begin());
    out.emplace(name, std::move(d));
  }
  return out;
}

TensorMap<float> to_float(TensorMap<double> const &t)
{
  TensorMap<float> out;
  for (auto const &[name, tensor] : t) {
    Tensor f(tensor.shape);
    std::transform(tensor.data.begin(), tensor.data.end(), f.data.begin(),
                   [](double v) { return static_cast<float>(v); });
    out.emplace(name, std::move(f));
  }
  return out;
}

BackpropResult backprop_resnet(ComplexImage const &x, ComplexImage const &ref, WeightStore const &w)
{
  w.validate();
  return backprop_resnet(image_cast<double>(x), image_cast<double>(ref), w.spec, to_double(w.tensors));
}

TensorMap<double> init_parameters(NetworkSpec const &spec, std::uint64_t seed)
{
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  TensorMap<double> params;
  for (auto const &[name, shape] : parameter_layout(spec)) {
    TensorT<double> t(shape);
    if (shape.size() == 4) {
      double const fan_in = static_cast<double>(shape[1] * shape[2] * shape[3]);
      double bound = std::sqrt(6.0 / fan_in);
      if (name.starts_with("tail")) {
        bound *= 0.1;
      }
      for (auto &v : t.data) {
        v = bound * unit(rng);
      }
    }
    params.emplace(name, std::move(t));
  }
  return params;
}

TrainResult train_denoiser(std::vector<TrainingPair> const &dataset, TrainConfig const &cfg)
{
  cfg.validate();
  if (dataset.empty()) {
    throw std::invalid_argument("train_denoiser: empty dataset");
  }
  std::vector<ComplexImageD> inputs, targets;
  for (auto const &pair : dataset) {
    require_same_shape(pair.input, pair.target, "train_denoiser");
    inputs.push_back(image_cast<double>(pair.input));
    targets.push_back(image_cast<double>(pair.target));
  }

  TensorMap<double> params = init_parameters(cfg.net, cfg.seed);
  TensorMap<double> m1, m2;
  for (auto const &[name, t] : params) {
    m1.emplace(name, TensorT<double>(t.shape));
    m2.emplace(name, TensorT<double>(t.shape));
  }

  TrainResult result;
  double initial = 0.0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    initial += loss_normalized_l1l2(targets[i], resnet_apply(inputs[i], cfg.net, params));
  }
  result.loss_log.push_back(initial / static_cast<double>(inputs.size()));

  std::mt19937_64 rng(cfg.seed ^ 0x5eedULL);
  std::vector<std::size_t> order(inputs.size());
  std::iota(order.begin(), order.end(), 0);
  long step = 0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    long batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size), ++batch_index) {
      std::size_t const stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      double const inv = 1.0 / static_cast<double>(stop - start);
      TensorMap<double> grads;
      double batch_loss = 0.0;
      for (std::size_t b = start; b < stop; ++b) {
        auto const sample = order[b];
        auto bp = backprop_resnet(inputs[sample], targets[sample], cfg.net, params);
        if (!std::isfinite(bp.loss)) {
          throw NumericalError("train_denoiser: non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                                   std::to_string(batch_index),
                               epoch);
        }
        batch_loss += bp.loss * inv;
        if (grads.empty()) {
          grads = std::move(bp.grads);
          for (auto &[name, g] : grads) {
            for (auto &v : g.data) {
              v *= inv;
            }
          }
        } else {
          for (auto &[name, g] : grads) {
            auto const &src = bp.grads.at(name).data;
            for (std::size_t j = 0; j < g.data.size(); ++j) {
              g.data[j] += src[j] * inv;
            }
          }
        }
      }
      epoch_loss += batch_loss * static_cast<double>(stop - start);

      ++step;
      double const c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
      double const c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
      for (auto &[name, p] : params) {
        auto const &g = grads.at(name).data;
        auto &a = m1.at(name).data;
        auto &b = m2.at(name).data;
        for (std::size_t j = 0; j < p.data.size(); ++j) {
          a[j] = cfg.beta1 * a[j] + (1.0 - cfg.beta1) * g[j];
          b[j] = cfg.beta2 * b[j] + (1.0 - cfg.beta2) * g[j] * g[j];
          p.data[j] -= cfg.learning_rate * (a[j] / c1) / (std::sqrt(b[j] / c2) + cfg.epsilon);
        }
      }
    }
    result.loss_log.push_back(epoch_loss / static_cast<double>(order.size()));
  }

  result.weights.spec = cfg.net;
  result.weights.tensors = to_float(params);
  return result;
}

std::vector<TrainingPair> make_training_pairs(std::vector<Dataset> const &suite, TrainingInputs kind,
                                              UnrollConfig const &cfg, RegularizerWeights const &weights)
{
  std::vector<TrainingPair> pairs;
  for (auto const &d : suite) {
    switch (kind) {
    case TrainingInputs::ZeroFilled:
      pairs.push_back({zero_filled(d.kspace, d.maps), d.ground_truth});
      break;
    case TrainingInputs::CgSense:
      pairs.push_back({cg_sense(d.kspace, d.maps, d.mask, kCgSenseIterations, kCgSenseTolerance).x, d.ground_truth});
      break;
    case TrainingInputs::Iterates: {
      UnrollConfig run = cfg;
      if (!weights.fp32 && !weights.int8) {
        run.regularizer = RegularizerKind::Identity;
      }
      for (auto &x : collect_regularizer_inputs(d.kspace, d.maps, d.mask, weights, run)) {
        pairs.push_back({std::move(x), d.ground_truth});
      }
      break;
    }
    }
  }
  return pairs;
}

std::vector<TrainingPair> crop_patches(std::vector<TrainingPair> const &pairs, long size, int per_pair,
                                       std::uint64_t seed)
{
  std::mt19937_64 rng(seed);
  std::vector<TrainingPair> out;
  auto crop = [size](ComplexImage const &img, long r0, long c0) {
    ComplexImage p(size, size);
    for (long r = 0; r < size; ++r) {
      for (long c = 0; c < size; ++c) {
        p(r, c) = img(r0 + r, c0 + c);
      }
    }
    return p;
  };
  for (auto const &pair : pairs) {
    if (pair.input.n_pe < size || pair.input.n_ro < size) {
      throw DimensionError("crop_patches: patch larger than image");
    }
    std::uniform_int_distribution<long> rows(0, pair.input.n_pe - size);
    std::uniform_int_distribution<long> cols(0, pair.input.n_ro - size);
    for (int i = 0; i < per_pair; ++i) {
      long const r0 = rows(rng);
      long const c0 = cols(rng);
      TrainingPair p{crop(pair.input, r0, c0), crop(pair.target, r0, c0)};
      // A crop of pure background has no defined normalized loss.
      if (norm2(p.target) > 0.0f) {
        out.push_back(std::move(p));
      }
    }
  }
  return out;
}

namespace {

std::vector<bool> relu_pattern(ForwardTape<double> const &tape)
{
  std::vector<bool> pattern;
  for (auto const &a : tape.pre_relu) {
    for (double v : a.data) {
      pattern.push_back(v > 0.0);
    }
  }
  return pattern;
}

} // namespace

GradCheckReport gradient_check(NetworkSpec const &spec, long size, std::uint64_t seed, double step)
{
  spec.validate();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  TensorMap<double> params = init_parameters(spec, seed + 1);
  // Nonzero biases and a full-strength tail so every parameter has a visible gradient.
  for (auto &[name, t] : params) {
    if (name.ends_with(".bias")) {
      for (auto &v : t.data) {
        v = 0.1 * unit(rng);
      }
    } else if (name.starts_with("tail")) {
      for (auto &v : t.data) {
        v *= 10.0;
      }
    }
  }
  ComplexImageD x(size, size), ref(size, size);
  for (auto &v : x.data) {
    v = {unit(rng), unit(rng)};
  }
  for (auto &v : ref.data) {
    v = {unit(rng), unit(rng)};
  }

  auto const analytic = backprop_resnet(x, ref, spec, params);
  GradCheckReport report;
  report.loss = analytic.loss;
  ForwardTape<double> base_tape;
  resnet_apply(x, spec, params, &base_tape);
  auto const base_pattern = relu_pattern(base_tape);

  for (auto const &[name, shape] : parameter_layout(spec)) {
    auto &tensor = params.at(name);
    auto const &grad = analytic.grads.at(name);
    for (std::size_t j = 0; j < tensor.data.size(); ++j) {
      double const orig = tensor.data[j];
      ForwardTape<double> tape_plus, tape_minus;
      tensor.data[j] = orig + step;
      double const lp = loss_normalized_l1l2(ref, resnet_apply(x, spec, params, &tape_plus));
      tensor.data[j] = orig - step;
      double const lm = loss_normalized_l1l2(ref, resnet_apply(x, spec, params, &tape_minus));
      tensor.data[j] = orig;
      if (relu_pattern(tape_plus) != base_pattern || relu_pattern(tape_minus) != base_pattern) {
        ++report.skipped;
        continue;
      }
      double const numeric = (lp - lm) / (2.0 * step);
      double const a = grad.data[j];
      double const denom = std::max({std::abs(a), std::abs(numeric), 1e-6});
      double const rel = std::abs(a - numeric) / denom;
      ++report.checked;
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_parameter = name + "[" + std::to_string(j) + "]";
      }
    }
  }
  return report;
}

} // namespace pdmr
