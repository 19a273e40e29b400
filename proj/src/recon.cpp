#include "pdmr/recon.hpp"

#include "pdmr/fftfree.hpp"

namespace pdmr {

char const *to_string(RegularizerKind r)
{
  switch (r) {
  case RegularizerKind::Float32:
    return "fp32";
  case RegularizerKind::Int8:
    return "int8";
  case RegularizerKind::Identity:
    return "identity";
  }
  return "?";
}

char const *to_string(ReconBackend b)
{
  return b == ReconBackend::FFT ? "fft" : "fftfree";
}

void UnrollConfig::validate() const
{
  if (n_unrolls < 1) {
    throw std::invalid_argument("UnrollConfig: n_unrolls must be >= 1");
  }
  df.validate();
  bool const fft_solver = df.backend == DFBackend::FFT_CG;
  if ((backend == ReconBackend::FFT) != fft_solver) {
    throw std::invalid_argument(std::string("UnrollConfig: backend ") + to_string(backend) +
                                " cannot use data-fidelity solver " + to_string(df.backend));
  }
  if (df.mu.size() > 1 && static_cast<int>(df.mu.size()) < n_unrolls) {
    throw std::invalid_argument("UnrollConfig: fewer mu values than unrolls");
  }
}

UnrollConfig conventional_config(RegularizerKind reg)
{
  UnrollConfig cfg;
  cfg.backend = ReconBackend::FFT;
  cfg.df.backend = DFBackend::FFT_CG;
  cfg.regularizer = reg;
  return cfg;
}

UnrollConfig fftfree_config(RegularizerKind reg)
{
  UnrollConfig cfg;
  cfg.backend = ReconBackend::FFTFree;
  cfg.df.backend = DFBackend::FFTFREE_DIRECT;
  cfg.regularizer = reg;
  return cfg;
}

namespace {

TransformCounts counts_of(TransformCounter const *counter)
{
  return counter ? counter->snapshot() : TransformCounts{};
}

} // namespace

ComplexImage unrolled_vsqp(MultiCoilKSpace<float> const &y, CoilMaps<float> const &maps, SamplingMask const &mask,
                           RegularizerWeights const &weights, UnrollConfig const &cfg, TransformCounter *counter,
                           StageCounts *stages, UnrollObserver const &observer)
{
  cfg.validate();
  if (!(y.mask == mask)) {
    throw DimensionError("unrolled_vsqp: k-space was not acquired with this mask");
  }
  if (cfg.regularizer == RegularizerKind::Float32 && !weights.fp32) {
    throw std::invalid_argument("unrolled_vsqp: float regularizer requested without weights");
  }
  if (cfg.regularizer == RegularizerKind::Int8 && !weights.int8) {
    throw std::invalid_argument("unrolled_vsqp: int8 regularizer requested without quantized weights");
  }

  StageCounts local;
  TransformCounts mark = counts_of(counter);

  // The data term Eᴴy (or Bᴴs) is also the zero-filled starting point.
  ComplexImage rhs;
  if (cfg.backend == ReconBackend::FFTFree) {
    auto const s = preprocess_to_image_domain(y, counter);
    local.preprocessing = counts_of(counter) - mark;
    mark = counts_of(counter);
    rhs = apply_BH(s, maps);
  } else {
    rhs = adjoint_EH(y, maps, counter);
    local.initialization = counts_of(counter) - mark;
    mark = counts_of(counter);
  }

  // μ comes from the config, then from the weights file, then the default.
  DFConfig df = cfg.df;
  if (df.mu.empty()) {
    if (cfg.regularizer == RegularizerKind::Float32 && weights.fp32) {
      df.mu = weights.fp32->mu;
    } else if (cfg.regularizer == RegularizerKind::Int8 && weights.int8) {
      df.mu = weights.int8->mu;
    }
  }
  if (df.mu.size() > 1 && static_cast<int>(df.mu.size()) < cfg.n_unrolls) {
    throw std::invalid_argument("unrolled_vsqp: weights carry fewer mu values than unrolls");
  }

  DataFidelity<float> ops(maps, mask, df.backend, counter);
  ComplexImage x = rhs;
  for (int i = 0; i < cfg.n_unrolls; ++i) {
    if (observer) {
      observer(i, x);
    }
    ComplexImage z;
    switch (cfg.regularizer) {
    case RegularizerKind::Float32:
      z = resnet_forward(x, *weights.fp32);
      break;
    case RegularizerKind::Int8:
      z = resnet_forward_int8(x, *weights.int8);
      break;
    case RegularizerKind::Identity:
      z = x;
      break;
    }
    x = df_update(z, rhs, df, ops, i);
  }
  local.data_fidelity = counts_of(counter) - mark;
  if (stages) {
    *stages = local;
  }
  return x;
}

std::vector<ComplexImage> collect_regularizer_inputs(MultiCoilKSpace<float> const &y, CoilMaps<float> const &maps,
                                                     SamplingMask const &mask, RegularizerWeights const &weights,
                                                     UnrollConfig const &cfg)
{
  std::vector<ComplexImage> inputs;
  unrolled_vsqp(y, maps, mask, weights, cfg, nullptr, nullptr,
                [&](int, ComplexImage const &x) { inputs.push_back(x); });
  return inputs;
}

Baselines reconstruct_baselines(MultiCoilKSpace<float> const &y, CoilMaps<float> const &maps, SamplingMask const &mask,
                                int cg_iterations, double cg_tolerance)
{
  Baselines b;
  b.zero_filled = zero_filled(y, maps);
  b.cg_sense = cg_sense(y, maps, mask, cg_iterations, cg_tolerance).x;
  return b;
}

} // namespace pdmr
