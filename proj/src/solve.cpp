#include "pdmr/solve.hpp"

#include <cmath>
#include <string>

namespace pdmr {

template <typename T>
CgResult<T> cg_solve(LinearOperator<T> const &apply_A, Image<T> const &b, CgOptions const &opts)
{
  if (opts.iterations < 1) {
    throw std::invalid_argument("cg_solve: iterations must be >= 1");
  }
  if (!(opts.tolerance > 0.0)) {
    throw std::invalid_argument("cg_solve: tolerance must be > 0");
  }
  if (!all_finite(b)) {
    throw NumericalError("cg_solve: right-hand side is not finite", 0);
  }
  CgResult<T> result;
  result.x = Image<T>(b.n_pe, b.n_ro);
  double const b_norm = norm2(b);
  if (b_norm == 0.0) {
    return result;
  }
  Image<T> r = b;
  Image<T> p = b;
  double rr = std::real(hermitian_inner_product(r, r));
  int rising = 0;
  for (int it = 1; it <= opts.iterations; ++it) {
    Image<T> const q = apply_A(p);
    double const pq = std::real(hermitian_inner_product(p, q));
    if (!std::isfinite(pq)) {
      throw NumericalError("cg_solve: non-finite curvature at iteration " + std::to_string(it), it);
    }
    if (pq <= 0.0) {
      // Search direction in the null space: nothing left to reduce.
      break;
    }
    T const alpha = static_cast<T>(rr / pq);
    axpy(std::complex<T>(alpha), p, result.x);
    axpy(std::complex<T>(-alpha), q, r);
    double const rr_new = std::real(hermitian_inner_product(r, r));
    if (!std::isfinite(rr_new)) {
      throw NumericalError("cg_solve: non-finite residual at iteration " + std::to_string(it), it);
    }
    double const rel = std::sqrt(rr_new) / b_norm;
    if (!result.residual_history.empty() && rel > result.residual_history.back()) {
      ++rising;
    } else {
      rising = 0;
    }
    result.residual_history.push_back(rel);
    if (opts.divergence_window > 0 && rising >= opts.divergence_window) {
      throw NumericalError("cg_solve: residual grew for " + std::to_string(rising) +
                               " consecutive iterations (iteration " + std::to_string(it) + ")",
                           it);
    }
    if (rel <= opts.tolerance || rr_new == 0.0) {
      break;
    }
    T const beta = static_cast<T>(rr_new / rr);
    for (std::size_t i = 0; i < p.data.size(); ++i) {
      p.data[i] = r.data[i] + beta * p.data[i];
    }
    rr = rr_new;
  }
  return result;
}

char const *to_string(DFBackend b)
{
  switch (b) {
  case DFBackend::FFT_CG:
    return "fft-cg";
  case DFBackend::FFTFREE_CG:
    return "fftfree-cg";
  case DFBackend::FFTFREE_DIRECT:
    return "fftfree-direct";
  }
  return "?";
}

double DFConfig::mu_for(int unroll) const
{
  if (mu.empty()) {
    return kDefaultMu;
  }
  if (mu.size() == 1) {
    return mu.front();
  }
  if (unroll < 0 || static_cast<std::size_t>(unroll) >= mu.size()) {
    throw std::out_of_range("DFConfig: no mu for unroll " + std::to_string(unroll));
  }
  return mu[static_cast<std::size_t>(unroll)];
}

void DFConfig::validate() const
{
  if (cg_iters < 1) {
    throw std::invalid_argument("DFConfig: cg_iters must be >= 1");
  }
  if (!(cg_tol > 0.0)) {
    throw std::invalid_argument("DFConfig: cg_tol must be > 0");
  }
  for (double m : mu) {
    if (!(m >= 0.0)) {
      throw std::invalid_argument("DFConfig: mu must be >= 0");
    }
  }
}

template <typename T>
DataFidelity<T>::DataFidelity(CoilMaps<T> const &maps, SamplingMask const &mask, DFBackend backend,
                              TransformCounter *counter)
    : maps_(maps), mask_(mask), backend_(backend), counter_(counter)
{
  if (maps.n_pe() != mask.n_pe) {
    throw DimensionError("DataFidelity: coil maps and mask disagree on phase-encode size");
  }
  if (backend == DFBackend::FFTFREE_DIRECT) {
    blocks_ = std::make_unique<AliasingSolver<T>>(maps, mask.rate, mask.offset);
  }
}

template <typename T>
Image<T> DataFidelity<T>::normal(Image<T> const &x) const
{
  if (backend_ == DFBackend::FFT_CG) {
    return adjoint_EH(forward_E(x, maps_, mask_, counter_), maps_, counter_);
  }
  return apply_BH(apply_B(x, maps_, mask_.rate, mask_.offset), maps_);
}

template <typename T>
Image<T> DataFidelity<T>::update(Image<T> const &z, Image<T> const &rhs, double mu, int cg_iters, double cg_tol)
{
  require_same_shape(z, rhs, "df_update");
  Image<T> b = rhs;
  axpy(std::complex<T>(static_cast<T>(mu)), z, b);
  if (backend_ == DFBackend::FFTFREE_DIRECT) {
    return blocks_->solve(b, mu);
  }
  T const mu_t = static_cast<T>(mu);
  LinearOperator<T> const op = [&](Image<T> const &x) {
    Image<T> out = normal(x);
    axpy(std::complex<T>(mu_t), x, out);
    return out;
  };
  return cg_solve(op, b, cg_iters, cg_tol).x;
}

template <typename T>
Image<T> df_update(Image<T> const &z, Image<T> const &rhs_data_term, DFConfig const &cfg, DataFidelity<T> &operators,
                   int unroll)
{
  cfg.validate();
  if (cfg.backend != operators.backend()) {
    throw std::invalid_argument("df_update: configured backend differs from the prepared operators");
  }
  return operators.update(z, rhs_data_term, cfg.mu_for(unroll), cfg.cg_iters, cfg.cg_tol);
}

template <typename T>
CgResult<T> cg_sense(MultiCoilKSpace<T> const &y, CoilMaps<T> const &maps, SamplingMask const &mask, int iterations,
                     double tolerance, TransformCounter *counter)
{
  DataFidelity<T> ops(maps, mask, DFBackend::FFT_CG, counter);
  Image<T> const rhs = adjoint_EH(y, maps, counter);
  LinearOperator<T> const op = [&](Image<T> const &x) { return ops.normal(x); };
  return cg_solve(op, rhs, CgOptions{iterations, tolerance, 3});
}

template <typename T>
Image<T> zero_filled(MultiCoilKSpace<T> const &y, CoilMaps<T> const &maps, TransformCounter *counter)
{
  return adjoint_EH(y, maps, counter);
}

#define PDMR_INSTANTIATE(T)                                                                                     \
  template CgResult<T> cg_solve<T>(LinearOperator<T> const &, Image<T> const &, CgOptions const &);            \
  template class DataFidelity<T>;                                                                              \
  template Image<T> df_update<T>(Image<T> const &, Image<T> const &, DFConfig const &, DataFidelity<T> &, int); \
  template CgResult<T> cg_sense<T>(MultiCoilKSpace<T> const &, CoilMaps<T> const &, SamplingMask const &, int,  \
                                   double, TransformCounter *);                                                \
  template Image<T> zero_filled<T>(MultiCoilKSpace<T> const &, CoilMaps<T> const &, TransformCounter *);

PDMR_INSTANTIATE(float)
PDMR_INSTANTIATE(double)
#undef PDMR_INSTANTIATE

} // namespace pdmr
