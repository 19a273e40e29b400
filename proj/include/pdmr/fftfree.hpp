#pragma once

#include "pdmr/core.hpp"
#include "pdmr/fourier.hpp"
#include "pdmr/sim.hpp"

#include <complex>
#include <vector>

// Image-domain encoding for equispaced sampling.
//
// With every R-th phase-encode line kept (offset δ), the M-point inverse DFT of the
// sampled lines equals a phase-weighted R-fold foldover of the image:
//
//   s[m] = (1/√R) Σ_r e^(−i2πδ(m+rM)/N) · x[m + rM],   m = 0..M−1, M = N/R
//
// so the per-coil encoding C^k → F → P_Ω → F_M⁻¹ collapses to a multiply and a sum,
// and ‖y − E x‖ = ‖s − B x‖ with s = F_M⁻¹ y. Only the one-off conversion of the
// measured data touches a transform.

namespace pdmr {

/// Image-domain measurements s^k, each M×n_ro.
template <typename T>
struct FoldedMeasurements
{
  std::vector<Image<T>> coils;
  long rate = 1;
  long offset = 0;
  long n_pe = 0;

  long n_folded() const { return n_pe / rate; }
  long n_coils() const { return static_cast<long>(coils.size()); }
};

/// s^k = 2D orthonormal inverse DFT of the M×n_ro sampled data, one per coil.
template <typename T>
FoldedMeasurements<T> preprocess_to_image_domain(MultiCoilKSpace<T> const &y, TransformCounter *counter = nullptr);

template <typename T>
std::vector<std::complex<T>> fold(std::span<std::complex<T> const> column, long rate, long offset);

template <typename T>
std::vector<std::complex<T>> unfold_adjoint(std::span<std::complex<T> const> folded, long rate, long offset, long n);

/// B x: per coil fold(C^k ⊙ x) along phase-encode.
template <typename T>
FoldedMeasurements<T> apply_B(Image<T> const &x, CoilMaps<T> const &maps, long rate, long offset);

/// Bᴴ s = Σ_k conj(C^k) ⊙ unfold_adjoint(s^k).
template <typename T>
Image<T> apply_BH(FoldedMeasurements<T> const &s, CoilMaps<T> const &maps);

/// One aliasing set: the R pixels {m, m+M, ..., m+(R−1)M} of one readout column
/// and its R×R block of BᴴB + μI, row-major.
template <typename T>
struct AliasingSystem
{
  long column = 0;
  std::vector<long> rows;
  std::vector<std::complex<T>> matrix;
};

/// Groups ordered by (m, column), m major.
template <typename T>
std::vector<AliasingSystem<T>> assemble_aliasing_systems(CoilMaps<T> const &maps, long rate, long offset, double mu);

/// The block-diagonal normal operator BᴴB, stored once per mask and coil set.
/// Solves (BᴴB + μI)x = b exactly group by group with a Hermitian Cholesky
/// factorization in double precision; factors are cached for the last μ.
template <typename T>
class AliasingSolver
{
public:
  AliasingSolver(CoilMaps<T> const &maps, long rate, long offset);

  long rate() const { return rate_; }
  long n_groups() const { return n_folded_ * n_ro_; }

  /// (BᴴB + μI) x via the stored blocks.
  Image<T> apply(Image<T> const &x, double mu) const;

  /// Throws NumericalError naming the group when a block is singular.
  Image<T> solve(Image<T> const &rhs, double mu);

private:
  void factor(double mu);

  long rate_;
  long n_pe_;
  long n_ro_;
  long n_folded_;
  std::vector<std::complex<double>> gram_;    // n_groups × R × R
  std::vector<std::complex<double>> factors_; // lower Cholesky factors for cached_mu_
  double cached_mu_ = -1.0;
};

} // namespace pdmr
