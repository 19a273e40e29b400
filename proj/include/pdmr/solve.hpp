#pragma once

#include "pdmr/core.hpp"
#include "pdmr/fftfree.hpp"
#include "pdmr/fourier.hpp"
#include "pdmr/sim.hpp"

#include <functional>
#include <memory>
#include <optional>
#include <vector>

namespace pdmr {

template <typename T>
using LinearOperator = std::function<Image<T>(Image<T> const &)>;

template <typename T>
struct CgResult
{
  Image<T> x;
  std::vector<double> residual_history; // ‖r_i‖ / ‖b‖ after each completed iteration
};

struct CgOptions
{
  int iterations = 10;
  double tolerance = 1e-12;
  /// Abort with NumericalError after this many consecutive residual increases; 0 disables.
  int divergence_window = 0;
};

/// Conjugate gradient from x₀ = 0 for a Hermitian positive semidefinite operator.
/// Stops after `iterations` steps or once ‖r‖/‖b‖ ≤ tolerance.
template <typename T>
CgResult<T> cg_solve(LinearOperator<T> const &apply_A, Image<T> const &b, CgOptions const &opts);

template <typename T>
CgResult<T> cg_solve(LinearOperator<T> const &apply_A, Image<T> const &b, int iterations, double tolerance)
{
  return cg_solve(apply_A, b, CgOptions{iterations, tolerance, 0});
}

enum class DFBackend { FFT_CG, FFTFREE_CG, FFTFREE_DIRECT };

char const *to_string(DFBackend b);

struct DFConfig
{
  /// One weight per unroll, or a single shared value. Empty means 0.05.
  std::vector<double> mu;
  int cg_iters = 10;
  double cg_tol = 1e-12;
  DFBackend backend = DFBackend::FFTFREE_DIRECT;

  double mu_for(int unroll) const;
  void validate() const;
};

inline constexpr double kDefaultMu = 0.05;

/// The operators a data-fidelity update needs, prepared once per slice.
template <typename T>
class DataFidelity
{
public:
  DataFidelity(CoilMaps<T> const &maps, SamplingMask const &mask, DFBackend backend,
               TransformCounter *counter = nullptr);

  DFBackend backend() const { return backend_; }

  /// x = argmin ‖y − E x‖² + μ‖x − z‖², i.e. (EᴴE + μI)x = rhs + μz where
  /// rhs = Eᴴy (FFT backend) or Bᴴs (FFT-free backends).
  Image<T> update(Image<T> const &z, Image<T> const &rhs, double mu, int cg_iters, double cg_tol);

  /// EᴴE x (FFT_CG) or BᴴB x (FFT-free backends).
  Image<T> normal(Image<T> const &x) const;

private:
  CoilMaps<T> maps_;
  SamplingMask mask_;
  DFBackend backend_;
  TransformCounter *counter_;
  std::unique_ptr<AliasingSolver<T>> blocks_;
};

/// Single-unroll convenience form of DataFidelity::update using cfg.mu_for(unroll).
template <typename T>
Image<T> df_update(Image<T> const &z, Image<T> const &rhs_data_term, DFConfig const &cfg, DataFidelity<T> &operators,
                   int unroll = 0);

/// Clinical baseline: CG on EᴴE x = Eᴴy with divergence detection.
template <typename T>
CgResult<T> cg_sense(MultiCoilKSpace<T> const &y, CoilMaps<T> const &maps, SamplingMask const &mask, int iterations,
                     double tolerance, TransformCounter *counter = nullptr);

/// Coil-combined zero-filled reconstruction Eᴴy.
template <typename T>
Image<T> zero_filled(MultiCoilKSpace<T> const &y, CoilMaps<T> const &maps, TransformCounter *counter = nullptr);

} // namespace pdmr
