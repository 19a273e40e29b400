#pragma once

#include "pdmr/core.hpp"
#include "pdmr/fourier.hpp"
#include "pdmr/nn.hpp"
#include "pdmr/quant.hpp"
#include "pdmr/sim.hpp"
#include "pdmr/solve.hpp"

#include <functional>

namespace pdmr {

enum class RegularizerKind { Float32, Int8, Identity };
enum class ReconBackend { FFT, FFTFree };

char const *to_string(RegularizerKind r);
char const *to_string(ReconBackend b);

struct UnrollConfig
{
  int n_unrolls = 10;
  DFConfig df;
  RegularizerKind regularizer = RegularizerKind::Float32;
  ReconBackend backend = ReconBackend::FFTFree;

  /// FFT pairs with FFT_CG; FFTFree with FFTFREE_CG or FFTFREE_DIRECT.
  void validate() const;
};

/// The conventional pipeline: FFT backend, 10 unrolls of 10-iteration CG.
UnrollConfig conventional_config(RegularizerKind reg = RegularizerKind::Float32);

/// The FFT-free pipeline with exact aliasing-set solves.
UnrollConfig fftfree_config(RegularizerKind reg = RegularizerKind::Int8);

struct RegularizerWeights
{
  WeightStore const *fp32 = nullptr;
  QuantizedWeightStore const *int8 = nullptr;
};

/// Transform counts attributed to each pipeline stage.
struct StageCounts
{
  TransformCounts preprocessing;  // F_M⁻¹ of the measurements (FFT-free backend)
  TransformCounts initialization; // Eᴴy (FFT backend)
  TransformCounts data_fidelity;  // all unrolls
};

/// Receives the regularizer input of each unroll (for calibration).
using UnrollObserver = std::function<void(int unroll, ComplexImage const &x)>;

/// Unrolled variable splitting with quadratic penalty. x⁽⁰⁾ is the zero-filled
/// image; each unroll applies the regularizer then the data-fidelity solve.
/// The FFT-free backend converts the measurements to the image domain once and
/// performs no further transforms.
ComplexImage unrolled_vsqp(MultiCoilKSpace<float> const &y, CoilMaps<float> const &maps, SamplingMask const &mask,
                           RegularizerWeights const &weights, UnrollConfig const &cfg,
                           TransformCounter *counter = nullptr, StageCounts *stages = nullptr,
                           UnrollObserver const &observer = {});

/// The regularizer input of every unroll for one slice, in unroll order. With
/// the Identity regularizer these are the plain alternating-projection iterates.
std::vector<ComplexImage> collect_regularizer_inputs(MultiCoilKSpace<float> const &y, CoilMaps<float> const &maps,
                                                     SamplingMask const &mask, RegularizerWeights const &weights,
                                                     UnrollConfig const &cfg);

struct Baselines
{
  ComplexImage zero_filled;
  ComplexImage cg_sense;
};

// Early stopping: with noisy data further iterations mostly amplify noise.
inline constexpr int kCgSenseIterations = 5;
inline constexpr double kCgSenseTolerance = 1e-6;

Baselines reconstruct_baselines(MultiCoilKSpace<float> const &y, CoilMaps<float> const &maps, SamplingMask const &mask,
                                int cg_iterations = kCgSenseIterations, double cg_tolerance = kCgSenseTolerance);

} // namespace pdmr
