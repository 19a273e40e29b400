#pragma once

#include "pdmr/core.hpp"
#include "pdmr/fourier.hpp"
#include "pdmr/recon.hpp"
#include "pdmr/sim.hpp"

#include <string>
#include <utility>
#include <vector>

namespace pdmr {

/// 20·log10(max|ref| / RMSE) on magnitude images; +infinity when est equals ref.
double psnr(ComplexImage const &ref, ComplexImage const &est);

/// Mean SSIM of magnitude images over all fully contained 11×11 Gaussian
/// (σ = 1.5) windows, with L = max|ref|.
double ssim(ComplexImage const &ref, ComplexImage const &est);

/// (fft_count, ifft_count) at 1D-transform granularity.
std::pair<long, long> report_counts(TransformCounter const &counter);

struct MetricsReport
{
  std::string variant;
  double psnr_db = 0.0;
  double ssim = 0.0;
  double wall_time_s = 0.0;
  long fft_count = 0;  // complete 2D forward transforms
  long ifft_count = 0; // complete 2D inverse transforms
  std::string fingerprint;
};

std::string csv_header();
/// One LF-terminated row; infinite PSNR prints as "inf".
std::string csv_row(MetricsReport const &r);

/// 64-bit FNV-1a of the text, as 16 lowercase hex digits.
std::string fingerprint(std::string const &text);

/// Canonical text of every parameter that influences a run, including the thread count.
std::string describe_run(SimParams const &data, std::string const &method, UnrollConfig const *cfg,
                         NetworkSpec const *net);

enum class Method { ZeroFilled, CgSense, Unrolled };

struct Variant
{
  std::string name;
  Method method = Method::Unrolled;
  UnrollConfig cfg;
  int cg_sense_iters = kCgSenseIterations;
  double cg_sense_tol = kCgSenseTolerance;
};

struct RunOutcome
{
  ComplexImage image;
  MetricsReport report;
  TransformCounts counts; // whole run, both granularities
  StageCounts stages;     // unrolled runs only
};

/// One timed reconstruction scored against the ground truth.
RunOutcome run_variant(Dataset const &data, Variant const &v, RegularizerWeights const &weights);

/// Per variant: one untimed warm-up, then `repeats` timed runs; reports the median time.
std::vector<MetricsReport> benchmark(Dataset const &data, std::vector<Variant> const &variants,
                                     RegularizerWeights const &weights, int repeats = 3);

} // namespace pdmr
