#pragma once

#include "pdmr/core.hpp"
#include "pdmr/fourier.hpp"

#include <cstdint>
#include <vector>

namespace pdmr {

/// Equispaced phase-encode sampling: rows {offset, offset + rate, ...}, no calibration block.
struct SamplingMask
{
  long n_pe = 0;
  long rate = 1;
  long offset = 0;
  std::vector<long> sampled_rows;

  long n_sampled() const { return static_cast<long>(sampled_rows.size()); }
  bool operator==(SamplingMask const &) const = default;
};

SamplingMask make_equispaced_mask(long n_pe, long rate, long offset);

template <typename T>
struct CoilMaps
{
  std::vector<Image<T>> maps;
  bool normalized = false;

  long n_coils() const { return static_cast<long>(maps.size()); }
  long n_pe() const { return maps.empty() ? 0 : maps.front().n_pe; }
  long n_ro() const { return maps.empty() ? 0 : maps.front().n_ro; }
  bool operator==(CoilMaps const &) const = default;
};

/// Per-coil sampled k-space, each coil an M×n_ro array (M = mask.n_sampled()).
template <typename T>
struct MultiCoilKSpace
{
  std::vector<Image<T>> coils;
  SamplingMask mask;

  long n_coils() const { return static_cast<long>(coils.size()); }
  bool operator==(MultiCoilKSpace const &) const = default;
};

template <typename U, typename T>
CoilMaps<U> maps_cast(CoilMaps<T> const &in)
{
  CoilMaps<U> out;
  out.normalized = in.normalized;
  for (auto const &m : in.maps) {
    out.maps.push_back(image_cast<U>(m));
  }
  return out;
}

template <typename U, typename T>
MultiCoilKSpace<U> kspace_cast(MultiCoilKSpace<T> const &in)
{
  MultiCoilKSpace<U> out;
  out.mask = in.mask;
  for (auto const &c : in.coils) {
    out.coils.push_back(image_cast<U>(c));
  }
  return out;
}

/// One ellipse of an additive phantom, in normalized [-1, 1] coordinates.
struct Ellipse
{
  double intensity;
  double semi_x;
  double semi_y;
  double center_x;
  double center_y;
  double angle_deg;
};

/// The ten-ellipse modified Shepp-Logan table (Toft's intensities).
std::vector<Ellipse> const &shepp_logan_ellipses();

/// Sums ellipse intensities per pixel and clamps to [0, 1]. Pixel (i, j) maps to
/// x = 2(j − n_ro/2)/n_ro, y = 2(n_pe/2 − i)/n_pe, so (n_pe/2, n_ro/2) is the origin.
template <typename T = float>
Image<T> render_phantom(std::vector<Ellipse> const &ellipses, long n_pe, long n_ro);

template <typename T = float>
Image<T> shepp_logan(long n_pe, long n_ro);

/// Seeded perturbation of the Shepp-Logan table (centers, semi-axes, angles and
/// inner intensities jittered) so phantom suites are not a single image.
template <typename T = float>
Image<T> random_phantom(long n_pe, long n_ro, std::uint64_t seed);

/// Gaussian magnitude profiles centered on a circle of radius 0.6·min(n_pe, n_ro)
/// around the image center, each with a seeded linear phase, normalized so that
/// Σ_k |C^k[p]|² = 1 at every pixel.
template <typename T = float>
CoilMaps<T> simulate_coil_maps(long n_coils, long n_pe, long n_ro, std::uint64_t seed);

/// y^k = P_Ω F C^k x for every coil.
template <typename T>
MultiCoilKSpace<T> forward_E(Image<T> const &x, CoilMaps<T> const &maps, SamplingMask const &mask,
                             TransformCounter *counter = nullptr);

/// Σ_k conj(C^k) ⊙ F⁻¹ (zero-filled y^k).
template <typename T>
Image<T> adjoint_EH(MultiCoilKSpace<T> const &y, CoilMaps<T> const &maps, TransformCounter *counter = nullptr);

/// Adds i.i.d. circular complex Gaussian noise, std sigma per real/imag component.
template <typename T>
MultiCoilKSpace<T> add_noise(MultiCoilKSpace<T> y, double sigma, std::uint64_t seed);

enum class PhantomKind { SheppLogan, Random };

struct SimParams
{
  long n_pe = 64;
  long n_ro = 64;
  long n_coils = 8;
  long rate = 4;
  long offset = 0;
  double sigma = 0.0;
  std::uint64_t seed = 0;
  PhantomKind phantom = PhantomKind::SheppLogan;
};

/// Everything a reconstruction needs, plus the ground truth.
struct Dataset
{
  SimParams params;
  ComplexImage ground_truth;
  CoilMaps<float> maps;
  SamplingMask mask;
  MultiCoilKSpace<float> kspace;

  bool operator==(Dataset const &o) const
  {
    return ground_truth == o.ground_truth && maps == o.maps && mask == o.mask && kspace == o.kspace;
  }
};

/// Phantom, coil maps and noise all derive from params.seed.
Dataset simulate_dataset(SimParams const &params);

/// `count` datasets with seeds base.seed, base.seed + 1, ...
std::vector<Dataset> simulate_suite(SimParams base, long count);

} // namespace pdmr
