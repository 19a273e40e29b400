#include "pdmr/sim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <string>

namespace pdmr {

SamplingMask make_equispaced_mask(long n_pe, long rate, long offset)
{
  if (n_pe < 1 || rate < 1) {
    throw std::invalid_argument("make_equispaced_mask: n_pe and rate must be positive");
  }
  if (n_pe % rate != 0) {
    throw std::invalid_argument("make_equispaced_mask: rate " + std::to_string(rate) + " does not divide n_pe " +
                                std::to_string(n_pe));
  }
  if (offset < 0 || offset >= rate) {
    throw std::invalid_argument("make_equispaced_mask: offset must lie in [0, rate)");
  }
  SamplingMask mask{n_pe, rate, offset, {}};
  for (long row = offset; row < n_pe; row += rate) {
    mask.sampled_rows.push_back(row);
  }
  return mask;
}

std::vector<Ellipse> const &shepp_logan_ellipses()
{
  static std::vector<Ellipse> const table{
      {1.0, 0.69, 0.92, 0.0, 0.0, 0.0},
      {-0.8, 0.6624, 0.8740, 0.0, -0.0184, 0.0},
      {-0.2, 0.1100, 0.3100, 0.22, 0.0, -18.0},
      {-0.2, 0.1600, 0.4100, -0.22, 0.0, 18.0},
      {0.1, 0.2100, 0.2500, 0.0, 0.35, 0.0},
      {0.1, 0.0460, 0.0460, 0.0, 0.1, 0.0},
      {0.1, 0.0460, 0.0460, 0.0, -0.1, 0.0},
      {0.1, 0.0460, 0.0230, -0.08, -0.605, 0.0},
      {0.1, 0.0230, 0.0230, 0.0, -0.606, 0.0},
      {0.1, 0.0230, 0.0460, 0.06, -0.605, 0.0},
  };
  return table;
}

template <typename T>
Image<T> render_phantom(std::vector<Ellipse> const &ellipses, long n_pe, long n_ro)
{
  if (n_pe < 16 || n_ro < 16) {
    throw DimensionError("phantom: both dimensions must be >= 16");
  }
  Image<T> img(n_pe, n_ro);
  for (long i = 0; i < n_pe; ++i) {
    double const y = 2.0 * static_cast<double>(n_pe / 2 - i) / static_cast<double>(n_pe);
    for (long j = 0; j < n_ro; ++j) {
      double const x = 2.0 * static_cast<double>(j - n_ro / 2) / static_cast<double>(n_ro);
      double value = 0.0;
      for (auto const &e : ellipses) {
        double const phi = e.angle_deg * std::numbers::pi / 180.0;
        double const dx = x - e.center_x;
        double const dy = y - e.center_y;
        double const u = dx * std::cos(phi) + dy * std::sin(phi);
        double const v = -dx * std::sin(phi) + dy * std::cos(phi);
        if ((u * u) / (e.semi_x * e.semi_x) + (v * v) / (e.semi_y * e.semi_y) <= 1.0) {
          value += e.intensity;
        }
      }
      img(i, j) = std::complex<T>(static_cast<T>(std::clamp(value, 0.0, 1.0)), T(0));
    }
  }
  return img;
}

template <typename T>
Image<T> shepp_logan(long n_pe, long n_ro)
{
  return render_phantom<T>(shepp_logan_ellipses(), n_pe, n_ro);
}

template <typename T>
Image<T> random_phantom(long n_pe, long n_ro, std::uint64_t seed)
{
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  auto ellipses = shepp_logan_ellipses();
  double const skull = 1.0 + 0.05 * unit(rng);
  for (std::size_t i = 0; i < 2; ++i) {
    ellipses[i].semi_x *= skull;
    ellipses[i].semi_y *= skull;
  }
  for (std::size_t i = 2; i < ellipses.size(); ++i) {
    auto &e = ellipses[i];
    e.center_x += 0.04 * unit(rng);
    e.center_y += 0.04 * unit(rng);
    e.semi_x *= 1.0 + 0.2 * unit(rng);
    e.semi_y *= 1.0 + 0.2 * unit(rng);
    e.angle_deg += 15.0 * unit(rng);
    e.intensity *= 1.0 + 0.5 * unit(rng);
  }
  return render_phantom<T>(ellipses, n_pe, n_ro);
}

namespace {

// Up to three phase cycles across the field of view. Gentler phases leave the
// R = 4 aliasing sets of an 8-coil array badly conditioned.
double const kMaxPhaseSlope = 6.0 * std::numbers::pi;

} // namespace

template <typename T>
CoilMaps<T> simulate_coil_maps(long n_coils, long n_pe, long n_ro, std::uint64_t seed)
{
  if (n_coils < 1) {
    throw std::invalid_argument("simulate_coil_maps: need at least one coil");
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double const side = static_cast<double>(std::min(n_pe, n_ro));
  double const radius = 0.6 * side;
  double const width = 0.4 * side;
  double const c_row = static_cast<double>(n_pe) / 2.0;
  double const c_col = static_cast<double>(n_ro) / 2.0;
  double const rotation = unit(rng) * 2.0 * std::numbers::pi / static_cast<double>(n_coils);

  std::vector<Image<double>> raw;
  raw.reserve(static_cast<std::size_t>(n_coils));
  for (long k = 0; k < n_coils; ++k) {
    double const theta = rotation + 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n_coils);
    double const row0 = c_row + radius * std::sin(theta);
    double const col0 = c_col + radius * std::cos(theta);
    double const slope_pe = kMaxPhaseSlope * (2.0 * unit(rng) - 1.0);
    double const slope_ro = kMaxPhaseSlope * (2.0 * unit(rng) - 1.0);
    double const phase0 = 2.0 * std::numbers::pi * unit(rng);
    Image<double> map(n_pe, n_ro);
    for (long i = 0; i < n_pe; ++i) {
      for (long j = 0; j < n_ro; ++j) {
        double const dr = static_cast<double>(i) - row0;
        double const dc = static_cast<double>(j) - col0;
        double const mag = std::exp(-(dr * dr + dc * dc) / (2.0 * width * width));
        double const phase = phase0 + slope_pe * (static_cast<double>(i) - c_row) / static_cast<double>(n_pe) +
                             slope_ro * (static_cast<double>(j) - c_col) / static_cast<double>(n_ro);
        map(i, j) = std::polar(mag, phase);
      }
    }
    raw.push_back(std::move(map));
  }

  CoilMaps<T> out;
  out.normalized = true;
  out.maps.assign(static_cast<std::size_t>(n_coils), Image<T>(n_pe, n_ro));
  for (long p = 0; p < n_pe * n_ro; ++p) {
    double energy = 0.0;
    for (auto const &m : raw) {
      energy += std::norm(m.data[static_cast<std::size_t>(p)]);
    }
    double const inv = 1.0 / std::sqrt(energy);
    for (long k = 0; k < n_coils; ++k) {
      auto const v = raw[static_cast<std::size_t>(k)].data[static_cast<std::size_t>(p)] * inv;
      out.maps[static_cast<std::size_t>(k)].data[static_cast<std::size_t>(p)] =
          std::complex<T>(static_cast<T>(v.real()), static_cast<T>(v.imag()));
    }
  }
  return out;
}

namespace {

template <typename T>
void check_maps(CoilMaps<T> const &maps, long n_pe, long n_ro, char const *where)
{
  if (maps.maps.empty()) {
    throw DimensionError(std::string(where) + ": no coil maps");
  }
  for (auto const &m : maps.maps) {
    require_same_shape(m.n_pe, m.n_ro, n_pe, n_ro, where);
  }
}

} // namespace

template <typename T>
MultiCoilKSpace<T> forward_E(Image<T> const &x, CoilMaps<T> const &maps, SamplingMask const &mask,
                             TransformCounter *counter)
{
  check_maps(maps, x.n_pe, x.n_ro, "forward_E");
  if (mask.n_pe != x.n_pe) {
    throw DimensionError("forward_E: mask does not match image rows");
  }
  long const n_c = maps.n_coils();
  MultiCoilKSpace<T> y;
  y.mask = mask;
  y.coils.assign(static_cast<std::size_t>(n_c), Image<T>(mask.n_sampled(), x.n_ro));
  for (long k = 0; k < n_c; ++k) {
    auto const &c = maps.maps[static_cast<std::size_t>(k)];
    Image<T> coil_img(x.n_pe, x.n_ro);
    for (std::size_t i = 0; i < x.data.size(); ++i) {
      coil_img.data[i] = c.data[i] * x.data[i];
    }
    auto const ksp = fft2d(std::move(coil_img), false, counter);
    auto &out = y.coils[static_cast<std::size_t>(k)];
    for (long j = 0; j < mask.n_sampled(); ++j) {
      auto const src = ksp.row(mask.sampled_rows[static_cast<std::size_t>(j)]);
      std::copy(src.begin(), src.end(), out.row(j).begin());
    }
  }
  return y;
}

template <typename T>
Image<T> adjoint_EH(MultiCoilKSpace<T> const &y, CoilMaps<T> const &maps, TransformCounter *counter)
{
  long const n_pe = y.mask.n_pe;
  long const n_ro = maps.n_ro();
  check_maps(maps, n_pe, n_ro, "adjoint_EH");
  if (y.n_coils() != maps.n_coils()) {
    throw DimensionError("adjoint_EH: coil count mismatch");
  }
  Image<T> out(n_pe, n_ro);
  for (long k = 0; k < y.n_coils(); ++k) {
    auto const &yk = y.coils[static_cast<std::size_t>(k)];
    require_same_shape(yk.n_pe, yk.n_ro, y.mask.n_sampled(), n_ro, "adjoint_EH");
    Image<T> filled(n_pe, n_ro);
    for (long j = 0; j < y.mask.n_sampled(); ++j) {
      auto const src = yk.row(j);
      std::copy(src.begin(), src.end(), filled.row(y.mask.sampled_rows[static_cast<std::size_t>(j)]).begin());
    }
    auto const img = fft2d(std::move(filled), true, counter);
    auto const &c = maps.maps[static_cast<std::size_t>(k)];
    for (std::size_t i = 0; i < out.data.size(); ++i) {
      out.data[i] += std::conj(c.data[i]) * img.data[i];
    }
  }
  return out;
}

template <typename T>
MultiCoilKSpace<T> add_noise(MultiCoilKSpace<T> y, double sigma, std::uint64_t seed)
{
  if (sigma < 0.0) {
    throw std::invalid_argument("add_noise: sigma must be >= 0");
  }
  if (sigma == 0.0) {
    return y;
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, sigma);
  for (auto &coil : y.coils) {
    for (auto &v : coil.data) {
      double const re = gauss(rng);
      double const im = gauss(rng);
      v += std::complex<T>(static_cast<T>(re), static_cast<T>(im));
    }
  }
  return y;
}

namespace {

std::uint64_t splitmix(std::uint64_t x)
{
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

} // namespace

Dataset simulate_dataset(SimParams const &params)
{
  Dataset d;
  d.params = params;
  d.ground_truth = params.phantom == PhantomKind::SheppLogan
                       ? shepp_logan<float>(params.n_pe, params.n_ro)
                       : random_phantom<float>(params.n_pe, params.n_ro, splitmix(splitmix(params.seed)));
  d.maps = simulate_coil_maps<float>(params.n_coils, params.n_pe, params.n_ro, splitmix(splitmix(params.seed) + 1));
  d.mask = make_equispaced_mask(params.n_pe, params.rate, params.offset);
  d.kspace = add_noise(forward_E(d.ground_truth, d.maps, d.mask), params.sigma, splitmix(splitmix(params.seed) + 2));
  return d;
}

std::vector<Dataset> simulate_suite(SimParams base, long count)
{
  std::vector<Dataset> suite;
  std::uint64_t const first = base.seed;
  for (long i = 0; i < count; ++i) {
    base.seed = first + static_cast<std::uint64_t>(i);
    suite.push_back(simulate_dataset(base));
  }
  return suite;
}

#define PDMR_INSTANTIATE(T)                                                                              \
  template Image<T> render_phantom<T>(std::vector<Ellipse> const &, long, long);                       \
  template Image<T> shepp_logan<T>(long, long);                                                        \
  template Image<T> random_phantom<T>(long, long, std::uint64_t);                                      \
  template CoilMaps<T> simulate_coil_maps<T>(long, long, long, std::uint64_t);                         \
  template MultiCoilKSpace<T> forward_E<T>(Image<T> const &, CoilMaps<T> const &, SamplingMask const &, \
                                           TransformCounter *);                                         \
  template Image<T> adjoint_EH<T>(MultiCoilKSpace<T> const &, CoilMaps<T> const &, TransformCounter *); \
  template MultiCoilKSpace<T> add_noise<T>(MultiCoilKSpace<T>, double, std::uint64_t);

PDMR_INSTANTIATE(float)
PDMR_INSTANTIATE(double)
#undef PDMR_INSTANTIATE

} // namespace pdmr
