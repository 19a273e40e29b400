#pragma once

// Shared helpers for the test programs: seeded random inputs and dense
// matrix oracles built straight from the DFT definition.

#include "pdmr/core.hpp"
#include "pdmr/sim.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

namespace test {

using cd = std::complex<double>;

template <typename T>
pdmr::Image<T> random_image(long rows, long cols, std::uint64_t seed)
{
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  pdmr::Image<T> img(rows, cols);
  for (auto &v : img.data) {
    double const re = g(rng);
    double const im = g(rng);
    v = {static_cast<T>(re), static_cast<T>(im)};
  }
  return img;
}

// Random coil maps, not normalized. Useful when the operators alone are under test.
template <typename T>
pdmr::CoilMaps<T> random_maps(long n_coils, long rows, long cols, std::uint64_t seed)
{
  pdmr::CoilMaps<T> m;
  for (long k = 0; k < n_coils; ++k) {
    m.maps.push_back(random_image<T>(rows, cols, seed * 131 + static_cast<std::uint64_t>(k)));
  }
  return m;
}

template <typename T>
Eigen::VectorXcd to_vec(pdmr::Image<T> const &img)
{
  Eigen::VectorXcd v(img.size());
  for (long i = 0; i < img.size(); ++i) {
    v(i) = cd(img.data[static_cast<std::size_t>(i)].real(), img.data[static_cast<std::size_t>(i)].imag());
  }
  return v;
}

template <typename T>
pdmr::Image<T> from_vec(Eigen::VectorXcd const &v, long rows, long cols)
{
  pdmr::Image<T> img(rows, cols);
  for (long i = 0; i < img.size(); ++i) {
    img.data[static_cast<std::size_t>(i)] = {static_cast<T>(v(i).real()), static_cast<T>(v(i).imag())};
  }
  return img;
}

// Stacks per-coil M×n_ro arrays, coil-major.
template <typename T>
Eigen::VectorXcd stack(std::vector<pdmr::Image<T>> const &coils)
{
  long total = 0;
  for (auto const &c : coils) {
    total += c.size();
  }
  Eigen::VectorXcd v(total);
  long at = 0;
  for (auto const &c : coils) {
    v.segment(at, c.size()) = to_vec(c);
    at += c.size();
  }
  return v;
}

// Orthonormal N-point DFT matrix, e^(−i2πqn/N)/√N.
inline Eigen::MatrixXcd dft_matrix(long n)
{
  Eigen::MatrixXcd f(n, n);
  for (long q = 0; q < n; ++q) {
    for (long p = 0; p < n; ++p) {
      double const ang = -2.0 * std::numbers::pi * static_cast<double>((q * p) % n) / static_cast<double>(n);
      f(q, p) = std::polar(1.0 / std::sqrt(static_cast<double>(n)), ang);
    }
  }
  return f;
}

// Dense E: row (k, i, q) holds Σ_{p,c} F_N[rows_i, p] F_nro[q, c] C^k[p, c].
template <typename T>
Eigen::MatrixXcd dense_E(pdmr::CoilMaps<T> const &maps, std::vector<long> const &rows)
{
  long const n = maps.n_pe();
  long const nro = maps.n_ro();
  long const m = static_cast<long>(rows.size());
  auto const fn = dft_matrix(n);
  auto const fr = dft_matrix(nro);
  Eigen::MatrixXcd e(maps.n_coils() * m * nro, n * nro);
  for (long k = 0; k < maps.n_coils(); ++k) {
    auto const &c = maps.maps[static_cast<std::size_t>(k)];
    for (long i = 0; i < m; ++i) {
      for (long q = 0; q < nro; ++q) {
        long const r = (k * m + i) * nro + q;
        for (long p = 0; p < n; ++p) {
          for (long col = 0; col < nro; ++col) {
            cd const ck(c(p, col).real(), c(p, col).imag());
            e(r, p * nro + col) = fn(rows[static_cast<std::size_t>(i)], p) * fr(q, col) * ck;
          }
        }
      }
    }
  }
  return e;
}

inline double rel(Eigen::VectorXcd const &a, Eigen::VectorXcd const &b)
{
  double const d = b.norm();
  return d == 0.0 ? (a - b).norm() : (a - b).norm() / d;
}

} // namespace test
