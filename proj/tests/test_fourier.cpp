#include "pdmr/fourier.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace pdmr;
using cf = std::complex<float>;
using cd = std::complex<double>;

namespace {

std::vector<cd> random_vec(long n, std::uint64_t seed)
{
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  std::vector<cd> v(static_cast<std::size_t>(n));
  for (auto &x : v) {
    double const re = g(rng);
    x = {re, g(rng)};
  }
  return v;
}

std::vector<cf> to_float(std::vector<cd> const &v)
{
  std::vector<cf> out;
  for (auto const &x : v) {
    out.emplace_back(static_cast<float>(x.real()), static_cast<float>(x.imag()));
  }
  return out;
}

template <typename A, typename B>
double rel_diff(std::vector<A> const &a, std::vector<B> const &b)
{
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += std::norm(cd(a[i]) - cd(b[i]));
    den += std::norm(cd(b[i]));
  }
  return std::sqrt(num / den);
}

double norm(std::vector<cf> const &v)
{
  double s = 0.0;
  for (auto const &x : v) {
    s += std::norm(cd(x));
  }
  return std::sqrt(s);
}

} // namespace

TEST_CASE("naive DFT examples")
{
  auto const a = dft_naive({1.0, 0.0}, false);
  CHECK(std::abs(a[0] - cd(1 / std::sqrt(2.0))) < 1e-15);
  CHECK(std::abs(a[1] - cd(1 / std::sqrt(2.0))) < 1e-15);

  auto const b = dft_naive({1.0, 1.0, 1.0}, false);
  CHECK(std::abs(b[0] - cd(std::sqrt(3.0))) < 1e-14);
  CHECK(std::abs(b[1]) < 1e-14);
  CHECK(std::abs(b[2]) < 1e-14);

  auto const v = random_vec(17, 4);
  auto const f = dft_naive(v, false);
  double nv = 0.0, nf = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    nv += std::norm(v[i]);
    nf += std::norm(f[i]);
  }
  CHECK(std::abs(std::sqrt(nf) - std::sqrt(nv)) < 1e-12 * std::sqrt(nv));
  CHECK(rel_diff(dft_naive(f, true), v) < 1e-13);
}

TEST_CASE("delta of length 4 transforms to a constant 0.5")
{
  std::vector<cf> d{1, 0, 0, 0};
  auto const out = fft1d(d, false);
  for (auto const &x : out) {
    CHECK(std::abs(x - cf(0.5f)) < 1e-7f);
  }
}

TEST_CASE("length 12 round trip")
{
  auto const v = to_float(random_vec(12, 9));
  auto const back = fft1d(fft1d(v, false), true);
  CHECK(rel_diff(back, v) < 1e-6);
}

TEST_CASE("1D transforms match the naive DFT for many lengths")
{
  // Covers radix 4/2/3/5/7/11/13 paths and the Bluestein fallback (17, 97, 2·101).
  for (long n : {1L, 2L, 3L, 4L, 5L, 6L, 7L, 8L, 10L, 11L, 12L, 13L, 16L, 17L, 30L, 64L, 97L, 143L, 202L, 320L}) {
    CAPTURE(n);
    auto const v = random_vec(n, static_cast<std::uint64_t>(n));
    auto const ref_f = dft_naive(v, false);
    auto const ref_i = dft_naive(v, true);
    CHECK(rel_diff(fft1d(to_float(v), false), ref_f) < 1e-6);
    CHECK(rel_diff(fft1d(to_float(v), true), ref_i) < 1e-6);
    CHECK(rel_diff(fft1d(v, false), ref_f) < 1e-12);
  }
}

TEST_CASE("unitarity and adjointness")
{
  for (long n : {4L, 5L, 8L, 12L, 320L}) {
    CAPTURE(n);
    auto const a = to_float(random_vec(n, 100 + static_cast<std::uint64_t>(n)));
    auto const b = to_float(random_vec(n, 200 + static_cast<std::uint64_t>(n)));
    CHECK(std::abs(norm(fft1d(a, false)) - norm(a)) <= 1e-6 * norm(a));

    auto const fa = fft1d(a, false);
    auto const ib = fft1d(b, true);
    cd lhs = 0.0, rhs = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      lhs += std::conj(cd(fa[i])) * cd(b[i]);
      rhs += std::conj(cd(a[i])) * cd(ib[i]);
    }
    CHECK(std::abs(lhs - rhs) <= 1e-5 * std::abs(rhs));
  }
}

TEST_CASE("constant 4x4 image concentrates at DC")
{
  ComplexImage img(4, 4);
  std::fill(img.data.begin(), img.data.end(), cf(1.0f));
  auto const k = fft2d(img, false);
  CHECK(std::abs(k(0, 0) - cf(4.0f)) < 1e-6f);
  for (long i = 1; i < 16; ++i) {
    CHECK(std::abs(k.data[static_cast<std::size_t>(i)]) < 1e-6f);
  }
}

TEST_CASE("2D round trip and naive oracle")
{
  auto const x = test::random_image<float>(6, 8, 1);
  auto const back = fft2d(fft2d(x, false), true);
  CHECK(relative_error(back, x) < 1e-6);

  auto const y = test::random_image<float>(5, 7, 2);
  auto const k = fft2d(y, false);
  // F_5 · Y · F_7ᵀ from the DFT definition.
  Eigen::MatrixXcd ym(5, 7);
  for (long r = 0; r < 5; ++r) {
    for (long c = 0; c < 7; ++c) {
      ym(r, c) = cd(y(r, c));
    }
  }
  Eigen::MatrixXcd const ref = test::dft_matrix(5) * ym * test::dft_matrix(7).transpose();
  double num = 0.0;
  for (long r = 0; r < 5; ++r) {
    for (long c = 0; c < 7; ++c) {
      num += std::norm(cd(k(r, c)) - ref(r, c));
    }
  }
  CHECK(std::sqrt(num) / ref.norm() < 1e-6);
}

TEST_CASE("transform counter")
{
  TransformCounter c;
  CHECK(c.snapshot() == TransformCounts{});

  (void)fft1d(std::vector<cf>(7), false, &c);
  CHECK(c.snapshot() == TransformCounts{1, 0, 0, 0});
  (void)fft1d(std::vector<cf>(7), true, &c);
  CHECK(c.snapshot() == TransformCounts{1, 1, 0, 0});

  TransformCounter c2;
  (void)fft2d(ComplexImage(8, 6), false, &c2);
  CHECK(c2.snapshot() == TransformCounts{14, 0, 1, 0});
  (void)fft2d(ComplexImage(8, 6), true, &c2);
  CHECK(c2.snapshot() == TransformCounts{14, 14, 1, 1});

  for (auto [r, col] : {std::pair{5L, 3L}, std::pair{16L, 16L}, std::pair{1L, 9L}}) {
    TransformCounter cc;
    (void)fft2d(ComplexImage(r, col), false, &cc);
    CHECK(cc.snapshot().fft_count == r + col);
  }
}

TEST_CASE("transforms do not depend on the thread count")
{
  int const saved = threads();
  auto const x = test::random_image<float>(40, 36, 5);
  set_threads(1);
  auto const a = fft2d(x, false);
  set_threads(3);
  auto const b = fft2d(x, false);
  CHECK(a == b);
  set_threads(saved);
}
