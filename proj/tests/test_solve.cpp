#include "pdmr/eval.hpp"
#include "pdmr/solve.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <cmath>

using namespace pdmr;
using cd = std::complex<double>;
using cf = std::complex<float>;

namespace {

CoilMaps<float> unit_coil(long rows, long cols)
{
  CoilMaps<float> m;
  m.maps.emplace_back(rows, cols);
  std::fill(m.maps[0].data.begin(), m.maps[0].data.end(), cf(1.0f));
  m.normalized = true;
  return m;
}

// Dense matrix acting on a row-major image.
LinearOperator<double> dense_op(Eigen::MatrixXcd const &a, long rows, long cols)
{
  return [a, rows, cols](ComplexImageD const &x) {
    return test::from_vec<double>(a * test::to_vec(x), rows, cols);
  };
}

Dataset small_dataset(double sigma, std::uint64_t seed, long rate = 4)
{
  SimParams p;
  p.n_pe = 64;
  p.n_ro = 64;
  p.n_coils = 8;
  p.rate = rate;
  p.sigma = sigma;
  p.seed = seed;
  return simulate_dataset(p);
}

} // namespace

TEST_CASE("CG on the identity converges in one step")
{
  auto const b = test::random_image<double>(3, 4, 1);
  auto const res = cg_solve<double>([](ComplexImageD const &x) { return x; }, b, 10, 1e-12);
  CHECK(relative_error(res.x, b) < 1e-15);
  REQUIRE(res.residual_history.size() == 1);
  CHECK(res.residual_history[0] == 0.0);
}

TEST_CASE("CG on diag(1, 2)")
{
  ComplexImageD b(1, 2);
  b(0, 0) = 1.0;
  b(0, 1) = 2.0;
  LinearOperator<double> const op = [](ComplexImageD const &x) {
    ComplexImageD y = x;
    y(0, 1) *= 2.0;
    return y;
  };
  auto const res = cg_solve(op, b, 5, 1e-14);
  CHECK(std::abs(res.x(0, 0) - cd(1.0)) < 1e-12);
  CHECK(std::abs(res.x(0, 1) - cd(1.0)) < 1e-12);
}

TEST_CASE("CG on a random Hermitian positive definite system")
{
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    auto const g = test::random_image<double>(8, 8, seed);
    Eigen::MatrixXcd gm(8, 8);
    for (long i = 0; i < 8; ++i) {
      for (long j = 0; j < 8; ++j) {
        gm(i, j) = g(i, j);
      }
    }
    Eigen::MatrixXcd const a = gm.adjoint() * gm + Eigen::MatrixXcd::Identity(8, 8);
    auto const b = test::random_image<double>(2, 4, seed + 50);
    Eigen::VectorXcd const ref = a.partialPivLu().solve(test::to_vec(b));
    auto const res = cg_solve(dense_op(a, 2, 4), b, 8, 1e-13);
    CHECK(res.residual_history.size() <= 8);
    CHECK(test::rel(test::to_vec(res.x), ref) < 1e-6);

    // The residual 2-norm may oscillate; the A-norm of the error may not.
    double prev = INFINITY;
    for (int k = 1; k <= 8; ++k) {
      Eigen::VectorXcd const err = ref - test::to_vec(cg_solve(dense_op(a, 2, 4), b, k, 1e-13).x);
      double const energy = std::sqrt(std::real(err.dot(a * err)));
      CHECK(energy <= prev * (1.0 + 1e-12));
      prev = energy;
    }
  }
}

TEST_CASE("CG reports NaN with the iteration")
{
  auto const b = test::random_image<double>(2, 2, 3);
  LinearOperator<double> const op = [](ComplexImageD const &x) {
    ComplexImageD y = x;
    y.data[0] = {std::nan(""), 0.0};
    return y;
  };
  try {
    (void)cg_solve(op, b, 5, 1e-12);
    FAIL("no error");
  } catch (NumericalError const &e) {
    CHECK(e.iteration() == 1);
  }
  ComplexImageD bad = b;
  bad.data[1] = {0.0, std::nan("")};
  CHECK_THROWS_AS(cg_solve<double>([](ComplexImageD const &x) { return x; }, bad, 5, 1e-12), NumericalError);
  CHECK_THROWS_AS(cg_solve<double>([](ComplexImageD const &x) { return x; }, b, 0, 1e-12), std::invalid_argument);
}

TEST_CASE("CG divergence detection")
{
  // A strongly non-Hermitian operator makes the residual grow steadily.
  Eigen::MatrixXcd a(2, 2);
  a << 1.0, 10.0, -10.0, 1.0;
  ComplexImageD b(1, 2);
  b(0, 0) = 1.0;
  CgOptions opts;
  opts.iterations = 30;
  opts.divergence_window = 3;
  CHECK_THROWS_AS(cg_solve(dense_op(a, 1, 2), b, opts), NumericalError);
  opts.divergence_window = 0;
  CHECK_NOTHROW(cg_solve(dense_op(a, 1, 2), b, opts));
}

TEST_CASE("CG starts from zero and returns zero for b = 0")
{
  ComplexImageD b(4, 4);
  auto const res = cg_solve<double>([](ComplexImageD const &x) { return x; }, b, 3, 1e-12);
  CHECK(res.x == b);
  CHECK(res.residual_history.empty());
}

TEST_CASE("DFConfig")
{
  DFConfig cfg;
  CHECK(cfg.mu_for(3) == kDefaultMu);
  cfg.mu = {0.2};
  CHECK(cfg.mu_for(7) == 0.2);
  cfg.mu = {0.1, 0.2, 0.3};
  CHECK(cfg.mu_for(1) == 0.2);
  CHECK_THROWS(cfg.mu_for(3));
  cfg.mu = {-1.0};
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.mu = {};
  cfg.cg_iters = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.cg_iters = 10;
  cfg.cg_tol = 0.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("data fidelity: a huge penalty returns z")
{
  auto const maps = test::random_maps<float>(4, 8, 8, 2);
  auto const mask = make_equispaced_mask(8, 2, 1);
  auto const z = test::random_image<float>(8, 8, 3);
  auto const rhs = test::random_image<float>(8, 8, 4);
  for (auto backend : {DFBackend::FFT_CG, DFBackend::FFTFREE_CG, DFBackend::FFTFREE_DIRECT}) {
    CAPTURE(to_string(backend));
    DataFidelity<float> ops(maps, mask, backend);
    DFConfig cfg;
    cfg.mu = {1e6};
    cfg.backend = backend;
    CHECK(relative_error(df_update(z, rhs, cfg, ops), z) <= 1e-4);
  }
}

TEST_CASE("data fidelity: unit coil, full sampling, no penalty")
{
  auto const maps = unit_coil(8, 6);
  auto const mask = make_equispaced_mask(8, 1, 0);
  auto const x = test::random_image<float>(8, 6, 9);
  auto const y = forward_E(x, maps, mask);
  auto const ehy = adjoint_EH(y, maps);
  CHECK(relative_error(ehy, x) < 1e-6);
  for (auto backend : {DFBackend::FFT_CG, DFBackend::FFTFREE_CG, DFBackend::FFTFREE_DIRECT}) {
    DataFidelity<float> ops(maps, mask, backend);
    DFConfig cfg;
    cfg.mu = {0.0};
    cfg.backend = backend;
    CHECK(relative_error(df_update(test::random_image<float>(8, 6, 10), ehy, cfg, ops), x) < 1e-5);
  }
}

TEST_CASE("data fidelity: three backends against the dense closed form")
{
  for (long d : {0L, 1L}) {
    auto const maps = test::random_maps<float>(4, 8, 8, 30 + static_cast<std::uint64_t>(d));
    auto const mask = make_equispaced_mask(8, 2, d);
    auto const x = test::random_image<float>(8, 8, 31);
    auto const z = test::random_image<float>(8, 8, 32);
    auto const y = forward_E(x, maps, mask);
    double const mu = 0.05;

    auto const e = test::dense_E(maps, mask.sampled_rows);
    Eigen::MatrixXcd const lhs = e.adjoint() * e + mu * Eigen::MatrixXcd::Identity(64, 64);
    Eigen::VectorXcd const ref = lhs.ldlt().solve(e.adjoint() * test::stack(y.coils) + mu * test::to_vec(z));

    std::vector<ComplexImage> outs;
    for (auto backend : {DFBackend::FFT_CG, DFBackend::FFTFREE_CG, DFBackend::FFTFREE_DIRECT}) {
      CAPTURE(to_string(backend));
      DataFidelity<float> ops(maps, mask, backend);
      DFConfig cfg;
      cfg.mu = {mu};
      cfg.backend = backend;
      cfg.cg_iters = 200;
      cfg.cg_tol = 1e-8;
      ComplexImage const rhs = backend == DFBackend::FFT_CG ? adjoint_EH(y, maps)
                                                            : apply_BH(preprocess_to_image_domain(y), maps);
      outs.push_back(df_update(z, rhs, cfg, ops));
      CHECK(test::rel(test::to_vec(outs.back()), ref) < 1e-5);
    }
    CHECK(relative_error(outs[0], outs[2]) < 1e-5);
    CHECK(relative_error(outs[1], outs[2]) < 1e-5);
  }
}

TEST_CASE("data fidelity: FFT-free backends never transform")
{
  auto const maps = test::random_maps<float>(4, 16, 8, 2);
  auto const mask = make_equispaced_mask(16, 4, 0);
  auto const z = test::random_image<float>(16, 8, 3);
  for (auto backend : {DFBackend::FFTFREE_CG, DFBackend::FFTFREE_DIRECT}) {
    TransformCounter c;
    DataFidelity<float> ops(maps, mask, backend, &c);
    DFConfig cfg;
    cfg.backend = backend;
    (void)df_update(z, z, cfg, ops);
    CHECK(c.snapshot() == TransformCounts{});
  }
  TransformCounter c;
  DataFidelity<float> ops(maps, mask, DFBackend::FFT_CG, &c);
  DFConfig cfg;
  cfg.backend = DFBackend::FFT_CG;
  cfg.cg_iters = 10;
  (void)df_update(z, z, cfg, ops);
  CHECK(c.snapshot().fft2d_count == 10 * 4);
  CHECK(c.snapshot().ifft2d_count == 10 * 4);

  DFConfig wrong;
  wrong.backend = DFBackend::FFTFREE_CG;
  CHECK_THROWS_AS(df_update(z, z, wrong, ops), std::invalid_argument);
}

TEST_CASE("data fidelity: singular block with no penalty")
{
  auto const maps = unit_coil(8, 4);
  auto const mask = make_equispaced_mask(8, 2, 0);
  DataFidelity<float> ops(maps, mask, DFBackend::FFTFREE_DIRECT);
  DFConfig cfg;
  cfg.mu = {0.0};
  auto const z = test::random_image<float>(8, 4, 1);
  CHECK_THROWS_AS(df_update(z, z, cfg, ops), NumericalError);
}

TEST_CASE("CG-SENSE recovers noiseless data")
{
  auto const d = small_dataset(0.0, 3);
  auto const res = cg_sense(d.kspace, d.maps, d.mask, 100, 1e-9);
  CHECK(relative_error(res.x, d.ground_truth) < 1e-3);
  CHECK(res.residual_history.back() < 1e-3 * res.residual_history.front());

  auto const noisy = small_dataset(0.05, 3);
  double const clean_psnr = psnr(d.ground_truth, cg_sense(d.kspace, d.maps, d.mask, 15, 1e-6).x);
  double const noisy_psnr = psnr(noisy.ground_truth, cg_sense(noisy.kspace, noisy.maps, noisy.mask, 15, 1e-6).x);
  CHECK(noisy_psnr < clean_psnr);
}

TEST_CASE("CG-SENSE with one unit coil and full sampling")
{
  auto const maps = unit_coil(8, 8);
  auto const mask = make_equispaced_mask(8, 1, 0);
  auto const x = test::random_image<float>(8, 8, 4);
  auto const y = forward_E(x, maps, mask);
  auto const res = cg_sense(y, maps, mask, 1, 1e-6);
  CHECK(res.residual_history.size() == 1);
  CHECK(relative_error(res.x, adjoint_EH(y, maps)) < 1e-6);
}

TEST_CASE("zero-filled reconstruction")
{
  auto const maps = unit_coil(16, 16);
  auto const full = make_equispaced_mask(16, 1, 0);
  auto const x = test::random_image<float>(16, 16, 4);
  CHECK(relative_error(zero_filled(forward_E(x, maps, full), maps), x) < 1e-6);

  auto const d = small_dataset(0.0, 5);
  auto const zf = zero_filled(d.kspace, d.maps);
  CHECK(relative_error(zf, apply_BH(preprocess_to_image_domain(d.kspace), d.maps)) < 1e-5);

  // Foldover: the image correlates with the ground truth shifted by M rows.
  long const m = 16;
  ComplexImage rolled(64, 64);
  for (long i = 0; i < 64; ++i) {
    for (long j = 0; j < 64; ++j) {
      rolled((i + m) % 64, j) = d.ground_truth(i, j);
    }
  }
  auto const noise = test::random_image<float>(64, 64, 77);
  auto corr = [&](ComplexImage const &a) {
    return std::abs(hermitian_inner_product(a, zf)) / (norm2(a) * norm2(zf));
  };
  CHECK(corr(rolled) > 3.0f * corr(noise));
}
