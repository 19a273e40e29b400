#include "pdmr/core.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <thread>

namespace pdmr {

NumericalError::NumericalError(std::string const &what, long iteration)
    : std::runtime_error(what), iteration_(iteration)
{
}

void require_same_shape(long rows_a, long cols_a, long rows_b, long cols_b, char const *where)
{
  if (rows_a != rows_b || cols_a != cols_b) {
    throw DimensionError(std::string(where) + ": dimension mismatch " + std::to_string(rows_a) + "x" +
                         std::to_string(cols_a) + " vs " + std::to_string(rows_b) + "x" +
                         std::to_string(cols_b));
  }
}

namespace {
constexpr std::size_t kChunk = 4096;
}

template <typename T>
std::complex<T> hermitian_inner_product(std::span<std::complex<T> const> a, std::span<std::complex<T> const> b)
{
  if (a.size() != b.size()) {
    throw DimensionError("hermitian_inner_product: length mismatch");
  }
  double total_re = 0.0;
  double total_im = 0.0;
  for (std::size_t start = 0; start < a.size(); start += kChunk) {
    std::size_t const stop = std::min(a.size(), start + kChunk);
    double re = 0.0;
    double im = 0.0;
    for (std::size_t i = start; i < stop; ++i) {
      double const ar = a[i].real(), ai = a[i].imag();
      double const br = b[i].real(), bi = b[i].imag();
      re += ar * br + ai * bi;
      im += ar * bi - ai * br;
    }
    total_re += re;
    total_im += im;
  }
  return {static_cast<T>(total_re), static_cast<T>(total_im)};
}

template <typename T>
std::complex<T> hermitian_inner_product(Image<T> const &a, Image<T> const &b)
{
  require_same_shape(a, b, "hermitian_inner_product");
  return hermitian_inner_product<T>(std::span<std::complex<T> const>(a.data), std::span<std::complex<T> const>(b.data));
}

template <typename T>
T norm2(std::span<std::complex<T> const> a)
{
  T const re = hermitian_inner_product<T>(a, a).real();
  return std::sqrt(std::max(re, T(0)));
}

template <typename T>
T norm2(Image<T> const &a)
{
  return norm2<T>(std::span<std::complex<T> const>(a.data));
}

template <typename T>
void axpy(std::complex<T> alpha, Image<T> const &x, Image<T> &y)
{
  require_same_shape(x, y, "axpy");
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    y.data[i] += alpha * x.data[i];
  }
}

template <typename T>
void scale(Image<T> &x, std::complex<T> alpha)
{
  for (auto &v : x.data) {
    v *= alpha;
  }
}

template <typename T>
Image<T> operator+(Image<T> const &a, Image<T> const &b)
{
  require_same_shape(a, b, "operator+");
  Image<T> out = a;
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    out.data[i] += b.data[i];
  }
  return out;
}

template <typename T>
Image<T> operator-(Image<T> const &a, Image<T> const &b)
{
  require_same_shape(a, b, "operator-");
  Image<T> out = a;
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    out.data[i] -= b.data[i];
  }
  return out;
}

template <typename T>
bool all_finite(Image<T> const &a)
{
  return std::all_of(a.data.begin(), a.data.end(),
                     [](auto const &v) { return std::isfinite(v.real()) && std::isfinite(v.imag()); });
}

template <typename T>
double relative_error(Image<T> const &a, Image<T> const &b)
{
  require_same_shape(a, b, "relative_error");
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    std::complex<double> const d(a.data[i].real() - b.data[i].real(), a.data[i].imag() - b.data[i].imag());
    num += std::norm(d);
    den += std::norm(std::complex<double>(b.data[i].real(), b.data[i].imag()));
  }
  return den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
}

#define PDMR_INSTANTIATE(T)                                                                              \
  template std::complex<T> hermitian_inner_product<T>(Image<T> const &, Image<T> const &);             \
  template std::complex<T> hermitian_inner_product<T>(std::span<std::complex<T> const>,                \
                                                      std::span<std::complex<T> const>);               \
  template T norm2<T>(Image<T> const &);                                                               \
  template T norm2<T>(std::span<std::complex<T> const>);                                               \
  template void axpy<T>(std::complex<T>, Image<T> const &, Image<T> &);                                \
  template void scale<T>(Image<T> &, std::complex<T>);                                                 \
  template Image<T> operator+ <T>(Image<T> const &, Image<T> const &);                                 \
  template Image<T> operator- <T>(Image<T> const &, Image<T> const &);                                 \
  template bool all_finite<T>(Image<T> const &);                                                       \
  template double relative_error<T>(Image<T> const &, Image<T> const &);

PDMR_INSTANTIATE(float)
PDMR_INSTANTIATE(double)
#undef PDMR_INSTANTIATE

namespace {

int default_threads()
{
  if (char const *env = std::getenv("PDMR_THREADS")) {
    int const n = std::atoi(env);
    if (n > 0) {
      return n;
    }
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

std::atomic<int> &thread_setting()
{
  static std::atomic<int> n{default_threads()};
  return n;
}

} // namespace

void set_threads(int n) { thread_setting() = std::max(1, n); }

int threads() { return thread_setting().load(); }

void parallel_for(long n, std::function<void(long)> const &fn)
{
  long const workers = std::min<long>(threads(), n);
  if (workers <= 1) {
    for (long i = 0; i < n; ++i) {
      fn(i);
    }
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers - 1));
  long const per = (n + workers - 1) / workers;
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
  auto run = [&](long w) {
    long const stop = std::min(n, (w + 1) * per);
    try {
      for (long i = w * per; i < stop; ++i) {
        fn(i);
      }
    } catch (...) {
      errors[static_cast<std::size_t>(w)] = std::current_exception();
    }
  };
  for (long w = 1; w < workers; ++w) {
    pool.emplace_back(run, w);
  }
  run(0);
  for (auto &t : pool) {
    t.join();
  }
  for (auto const &e : errors) {
    if (e) {
      std::rethrow_exception(e);
    }
  }
}

} // namespace pdmr
