#pragma once

#include <complex>
#include <cstddef>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace pdmr {

enum class Precision { F32, F64 };

/// Shape or size disagreement between operands.
class DimensionError : public std::invalid_argument
{
public:
  using std::invalid_argument::invalid_argument;
};

/// NaN, divergence, singular systems, integer overflow.
class NumericalError : public std::runtime_error
{
public:
  explicit NumericalError(std::string const &what, long iteration = -1);
  long iteration() const { return iteration_; }

private:
  long iteration_;
};

/// Malformed files, I/O failures, missing tensors.
class DataError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

/// Row-major complex 2D image. Rows run along phase-encode, columns along readout.
template <typename T>
struct Image
{
  using value_type = std::complex<T>;

  long n_pe = 0;
  long n_ro = 0;
  std::vector<value_type> data;

  Image() = default;
  Image(long rows, long cols) : n_pe(rows), n_ro(cols), data(checked_size(rows, cols)) {}

  long size() const { return n_pe * n_ro; }
  bool same_shape(Image const &o) const { return n_pe == o.n_pe && n_ro == o.n_ro; }

  value_type &operator()(long r, long c) { return data[static_cast<std::size_t>(r * n_ro + c)]; }
  value_type const &operator()(long r, long c) const
  {
    return data[static_cast<std::size_t>(r * n_ro + c)];
  }

  std::span<value_type> row(long r) { return {data.data() + r * n_ro, static_cast<std::size_t>(n_ro)}; }
  std::span<value_type const> row(long r) const
  {
    return {data.data() + r * n_ro, static_cast<std::size_t>(n_ro)};
  }

  bool operator==(Image const &) const = default;

private:
  static std::size_t checked_size(long rows, long cols)
  {
    if (rows < 0 || cols < 0) {
      throw DimensionError("negative image dimension");
    }
    return static_cast<std::size_t>(rows * cols);
  }
};

using ComplexImage = Image<float>;
using ComplexImageD = Image<double>;

template <typename T>
using MultiCoilImage = std::vector<Image<T>>;

template <typename U, typename T>
Image<U> image_cast(Image<T> const &in)
{
  Image<U> out(in.n_pe, in.n_ro);
  for (std::size_t i = 0; i < in.data.size(); ++i) {
    out.data[i] = std::complex<U>(static_cast<U>(in.data[i].real()), static_cast<U>(in.data[i].imag()));
  }
  return out;
}

void require_same_shape(long rows_a, long cols_a, long rows_b, long cols_b, char const *where);

template <typename T>
void require_same_shape(Image<T> const &a, Image<T> const &b, char const *where)
{
  require_same_shape(a.n_pe, a.n_ro, b.n_pe, b.n_ro, where);
}

/// Σ conj(a_i)·b_i. Partial sums over fixed 4096-element chunks, each accumulated
/// left to right in double, then the chunk partials summed left to right.
template <typename T>
std::complex<T> hermitian_inner_product(Image<T> const &a, Image<T> const &b);

template <typename T>
std::complex<T> hermitian_inner_product(std::span<std::complex<T> const> a, std::span<std::complex<T> const> b);

template <typename T>
T norm2(Image<T> const &a);

template <typename T>
T norm2(std::span<std::complex<T> const> a);

// Elementwise helpers. All operate in place on the first argument.
template <typename T>
void axpy(std::complex<T> alpha, Image<T> const &x, Image<T> &y); // y += alpha·x

template <typename T>
void scale(Image<T> &x, std::complex<T> alpha);

template <typename T>
Image<T> operator+(Image<T> const &a, Image<T> const &b);

template <typename T>
Image<T> operator-(Image<T> const &a, Image<T> const &b);

template <typename T>
bool all_finite(Image<T> const &a);

/// Relative L2 distance ‖a − b‖ / ‖b‖ (or ‖a − b‖ when b is zero).
template <typename T>
double relative_error(Image<T> const &a, Image<T> const &b);

// Worker pool size used by parallel stages. Results never depend on it.
void set_threads(int n);
int threads();

/// Runs fn(i) for i in [0, n) on contiguous static chunks, one per worker.
void parallel_for(long n, std::function<void(long)> const &fn);

} // namespace pdmr
