#pragma once

#include "pdmr/core.hpp"

#include <atomic>
#include <complex>
#include <memory>
#include <vector>

namespace pdmr {

struct TransformCounts
{
  long fft_count = 0;    // 1D forward transforms, any length
  long ifft_count = 0;   // 1D inverse transforms, any length
  long fft2d_count = 0;  // complete 2D forward transforms
  long ifft2d_count = 0; // complete 2D inverse transforms

  TransformCounts operator-(TransformCounts const &o) const
  {
    return {fft_count - o.fft_count, ifft_count - o.ifft_count, fft2d_count - o.fft2d_count,
            ifft2d_count - o.ifft2d_count};
  }
  bool operator==(TransformCounts const &) const = default;
};

/// Accumulates transform applications for one run. A 2D transform on an
/// n_pe×n_ro image adds n_pe + n_ro to the 1D count and 1 to the 2D count.
class TransformCounter
{
public:
  void add_1d(bool inverse, long n = 1) { (inverse ? ifft_ : fft_) += n; }
  void add_2d(bool inverse) { (inverse ? ifft2d_ : fft2d_) += 1; }
  TransformCounts snapshot() const { return {fft_.load(), ifft_.load(), fft2d_.load(), ifft2d_.load()}; }

private:
  std::atomic<long> fft_{0};
  std::atomic<long> ifft_{0};
  std::atomic<long> fft2d_{0};
  std::atomic<long> ifft2d_{0};
};

/// Unnormalized forward DFT plan of a fixed length: mixed-radix Cooley-Tukey over
/// factors {4, 2, 3, 5, 7, 11, 13}, Bluestein chirp-z when a larger prime remains.
template <typename T>
class FftPlan
{
public:
  using cx = std::complex<T>;

  explicit FftPlan(long n);
  long size() const { return n_; }
  bool uses_bluestein() const { return bluestein_; }

  /// In place, X[q] = Σ x[n]·e^(−i2πqn/N). `scratch` must hold at least size() values.
  void forward(cx *data, cx *scratch) const;

private:
  void work(cx *out, cx const *in, long stride, std::size_t level) const;
  void butterfly(cx *out, long stride, long p, long m) const;
  void bluestein(cx *data) const;

  long n_;
  std::vector<long> factors_;
  std::vector<long> remaining_;
  std::vector<cx> twiddles_;

  bool bluestein_ = false;
  long conv_len_ = 0;
  std::vector<cx> chirp_;
  std::vector<cx> filter_spectrum_;
  std::unique_ptr<FftPlan<T>> conv_plan_;
};

/// Shared plan for length n; plans are created once and cached.
template <typename T>
FftPlan<T> const &fft_plan(long n);

/// Orthonormal DFT (1/√N both directions); inverse uses the +i sign.
template <typename T>
std::vector<std::complex<T>> fft1d(std::vector<std::complex<T>> v, bool inverse, TransformCounter *counter = nullptr);

/// In-place orthonormal 1D transform over a strided sequence.
template <typename T>
void fft1d_inplace(std::complex<T> *v, long n, bool inverse, std::complex<T> *scratch);

/// Orthonormal 2D DFT: along every row, then along every column.
template <typename T>
Image<T> fft2d(Image<T> img, bool inverse, TransformCounter *counter = nullptr);

/// Direct O(N²) orthonormal DFT in double precision. Test oracle.
std::vector<std::complex<double>> dft_naive(std::vector<std::complex<double>> const &v, bool inverse);

} // namespace pdmr
