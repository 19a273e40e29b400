#include "pdmr/fourier.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <numbers>

namespace pdmr {

namespace {

constexpr long kMaxDirectRadix = 13;

std::complex<double> unit_root(long k, long n)
{
  // e^(−i2πk/n), with k reduced first so large products keep full precision.
  long const r = ((k % n) + n) % n;
  double const angle = -2.0 * std::numbers::pi * static_cast<double>(r) / static_cast<double>(n);
  return {std::cos(angle), std::sin(angle)};
}

} // namespace

template <typename T>
FftPlan<T>::FftPlan(long n)
    : n_(n)
{
  if (n < 1) {
    throw DimensionError("fft: length must be >= 1");
  }
  long rest = n;
  while (rest % 4 == 0) {
    factors_.push_back(4);
    rest /= 4;
  }
  for (long p : {2L, 3L, 5L, 7L, 11L, 13L}) {
    while (rest % p == 0) {
      factors_.push_back(p);
      rest /= p;
    }
  }
  if (rest > 1) {
    bluestein_ = true;
    factors_.clear();
    conv_len_ = 1;
    while (conv_len_ < 2 * n - 1) {
      conv_len_ *= 2;
    }
    conv_plan_ = std::make_unique<FftPlan<T>>(conv_len_);
    chirp_.resize(static_cast<std::size_t>(n));
    long const two_n = 2 * n;
    for (long j = 0; j < n; ++j) {
      // e^(−iπ j²/n); j² reduced mod 2n in integers.
      long const j2 = static_cast<long>((static_cast<unsigned long long>(j) * static_cast<unsigned long long>(j)) %
                                        static_cast<unsigned long long>(two_n));
      double const angle = -std::numbers::pi * static_cast<double>(j2) / static_cast<double>(n);
      chirp_[static_cast<std::size_t>(j)] = cx(static_cast<T>(std::cos(angle)), static_cast<T>(std::sin(angle)));
    }
    std::vector<cx> filter(static_cast<std::size_t>(conv_len_));
    filter[0] = std::conj(chirp_[0]);
    for (long j = 1; j < n; ++j) {
      filter[static_cast<std::size_t>(j)] = std::conj(chirp_[static_cast<std::size_t>(j)]);
      filter[static_cast<std::size_t>(conv_len_ - j)] = std::conj(chirp_[static_cast<std::size_t>(j)]);
    }
    std::vector<cx> scratch(static_cast<std::size_t>(conv_len_));
    conv_plan_->forward(filter.data(), scratch.data());
    filter_spectrum_ = std::move(filter);
    return;
  }
  if (factors_.empty()) {
    factors_.push_back(1);
  }
  remaining_.resize(factors_.size());
  long prod = n;
  for (std::size_t i = 0; i < factors_.size(); ++i) {
    remaining_[i] = prod;
    prod /= factors_[i];
  }
  twiddles_.resize(static_cast<std::size_t>(n));
  for (long k = 0; k < n; ++k) {
    auto const w = unit_root(k, n);
    twiddles_[static_cast<std::size_t>(k)] = cx(static_cast<T>(w.real()), static_cast<T>(w.imag()));
  }
}

template <typename T>
void FftPlan<T>::forward(cx *data, cx *scratch) const
{
  if (n_ == 1) {
    return;
  }
  if (bluestein_) {
    bluestein(data);
    return;
  }
  std::copy(data, data + n_, scratch);
  work(data, scratch, 1, 0);
}

template <typename T>
void FftPlan<T>::work(cx *out, cx const *in, long stride, std::size_t level) const
{
  long const p = factors_[level];
  long const m = remaining_[level] / p;
  if (m == 1) {
    for (long q = 0; q < p; ++q) {
      out[q] = in[q * stride];
    }
  } else {
    for (long q = 0; q < p; ++q) {
      work(out + q * m, in + q * stride, stride * p, level + 1);
    }
  }
  butterfly(out, stride, p, m);
}

template <typename T>
void FftPlan<T>::butterfly(cx *out, long stride, long p, long m) const
{
  cx const *tw = twiddles_.data();
  switch (p) {
  case 1:
    return;
  case 2:
    for (long k = 0; k < m; ++k) {
      cx const a = out[k];
      cx const b = out[k + m] * tw[k * stride];
      out[k] = a + b;
      out[k + m] = a - b;
    }
    return;
  case 4:
    for (long k = 0; k < m; ++k) {
      cx const t0 = out[k];
      cx const t1 = out[k + m] * tw[k * stride];
      cx const t2 = out[k + 2 * m] * tw[2 * k * stride];
      cx const t3 = out[k + 3 * m] * tw[3 * k * stride];
      cx const s02 = t0 + t2, d02 = t0 - t2;
      cx const s13 = t1 + t3, d13 = t1 - t3;
      cx const jd13(d13.imag(), -d13.real()); // −i·(t1 − t3)
      out[k] = s02 + s13;
      out[k + m] = d02 + jd13;
      out[k + 2 * m] = s02 - s13;
      out[k + 3 * m] = d02 - jd13;
    }
    return;
  case 5: {
    T const c1 = static_cast<T>(std::cos(2.0 * std::numbers::pi / 5.0));
    T const c2 = static_cast<T>(std::cos(4.0 * std::numbers::pi / 5.0));
    T const s1 = static_cast<T>(std::sin(2.0 * std::numbers::pi / 5.0));
    T const s2 = static_cast<T>(std::sin(4.0 * std::numbers::pi / 5.0));
    for (long k = 0; k < m; ++k) {
      cx const t0 = out[k];
      cx const t1 = out[k + m] * tw[k * stride];
      cx const t2 = out[k + 2 * m] * tw[2 * k * stride];
      cx const t3 = out[k + 3 * m] * tw[3 * k * stride];
      cx const t4 = out[k + 4 * m] * tw[4 * k * stride];
      cx const a1 = t1 + t4, b1 = t1 - t4, a2 = t2 + t3, b2 = t2 - t3;
      cx const r1 = t0 + c1 * a1 + c2 * a2;
      cx const r2 = t0 + c2 * a1 + c1 * a2;
      cx const i1 = s1 * b1 + s2 * b2;
      cx const i2 = s2 * b1 - s1 * b2;
      cx const mi1(i1.imag(), -i1.real()); // −i·i1
      cx const mi2(i2.imag(), -i2.real());
      out[k] = t0 + a1 + a2;
      out[k + m] = r1 + mi1;
      out[k + 4 * m] = r1 - mi1;
      out[k + 2 * m] = r2 + mi2;
      out[k + 3 * m] = r2 - mi2;
    }
    return;
  }
  default:
    break;
  }
  // stride·p·m = n, so q·k·stride never wraps.
  cx tmp[kMaxDirectRadix];
  cx roots[kMaxDirectRadix];
  long const root_step = n_ / p;
  for (long j = 0; j < p; ++j) {
    roots[j] = tw[j * root_step];
  }
  for (long k = 0; k < m; ++k) {
    for (long q = 0; q < p; ++q) {
      tmp[q] = out[k + q * m] * tw[q * k * stride];
    }
    for (long s = 0; s < p; ++s) {
      cx acc = tmp[0];
      long idx = 0;
      for (long q = 1; q < p; ++q) {
        idx += s;
        if (idx >= p) {
          idx -= p;
        }
        acc += tmp[q] * roots[idx];
      }
      out[k + s * m] = acc;
    }
  }
}

template <typename T>
void FftPlan<T>::bluestein(cx *data) const
{
  std::vector<cx> a(static_cast<std::size_t>(conv_len_));
  std::vector<cx> scratch(static_cast<std::size_t>(conv_len_));
  for (long j = 0; j < n_; ++j) {
    a[static_cast<std::size_t>(j)] = data[j] * chirp_[static_cast<std::size_t>(j)];
  }
  conv_plan_->forward(a.data(), scratch.data());
  for (long j = 0; j < conv_len_; ++j) {
    a[static_cast<std::size_t>(j)] = std::conj(a[static_cast<std::size_t>(j)] * filter_spectrum_[static_cast<std::size_t>(j)]);
  }
  // Inverse via conjugation: ifft(u) = conj(fft(conj(u))) / L.
  conv_plan_->forward(a.data(), scratch.data());
  T const inv_len = T(1) / static_cast<T>(conv_len_);
  for (long k = 0; k < n_; ++k) {
    data[k] = chirp_[static_cast<std::size_t>(k)] * std::conj(a[static_cast<std::size_t>(k)]) * inv_len;
  }
}

template <typename T>
FftPlan<T> const &fft_plan(long n)
{
  static std::mutex mutex;
  static std::map<long, std::unique_ptr<FftPlan<T>>> cache;
  std::lock_guard lock(mutex);
  auto &slot = cache[n];
  if (!slot) {
    slot = std::make_unique<FftPlan<T>>(n);
  }
  return *slot;
}

template <typename T>
void fft1d_inplace(std::complex<T> *v, long n, bool inverse, std::complex<T> *scratch)
{
  auto const &plan = fft_plan<T>(n);
  if (inverse) {
    for (long i = 0; i < n; ++i) {
      v[i] = std::conj(v[i]);
    }
  }
  plan.forward(v, scratch);
  T const s = T(1) / std::sqrt(static_cast<T>(n));
  if (inverse) {
    for (long i = 0; i < n; ++i) {
      v[i] = std::conj(v[i]) * s;
    }
  } else {
    for (long i = 0; i < n; ++i) {
      v[i] *= s;
    }
  }
}

template <typename T>
std::vector<std::complex<T>> fft1d(std::vector<std::complex<T>> v, bool inverse, TransformCounter *counter)
{
  if (v.empty()) {
    throw DimensionError("fft1d: empty input");
  }
  std::vector<std::complex<T>> scratch(v.size());
  fft1d_inplace(v.data(), static_cast<long>(v.size()), inverse, scratch.data());
  if (counter) {
    counter->add_1d(inverse);
  }
  return v;
}

template <typename T>
Image<T> fft2d(Image<T> img, bool inverse, TransformCounter *counter)
{
  long const rows = img.n_pe;
  long const cols = img.n_ro;
  if (rows == 0 || cols == 0) {
    return img;
  }
  // Warm the plan cache outside the parallel region.
  fft_plan<T>(rows);
  fft_plan<T>(cols);

  parallel_for(rows, [&](long r) {
    std::vector<std::complex<T>> scratch(static_cast<std::size_t>(cols));
    fft1d_inplace(img.data.data() + r * cols, cols, inverse, scratch.data());
  });
  parallel_for(cols, [&](long c) {
    std::vector<std::complex<T>> column(static_cast<std::size_t>(rows));
    std::vector<std::complex<T>> scratch(static_cast<std::size_t>(rows));
    for (long r = 0; r < rows; ++r) {
      column[static_cast<std::size_t>(r)] = img(r, c);
    }
    fft1d_inplace(column.data(), rows, inverse, scratch.data());
    for (long r = 0; r < rows; ++r) {
      img(r, c) = column[static_cast<std::size_t>(r)];
    }
  });
  if (counter) {
    counter->add_1d(inverse, rows + cols);
    counter->add_2d(inverse);
  }
  return img;
}

std::vector<std::complex<double>> dft_naive(std::vector<std::complex<double>> const &v, bool inverse)
{
  long const n = static_cast<long>(v.size());
  if (n < 1) {
    throw DimensionError("dft_naive: empty input");
  }
  std::vector<std::complex<double>> out(v.size());
  double const s = 1.0 / std::sqrt(static_cast<double>(n));
  for (long q = 0; q < n; ++q) {
    std::complex<double> acc = 0.0;
    for (long j = 0; j < n; ++j) {
      auto w = unit_root(q * j, n);
      if (inverse) {
        w = std::conj(w);
      }
      acc += v[static_cast<std::size_t>(j)] * w;
    }
    out[static_cast<std::size_t>(q)] = acc * s;
  }
  return out;
}

template class FftPlan<float>;
template class FftPlan<double>;
template FftPlan<float> const &fft_plan<float>(long);
template FftPlan<double> const &fft_plan<double>(long);
template void fft1d_inplace<float>(std::complex<float> *, long, bool, std::complex<float> *);
template void fft1d_inplace<double>(std::complex<double> *, long, bool, std::complex<double> *);
template std::vector<std::complex<float>> fft1d<float>(std::vector<std::complex<float>>, bool, TransformCounter *);
template std::vector<std::complex<double>> fft1d<double>(std::vector<std::complex<double>>, bool, TransformCounter *);
template Image<float> fft2d<float>(Image<float>, bool, TransformCounter *);
template Image<double> fft2d<double>(Image<double>, bool, TransformCounter *);

} // namespace pdmr
