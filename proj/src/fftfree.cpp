#include "pdmr/fftfree.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace pdmr {

namespace {

void check_fold_args(long n, long rate, long offset)
{
  if (rate < 1 || n % rate != 0) {
    throw DimensionError("fold: rate " + std::to_string(rate) + " does not divide length " + std::to_string(n));
  }
  if (offset < 0 || offset >= rate) {
    throw std::invalid_argument("fold: offset must lie in [0, rate)");
  }
}

/// e^(−i2πδp/N) for p = 0..N−1.
std::vector<std::complex<double>> shift_phases(long n, long offset)
{
  std::vector<std::complex<double>> w(static_cast<std::size_t>(n));
  for (long p = 0; p < n; ++p) {
    long const k = (offset * p) % n;
    double const angle = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
    w[static_cast<std::size_t>(p)] = {std::cos(angle), std::sin(angle)};
  }
  return w;
}

template <typename T>
std::vector<std::complex<T>> cast_phases(std::vector<std::complex<double>> const &w)
{
  std::vector<std::complex<T>> out(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    out[i] = std::complex<T>(static_cast<T>(w[i].real()), static_cast<T>(w[i].imag()));
  }
  return out;
}

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
FoldedMeasurements<T> preprocess_to_image_domain(MultiCoilKSpace<T> const &y, TransformCounter *counter)
{
  FoldedMeasurements<T> s;
  s.rate = y.mask.rate;
  s.offset = y.mask.offset;
  s.n_pe = y.mask.n_pe;
  s.coils.reserve(y.coils.size());
  for (auto const &coil : y.coils) {
    if (coil.n_pe != y.mask.n_sampled()) {
      throw DimensionError("preprocess_to_image_domain: coil rows do not match the mask");
    }
    s.coils.push_back(fft2d(coil, true, counter));
  }
  return s;
}

template <typename T>
std::vector<std::complex<T>> fold(std::span<std::complex<T> const> column, long rate, long offset)
{
  long const n = static_cast<long>(column.size());
  check_fold_args(n, rate, offset);
  long const m_len = n / rate;
  auto const w = shift_phases(n, offset);
  double const s = 1.0 / std::sqrt(static_cast<double>(rate));
  std::vector<std::complex<T>> out(static_cast<std::size_t>(m_len));
  for (long m = 0; m < m_len; ++m) {
    std::complex<double> acc = 0.0;
    for (long r = 0; r < rate; ++r) {
      auto const p = static_cast<std::size_t>(m + r * m_len);
      acc += w[p] * std::complex<double>(column[p].real(), column[p].imag());
    }
    acc *= s;
    out[static_cast<std::size_t>(m)] = std::complex<T>(static_cast<T>(acc.real()), static_cast<T>(acc.imag()));
  }
  return out;
}

template <typename T>
std::vector<std::complex<T>> unfold_adjoint(std::span<std::complex<T> const> folded, long rate, long offset, long n)
{
  check_fold_args(n, rate, offset);
  long const m_len = n / rate;
  if (static_cast<long>(folded.size()) != m_len) {
    throw DimensionError("unfold_adjoint: folded length must be n / rate");
  }
  auto const w = shift_phases(n, offset);
  double const s = 1.0 / std::sqrt(static_cast<double>(rate));
  std::vector<std::complex<T>> out(static_cast<std::size_t>(n));
  for (long p = 0; p < n; ++p) {
    auto const v = std::conj(w[static_cast<std::size_t>(p)]) * s *
                   std::complex<double>(folded[static_cast<std::size_t>(p % m_len)].real(),
                                        folded[static_cast<std::size_t>(p % m_len)].imag());
    out[static_cast<std::size_t>(p)] = std::complex<T>(static_cast<T>(v.real()), static_cast<T>(v.imag()));
  }
  return out;
}

template <typename T>
FoldedMeasurements<T> apply_B(Image<T> const &x, CoilMaps<T> const &maps, long rate, long offset)
{
  check_maps(maps, x.n_pe, x.n_ro, "apply_B");
  check_fold_args(x.n_pe, rate, offset);
  long const n = x.n_pe;
  long const cols = x.n_ro;
  long const m_len = n / rate;
  auto const w = cast_phases<T>(shift_phases(n, offset));
  T const s = T(1) / std::sqrt(static_cast<T>(rate));

  FoldedMeasurements<T> out;
  out.rate = rate;
  out.offset = offset;
  out.n_pe = n;
  out.coils.assign(maps.maps.size(), Image<T>(m_len, cols));
  parallel_for(maps.n_coils(), [&](long k) {
    auto const &c = maps.maps[static_cast<std::size_t>(k)];
    auto &sk = out.coils[static_cast<std::size_t>(k)];
    for (long r = 0; r < rate; ++r) {
      for (long m = 0; m < m_len; ++m) {
        long const p = m + r * m_len;
        std::complex<T> const wp = w[static_cast<std::size_t>(p)] * s;
        auto const crow = c.row(p);
        auto const xrow = x.row(p);
        auto orow = sk.row(m);
        for (long j = 0; j < cols; ++j) {
          orow[j] += wp * (crow[j] * xrow[j]);
        }
      }
    }
  });
  return out;
}

template <typename T>
Image<T> apply_BH(FoldedMeasurements<T> const &s, CoilMaps<T> const &maps)
{
  long const n = s.n_pe;
  long const cols = maps.n_ro();
  check_maps(maps, n, cols, "apply_BH");
  check_fold_args(n, s.rate, s.offset);
  if (s.n_coils() != maps.n_coils()) {
    throw DimensionError("apply_BH: coil count mismatch");
  }
  long const m_len = n / s.rate;
  for (auto const &sk : s.coils) {
    require_same_shape(sk.n_pe, sk.n_ro, m_len, cols, "apply_BH");
  }
  auto const w = cast_phases<T>(shift_phases(n, s.offset));
  T const scale_factor = T(1) / std::sqrt(static_cast<T>(s.rate));

  Image<T> out(n, cols);
  // Rows are independent; coils are summed in index order for every pixel.
  parallel_for(n, [&](long p) {
    std::complex<T> const wp = std::conj(w[static_cast<std::size_t>(p)]) * scale_factor;
    auto orow = out.row(p);
    for (long k = 0; k < maps.n_coils(); ++k) {
      auto const crow = maps.maps[static_cast<std::size_t>(k)].row(p);
      auto const srow = s.coils[static_cast<std::size_t>(k)].row(p % m_len);
      for (long j = 0; j < cols; ++j) {
        orow[j] += std::conj(crow[j]) * (wp * srow[j]);
      }
    }
  });
  return out;
}

namespace {

/// Gram blocks (1/R) Σ_k conj(w_a C_a) (w_b C_b), group g = m·n_ro + column.
template <typename T>
std::vector<std::complex<double>> build_gram(CoilMaps<T> const &maps, long rate, long offset)
{
  long const n = maps.n_pe();
  long const cols = maps.n_ro();
  check_fold_args(n, rate, offset);
  long const m_len = n / rate;
  auto const w = shift_phases(n, offset);
  double const inv_rate = 1.0 / static_cast<double>(rate);
  std::size_t const block = static_cast<std::size_t>(rate * rate);
  std::vector<std::complex<double>> gram(static_cast<std::size_t>(m_len * cols) * block);
  parallel_for(m_len, [&](long m) {
    std::vector<std::complex<double>> b(static_cast<std::size_t>(rate));
    for (long j = 0; j < cols; ++j) {
      auto *g = gram.data() + static_cast<std::size_t>(m * cols + j) * block;
      for (long k = 0; k < maps.n_coils(); ++k) {
        auto const &c = maps.maps[static_cast<std::size_t>(k)];
        for (long r = 0; r < rate; ++r) {
          long const p = m + r * m_len;
          auto const cv = c(p, j);
          b[static_cast<std::size_t>(r)] = w[static_cast<std::size_t>(p)] * std::complex<double>(cv.real(), cv.imag());
        }
        for (long a = 0; a < rate; ++a) {
          for (long bb = 0; bb < rate; ++bb) {
            g[a * rate + bb] += std::conj(b[static_cast<std::size_t>(a)]) * b[static_cast<std::size_t>(bb)] * inv_rate;
          }
        }
      }
    }
  });
  return gram;
}

} // namespace

template <typename T>
std::vector<AliasingSystem<T>> assemble_aliasing_systems(CoilMaps<T> const &maps, long rate, long offset, double mu)
{
  if (mu < 0.0) {
    throw std::invalid_argument("assemble_aliasing_systems: mu must be >= 0");
  }
  if (maps.maps.empty()) {
    throw DimensionError("assemble_aliasing_systems: no coil maps");
  }
  auto const gram = build_gram(maps, rate, offset);
  long const cols = maps.n_ro();
  long const m_len = maps.n_pe() / rate;
  std::size_t const block = static_cast<std::size_t>(rate * rate);
  std::vector<AliasingSystem<T>> systems;
  systems.reserve(static_cast<std::size_t>(m_len * cols));
  for (long m = 0; m < m_len; ++m) {
    for (long j = 0; j < cols; ++j) {
      AliasingSystem<T> sys;
      sys.column = j;
      for (long r = 0; r < rate; ++r) {
        sys.rows.push_back(m + r * m_len);
      }
      auto const *g = gram.data() + static_cast<std::size_t>(m * cols + j) * block;
      sys.matrix.resize(block);
      for (long a = 0; a < rate; ++a) {
        for (long b = 0; b < rate; ++b) {
          auto v = g[a * rate + b];
          if (a == b) {
            v += mu;
          }
          sys.matrix[static_cast<std::size_t>(a * rate + b)] =
              std::complex<T>(static_cast<T>(v.real()), static_cast<T>(v.imag()));
        }
      }
      systems.push_back(std::move(sys));
    }
  }
  return systems;
}

template <typename T>
AliasingSolver<T>::AliasingSolver(CoilMaps<T> const &maps, long rate, long offset)
    : rate_(rate), n_pe_(maps.n_pe()), n_ro_(maps.n_ro()), n_folded_(maps.n_pe() / rate),
      gram_(build_gram(maps, rate, offset))
{
}

template <typename T>
Image<T> AliasingSolver<T>::apply(Image<T> const &x, double mu) const
{
  require_same_shape(x.n_pe, x.n_ro, n_pe_, n_ro_, "AliasingSolver::apply");
  long const r_len = rate_;
  std::size_t const block = static_cast<std::size_t>(r_len * r_len);
  Image<T> out(n_pe_, n_ro_);
  parallel_for(n_folded_, [&](long m) {
    for (long j = 0; j < n_ro_; ++j) {
      auto const *g = gram_.data() + static_cast<std::size_t>(m * n_ro_ + j) * block;
      for (long a = 0; a < r_len; ++a) {
        std::complex<double> acc = 0.0;
        for (long b = 0; b < r_len; ++b) {
          auto const xv = x(m + b * n_folded_, j);
          acc += g[a * r_len + b] * std::complex<double>(xv.real(), xv.imag());
        }
        auto const xa = x(m + a * n_folded_, j);
        acc += mu * std::complex<double>(xa.real(), xa.imag());
        out(m + a * n_folded_, j) = std::complex<T>(static_cast<T>(acc.real()), static_cast<T>(acc.imag()));
      }
    }
  });
  return out;
}

template <typename T>
void AliasingSolver<T>::factor(double mu)
{
  if (mu < 0.0) {
    throw std::invalid_argument("AliasingSolver: mu must be >= 0");
  }
  if (mu == cached_mu_) {
    return;
  }
  long const r_len = rate_;
  std::size_t const block = static_cast<std::size_t>(r_len * r_len);
  cached_mu_ = -1.0;
  factors_.assign(gram_.size(), 0.0);
  parallel_for(n_groups(), [&](long g) {
    auto const *a = gram_.data() + static_cast<std::size_t>(g) * block;
    auto *l = factors_.data() + static_cast<std::size_t>(g) * block;
    double trace = 0.0;
    for (long i = 0; i < r_len; ++i) {
      trace += a[i * r_len + i].real() + mu;
    }
    double const floor = 1e-12 * std::max(trace, 1e-300);
    for (long j = 0; j < r_len; ++j) {
      double d = a[j * r_len + j].real() + mu;
      for (long k = 0; k < j; ++k) {
        d -= std::norm(l[j * r_len + k]);
      }
      if (!(d > floor)) {
        long const m = g / n_ro_;
        long const col = g % n_ro_;
        throw NumericalError("aliasing system for folded row " + std::to_string(m) + ", column " +
                             std::to_string(col) + " is singular (pivot " + std::to_string(d) + ")");
      }
      double const djj = std::sqrt(d);
      l[j * r_len + j] = djj;
      for (long i = j + 1; i < r_len; ++i) {
        std::complex<double> v = a[i * r_len + j];
        for (long k = 0; k < j; ++k) {
          v -= l[i * r_len + k] * std::conj(l[j * r_len + k]);
        }
        l[i * r_len + j] = v / djj;
      }
    }
  });
  cached_mu_ = mu;
}

template <typename T>
Image<T> AliasingSolver<T>::solve(Image<T> const &rhs, double mu)
{
  require_same_shape(rhs.n_pe, rhs.n_ro, n_pe_, n_ro_, "AliasingSolver::solve");
  factor(mu);
  long const r_len = rate_;
  std::size_t const block = static_cast<std::size_t>(r_len * r_len);
  Image<T> out(n_pe_, n_ro_);
  parallel_for(n_folded_, [&](long m) {
    std::vector<std::complex<double>> v(static_cast<std::size_t>(r_len));
    for (long j = 0; j < n_ro_; ++j) {
      auto const *l = factors_.data() + static_cast<std::size_t>(m * n_ro_ + j) * block;
      for (long i = 0; i < r_len; ++i) {
        auto const b = rhs(m + i * n_folded_, j);
        std::complex<double> acc(b.real(), b.imag());
        for (long k = 0; k < i; ++k) {
          acc -= l[i * r_len + k] * v[static_cast<std::size_t>(k)];
        }
        v[static_cast<std::size_t>(i)] = acc / l[i * r_len + i].real();
      }
      for (long i = r_len - 1; i >= 0; --i) {
        std::complex<double> acc = v[static_cast<std::size_t>(i)];
        for (long k = i + 1; k < r_len; ++k) {
          acc -= std::conj(l[k * r_len + i]) * v[static_cast<std::size_t>(k)];
        }
        v[static_cast<std::size_t>(i)] = acc / l[i * r_len + i].real();
        out(m + i * n_folded_, j) = std::complex<T>(static_cast<T>(v[static_cast<std::size_t>(i)].real()),
                                                    static_cast<T>(v[static_cast<std::size_t>(i)].imag()));
      }
    }
  });
  return out;
}

#define PDMR_INSTANTIATE(T)                                                                                   \
  template FoldedMeasurements<T> preprocess_to_image_domain<T>(MultiCoilKSpace<T> const &, TransformCounter *); \
  template std::vector<std::complex<T>> fold<T>(std::span<std::complex<T> const>, long, long);               \
  template std::vector<std::complex<T>> unfold_adjoint<T>(std::span<std::complex<T> const>, long, long, long); \
  template FoldedMeasurements<T> apply_B<T>(Image<T> const &, CoilMaps<T> const &, long, long);              \
  template Image<T> apply_BH<T>(FoldedMeasurements<T> const &, CoilMaps<T> const &);                         \
  template std::vector<AliasingSystem<T>> assemble_aliasing_systems<T>(CoilMaps<T> const &, long, long, double); \
  template class AliasingSolver<T>;

PDMR_INSTANTIATE(float)
PDMR_INSTANTIATE(double)
#undef PDMR_INSTANTIATE

} // namespace pdmr
