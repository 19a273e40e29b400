#include "pdmr/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace pdmr {

namespace {

std::vector<double> magnitude(ComplexImage const &x)
{
  std::vector<double> m(x.data.size());
  for (std::size_t i = 0; i < m.size(); ++i) {
    m[i] = std::abs(std::complex<double>(x.data[i].real(), x.data[i].imag()));
  }
  return m;
}

double peak(std::vector<double> const &m)
{
  double const p = m.empty() ? 0.0 : *std::max_element(m.begin(), m.end());
  if (!(p > 0.0)) {
    throw std::invalid_argument("metrics: reference image is identically zero");
  }
  return p;
}

} // namespace

double psnr(ComplexImage const &ref, ComplexImage const &est)
{
  require_same_shape(ref, est, "psnr");
  auto const a = magnitude(ref);
  auto const b = magnitude(est);
  double const max_ref = peak(a);
  double mse = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double const d = a[i] - b[i];
    mse += d * d;
  }
  mse /= static_cast<double>(a.size());
  if (mse == 0.0) {
    return std::numeric_limits<double>::infinity();
  }
  return 20.0 * std::log10(max_ref / std::sqrt(mse));
}

double ssim(ComplexImage const &ref, ComplexImage const &est)
{
  require_same_shape(ref, est, "ssim");
  constexpr long win = 11;
  constexpr double sigma = 1.5;
  if (ref.n_pe < win || ref.n_ro < win) {
    throw DimensionError("ssim: image smaller than the 11x11 window");
  }
  auto const a = magnitude(ref);
  auto const b = magnitude(est);
  double const L = peak(a);
  double const c1 = (0.01 * L) * (0.01 * L);
  double const c2 = (0.03 * L) * (0.03 * L);

  std::vector<double> g(win * win);
  double total = 0.0;
  for (long y = 0; y < win; ++y) {
    for (long x = 0; x < win; ++x) {
      double const dy = static_cast<double>(y - win / 2);
      double const dx = static_cast<double>(x - win / 2);
      g[static_cast<std::size_t>(y * win + x)] = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
      total += g[static_cast<std::size_t>(y * win + x)];
    }
  }
  for (auto &v : g) {
    v /= total;
  }

  long const out_h = ref.n_pe - win + 1;
  long const out_w = ref.n_ro - win + 1;
  long const w = ref.n_ro;
  std::vector<double> row_sums(static_cast<std::size_t>(out_h));
  parallel_for(out_h, [&](long i) {
    double acc = 0.0;
    for (long j = 0; j < out_w; ++j) {
      double mx = 0.0, my = 0.0, sxx = 0.0, syy = 0.0, sxy = 0.0;
      for (long y = 0; y < win; ++y) {
        for (long x = 0; x < win; ++x) {
          double const wt = g[static_cast<std::size_t>(y * win + x)];
          auto const idx = static_cast<std::size_t>((i + y) * w + j + x);
          double const va = a[idx];
          double const vb = b[idx];
          mx += wt * va;
          my += wt * vb;
          sxx += wt * va * va;
          syy += wt * vb * vb;
          sxy += wt * va * vb;
        }
      }
      double const vx = sxx - mx * mx;
      double const vy = syy - my * my;
      double const cxy = sxy - mx * my;
      acc += ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
    }
    row_sums[static_cast<std::size_t>(i)] = acc;
  });
  double sum = 0.0;
  for (double v : row_sums) {
    sum += v;
  }
  return sum / static_cast<double>(out_h * out_w);
}

std::pair<long, long> report_counts(TransformCounter const &counter)
{
  auto const c = counter.snapshot();
  return {c.fft_count, c.ifft_count};
}

std::string csv_header()
{
  return "variant,psnr_db,ssim,wall_time_s,fft_count,ifft_count,fingerprint\n";
}

std::string csv_row(MetricsReport const &r)
{
  char psnr_text[64];
  if (std::isinf(r.psnr_db)) {
    std::snprintf(psnr_text, sizeof psnr_text, "inf");
  } else {
    std::snprintf(psnr_text, sizeof psnr_text, "%.6f", r.psnr_db);
  }
  char line[512];
  std::snprintf(line, sizeof line, "%s,%s,%.6f,%.6f,%ld,%ld,%s\n", r.variant.c_str(), psnr_text, r.ssim,
                r.wall_time_s, r.fft_count, r.ifft_count, r.fingerprint.c_str());
  return line;
}

std::string fingerprint(std::string const &text)
{
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char out[17];
  std::snprintf(out, sizeof out, "%016llx", static_cast<unsigned long long>(h));
  return out;
}

std::string describe_run(SimParams const &data, std::string const &method, UnrollConfig const *cfg,
                         NetworkSpec const *net)
{
  std::ostringstream os;
  os.precision(17);
  os << "npe=" << data.n_pe << ";nro=" << data.n_ro << ";coils=" << data.n_coils << ";rate=" << data.rate
     << ";offset=" << data.offset << ";sigma=" << data.sigma << ";seed=" << data.seed << ";method=" << method;
  if (cfg) {
    os << ";unrolls=" << cfg->n_unrolls << ";backend=" << to_string(cfg->backend)
       << ";df=" << to_string(cfg->df.backend) << ";cg_iters=" << cfg->df.cg_iters << ";cg_tol=" << cfg->df.cg_tol
       << ";reg=" << to_string(cfg->regularizer) << ";mu=";
    for (double m : cfg->df.mu) {
      os << m << ' ';
    }
  }
  if (net) {
    os << ";blocks=" << net->n_blocks << ";channels=" << net->channels << ";kernel=" << net->kernel
       << ";rs=" << net->residual_scale;
  }
  os << ";threads=" << threads();
  return os.str();
}

RunOutcome run_variant(Dataset const &data, Variant const &v, RegularizerWeights const &weights)
{
  TransformCounter counter;
  RunOutcome out;
  std::string method;
  UnrollConfig const *cfg = nullptr;
  NetworkSpec const *net = nullptr;
  auto const start = std::chrono::steady_clock::now();
  switch (v.method) {
  case Method::ZeroFilled:
    method = "zerofill";
    out.image = zero_filled(data.kspace, data.maps, &counter);
    break;
  case Method::CgSense:
    method = "cgsense:" + std::to_string(v.cg_sense_iters) + ":" + std::to_string(v.cg_sense_tol);
    out.image = cg_sense(data.kspace, data.maps, data.mask, v.cg_sense_iters, v.cg_sense_tol, &counter).x;
    break;
  case Method::Unrolled:
    method = "unrolled";
    cfg = &v.cfg;
    if (v.cfg.regularizer == RegularizerKind::Float32 && weights.fp32) {
      net = &weights.fp32->spec;
    } else if (v.cfg.regularizer == RegularizerKind::Int8 && weights.int8) {
      net = &weights.int8->spec;
    }
    out.image = unrolled_vsqp(data.kspace, data.maps, data.mask, weights, v.cfg, &counter, &out.stages);
    break;
  }
  auto const stop = std::chrono::steady_clock::now();
  auto const counts = counter.snapshot();
  out.counts = counts;
  out.report.variant = v.name;
  out.report.wall_time_s = std::chrono::duration<double>(stop - start).count();
  out.report.psnr_db = psnr(data.ground_truth, out.image);
  out.report.ssim = ssim(data.ground_truth, out.image);
  out.report.fft_count = counts.fft2d_count;
  out.report.ifft_count = counts.ifft2d_count;
  out.report.fingerprint = fingerprint(describe_run(data.params, method, cfg, net));
  return out;
}

std::vector<MetricsReport> benchmark(Dataset const &data, std::vector<Variant> const &variants,
                                     RegularizerWeights const &weights, int repeats)
{
  if (repeats < 3) {
    throw std::invalid_argument("benchmark: repeats must be >= 3");
  }
  std::vector<MetricsReport> rows;
  for (auto const &v : variants) {
    run_variant(data, v, weights);
    std::vector<double> times;
    MetricsReport report;
    for (int r = 0; r < repeats; ++r) {
      auto outcome = run_variant(data, v, weights);
      times.push_back(outcome.report.wall_time_s);
      report = std::move(outcome.report);
    }
    std::sort(times.begin(), times.end());
    std::size_t const mid = times.size() / 2;
    report.wall_time_s = times.size() % 2 ? times[mid] : 0.5 * (times[mid - 1] + times[mid]);
    rows.push_back(std::move(report));
  }
  return rows;
}

} // namespace pdmr
