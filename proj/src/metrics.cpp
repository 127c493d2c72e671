#include "lpwn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <sstream>

#include <fftw3.h>

#include "lpwn/error.hpp"

namespace lpwn {
namespace {

std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

// Magnitude spectrum of a real frame, bins 0..n/2.
class RealFft {
 public:
  explicit RealFft(std::size_t n) : n_(n) {
    in_ = fftw_alloc_real(n);
    out_ = fftw_alloc_complex(n / 2 + 1);
    plan_ = fftw_plan_dft_r2c_1d(int(n), in_, out_, FFTW_ESTIMATE);
  }
  ~RealFft() {
    fftw_destroy_plan(plan_);
    fftw_free(in_);
    fftw_free(out_);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  void magnitude(std::span<const double> frame, std::vector<double>& mag) {
    std::fill(in_, in_ + n_, 0.0);
    std::copy(frame.begin(), frame.end(), in_);
    fftw_execute(plan_);
    mag.resize(n_ / 2 + 1);
    for (std::size_t k = 0; k < mag.size(); ++k) {
      mag[k] = std::hypot(out_[k][0], out_[k][1]);
    }
  }

 private:
  std::size_t n_;
  double* in_;
  fftw_complex* out_;
  fftw_plan plan_;
};

double inverse_envelope(const LpcCoeffs& a, double w) {
  // |A(e^jw)| with A(z) = 1 - sum alpha_i z^-i
  std::complex<double> s(1.0, 0.0);
  for (std::size_t i = 0; i < a.order(); ++i) {
    s -= a.alpha[i] * std::polar(1.0, -w * double(i + 1));
  }
  return std::abs(s);
}

// Samples [start, start + n) of x, zero outside.
// Reference and lag-shifted test windows, keeping only the samples where
// both signals are defined.
void aligned_slices(std::span<const double> ref, std::span<const double> test,
                    long start, long lag, std::size_t n, std::vector<double>& r,
                    std::vector<double>& y) {
  r.assign(n, 0.0);
  y.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const long j = start + long(i), k = j + lag;
    if (j >= 0 && j < long(ref.size()) && k >= 0 && k < long(test.size())) {
      r[i] = ref[std::size_t(j)];
      y[i] = test[std::size_t(k)];
    }
  }
}

double ncc(const std::vector<double>& a, const std::vector<double>& b) {
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  const double den = std::sqrt(aa * bb);
  return den > 0.0 ? ab / den : 0.0;
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

double vuv_error(std::span<const std::uint8_t> ref,
                 std::span<const std::uint8_t> test) {
  if (ref.size() != test.size()) {
    throw Error(ErrorCode::kDomain, "voicing tracks differ in length");
  }
  if (ref.empty()) return 0.0;
  std::size_t diff = 0;
  for (std::size_t i = 0; i < ref.size(); ++i) diff += (ref[i] != 0) != (test[i] != 0);
  return 100.0 * double(diff) / double(ref.size());
}

std::optional<double> f0_rmse(std::span<const double> ref_f0,
                              std::span<const double> test_f0,
                              std::span<const std::uint8_t> ref_vuv,
                              std::span<const std::uint8_t> test_vuv) {
  const std::size_t n = ref_f0.size();
  if (test_f0.size() != n || ref_vuv.size() != n || test_vuv.size() != n) {
    throw Error(ErrorCode::kDomain, "F0 tracks differ in length");
  }
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (ref_vuv[i] && test_vuv[i]) {
      const double d = test_f0[i] - ref_f0[i];
      sum += d * d;
      ++count;
    }
  }
  if (count == 0) return std::nullopt;
  return std::sqrt(sum / double(count));
}

double envelope_lsd(const LpcCoeffs& ref, const LpcCoeffs& test,
                    double test_gain, std::size_t grid) {
  double acc = 0.0;
  for (std::size_t k = 0; k < grid; ++k) {
    const double w = (double(k) + 0.5) * std::numbers::pi / double(grid);
    // 20 log10 (1/|A_ref|) - 20 log10 (g/|A_test|)
    const double d = 20.0 * std::log10(inverse_envelope(test, w) /
                                       (test_gain * inverse_envelope(ref, w)));
    acc += d * d;
  }
  return std::sqrt(acc / double(grid));
}

LsdResult lsd_envelope(std::span<const Lsf> ref, std::span<const Lsf> test,
                       std::size_t grid) {
  if (ref.size() != test.size()) {
    throw Error(ErrorCode::kDomain, "LSF tracks differ in frame count");
  }
  LsdResult res;
  res.frames = ref.size();
  double sum = 0.0;
  std::size_t used = 0;
  for (std::size_t t = 0; t < ref.size(); ++t) {
    if (ref[t].order() != test[t].order()) {
      throw Error(ErrorCode::kDomain, "LSF tracks differ in order");
    }
    LpcCoeffs a, b;
    try {
      a = lsf_to_lpc(ref[t]);
      b = lsf_to_lpc(test[t]);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kDomain) throw;
      ++res.skipped;
      continue;
    }
    if (!is_stable(a) || !is_stable(b)) {
      ++res.skipped;
      continue;
    }
    sum += envelope_lsd(a, b, 1.0, grid);
    ++used;
  }
  if (used > 0) res.db = sum / double(used);
  return res;
}

FlsdResult f_lsd(const AudioBuffer& ref, const AudioBuffer& test,
                 std::span<const std::uint8_t> ref_vuv, const FlsdConfig& cfg) {
  const std::size_t win = ms_to_samples(cfg.win_ms, ref.sample_rate);
  const std::size_t hop = ms_to_samples(cfg.hop_ms, ref.sample_rate);
  const long max_lag = long(ms_to_samples(cfg.max_shift_ms, ref.sample_rate));
  if (hop == 0 || win < hop) throw Error(ErrorCode::kConfig, "F-LSD needs win >= hop > 0");
  const std::size_t frames = (ref.size() + hop - 1) / hop;
  if (ref_vuv.size() != frames) {
    throw Error(ErrorCode::kDomain, "voicing track does not match reference frames");
  }
  const long lead = long((win - hop) / 2);
  const std::vector<double> window = hann_window(win);
  RealFft fft(next_pow2(win));

  FlsdResult res;
  double sum = 0.0;
  std::vector<double> r, y, best_r, best, rm, tm;
  for (std::size_t t = 0; t < frames; ++t) {
    if (!ref_vuv[t]) continue;
    const long start = long(t * hop) - lead;
    // Search outward from zero lag so ties keep the smallest shift.
    double best_score = -2.0;
    for (long k = 0; k <= 2 * max_lag; ++k) {
      const long lag = (k % 2 == 0) ? k / 2 : -(k + 1) / 2;
      aligned_slices(ref.samples, test.samples, start, lag, win, r, y);
      const double s = ncc(r, y);
      if (s > best_score) {
        best_score = s;
        best_r = r;
        best = y;
      }
    }
    r = best_r;
    for (std::size_t i = 0; i < win; ++i) {
      r[i] *= window[i];
      best[i] *= window[i];
    }
    fft.magnitude(r, rm);
    fft.magnitude(best, tm);
    double acc = 0.0;
    for (std::size_t k = 0; k < rm.size(); ++k) {
      const double d = 20.0 * std::log10(std::max(rm[k], kSpectralFloor) /
                                         std::max(tm[k], kSpectralFloor));
      acc += d * d;
    }
    sum += std::sqrt(acc / double(rm.size()));
    ++res.voiced_frames;
  }
  if (res.voiced_frames > 0) res.db = sum / double(res.voiced_frames);
  return res;
}

MetricReport evaluate(const AudioBuffer& ref, const AudioBuffer& test_in,
                      const FeatureConfig& cfg) {
  if (ref.sample_rate != test_in.sample_rate) {
    throw Error(ErrorCode::kDomain, "reference and test sample rates differ");
  }
  AudioBuffer test = test_in;
  test.samples.resize(ref.size(), 0.0);

  const auto f0_ref = extract_f0(ref, cfg.f0);
  const auto f0_test = extract_f0(test, cfg.f0);
  const std::size_t n = f0_ref.size();
  std::vector<double> fr(n), ft(n);
  std::vector<std::uint8_t> vr(n), vt(n);
  for (std::size_t i = 0; i < n; ++i) {
    fr[i] = f0_ref[i].f0_hz;
    ft[i] = f0_test[i].f0_hz;
    vr[i] = f0_ref[i].voiced;
    vt[i] = f0_test[i].voiced;
  }
  MetricReport rep;
  rep.vuv_pct = vuv_error(vr, vt);
  rep.f0_rmse_hz = f0_rmse(fr, ft, vr, vt);

  const FeatureTrack a = extract_features(ref, cfg);
  const FeatureTrack b = extract_features(test, cfg);
  std::vector<Lsf> la, lb;
  for (std::size_t t = 0; t < a.num_frames; ++t) {
    la.push_back(a.lsf(t));
    lb.push_back(b.lsf(t));
  }
  const LsdResult lsd = lsd_envelope(la, lb);
  rep.lsd_db = lsd.db;
  rep.skipped_frames = lsd.skipped;

  FlsdConfig fc;
  fc.win_ms = cfg.f0.win_ms;
  fc.hop_ms = cfg.f0.hop_ms;
  const FlsdResult fl = f_lsd(ref, test, vr, fc);
  rep.flsd_db = fl.db;
  rep.voiced_frames = fl.voiced_frames;
  return rep;
}

nlohmann::json to_json(const MetricReport& r) {
  auto opt = [](const std::optional<double>& v) {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
  };
  return {{"vuv_pct", r.vuv_pct},         {"f0_rmse_hz", opt(r.f0_rmse_hz)},
          {"lsd_db", opt(r.lsd_db)},      {"flsd_db", opt(r.flsd_db)},
          {"voiced_frames", r.voiced_frames},
          {"skipped_frames", r.skipped_frames}};
}

std::string report_csv_header() {
  return "vuv_pct,f0_rmse_hz,lsd_db,flsd_db,voiced_frames,skipped_frames";
}

std::string report_csv_row(const MetricReport& r) {
  auto opt = [](const std::optional<double>& v) { return v ? fmt(*v) : std::string(); };
  return fmt(r.vuv_pct) + "," + opt(r.f0_rmse_hz) + "," + opt(r.lsd_db) + "," +
         opt(r.flsd_db) + "," + std::to_string(r.voiced_frames) + "," +
         std::to_string(r.skipped_frames);
}

}  // namespace lpwn
