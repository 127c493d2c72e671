#include "lpwn/lpc.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <string>

#include "lpwn/error.hpp"

namespace lpwn {
namespace {

constexpr double kPi = std::numbers::pi;

// Root finding and polynomial expansion run in extended precision: at high
// orders the coefficients grow large and nearby LSFs lose digits in double.
using Ext = long double;

// c is symmetric with even degree 2m. e^{jm w} C(e^{jw}) is real and equals
// sum_j b_j T_j(cos w) with b_0 = c[m], b_j = 2 c[m - j].
std::vector<Ext> chebyshev_series(const std::vector<Ext>& c) {
  const std::size_t m = (c.size() - 1) / 2;
  std::vector<Ext> b(m + 1);
  b[0] = c[m];
  for (std::size_t j = 1; j <= m; ++j) b[j] = 2.0L * c[m - j];
  return b;
}

// Clenshaw recurrence.
Ext chebyshev_eval(const std::vector<Ext>& b, Ext x) {
  Ext y1 = 0.0L, y2 = 0.0L;
  for (std::size_t j = b.size() - 1; j >= 1; --j) {
    const Ext y = b[j] + 2.0L * x * y1 - y2;
    y2 = y1;
    y1 = y;
  }
  return b[0] + x * y1 - y2;
}

// cos(j pi / grid) for j = 0..grid. Only used to bracket sign changes.
const std::vector<double>& grid_cosines(std::size_t grid) {
  static std::map<std::size_t, std::vector<double>> cache;
  static std::mutex mu;
  std::lock_guard<std::mutex> lock(mu);
  auto& table = cache[grid];
  if (table.empty()) {
    table.resize(grid + 1);
    for (std::size_t j = 0; j <= grid; ++j) table[j] = std::cos(kPi * double(j) / double(grid));
  }
  return table;
}

std::vector<Ext> find_roots(const std::vector<Ext>& c, std::size_t grid) {
  const std::vector<Ext> b = chebyshev_series(c);
  const std::vector<double>& xs = grid_cosines(grid);
  auto f = [&](Ext w) { return chebyshev_eval(b, std::cos(w)); };
  std::vector<Ext> roots;
  const Ext step = std::numbers::pi_v<Ext> / Ext(grid);
  Ext prev_f = chebyshev_eval(b, xs[0]);
  for (std::size_t j = 1; j <= grid; ++j) {
    const Ext fw = chebyshev_eval(b, xs[j]);
    if ((prev_f < 0.0L) != (fw < 0.0L)) {
      Ext lo = step * Ext(j - 1), hi = step * Ext(j);
      const bool neg_lo = prev_f < 0.0L;
      for (int it = 0; it < 64 && hi - lo > 1e-17L; ++it) {
        const Ext mid = 0.5L * (lo + hi);
        if ((f(mid) < 0.0L) == neg_lo) {
          lo = mid;
        } else {
          hi = mid;
        }
      }
      roots.push_back(0.5L * (lo + hi));
    }
    prev_f = fw;
  }
  return roots;
}

// Multiply polynomial (in z^-1) by (1 - 2 cos(w) z^-1 + z^-2).
void multiply_pair(std::vector<Ext>& poly, Ext w) {
  const Ext b = -2.0L * std::cos(w);
  std::vector<Ext> out(poly.size() + 2, 0.0L);
  for (std::size_t k = 0; k < poly.size(); ++k) {
    out[k] += poly[k];
    out[k + 1] += b * poly[k];
    out[k + 2] += poly[k];
  }
  poly = std::move(out);
}

}  // namespace

std::vector<double> autocorrelate(std::span<const double> frame,
                                  std::size_t max_lag) {
  if (max_lag >= frame.size()) {
    throw Error(ErrorCode::kDomain, "autocorrelation lag must be below frame length");
  }
  std::vector<double> r(max_lag + 1, 0.0);
  const std::size_t n = frame.size();
  for (std::size_t k = 0; k <= max_lag; ++k) {
    double acc = 0.0;
    for (std::size_t i = 0; i + k < n; ++i) acc += frame[i] * frame[i + k];
    r[k] = acc;
  }
  return r;
}

LevinsonResult levinson_durbin_detailed(std::span<const double> r,
                                        std::size_t order) {
  if (r.size() < order + 1) {
    throw Error(ErrorCode::kDomain, "autocorrelation too short for LP order");
  }
  if (!(r[0] > 0.0)) {
    throw Error(ErrorCode::kDegenerateFrame, "r0 must be positive");
  }
  LevinsonResult out;
  std::vector<double>& alpha = out.lpc.alpha;
  alpha.assign(order, 0.0);
  out.reflection.assign(order, 0.0);
  std::vector<double> prev(order, 0.0);
  double err = r[0] * (1.0 + kLevinsonRegularization);
  for (std::size_t i = 1; i <= order; ++i) {
    double acc = r[i];
    for (std::size_t j = 1; j < i; ++j) acc -= alpha[j - 1] * r[i - j];
    const double k = acc / err;
    if (!(std::abs(k) < 1.0)) {
      throw Error(ErrorCode::kInstability,
                  "reflection coefficient " + std::to_string(i) +
                      " outside (-1, 1)");
    }
    std::copy(alpha.begin(), alpha.begin() + (i - 1), prev.begin());
    for (std::size_t j = 1; j < i; ++j) {
      alpha[j - 1] = prev[j - 1] - k * prev[i - j - 1];
    }
    alpha[i - 1] = k;
    out.reflection[i - 1] = k;
    err *= (1.0 - k * k);
  }
  out.prediction_error = err;
  return out;
}

LpcCoeffs levinson_durbin(std::span<const double> r, std::size_t order) {
  return levinson_durbin_detailed(r, order).lpc;
}

bool is_stable(const LpcCoeffs& a) {
  std::vector<double> cur = a.alpha;
  for (std::size_t i = cur.size(); i >= 1; --i) {
    const double k = cur[i - 1];
    if (!(std::abs(k) < 1.0)) return false;
    const double denom = 1.0 - k * k;
    std::vector<double> next(i - 1);
    for (std::size_t j = 1; j < i; ++j) {
      next[j - 1] = (cur[j - 1] + k * cur[i - j - 1]) / denom;
    }
    cur = std::move(next);
  }
  return true;
}

Lsf lpc_to_lsf(const LpcCoeffs& a) {
  const std::size_t p = a.order();
  if (p == 0) return {};
  std::vector<Ext> poly(p + 2, 0.0L);
  poly[0] = 1.0L;
  for (std::size_t i = 1; i <= p; ++i) poly[i] = -Ext(a.alpha[i - 1]);

  std::vector<Ext> sum(p + 2), diff(p + 2);
  for (std::size_t k = 0; k <= p + 1; ++k) {
    sum[k] = poly[k] + poly[p + 1 - k];
    diff[k] = poly[k] - poly[p + 1 - k];
  }

  // Remove the trivial roots at z = +-1 so both factors are symmetric with
  // roots strictly inside (0, pi).
  std::vector<Ext> pc, qc;
  if (p % 2 == 0) {
    pc.resize(p + 1);
    qc.resize(p + 1);
    pc[0] = sum[0];
    qc[0] = diff[0];
    for (std::size_t k = 1; k <= p; ++k) {
      pc[k] = sum[k] - pc[k - 1];
      qc[k] = diff[k] + qc[k - 1];
    }
  } else {
    pc = sum;
    qc.resize(p);
    for (std::size_t k = 0; k < p; ++k) {
      qc[k] = diff[k] + (k >= 2 ? qc[k - 2] : 0.0L);
    }
  }
  const std::size_t np = (pc.size() - 1) / 2;
  const std::size_t nq = (qc.size() - 1) / 2;

  for (std::size_t grid : {std::size_t{4096}, std::size_t{65536}, std::size_t{1} << 20}) {
    std::vector<Ext> pr = find_roots(pc, grid);
    std::vector<Ext> qr = find_roots(qc, grid);
    if (pr.size() != np || qr.size() != nq) continue;
    Lsf out;
    out.omega.reserve(p);
    for (std::size_t i = 0; i < p; ++i) {
      out.omega.push_back(double(i % 2 == 0 ? pr[i / 2] : qr[i / 2]));
    }
    bool ordered = out.omega.front() > 0.0 && out.omega.back() < kPi;
    for (std::size_t i = 1; i < p && ordered; ++i) {
      ordered = out.omega[i] > out.omega[i - 1];
    }
    if (ordered) return out;
  }
  throw Error(ErrorCode::kInstability,
              "sum/difference polynomial roots do not interleave");
}

LpcCoeffs lsf_to_lpc(const Lsf& w) {
  const std::size_t p = w.order();
  for (std::size_t i = 0; i < p; ++i) {
    if (!(w.omega[i] > 0.0 && w.omega[i] < kPi) ||
        (i > 0 && !(w.omega[i] > w.omega[i - 1]))) {
      throw Error(ErrorCode::kDomain,
                  "LSFs must be strictly increasing in (0, pi)");
    }
  }
  if (p == 0) return {};
  std::vector<Ext> pp{1.0L}, qq{1.0L};
  for (std::size_t i = 0; i < p; ++i) {
    multiply_pair(i % 2 == 0 ? pp : qq, Ext(w.omega[i]));
  }
  // Restore the trivial roots.
  auto times = [](const std::vector<Ext>& c, std::size_t lag, Ext sign) {
    std::vector<Ext> out(c.size() + lag, 0.0L);
    for (std::size_t k = 0; k < c.size(); ++k) {
      out[k] += c[k];
      out[k + lag] += sign * c[k];
    }
    return out;
  };
  std::vector<Ext> full_p, full_q;
  if (p % 2 == 0) {
    full_p = times(pp, 1, 1.0L);
    full_q = times(qq, 1, -1.0L);
  } else {
    full_p = pp;
    full_q = times(qq, 2, -1.0L);
  }
  LpcCoeffs a;
  a.alpha.resize(p);
  for (std::size_t i = 1; i <= p; ++i) {
    a.alpha[i - 1] = double(-0.5L * (full_p[i] + full_q[i]));
  }
  return a;
}

Lsf flat_lsf(std::size_t order) {
  Lsf w;
  w.omega.resize(order);
  for (std::size_t k = 1; k <= order; ++k) {
    w.omega[k - 1] = double(k) * kPi / double(order + 1);
  }
  return w;
}

double lp_approximation(std::span<const double> past, const LpcCoeffs& a) {
  const std::size_t p = std::min(past.size(), a.order());
  double acc = 0.0;
  for (std::size_t i = 0; i < p; ++i) acc += a.alpha[i] * past[i];
  return acc;
}

double lp_predict(std::span<const double> x, std::size_t n,
                  const LpcCoeffs& a) {
  const std::size_t p = std::min(n, a.order());
  double acc = 0.0;
  for (std::size_t i = 1; i <= p; ++i) acc += a.alpha[i - 1] * x[n - i];
  return acc;
}

namespace {

void check_coverage(std::size_t n, const LpcSchedule& sched) {
  if (sched.hop_samples == 0) {
    throw Error(ErrorCode::kConfig, "LPC schedule hop must be positive");
  }
  if (sched.covered_samples() < n) {
    throw Error(ErrorCode::kCoverage,
                "LPC schedule covers " +
                    std::to_string(sched.covered_samples()) + " of " +
                    std::to_string(n) + " samples");
  }
}

}  // namespace

std::vector<double> lp_approximation_track(std::span<const double> x,
                                           const LpcSchedule& sched) {
  check_coverage(x.size(), sched);
  std::vector<double> xhat(x.size());
  for (std::size_t n = 0; n < x.size(); ++n) {
    xhat[n] = lp_predict(x, n, sched.at(n));
  }
  return xhat;
}

std::vector<double> inverse_filter(std::span<const double> x,
                                   const LpcSchedule& sched) {
  std::vector<double> e = lp_approximation_track(x, sched);
  for (std::size_t n = 0; n < x.size(); ++n) e[n] = x[n] - e[n];
  return e;
}

std::vector<double> synthesis_filter(std::span<const double> e,
                                     const LpcSchedule& sched) {
  check_coverage(e.size(), sched);
  std::vector<double> x(e.size(), 0.0);
  for (std::size_t n = 0; n < e.size(); ++n) {
    x[n] = e[n] + lp_predict(x, n, sched.at(n));
    if (!std::isfinite(x[n])) {
      throw Error(ErrorCode::kDivergence,
                  "synthesis filter diverged at sample " + std::to_string(n));
    }
  }
  return x;
}

}  // namespace lpwn
