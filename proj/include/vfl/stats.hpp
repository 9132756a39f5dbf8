#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "vfl/core.hpp"
#include "vfl/kernel.hpp"
#include "vfl/particles.hpp"
#include "vfl/sigma.hpp"
#include "vfl/spde.hpp"
#include "vfl/spectral.hpp"
#include "vfl/trig.hpp"

namespace vfl {

// ---------------------------------------------------------------------------
// Time series of one observable for one run.

struct PairingSeries {
  std::string observable;
  std::vector<double> times;
  std::vector<double> values;
  std::size_t n = 0;  // particle count, 0 for continuum runs
  std::uint32_t ensemble_id = 0;
  std::uint32_t w_path_id = 0;
  std::uint64_t seed = 0;

  void push(double t, double v) {
    if (!times.empty() && !(t > times.back()))
      throw InvalidInput("PairingSeries: times must be strictly increasing");
    times.push_back(t);
    values.push_back(v);
  }
  double back() const { return values.back(); }
};

// ---------------------------------------------------------------------------
// Empirical spectrum <mu_N, e_k> = (1/N) sum_j exp(-i k.X_j), |k|_inf <= K.

struct EmpiricalSpectrum {
  int k_stat = 0;
  std::size_t n = 0;
  double time = 0.0;
  std::vector<complex> coeffs;  // row-major, k1 then k2, each from -K to K

  complex at(int k1, int k2) const {
    if (std::abs(k1) > k_stat || std::abs(k2) > k_stat)
      throw InvalidInput("EmpiricalSpectrum: wavevector out of range");
    const int w = 2 * k_stat + 1;
    return coeffs[static_cast<std::size_t>(k1 + k_stat) * w + (k2 + k_stat)];
  }
};

inline EmpiricalSpectrum empirical_spectrum(const std::vector<TorusPoint>& xs, int k_stat,
                                            double time = 0.0) {
  if (k_stat < 1) throw InvalidInput("empirical_spectrum: K_stat must be >= 1");
  if (xs.empty()) throw InvalidInput("empirical_spectrum: no particles");
  const int w = 2 * k_stat + 1;
  EmpiricalSpectrum s{k_stat, xs.size(), time, std::vector<complex>(std::size_t(w) * w)};
  std::vector<complex> e1(w), e2(w);
  for (const auto& x : xs) {
    for (int k = -k_stat; k <= k_stat; ++k) {
      e1[k + k_stat] = std::polar(1.0, -k * x.x1);
      e2[k + k_stat] = std::polar(1.0, -k * x.x2);
    }
    for (int a = 0; a < w; ++a) {
      complex* row = &s.coeffs[static_cast<std::size_t>(a) * w];
      const complex ea = e1[a];
      for (int b = 0; b < w; ++b) row[b] += ea * e2[b];
    }
  }
  const double inv = 1.0 / static_cast<double>(xs.size());
  for (auto& c : s.coeffs) c *= inv;
  s.coeffs[static_cast<std::size_t>(k_stat) * w + k_stat] = 1.0;
  return s;
}

// ---------------------------------------------------------------------------
// Sobolev norms in the unnormalized convention:
// |f|^2_{H^alpha} = sum_{|k|_inf <= K} (1 + |k|^2)^alpha |<f, e_k>|^2.
// The functions return the squared norm.

template <class Coef>
double sobolev_norm_sq(Coef&& coef, double alpha, int k_trunc) {
  double s = 0.0;
  for (int k1 = -k_trunc; k1 <= k_trunc; ++k1)
    for (int k2 = -k_trunc; k2 <= k_trunc; ++k2) {
      const double c2 = std::norm(coef(k1, k2));
      if (c2 == 0.0) continue;
      s += std::pow(1.0 + double(k1 * k1 + k2 * k2), alpha) * c2;
    }
  return s;
}

inline double sobolev_norm(const FourierField& f, double alpha, int k_trunc) {
  if (k_trunc > f.grid().m() / 2 - 1)
    throw InvalidInput("sobolev_norm: truncation beyond available coefficients");
  return sobolev_norm_sq([&](int a, int b) { return f.at(a, b); }, alpha, k_trunc);
}

inline double sobolev_norm(const EmpiricalSpectrum& s, double alpha, int k_trunc) {
  if (k_trunc > s.k_stat)
    throw InvalidInput("sobolev_norm: truncation beyond available coefficients");
  return sobolev_norm_sq([&](int a, int b) { return s.at(a, b); }, alpha, k_trunc);
}

// |mu_N - v|^2_{H^alpha} truncated at K.
inline double sobolev_distance(const EmpiricalSpectrum& s, const FourierField& v, double alpha,
                               int k_trunc) {
  if (k_trunc > s.k_stat || k_trunc > v.grid().m() / 2 - 1)
    throw InvalidInput("sobolev_distance: truncation beyond available coefficients");
  return sobolev_norm_sq([&](int a, int b) { return s.at(a, b) - v.at(a, b); }, alpha,
                         k_trunc);
}

// Upper bound on the omitted tail sum_{|k|_inf > K} (1+|k|^2)^alpha B^2 for
// alpha < -1 when every |c_k| <= B: the shell |k|_inf = n has 8n points with
// |k| >= n, and sum_{n>K} 8 n^{1+2 alpha} <= 8 K^{2+2 alpha} / (-2 - 2 alpha).
inline double sobolev_tail_bound(double alpha, int k_trunc, double coef_bound) {
  if (!(alpha < -1.0)) return std::numeric_limits<double>::infinity();
  return coef_bound * coef_bound * 8.0 * std::pow(double(k_trunc), 2.0 + 2.0 * alpha) /
         (-2.0 - 2.0 * alpha);
}

// ---------------------------------------------------------------------------
// Particle martingale <M^N, phi> and its quadratic variation.

struct MartingaleAccumulator {
  double value = 0.0;
  double qv = 0.0;

  // value += sqrt(2/N) sum_i grad phi(X_i).dB_i, qv += (2/N) sum_i |grad phi(X_i)|^2 dt.
  void accumulate(const std::vector<TorusPoint>& xs, const std::vector<Vec2>& dB,
                  const TestFunction& phi, double dt) {
    if (xs.size() != dB.size() || xs.empty())
      throw InvalidInput("martingale_accumulate: length mismatch");
    const double n = static_cast<double>(xs.size());
    double inc = 0.0, q = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const Vec2 g = phi.gradient(xs[i]);
      inc += dot(g, dB[i]);
      q += norm_sq(g);
    }
    value += std::sqrt(2.0 / n) * inc;
    qv += (2.0 / n) * q * dt;
  }
};

// ---------------------------------------------------------------------------
// Interaction term K^N(phi) = sqrt(N) <grad phi, K*mu_N mu_N> - sqrt(N) <grad phi, v K*v>.

struct InteractionTerm {
  double particle = 0.0;
  double continuum = 0.0;
  double value() const { return particle - continuum; }
};

// <grad phi, v K*v> by dealiased spectral quadrature.
inline double interaction_continuum(const FourierField& v, const TestFunction& phi) {
  SpdeScheme scheme;
  scheme.stability_constant = std::numeric_limits<double>::infinity();
  const SpdeSolver ops(v.grid(), DivFreeVectorField::off(), scheme);
  FourierField vb = v;
  vb.project_to_band();
  const auto u = apply_velocity_operator(vb);
  const RealBuffer vg = ops.values(vb);
  double s = 0.0;
  for (int axis = 0; axis < 2; ++axis) {
    const RealBuffer ug = ops.values(u[axis]);
    RealBuffer p(vg.size());
    for (std::size_t j = 0; j < p.size(); ++j) p[j] = ug[j] * vg[j];
    FourierField pf = ops.coefficients(p);
    pf.project_to_band();
    s += phi.derivative(axis).pair(pf);
  }
  return s;
}

// (1/N) sum_i grad phi(X_i) . b_i with b the drift of the particle system,
// which excludes j = i.
inline double interaction_particle(const std::vector<TorusPoint>& xs, const TestFunction& phi,
                                   const KernelSpec& spec, const DriftOptions& opt = {}) {
  const auto b = pairwise_drift(xs, spec, opt);
  double s = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) s += dot(phi.gradient(xs[i]), b[i]);
  return s / static_cast<double>(xs.size());
}

inline InteractionTerm interaction_term(const std::vector<TorusPoint>& xs, const FourierField& v,
                                        const TestFunction& phi, const KernelSpec& spec,
                                        const DriftOptions& opt = {}) {
  const double rn = std::sqrt(static_cast<double>(xs.size()));
  return {rn * interaction_particle(xs, phi, spec, opt), rn * interaction_continuum(v, phi)};
}

// ---------------------------------------------------------------------------
// Entropy weight R_t = (1/m) exp(-m int_0^t |f_s|^2_{H^4} ds), trapezoidal rule;
// the series is linearly interpolated at t.

inline double entropy_weight(const std::vector<double>& times,
                             const std::vector<double>& h4_norm_sq, double m, double t) {
  if (!(m > 1.0)) throw InvalidInput("entropy_weight: m must exceed 1");
  if (times.size() != h4_norm_sq.size() || times.empty())
    throw InvalidInput("entropy_weight: malformed series");
  if (t < times.front() || t > times.back())
    throw InvalidInput("entropy_weight: series does not cover [0, t]");
  double integral = 0.0;
  for (std::size_t i = 1; i < times.size() && times[i - 1] < t; ++i) {
    const double t0 = times[i - 1];
    const double t1 = std::min(times[i], t);
    const double f0 = h4_norm_sq[i - 1];
    const double f1 =
        f0 + (h4_norm_sq[i] - f0) * (t1 - t0) / (times[i] - times[i - 1]);
    integral += 0.5 * (f0 + f1) * (t1 - t0);
  }
  return std::exp(-m * integral) / m;
}

// ---------------------------------------------------------------------------
// Fisher information int |grad rho|^2 / rho dx from collocation values.

inline double fisher_information(const RealBuffer& values, const SpectralGrid& g) {
  if (values.size() != g.size()) throw InvalidInput("fisher_information: size mismatch");
  for (double v : values)
    if (!(v > 0.0)) throw DomainError("fisher_information: nonpositive density value");
  const FourierField f = from_grid(values, g);
  const RealBuffer d1 = to_grid(derivative(f, 0));
  const RealBuffer d2 = to_grid(derivative(f, 1));
  double s = 0.0;
  for (std::size_t j = 0; j < values.size(); ++j)
    s += (d1[j] * d1[j] + d2[j] * d2[j]) / values[j];
  return s * g.cell_area();
}

// ---------------------------------------------------------------------------
// Log-log least squares.

struct RateFitResult {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  double slope_half_width = 0.0;  // 95% t-interval
};

inline RateFitResult rate_fit(const std::vector<std::pair<double, double>>& pairs) {
  std::vector<double> lx, ly;
  for (const auto& [n, v] : pairs) {
    if (!(n > 0.0) || !(v > 0.0)) throw DomainError("rate_fit: values must be positive");
    lx.push_back(std::log(n));
    ly.push_back(std::log(v));
  }
  std::vector<double> sorted = lx;
  std::sort(sorted.begin(), sorted.end());
  if (std::unique(sorted.begin(), sorted.end()) - sorted.begin() < 3)
    throw InvalidInput("rate_fit: need at least 3 distinct N");
  const double k = static_cast<double>(lx.size());
  const double mx = std::accumulate(lx.begin(), lx.end(), 0.0) / k;
  const double my = std::accumulate(ly.begin(), ly.end(), 0.0) / k;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
    syy += (ly[i] - my) * (ly[i] - my);
  }
  RateFitResult r;
  r.slope = sxy / sxx;
  r.intercept = my - r.slope * mx;
  double sse = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    const double e = ly[i] - (r.intercept + r.slope * lx[i]);
    sse += e * e;
  }
  r.r_squared = syy > 0.0 ? std::clamp(1.0 - sse / syy, 0.0, 1.0) : 1.0;
  const double dof = k - 2.0;
  if (dof > 0.0) {
    const boost::math::students_t dist(dof);
    const double tq = boost::math::quantile(dist, 0.975);
    r.slope_half_width = tq * std::sqrt(sse / dof / sxx);
  }
  return r;
}

// ---------------------------------------------------------------------------
// One-sample Kolmogorov-Smirnov test against N(mean, variance).

struct KsResult {
  double statistic = 0.0;
  double p_value = 1.0;
};

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

// P(K > lambda) for the Kolmogorov distribution. Uses the alternating series
// for large lambda and the theta-function form for small lambda; both are
// summed to convergence with at least 10 terms.
inline double kolmogorov_survival(double lambda) {
  if (lambda <= 0.0) return 1.0;
  if (lambda < 1.0) {
    const double c = -pi * pi / (8.0 * lambda * lambda);
    double s = 0.0;
    for (int j = 1; j <= 100; ++j) {
      const double t = std::exp(c * (2 * j - 1) * (2 * j - 1));
      s += t;
      if (j >= 10 && t < 1e-17 * s) break;
    }
    return std::clamp(1.0 - std::sqrt(two_pi) / lambda * s, 0.0, 1.0);
  }
  double s = 0.0;
  for (int j = 1; j <= 100; ++j) {
    const double t = std::exp(-2.0 * j * j * lambda * lambda);
    s += (j % 2 ? 1.0 : -1.0) * t;
    if (j >= 10 && t < 1e-17) break;
  }
  return std::clamp(2.0 * s, 0.0, 1.0);
}

// Asymptotic p-value with Stephens' finite-n scaling (sqrt n + 0.12 + 0.11/sqrt n) D.
inline KsResult ks_normal_test(std::vector<double> samples, double mean, double variance) {
  if (!(variance > 0.0) || !std::isfinite(variance))
    throw DomainError("ks_normal_test: degenerate variance");
  if (samples.size() < 50) throw InvalidInput("ks_normal_test: need at least 50 samples");
  std::sort(samples.begin(), samples.end());
  const double sd = std::sqrt(variance);
  const double n = static_cast<double>(samples.size());
  double d = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double f = normal_cdf((samples[i] - mean) / sd);
    d = std::max({d, (i + 1) / n - f, f - i / n});
  }
  const double rn = std::sqrt(n);
  return {d, kolmogorov_survival((rn + 0.12 + 0.11 / rn) * d)};
}

// ---------------------------------------------------------------------------
// Conditional characteristic function of <M_t, phi> given W.

struct CharPoint {
  double s = 0.0;
  double re = 0.0;
  double im = 0.0;
  double target = 0.0;  // exp(-s^2 I), imaginary target is 0
  double se_re = 0.0;
  double se_im = 0.0;
  double z_re() const { return se_re > 0 ? (re - target) / se_re : (re == target ? 0 : 1e300); }
  double z_im() const { return se_im > 0 ? im / se_im : (im == 0 ? 0 : 1e300); }
};

// Jackknife standard error from leave-one-out estimates.
inline double jackknife_se(const std::vector<double>& loo) {
  const double n = static_cast<double>(loo.size());
  if (n < 2) return 0.0;
  const double m = std::accumulate(loo.begin(), loo.end(), 0.0) / n;
  double s = 0.0;
  for (double x : loo) s += (x - m) * (x - m);
  return std::sqrt((n - 1.0) / n * s);
}

// Jackknife SE of a sample mean.
inline double jackknife_mean_se(const std::vector<double>& x) {
  const double n = static_cast<double>(x.size());
  const double total = std::accumulate(x.begin(), x.end(), 0.0);
  std::vector<double> loo(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) loo[i] = (total - x[i]) / (n - 1.0);
  return jackknife_se(loo);
}

// `integral` is int_0^t <|grad phi|^2, v_s> ds for the shared W path.
inline std::vector<CharPoint> conditional_char_compare(const std::vector<double>& samples,
                                                       const std::vector<std::uint64_t>& path_ids,
                                                       double integral,
                                                       const std::vector<double>& s_grid) {
  if (samples.size() != path_ids.size()) throw InvalidInput("conditional_char_compare: sizes");
  if (samples.size() < 500) throw InvalidInput("conditional_char_compare: need >= 500 samples");
  for (auto id : path_ids)
    if (id != path_ids.front())
      throw InvalidInput("invalid conditioning: samples come from different W paths");
  std::vector<CharPoint> out;
  for (double s : s_grid) {
    std::vector<double> c(samples.size()), sn(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
      c[i] = std::cos(s * samples[i]);
      sn[i] = std::sin(s * samples[i]);
    }
    CharPoint p;
    p.s = s;
    p.re = std::accumulate(c.begin(), c.end(), 0.0) / c.size();
    p.im = std::accumulate(sn.begin(), sn.end(), 0.0) / sn.size();
    p.target = std::exp(-s * s * integral);
    p.se_re = jackknife_mean_se(c);
    p.se_im = jackknife_mean_se(sn);
    out.push_back(p);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Weak-form bookkeeping. For a pairing P_n = <phi, f_{t_n}> the identity
// P_n = P_0 + sum_{m<n} D_m dt + sum_{m<n} G_m dW_m + M_n is checked with the
// drift integrand D (all ds terms), the transport integrand G and the
// martingale M logged at the left endpoint of every step.

struct WeakFormLog {
  std::vector<double> times;
  std::vector<double> pairing;     // P_n, n = 0..steps
  std::vector<double> drift;       // D_n, n = 0..steps-1
  std::vector<double> transport;   // G_n, n = 0..steps-1
  std::vector<double> dW;          // n = 0..steps-1
  std::vector<double> martingale;  // M_n, n = 0..steps (empty if absent)
};

inline std::vector<double> weak_form_residual(const WeakFormLog& log) {
  const std::size_t n = log.pairing.size();
  if (n == 0 || log.times.size() != n || log.drift.size() + 1 != n ||
      log.transport.size() + 1 != n || log.dW.size() + 1 != n ||
      (!log.martingale.empty() && log.martingale.size() != n))
    throw InvalidInput("weak_form_residual: series are not on one time grid");
  std::vector<double> r(n, 0.0);
  double acc = 0.0;
  for (std::size_t i = 1; i < n; ++i) {
    const double dt = log.times[i] - log.times[i - 1];
    acc += log.drift[i - 1] * dt + log.transport[i - 1] * log.dW[i - 1];
    const double m = log.martingale.empty() ? 0.0 : log.martingale[i] - log.martingale[0];
    r[i] = log.pairing[i] - log.pairing[0] - acc - m;
  }
  return r;
}

// Pointwise sigma.grad(sigma.grad phi) = sigma^T H sigma + ((sigma.grad)sigma).grad phi.
inline double sigma_second_derivative(const DivFreeVectorField& sigma, const TestFunction& phi,
                                      Vec2 x) {
  const Vec2 s = sigma(x);
  const auto h = phi.hessian(x);
  const Vec2 gs = sigma.grad_sigma(x);
  return s.x1 * s.x1 * h[0] + 2.0 * s.x1 * s.x2 * h[1] + s.x2 * s.x2 * h[2] +
         dot(gs, phi.gradient(x));
}

}  // namespace vfl
