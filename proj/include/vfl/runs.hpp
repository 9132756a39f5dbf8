#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "vfl/core.hpp"
#include "vfl/kernel.hpp"
#include "vfl/noise.hpp"
#include "vfl/particles.hpp"
#include "vfl/scenario.hpp"
#include "vfl/spde.hpp"
#include "vfl/spectral.hpp"
#include "vfl/stats.hpp"
#include "vfl/trig.hpp"

namespace vfl {

// ---------------------------------------------------------------------------
// Continuum pairings along a mean-field path, one entry per step n = 0..steps.

struct ContinuumSeries {
  std::vector<double> phi;          // <phi, v>
  std::vector<double> laplacian;    // <lap phi, v>
  std::vector<double> sigma2;       // <sigma.grad(sigma.grad phi), v>
  std::vector<double> sigma1;       // <sigma.grad phi, v>
  std::vector<double> grad_sq;      // <|grad phi|^2, v>
  std::vector<double> interaction;  // <grad phi, v K*v>
};

namespace detail {

// Grid values of the static test-function fields used by the pairings.
struct PairingFields {
  std::vector<double> phi, laplacian, sigma2, sigma1, grad_sq;
};

inline PairingFields pairing_fields(const SpectralGrid& g, const TestFunction& phi,
                                    const DivFreeVectorField& sigma) {
  PairingFields f;
  const bool with_sigma = !sigma.is_off();
  for (std::size_t j = 0; j < g.size(); ++j) {
    const TorusPoint x = g.node(static_cast<int>(j / g.m()), static_cast<int>(j % g.m()));
    const Vec2 gr = phi.gradient(x);
    f.phi.push_back(phi.value(x));
    f.laplacian.push_back(phi.laplacian(x));
    f.grad_sq.push_back(norm_sq(gr));
    f.sigma2.push_back(with_sigma ? sigma_second_derivative(sigma, phi, x) : 0.0);
    f.sigma1.push_back(with_sigma ? dot(sigma(x), gr) : 0.0);
  }
  return f;
}

// h^2 sum_j a_j b_j, exact for trigonometric products below the Nyquist band.
inline double grid_pairing(const std::vector<double>& a, const RealBuffer& b, double area) {
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) s += a[j] * b[j];
  return s * area;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Mean-field runs.

struct MeanFieldOptions {
  bool keep_path = true;
  std::vector<TestFunction> pairings;  // continuum series to compute
  bool with_interaction = true;
  std::string snapshot_file;           // VFLF records, empty disables
  std::size_t snapshot_every = 0;      // 0 writes only the first and last state
};

struct MeanFieldRun {
  NoisePathRecord w;
  std::vector<double> times;
  std::vector<FourierField> path;  // v_n when keep_path
  FourierField final{SpectralGrid(8)};  // replaced by the run
  PairingSeries mass;
  PairingSeries l2_norm_sq;
  PairingSeries grid_min;
  PairingSeries grid_max;
  PairingSeries h4_norm_sq;
  std::vector<ContinuumSeries> continuum;  // parallel to options.pairings
};

// Advances v_0 through the W record. Raises NumericalAlarm when the grid
// minimum falls below -positivity_tolerance.
inline MeanFieldRun run_mean_field(const Scenario& sc, const NoisePathRecord& w,
                                   const MeanFieldOptions& opt = {},
                                   std::optional<SpdeScheme> scheme_override = std::nullopt) {
  const SpdeScheme scheme = scheme_override.value_or(sc.scheme());
  if (std::abs(w.dt - scheme.dt) > 1e-15 * scheme.dt)
    throw ConfigError("W record dt does not match the scenario dt");
  const std::size_t steps = static_cast<std::size_t>(std::llround(sc.T / scheme.dt));
  if (w.dW.size() < steps) throw ConfigError("W record is shorter than the horizon");
  const SpectralGrid g = sc.grid();
  const auto sigma = sc.sigma();
  const SpdeSolver solver(g, sigma, scheme);
  MeanFieldRun run;
  run.w = w;
  run.mass.observable = "mass";
  run.l2_norm_sq.observable = "l2_norm_sq";
  run.grid_min.observable = "grid_min";
  run.grid_max.observable = "grid_max";
  run.h4_norm_sq.observable = "h4_norm_sq";
  for (auto* s : {&run.mass, &run.l2_norm_sq, &run.grid_min, &run.grid_max, &run.h4_norm_sq}) {
    s->w_path_id = static_cast<std::uint32_t>(w.path_id);
    s->seed = sc.master_seed;
  }
  std::vector<detail::PairingFields> fields;
  const auto sigma_terms = scheme.transport ? sigma : DivFreeVectorField::off();
  for (const auto& phi : opt.pairings)
    fields.push_back(detail::pairing_fields(g, phi, sigma_terms));
  run.continuum.resize(opt.pairings.size());

  std::ofstream snaps;
  if (!opt.snapshot_file.empty()) {
    snaps.open(opt.snapshot_file, std::ios::binary | std::ios::trunc);
    if (!snaps) throw FormatError("cannot open " + opt.snapshot_file);
  }

  MeanFieldState s{sc.initial_density(), 0.0};
  const int k_h4 = g.m() / 2 - 1;
  for (std::size_t n = 0;; ++n) {
    const double t = n * scheme.dt;
    const RealBuffer vg = solver.values(s.v);
    const auto [lo, hi] = grid_min_max(vg);
    if (lo < -scheme.positivity_tolerance)
      throw NumericalAlarm("positivity alarm: grid minimum " + std::to_string(lo) +
                           " at t = " + std::to_string(t));
    run.times.push_back(t);
    run.mass.push(t, s.v.at(0, 0).real());
    run.l2_norm_sq.push(t, l2_norm_sq(s.v));
    run.grid_min.push(t, lo);
    run.grid_max.push(t, hi);
    run.h4_norm_sq.push(t, sobolev_norm(s.v, 4.0, k_h4));
    for (std::size_t p = 0; p < fields.size(); ++p) {
      auto& c = run.continuum[p];
      const auto& f = fields[p];
      const double a = g.cell_area();
      c.phi.push_back(detail::grid_pairing(f.phi, vg, a));
      c.laplacian.push_back(detail::grid_pairing(f.laplacian, vg, a));
      c.sigma2.push_back(detail::grid_pairing(f.sigma2, vg, a));
      c.sigma1.push_back(detail::grid_pairing(f.sigma1, vg, a));
      c.grad_sq.push_back(detail::grid_pairing(f.grad_sq, vg, a));
      c.interaction.push_back(
          opt.with_interaction && scheme.nonlinear ? interaction_continuum(s.v, opt.pairings[p])
                                                   : 0.0);
    }
    if (opt.keep_path) run.path.push_back(s.v);
    const bool last = n == steps;
    if (snaps.is_open() &&
        (n == 0 || last || (opt.snapshot_every && n % opt.snapshot_every == 0)))
      write_field(snaps, s.v);
    if (last) break;
    s = solver.step_mean_field(s, w.dW[n]);
  }
  run.final = s.v;
  return run;
}

inline MeanFieldRun run_mean_field(const Scenario& sc, std::uint32_t path_id,
                                   const MeanFieldOptions& opt = {}) {
  return run_mean_field(
      sc, NoisePathRecord::brownian(sc.master_seed, path_id, sc.dt, sc.steps(), 1), opt);
}

// Mean-field weak-form log for test function p of a run made with that pairing.
inline WeakFormLog mean_field_weak_form(const MeanFieldRun& run, std::size_t p) {
  const auto& c = run.continuum.at(p);
  WeakFormLog log;
  log.times = run.times;
  log.pairing = c.phi;
  const std::size_t steps = run.times.size() - 1;
  for (std::size_t n = 0; n < steps; ++n) {
    log.drift.push_back(c.laplacian[n] + 0.5 * c.sigma2[n] + c.interaction[n]);
    log.transport.push_back(c.sigma1[n]);
    log.dW.push_back(run.w.dW[n]);
  }
  return log;
}

// int_0^T <|grad phi|^2, v_s> ds by the left-point rule the particle QV uses.
inline double grad_sq_integral(const MeanFieldRun& run, std::size_t p) {
  const auto& c = run.continuum.at(p);
  double s = 0.0;
  for (std::size_t n = 0; n + 1 < run.times.size(); ++n)
    s += c.grad_sq[n] * (run.times[n + 1] - run.times[n]);
  return s;
}

// ---------------------------------------------------------------------------
// Particle runs.

struct ParticleRunOptions {
  bool log_series = false;  // eta, M, QV, K^N series and weak-form logs per phi
  bool martingale = false;  // M and QV at T without the full series
  bool coupled = false;     // also advance the McKean-Vlasov copy
  std::string trajectory_file;
  std::size_t snapshot_every = 1;
};

struct ParticleRun {
  std::size_t n = 0;
  std::uint32_t ensemble_id = 0;
  std::uint32_t w_path_id = 0;
  ParticleState initial;
  ParticleState final;
  std::vector<double> eta0;   // <eta^N_0, phi> per phi
  std::vector<double> eta_T;  // <eta^N_T, phi> per phi
  std::vector<double> m_T;    // <M^N_T, phi> per phi
  std::vector<double> qv_T;
  std::vector<double> sobolev_T;  // |mu_N - v_T|^2_{H^alpha} per alpha
  double coupling_mse = std::numeric_limits<double>::quiet_NaN();
  std::vector<PairingSeries> series;
  std::vector<WeakFormLog> weak_form;  // particle-side eta identity per phi
  std::vector<std::string> stream_audit;
};

namespace detail {

inline double eta_pairing(double empirical, double continuum, std::size_t n) {
  return std::sqrt(static_cast<double>(n)) * (empirical - continuum);
}

}  // namespace detail

// One ensemble member of size n driven by the W path of `mf`. The mean-field
// run must carry the scenario's test functions as pairings; `coupled`
// additionally needs its path.
inline ParticleRun run_particles(const Scenario& sc, std::size_t n, std::uint32_t ensemble_id,
                                 const MeanFieldRun& mf, const ParticleRunOptions& opt = {}) {
  if (std::abs(mf.w.dt - sc.dt) > 1e-15 * sc.dt)
    throw ConfigError("W record dt does not match the scenario dt");
  const std::size_t steps = sc.steps();
  if (mf.w.dW.size() < steps || mf.times.size() != steps + 1)
    throw ConfigError("mean-field run does not cover the horizon");
  if (sc.conditional_on_w && mf.w.path_id != sc.w_path_id)
    throw ConfigError("conditional batch requires the scenario's W path");
  const auto phis = sc.test_functions();
  if (mf.continuum.size() != phis.size())
    throw ConfigError("mean-field run lacks the continuum pairings");
  if (opt.coupled && mf.path.size() != steps + 1)
    throw ConfigError("coupled run needs the mean-field path");

  const auto sigma = sc.sigma();
  const auto spec = sc.kernel();
  auto dopt = sc.drift_options();
  const std::uint32_t path_id = static_cast<std::uint32_t>(mf.w.path_id);

  ParticleRun run;
  run.n = n;
  run.ensemble_id = ensemble_id;
  run.w_path_id = path_id;
  ParticleState x = sample_initial_positions(sc.initial_density(), n, sc.master_seed,
                                             ensemble_id);
  run.initial = x;
  ParticleState xbar = x;
  const std::size_t np = phis.size();
  std::vector<MartingaleAccumulator> mart(np);

  auto make = [&](const std::string& name, std::size_t p) {
    PairingSeries s;
    s.observable = name + "[" + phis[p].name() + "]";
    s.n = n;
    s.ensemble_id = ensemble_id;
    s.w_path_id = path_id;
    s.seed = sc.master_seed;
    return s;
  };
  std::vector<PairingSeries> s_eta, s_m, s_qv, s_k;
  if (opt.log_series) {
    run.weak_form.resize(np);
    for (std::size_t p = 0; p < np; ++p) {
      s_eta.push_back(make("eta", p));
      s_m.push_back(make("M", p));
      s_qv.push_back(make("QV", p));
      s_k.push_back(make("K", p));
      run.weak_form[p].times = mf.times;
    }
  }
  std::optional<TrajectoryWriter> traj;
  if (!opt.trajectory_file.empty()) traj.emplace(opt.trajectory_file, n);

  auto empirical = [&](const std::vector<TorusPoint>& xs, auto&& f) {
    double s = 0.0;
    for (const auto& p : xs) s += f(p);
    return s / static_cast<double>(xs.size());
  };
  const bool need_m = opt.log_series || opt.martingale;

  for (std::size_t p = 0; p < np; ++p)
    run.eta0.push_back(detail::eta_pairing(phis[p].pair_empirical(x.positions),
                                           mf.continuum[p].phi[0], n));

  for (std::size_t step = 0;; ++step) {
    const double t = mf.times[step];
    const bool last = step == steps;
    if (traj && (last || step % std::max<std::size_t>(opt.snapshot_every, 1) == 0))
      traj->append(x);
    std::vector<Vec2> drift;
    if (!last) drift = pairwise_drift(x.positions, spec, dopt);
    if (opt.log_series) {
      const auto& xs = x.positions;
      for (std::size_t p = 0; p < np; ++p) {
        const auto& c = mf.continuum[p];
        const auto& phi = phis[p];
        s_eta[p].push(t, detail::eta_pairing(phi.pair_empirical(xs), c.phi[step], n));
        s_m[p].push(t, mart[p].value);
        s_qv[p].push(t, mart[p].qv);
        auto& wf = run.weak_form[p];
        wf.pairing.push_back(s_eta[p].back());
        wf.martingale.push_back(mart[p].value);
        if (last) continue;
        double kp = 0.0;
        for (std::size_t i = 0; i < xs.size(); ++i) kp += dot(phi.gradient(xs[i]), drift[i]);
        kp /= static_cast<double>(n);
        const double kn = detail::eta_pairing(kp, c.interaction[step], n);
        s_k[p].push(t, kn);
        const double lap = detail::eta_pairing(
            empirical(xs, [&](TorusPoint q) { return phi.laplacian(q); }), c.laplacian[step], n);
        double ss = 0.0, s1 = 0.0;
        if (!sigma.is_off()) {
          ss = detail::eta_pairing(
              empirical(xs, [&](TorusPoint q) { return sigma_second_derivative(sigma, phi, q); }),
              c.sigma2[step], n);
          s1 = detail::eta_pairing(
              empirical(xs, [&](TorusPoint q) { return dot(sigma(q), phi.gradient(q)); }),
              c.sigma1[step], n);
        }
        wf.drift.push_back(lap + 0.5 * ss + kn);
        wf.transport.push_back(s1);
        wf.dW.push_back(mf.w.dW[step]);
      }
    }
    if (last) break;
    NoiseBundle noise =
        make_noise_bundle(sc.master_seed, ensemble_id, path_id, static_cast<std::uint32_t>(step),
                          n, sc.dt, mf.w.dW[step]);
    noise.milstein = sc.milstein;
    if (step == 0) {
      run.stream_audit.push_back("common " + noise.common_key.describe());
      run.stream_audit.push_back("idiosyncratic " + noise.idiosyncratic_key.describe());
    }
    if (need_m)
      for (std::size_t p = 0; p < np; ++p)
        mart[p].accumulate(x.positions, noise.dB, phis[p], sc.dt);
    if (opt.coupled) {
      if (spec.mode == KernelMode::off) {
        advance_particles(xbar.positions, std::vector<Vec2>(n), noise, sigma);
        xbar.time += sc.dt;
      } else {
        xbar = step_mckean_vlasov(xbar, apply_velocity_operator(mf.path[step]), noise, sigma,
                                  sc.k_eval);
      }
    }
    advance_particles(x.positions, drift, noise, sigma);
    x.time = mf.times[step + 1];
  }
  if (traj) traj->close();

  run.final = x;
  const FourierField& v_t = mf.final;
  for (std::size_t p = 0; p < np; ++p) {
    run.eta_T.push_back(detail::eta_pairing(phis[p].pair_empirical(x.positions),
                                            mf.continuum[p].phi[steps], n));
    run.m_T.push_back(mart[p].value);
    run.qv_T.push_back(mart[p].qv);
  }
  if (!sc.alpha_list.empty()) {
    const auto spec_t = empirical_spectrum(x.positions, sc.k_stat, x.time);
    for (double a : sc.alpha_list) run.sobolev_T.push_back(sobolev_distance(spec_t, v_t, a, sc.k_stat));
  }
  if (opt.coupled) run.coupling_mse = coupling_mse(x, xbar);
  for (auto* group : {&s_eta, &s_m, &s_qv, &s_k})
    for (auto& s : *group) run.series.push_back(std::move(s));
  return run;
}

// ---------------------------------------------------------------------------
// Limit fluctuation SPDE runs.

struct FluctuationRunOptions {
  bool sample_initial = true;  // false starts from eta_0 = 0
  bool additive_noise = true;  // false drops dM
  bool log_series = false;
  bool keep_path = false;
  std::string snapshot_file;
  std::size_t snapshot_every = 0;
};

struct FluctuationRun {
  std::uint32_t ensemble_id = 0;
  std::uint32_t w_path_id = 0;
  FourierField final{SpectralGrid(8)};  // replaced by the run
  std::vector<FourierField> path;
  std::vector<double> eta_T;  // <eta_T, phi> per phi
  std::vector<PairingSeries> series;
  std::size_t clamped_cells = 0;
};

// eta_0 from (seed, eta0, ensemble); dM from (seed, mfield_noise, ensemble,
// cell, step). The v path of `mf` supplies the coefficients.
inline FluctuationRun run_fluctuation_limit(const Scenario& sc, std::uint32_t ensemble_id,
                                            const MeanFieldRun& mf,
                                            const FluctuationRunOptions& opt = {}) {
  const std::size_t steps = sc.steps();
  if (mf.path.size() != steps + 1) throw ConfigError("fluctuation run needs the v trajectory");
  if (std::abs(mf.w.dt - sc.dt) > 1e-15 * sc.dt)
    throw ConfigError("W record dt does not match the scenario dt");
  const auto phis = sc.test_functions();
  const SpectralGrid g = sc.grid();
  const SpdeSolver solver(g, sc.sigma(), sc.scheme());
  FluctuationRun run;
  run.ensemble_id = ensemble_id;
  run.w_path_id = static_cast<std::uint32_t>(mf.w.path_id);
  std::vector<PairingSeries> s_eta;
  if (opt.log_series)
    for (const auto& phi : phis) {
      PairingSeries s;
      s.observable = "eta[" + phi.name() + "]";
      s.ensemble_id = ensemble_id;
      s.w_path_id = run.w_path_id;
      s.seed = sc.master_seed;
      s_eta.push_back(std::move(s));
    }
  std::ofstream snaps;
  if (!opt.snapshot_file.empty()) {
    snaps.open(opt.snapshot_file, std::ios::binary | std::ios::trunc);
    if (!snaps) throw FormatError("cannot open " + opt.snapshot_file);
  }
  FluctuationState s = opt.sample_initial ? sample_eta0(mf.path[0], sc.master_seed, ensemble_id)
                                          : FluctuationState{FourierField(g), 0.0};
  for (std::size_t n = 0;; ++n) {
    const bool last = n == steps;
    for (std::size_t p = 0; p < s_eta.size(); ++p) s_eta[p].push(mf.times[n], phis[p].pair(s.eta));
    if (opt.keep_path) run.path.push_back(s.eta);
    if (snaps.is_open() && (n == 0 || last || (opt.snapshot_every && n % opt.snapshot_every == 0)))
      write_field(snaps, s.eta);
    if (last) break;
    std::size_t clamped = 0;
    const FourierField dm =
        opt.additive_noise ? generate_M_increment(mf.path[n], sc.dt, sc.master_seed, ensemble_id,
                                                  static_cast<std::uint32_t>(n), &clamped)
                           : FourierField(g);
    run.clamped_cells += clamped;
    s = solver.step_fluctuation(s, mf.path[n], mf.w.dW[n], dm);
  }
  run.final = s.eta;
  for (const auto& phi : phis) run.eta_T.push_back(phi.pair(s.eta));
  run.series = std::move(s_eta);
  return run;
}

}  // namespace vfl
