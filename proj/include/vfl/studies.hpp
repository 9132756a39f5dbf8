#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <string>
#include <vector>

#include "vfl/core.hpp"
#include "vfl/output.hpp"
#include "vfl/parallel.hpp"
#include "vfl/particles.hpp"
#include "vfl/runs.hpp"
#include "vfl/scenario.hpp"
#include "vfl/stats.hpp"

namespace vfl {

// Acceptance thresholds of the studies.
struct Gates {
  double rate_slope_lo = -1.2;
  double rate_slope_hi = -0.8;
  double rate_r2_min = 0.98;
  double clt_variance_rel = 0.05;
  double ks_level = 0.01;
  double ks_pass_fraction = 0.95;
  double char_se = 3.0;
  double isometry_se = 4.0;
  double coupling_final_ratio = 0.5;
  double limit_se = 3.0;
};

inline json gates_json(const Gates& g) {
  return {{"rate_slope", {g.rate_slope_lo, g.rate_slope_hi}},
          {"rate_r2_min", g.rate_r2_min},
          {"clt_variance_rel", g.clt_variance_rel},
          {"ks_level", g.ks_level},
          {"ks_pass_fraction", g.ks_pass_fraction},
          {"char_se", g.char_se},
          {"isometry_se", g.isometry_se},
          {"coupling_final_ratio", g.coupling_final_ratio},
          {"limit_se", g.limit_se}};
}

// ---------------------------------------------------------------------------
// Sample statistics.

inline double sample_mean(const std::vector<double>& x) {
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

inline double sample_variance(const std::vector<double>& x) {
  const double m = sample_mean(x);
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return s / static_cast<double>(x.size() - 1);
}

// Leave-one-out sample variances, from centered running sums.
inline std::vector<double> loo_variances(const std::vector<double>& x) {
  const double m = sample_mean(x);
  double s1 = 0.0, s2 = 0.0;
  for (double v : x) {
    s1 += v - m;
    s2 += (v - m) * (v - m);
  }
  const double n1 = static_cast<double>(x.size()) - 1.0;
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - m;
    const double a = s1 - d, b = s2 - d * d;
    out[i] = (b - a * a / n1) / (n1 - 1.0);
  }
  return out;
}

inline double jackknife_variance_se(const std::vector<double>& x) {
  return jackknife_se(loo_variances(x));
}

// ---------------------------------------------------------------------------
// Evaluation from collected samples. These take plain numbers so synthetic
// inputs can be injected.

// distances[l][e] = |mu_N - v_T|^2 for N = ns[l], member e.
inline ResultTable evaluate_rate(const std::vector<std::size_t>& ns,
                                 const std::vector<std::vector<double>>& distances, double alpha,
                                 const Gates& gates = {}) {
  if (ns.size() != distances.size()) throw InvalidInput("evaluate_rate: ladder mismatch");
  ResultTable t;
  t.study = "rate";
  std::vector<std::pair<double, double>> pairs;
  const std::string obs = "sobolev_sq[" + format_double(alpha) + "]";
  for (std::size_t l = 0; l < ns.size(); ++l) {
    const auto& d = distances[l];
    ResultRow r;
    r.observable = obs;
    r.n = ns[l];
    r.samples = d.size();
    r.value = sample_mean(d);
    r.se = d.size() > 1 ? jackknife_mean_se(d) : 0.0;
    r.test = "ensemble mean";
    t.add(r);
    pairs.emplace_back(double(ns[l]), r.value);
  }
  const RateFitResult fit = rate_fit(pairs);
  ResultRow slope;
  slope.observable = "slope";
  slope.value = fit.slope;
  slope.se = fit.slope_half_width;
  slope.target = -1.0;
  slope.gate = true;
  slope.pass = fit.slope >= gates.rate_slope_lo && fit.slope <= gates.rate_slope_hi;
  slope.test = "OLS slope of log mean vs log N in [" + format_double(gates.rate_slope_lo) + ", " +
               format_double(gates.rate_slope_hi) + "]";
  t.add(slope);
  ResultRow r2;
  r2.observable = "r_squared";
  r2.value = fit.r_squared;
  r2.target = gates.rate_r2_min;
  r2.gate = true;
  r2.pass = fit.r_squared >= gates.rate_r2_min;
  r2.test = "R^2 >= " + format_double(gates.rate_r2_min);
  t.add(r2);
  t.summary["fit"] = {{"slope", fit.slope},
                      {"intercept", fit.intercept},
                      {"r_squared", fit.r_squared},
                      {"slope_half_width_95", fit.slope_half_width}};
  t.summary["plot"] = {{"x", "N"}, {"y", obs}, {"scale", "log-log"}};
  return t;
}

// reps[r] = independent draws of <eta^N_0, phi>.
inline ResultTable evaluate_clt0(const std::vector<std::vector<double>>& reps, double target_var,
                                 std::size_t n, const Gates& gates = {}) {
  if (reps.empty()) throw InvalidInput("evaluate_clt0: no repetitions");
  ResultTable t;
  t.study = "clt0";
  std::vector<double> pooled;
  std::size_t ks_pass = 0;
  json pvals = json::array();
  for (std::size_t r = 0; r < reps.size(); ++r) {
    const KsResult ks = ks_normal_test(reps[r], 0.0, target_var);
    const bool ok = ks.p_value >= gates.ks_level;
    ks_pass += ok;
    pvals.push_back(ks.p_value);
    ResultRow row;
    row.observable = "ks_p[" + std::to_string(r) + "]";
    row.n = n;
    row.samples = reps[r].size();
    row.value = ks.p_value;
    row.target = gates.ks_level;
    row.pass = ok;
    row.test = "KS statistic " + format_double(ks.statistic);
    t.add(row);
    pooled.insert(pooled.end(), reps[r].begin(), reps[r].end());
  }
  ResultRow var;
  var.observable = "variance";
  var.n = n;
  var.samples = pooled.size();
  var.value = sample_variance(pooled);
  var.se = jackknife_variance_se(pooled);
  var.target = target_var;
  var.tolerance = gates.clt_variance_rel * target_var;
  var.gate = true;
  var.pass = std::abs(var.value - target_var) <= var.tolerance;
  var.test = "pooled sample variance within relative tolerance of the target";
  t.add(var);
  ResultRow frac;
  frac.observable = "ks_pass_fraction";
  frac.n = n;
  frac.samples = reps.size();
  frac.value = double(ks_pass) / double(reps.size());
  frac.target = gates.ks_pass_fraction;
  frac.gate = true;
  frac.pass = frac.value >= gates.ks_pass_fraction;
  frac.test = "fraction of repetitions with KS p >= " + format_double(gates.ks_level);
  t.add(frac);
  t.summary["ks_p_values"] = pvals;
  t.summary["target_variance"] = target_var;
  t.summary["plot"] = {{"x", "repetition"}, {"y", "ks_p"}};
  return t;
}

// Characteristic-function and isometry gates for one conditional batch.
inline ResultTable evaluate_conditional_m(const std::vector<double>& m_samples,
                                          const std::vector<double>& qv_samples,
                                          const std::vector<std::uint64_t>& path_ids,
                                          double integral, const std::vector<double>& s_grid,
                                          std::size_t n, const Gates& gates = {}) {
  if (m_samples.size() != qv_samples.size())
    throw InvalidInput("evaluate_conditional_m: sample counts differ");
  ResultTable t;
  t.study = "conditional_m";
  const auto pts = conditional_char_compare(m_samples, path_ids, integral, s_grid);
  json cf = json::array();
  for (const auto& p : pts) {
    ResultRow re;
    re.observable = "char_re[s=" + format_double(p.s) + "]";
    re.n = n;
    re.samples = m_samples.size();
    re.value = p.re;
    re.se = p.se_re;
    re.target = p.target;
    re.tolerance = gates.char_se * p.se_re;
    re.gate = true;
    re.pass = std::abs(p.re - p.target) <= re.tolerance;
    re.test = "|Re - exp(-s^2 I)| <= k SE";
    t.add(re);
    ResultRow im = re;
    im.observable = "char_im[s=" + format_double(p.s) + "]";
    im.value = p.im;
    im.se = p.se_im;
    im.target = 0.0;
    im.tolerance = gates.char_se * p.se_im;
    im.pass = std::abs(p.im) <= im.tolerance;
    im.test = "|Im| <= k SE";
    t.add(im);
    cf.push_back({{"s", p.s}, {"re", p.re}, {"im", p.im}, {"target", p.target},
                  {"se_re", p.se_re}, {"se_im", p.se_im}});
  }
  // d = Var(M) - mean(QV) with its jackknife SE.
  const auto loo_var = loo_variances(m_samples);
  const double qv_sum = std::accumulate(qv_samples.begin(), qv_samples.end(), 0.0);
  const double nn = static_cast<double>(qv_samples.size());
  std::vector<double> loo_d(m_samples.size());
  for (std::size_t i = 0; i < loo_d.size(); ++i)
    loo_d[i] = loo_var[i] - (qv_sum - qv_samples[i]) / (nn - 1.0);
  ResultRow iso;
  iso.observable = "isometry";
  iso.n = n;
  iso.samples = m_samples.size();
  iso.value = sample_variance(m_samples) - qv_sum / nn;
  iso.se = jackknife_se(loo_d);
  iso.target = 0.0;
  iso.tolerance = gates.isometry_se * iso.se;
  iso.gate = true;
  iso.pass = std::abs(iso.value) <= iso.tolerance;
  iso.test = "Var<M,phi> - mean QV within k jackknife SE of 0";
  t.add(iso);
  t.summary["integral"] = integral;
  t.summary["char"] = cf;
  t.summary["variance_M"] = sample_variance(m_samples);
  t.summary["mean_QV"] = qv_sum / nn;
  t.summary["plot"] = {{"x", "s"}, {"y", "char_re"}};
  return t;
}

// mse[l][e] at N = ns[l].
inline ResultTable evaluate_coupling(const std::vector<std::size_t>& ns,
                                     const std::vector<std::vector<double>>& mse,
                                     const Gates& gates = {}) {
  if (ns.size() != mse.size() || ns.size() < 2)
    throw InvalidInput("evaluate_coupling: need a ladder of at least two N");
  ResultTable t;
  t.study = "coupling";
  std::vector<double> means;
  for (std::size_t l = 0; l < ns.size(); ++l) {
    ResultRow r;
    r.observable = "mse";
    r.n = ns[l];
    r.samples = mse[l].size();
    r.value = sample_mean(mse[l]);
    r.se = mse[l].size() > 1 ? jackknife_mean_se(mse[l]) : 0.0;
    r.test = "ensemble mean of time-T coupling error";
    t.add(r);
    means.push_back(r.value);
  }
  bool decreasing = true;
  for (std::size_t l = 1; l < means.size(); ++l) decreasing &= means[l] < means[l - 1];
  const bool all_zero =
      std::all_of(means.begin(), means.end(), [](double m) { return m == 0.0; });
  ResultRow mono;
  mono.observable = "strictly_decreasing";
  mono.value = decreasing ? 1.0 : 0.0;
  mono.gate = true;
  mono.pass = decreasing || all_zero;
  mono.test = "mean coupling error strictly decreasing in N (or identically 0)";
  t.add(mono);
  ResultRow ratio;
  ratio.observable = "final_over_first";
  ratio.value = all_zero ? 0.0 : means.back() / means.front();
  ratio.target = gates.coupling_final_ratio;
  ratio.gate = true;
  ratio.pass = ratio.value < gates.coupling_final_ratio;
  ratio.test = "largest-N mean below the ratio times the smallest-N mean";
  t.add(ratio);
  t.summary["plot"] = {{"x", "N"}, {"y", "mse"}, {"scale", "log-log"}};
  return t;
}

// particle[p][e], limit[p][e] = <eta_T, phi_p>.
inline ResultTable evaluate_limit_compare(const std::vector<std::string>& phi_names,
                                          const std::vector<std::vector<double>>& particle,
                                          const std::vector<std::vector<double>>& limit,
                                          std::size_t n, const Gates& gates = {}) {
  if (particle.size() != phi_names.size() || limit.size() != phi_names.size())
    throw InvalidInput("evaluate_limit_compare: test-function count mismatch");
  ResultTable t;
  t.study = "limit_compare";
  json js = json::array();
  for (std::size_t p = 0; p < phi_names.size(); ++p) {
    const auto& a = particle[p];
    const auto& b = limit[p];
    ResultRow mean;
    mean.observable = "mean_diff[" + phi_names[p] + "]";
    mean.n = n;
    mean.samples = std::min(a.size(), b.size());
    mean.value = sample_mean(a) - sample_mean(b);
    mean.se = std::hypot(jackknife_mean_se(a), jackknife_mean_se(b));
    mean.target = 0.0;
    mean.tolerance = gates.limit_se * mean.se;
    mean.gate = true;
    mean.pass = std::abs(mean.value) <= mean.tolerance;
    mean.test = "particle minus limit mean within k combined SE";
    t.add(mean);
    ResultRow var = mean;
    var.observable = "variance_diff[" + phi_names[p] + "]";
    var.value = sample_variance(a) - sample_variance(b);
    var.se = std::hypot(jackknife_variance_se(a), jackknife_variance_se(b));
    var.tolerance = gates.limit_se * var.se;
    var.pass = std::abs(var.value) <= var.tolerance;
    var.test = "particle minus limit variance within k combined SE";
    t.add(var);
    js.push_back({{"phi", phi_names[p]},
                  {"particle_mean", sample_mean(a)},
                  {"limit_mean", sample_mean(b)},
                  {"particle_variance", sample_variance(a)},
                  {"limit_variance", sample_variance(b)}});
  }
  t.summary["moments"] = js;
  t.summary["plot"] = {{"x", "phi"}, {"y", "variance"}};
  return t;
}

// ---------------------------------------------------------------------------
// Study drivers.

namespace detail {

// Runs fn(i) for i < count on the scenario's worker pool. Member failures are
// collected in the table instead of aborting the batch.
template <class Fn>
std::vector<bool> run_members(const Scenario& sc, std::size_t count, ResultTable& t, Fn&& fn) {
  std::vector<char> ok(count, 0);
  std::mutex mu;
  parallel_for(count, sc.threads, [&](std::size_t i) {
    try {
      fn(i);
      ok[i] = 1;
    } catch (const NumericalAlarm& e) {
      const std::lock_guard<std::mutex> lock(mu);
      t.alarm = true;
      t.failures.push_back("member " + std::to_string(i) + ": " + e.what());
    } catch (const std::exception& e) {
      const std::lock_guard<std::mutex> lock(mu);
      t.failures.push_back("member " + std::to_string(i) + ": " + e.what());
    }
  });
  std::sort(t.failures.begin(), t.failures.end());
  return {ok.begin(), ok.end()};
}

template <class T>
std::vector<T> select(const std::vector<T>& v, const std::vector<bool>& ok) {
  std::vector<T> out;
  for (std::size_t i = 0; i < v.size(); ++i)
    if (ok[i]) out.push_back(v[i]);
  return out;
}

inline PairingSeries point_series(const std::string& name, double t, double v, std::size_t n,
                                  std::uint32_t e, std::uint32_t w, std::uint64_t seed) {
  PairingSeries s;
  s.observable = name;
  s.n = n;
  s.ensemble_id = e;
  s.w_path_id = w;
  s.seed = seed;
  s.push(t, v);
  return s;
}

inline MeanFieldOptions pairing_options(const Scenario& sc, bool keep_path) {
  MeanFieldOptions o;
  o.keep_path = keep_path;
  o.pairings = sc.test_functions();
  o.with_interaction = false;
  return o;
}

// Mean-field runs keyed by W path id. In conditional mode one shared run is
// computed up front; otherwise each member computes its own.
class MeanFieldSource {
 public:
  MeanFieldSource(const Scenario& sc, MeanFieldOptions opt) : sc_(sc), opt_(std::move(opt)) {
    if (sc_.conditional_on_w)
      shared_ = std::make_shared<MeanFieldRun>(run_mean_field(sc_, sc_.w_path_id, opt_));
  }
  std::shared_ptr<const MeanFieldRun> get(std::uint32_t ensemble_id) const {
    if (shared_) return shared_;
    return std::make_shared<MeanFieldRun>(run_mean_field(sc_, sc_.common_path(ensemble_id), opt_));
  }
  const MeanFieldRun* shared() const { return shared_.get(); }

 private:
  const Scenario& sc_;
  MeanFieldOptions opt_;
  std::shared_ptr<MeanFieldRun> shared_;
};

inline json ladder_seeds(const Scenario& sc, std::size_t per_level, std::size_t offset = 0) {
  json levels = json::array();
  for (std::size_t l = 0; l < sc.n_list.size(); ++l)
    levels.push_back({{"N", sc.n_list[l]},
                      {"first_ensemble_id", offset + l * per_level},
                      {"count", per_level}});
  return {{"master_seed", sc.master_seed},
          {"w_path", sc.conditional_on_w ? json(sc.w_path_id) : json("ensemble_id")},
          {"levels", levels}};
}

}  // namespace detail

// E|mu_N - v_T|^2_{H^alpha} over the N ladder. Ensemble ids are
// level * ensembles + e so levels are independent.
inline ResultTable study_rate(const Scenario& sc, const Gates& gates = {}) {
  validate(sc);
  ResultTable scratch;
  const detail::MeanFieldSource source(sc, detail::pairing_options(sc, false));
  const std::size_t levels = sc.n_list.size(), ens = sc.ensembles;
  std::vector<std::vector<double>> dist(sc.alpha_list.size() * levels,
                                        std::vector<double>(ens));
  std::vector<std::vector<bool>> ok(levels);
  for (std::size_t l = 0; l < levels; ++l) {
    ok[l] = detail::run_members(sc, ens, scratch, [&](std::size_t e) {
      const auto id = static_cast<std::uint32_t>(l * ens + e);
      const auto mf = source.get(id);
      const auto run = run_particles(sc, sc.n_list[l], id, *mf);
      for (std::size_t a = 0; a < sc.alpha_list.size(); ++a)
        dist[a * levels + l][e] = run.sobolev_T[a];
    });
  }
  std::vector<std::vector<double>> primary(levels);
  for (std::size_t l = 0; l < levels; ++l) primary[l] = detail::select(dist[l], ok[l]);
  ResultTable t = evaluate_rate(sc.n_list, primary, sc.alpha_list.front(), gates);
  t.failures = scratch.failures;
  t.alarm = scratch.alarm;
  for (std::size_t a = 0; a < sc.alpha_list.size(); ++a) {
    const std::string stem = "sobolev_sq_alpha" + format_double(sc.alpha_list[a]);
    for (std::size_t l = 0; l < levels; ++l)
      for (std::size_t e = 0; e < ens; ++e)
        if (ok[l][e])
          t.series[stem].push_back(detail::point_series(
              stem, sc.T, dist[a * levels + l][e], sc.n_list[l],
              static_cast<std::uint32_t>(l * ens + e),
              sc.common_path(static_cast<std::uint32_t>(l * ens + e)), sc.master_seed));
    if (a > 0)
      for (std::size_t l = 0; l < levels; ++l) {
        const auto d = detail::select(dist[a * levels + l], ok[l]);
        ResultRow r;
        r.observable = "sobolev_sq[" + format_double(sc.alpha_list[a]) + "]";
        r.n = sc.n_list[l];
        r.samples = d.size();
        r.value = sample_mean(d);
        r.se = jackknife_mean_se(d);
        r.test = "ensemble mean (diagnostic)";
        t.add(r);
      }
  }
  if (const auto* mf = source.shared()) {
    ResultRow w;
    w.observable = "entropy_weight";
    w.value = entropy_weight(mf->h4_norm_sq.times, mf->h4_norm_sq.values, sc.entropy_m, sc.T);
    w.test = "R_T diagnostic for m = " + format_double(sc.entropy_m);
    t.add(w);
    t.series["h4_norm_sq"].push_back(mf->h4_norm_sq);
  }
  t.summary["K_stat"] = sc.k_stat;
  t.summary["tail_bound_alpha"] =
      json_number(sobolev_tail_bound(sc.alpha_list.front(), sc.k_stat, 2.0));
  t.summary["seeds"] = detail::ladder_seeds(sc, ens);
  return t;
}

// Draws of <eta^N_0, phi> at N = max of the ladder; repetition r uses ensemble
// ids r * samples + i.
inline ResultTable study_clt0(const Scenario& sc, const Gates& gates = {}) {
  validate(sc);
  const std::size_t n = sc.n_list.back();
  const auto v0 = sc.initial_density();
  const auto phi = sc.test_functions().front();
  const SpectralGrid g = sc.grid();
  const RealBuffer vg = to_grid(v0);
  const auto fields = detail::pairing_fields(g, phi, DivFreeVectorField::off());
  std::vector<double> phi_sq(fields.phi.size());
  for (std::size_t j = 0; j < phi_sq.size(); ++j) phi_sq[j] = fields.phi[j] * fields.phi[j];
  const double m1 = detail::grid_pairing(fields.phi, vg, g.cell_area());
  const double target = detail::grid_pairing(phi_sq, vg, g.cell_area()) - m1 * m1;

  const std::size_t reps = sc.repetitions, per = sc.samples;
  std::vector<double> draws(reps * per);
  ResultTable scratch;
  const auto ok = detail::run_members(sc, reps * per, scratch, [&](std::size_t i) {
    const auto x = sample_initial_positions(v0, n, sc.master_seed, static_cast<std::uint32_t>(i));
    draws[i] = detail::eta_pairing(phi.pair_empirical(x.positions), m1, n);
  });
  std::vector<std::vector<double>> per_rep(reps);
  for (std::size_t r = 0; r < reps; ++r)
    for (std::size_t i = 0; i < per; ++i)
      if (ok[r * per + i]) per_rep[r].push_back(draws[r * per + i]);
  ResultTable t = evaluate_clt0(per_rep, target, n, gates);
  t.failures = scratch.failures;
  t.alarm = scratch.alarm;
  for (std::size_t i = 0; i < draws.size(); ++i)
    if (ok[i])
      t.series["eta0"].push_back(detail::point_series(
          "eta0", 0.0, draws[i], n, static_cast<std::uint32_t>(i), 0, sc.master_seed));
  t.summary["seeds"] = {{"master_seed", sc.master_seed},
                        {"ensemble_ids", {0, reps * per}},
                        {"N", n}};
  return t;
}

// Conditional batch on the scenario's W path at N = max of the ladder.
inline ResultTable study_conditional_m(const Scenario& sc, const Gates& gates = {}) {
  validate(sc);
  if (!sc.conditional_on_w)
    throw ConfigError("invalid conditioning: conditional_m needs particles.conditional_on_W");
  const std::size_t n = sc.n_list.back(), ens = sc.ensembles;
  const detail::MeanFieldSource source(sc, detail::pairing_options(sc, false));
  const MeanFieldRun& mf = *source.shared();
  std::vector<double> m(ens), qv(ens);
  ResultTable scratch;
  ParticleRunOptions opt;
  opt.martingale = true;
  const auto ok = detail::run_members(sc, ens, scratch, [&](std::size_t e) {
    const auto run = run_particles(sc, n, static_cast<std::uint32_t>(e), mf, opt);
    m[e] = run.m_T.front();
    qv[e] = run.qv_T.front();
  });
  const auto ms = detail::select(m, ok), qs = detail::select(qv, ok);
  const std::vector<std::uint64_t> paths(ms.size(), sc.w_path_id);
  ResultTable t =
      evaluate_conditional_m(ms, qs, paths, grad_sq_integral(mf, 0), sc.s_grid, n, gates);
  t.failures = scratch.failures;
  t.alarm = scratch.alarm;
  for (std::size_t e = 0; e < ens; ++e)
    if (ok[e]) {
      const auto id = static_cast<std::uint32_t>(e);
      t.series["M_T"].push_back(
          detail::point_series("M_T", sc.T, m[e], n, id, sc.w_path_id, sc.master_seed));
      t.series["QV_T"].push_back(
          detail::point_series("QV_T", sc.T, qv[e], n, id, sc.w_path_id, sc.master_seed));
    }
  t.summary["seeds"] = {{"master_seed", sc.master_seed},
                        {"w_path_id", sc.w_path_id},
                        {"ensemble_ids", {0, ens}}};
  return t;
}

// Synchronous coupling of the interacting system and the McKean-Vlasov copy.
inline ResultTable study_coupling(const Scenario& sc, const Gates& gates = {}) {
  validate(sc);
  const detail::MeanFieldSource source(sc, detail::pairing_options(sc, true));
  const std::size_t levels = sc.n_list.size(), ens = sc.ensembles;
  std::vector<std::vector<double>> mse(levels, std::vector<double>(ens));
  std::vector<std::vector<bool>> ok(levels);
  ResultTable scratch;
  ParticleRunOptions opt;
  opt.coupled = true;
  for (std::size_t l = 0; l < levels; ++l)
    ok[l] = detail::run_members(sc, ens, scratch, [&](std::size_t e) {
      const auto id = static_cast<std::uint32_t>(l * ens + e);
      mse[l][e] = run_particles(sc, sc.n_list[l], id, *source.get(id), opt).coupling_mse;
    });
  std::vector<std::vector<double>> good(levels);
  for (std::size_t l = 0; l < levels; ++l) good[l] = detail::select(mse[l], ok[l]);
  ResultTable t = evaluate_coupling(sc.n_list, good, gates);
  t.failures = scratch.failures;
  t.alarm = scratch.alarm;
  for (std::size_t l = 0; l < levels; ++l)
    for (std::size_t e = 0; e < ens; ++e)
      if (ok[l][e]) {
        const auto id = static_cast<std::uint32_t>(l * ens + e);
        t.series["coupling_mse"].push_back(detail::point_series(
            "coupling_mse", sc.T, mse[l][e], sc.n_list[l], id, sc.common_path(id),
            sc.master_seed));
      }
  t.summary["seeds"] = detail::ladder_seeds(sc, ens);
  return t;
}

// Offset separating limit-SPDE ensemble ids from particle ensemble ids.
inline constexpr std::uint32_t kLimitEnsembleOffset = 1u << 24;

// <eta_T, phi> from particle runs at N = max of the ladder against limit-SPDE runs.
inline ResultTable study_limit_compare(const Scenario& sc, const Gates& gates = {}) {
  validate(sc);
  const std::size_t n = sc.n_list.back(), ens = sc.ensembles;
  if (ens >= kLimitEnsembleOffset) throw ConfigError("particles.ensembles too large");
  const auto phis = sc.test_functions();
  const std::size_t np = phis.size();
  const detail::MeanFieldSource source(sc, detail::pairing_options(sc, true));
  std::vector<std::vector<double>> part(np, std::vector<double>(ens)), lim = part;
  ResultTable scratch;
  const auto ok_p = detail::run_members(sc, ens, scratch, [&](std::size_t e) {
    const auto id = static_cast<std::uint32_t>(e);
    const auto run = run_particles(sc, n, id, *source.get(id));
    for (std::size_t p = 0; p < np; ++p) part[p][e] = run.eta_T[p];
  });
  const auto ok_l = detail::run_members(sc, ens, scratch, [&](std::size_t e) {
    const auto id = static_cast<std::uint32_t>(kLimitEnsembleOffset + e);
    const auto run = run_fluctuation_limit(sc, id, *source.get(id));
    for (std::size_t p = 0; p < np; ++p) lim[p][e] = run.eta_T[p];
  });
  std::vector<std::string> names;
  std::vector<std::vector<double>> a(np), b(np);
  for (std::size_t p = 0; p < np; ++p) {
    names.push_back(phis[p].name());
    a[p] = detail::select(part[p], ok_p);
    b[p] = detail::select(lim[p], ok_l);
  }
  ResultTable t = evaluate_limit_compare(names, a, b, n, gates);
  t.failures = scratch.failures;
  t.alarm = scratch.alarm;
  for (std::size_t p = 0; p < np; ++p) {
    const std::string stem_p = "eta_T_particles_" + std::to_string(p);
    const std::string stem_l = "eta_T_limit_" + std::to_string(p);
    for (std::size_t e = 0; e < ens; ++e) {
      const auto id = static_cast<std::uint32_t>(e);
      const auto lid = kLimitEnsembleOffset + id;
      if (ok_p[e])
        t.series[stem_p].push_back(detail::point_series(
            stem_p, sc.T, part[p][e], n, id, sc.common_path(id), sc.master_seed));
      if (ok_l[e])
        t.series[stem_l].push_back(detail::point_series(
            stem_l, sc.T, lim[p][e], 0, lid, sc.common_path(lid), sc.master_seed));
    }
  }
  t.summary["phi_index"] = names;
  t.summary["seeds"] = {{"master_seed", sc.master_seed},
                        {"particle_ensemble_ids", {0, ens}},
                        {"limit_ensemble_ids", {kLimitEnsembleOffset, kLimitEnsembleOffset + ens}},
                        {"w_path", sc.conditional_on_w ? json(sc.w_path_id) : json("ensemble_id")}};
  return t;
}

inline ResultTable run_study(const std::string& kind, const Scenario& sc,
                             const Gates& gates = {}) {
  if (kind == "rate") return study_rate(sc, gates);
  if (kind == "clt0") return study_clt0(sc, gates);
  if (kind == "conditional-m" || kind == "conditional_m") return study_conditional_m(sc, gates);
  if (kind == "coupling") return study_coupling(sc, gates);
  if (kind == "limit-compare" || kind == "limit_compare") return study_limit_compare(sc, gates);
  throw ConfigError("unknown study kind '" + kind + "'");
}

}  // namespace vfl
