#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "vfl/binary.hpp"
#include "vfl/core.hpp"
#include "vfl/fft.hpp"
#include "vfl/kernel.hpp"
#include "vfl/parallel.hpp"
#include "vfl/rng.hpp"
#include "vfl/sigma.hpp"
#include "vfl/spectral.hpp"
#include "vfl/torus.hpp"

namespace vfl {

struct ParticleState {
  std::vector<TorusPoint> positions;
  double time = 0.0;

  ParticleState() = default;
  explicit ParticleState(std::vector<TorusPoint> xs, double t = 0.0)
      : positions(std::move(xs)), time(t) {
    if (positions.size() < 2) throw InvalidInput("ParticleState: N must be >= 2");
  }
  std::size_t size() const { return positions.size(); }
};

// Increments for one step. dW is shared by every particle; dB_i is private.
struct NoiseBundle {
  double dt = 0.0;
  double dW = 0.0;
  std::vector<Vec2> dB;
  StreamKey common_key;
  StreamKey idiosyncratic_key;  // particle_id field is the first particle
  bool milstein = false;        // Ito correction weighted by dW^2 instead of dt
};

// dB_i = sqrt(dt) (Z1, Z2) from key (seed, idiosyncratic, ensemble, i, step).
inline std::vector<Vec2> idiosyncratic_increments(std::uint64_t master_seed,
                                                  std::uint32_t ensemble_id,
                                                  std::uint32_t step, std::size_t n, double dt) {
  std::vector<Vec2> dB(n);
  const double sd = std::sqrt(dt);
  for (std::size_t i = 0; i < n; ++i) {
    const KeyedStream s({master_seed, StreamRole::idiosyncratic, ensemble_id,
                         static_cast<std::uint32_t>(i), step});
    const auto z = s.normal_pair(0);
    dB[i] = {sd * z[0], sd * z[1]};
  }
  return dB;
}

inline NoiseBundle make_noise_bundle(std::uint64_t master_seed, std::uint32_t ensemble_id,
                                     std::uint32_t path_id, std::uint32_t step, std::size_t n,
                                     double dt, double dW) {
  if (!(dt > 0.0)) throw InvalidInput("NoiseBundle: dt must be positive");
  NoiseBundle b;
  b.dt = dt;
  b.dW = dW;
  b.dB = idiosyncratic_increments(master_seed, ensemble_id, step, n, dt);
  b.common_key = {master_seed, StreamRole::common_noise, path_id, 0, step};
  b.idiosyncratic_key = {master_seed, StreamRole::idiosyncratic, ensemble_id, 0, step};
  return b;
}

// ---------------------------------------------------------------------------
// Initial positions.

// Rejection sampling against the envelope 1.01 * density_max. Particle i draws
// from its own key (seed, initial_positions, ensemble, i, 0), attempt a uses
// slots 2a (position) and 2a+1 (acceptance).
inline ParticleState sample_initial_positions(const std::function<double(TorusPoint)>& density,
                                              double density_max, std::size_t n,
                                              std::uint64_t master_seed,
                                              std::uint32_t ensemble_id) {
  if (!(density_max > 0.0)) throw InvalidInput("sample_initial_positions: bad density max");
  const double envelope = 1.01 * density_max;
  constexpr std::uint32_t max_attempts = 1u << 20;
  std::vector<TorusPoint> xs(n);
  for (std::size_t i = 0; i < n; ++i) {
    const KeyedStream s({master_seed, StreamRole::initial_positions, ensemble_id,
                         static_cast<std::uint32_t>(i), 0});
    bool accepted = false;
    for (std::uint32_t a = 0; a < max_attempts && !accepted; ++a) {
      const auto u = s.uniform_pair(2 * a);
      const TorusPoint x = wrap({-pi + two_pi * u[0], -pi + two_pi * u[1]});
      const double fx = density(x);
      if (fx > envelope) throw SamplingError("density exceeds declared envelope");
      if (s.uniform_pair(2 * a + 1)[0] * envelope <= fx) {
        xs[i] = x;
        accepted = true;
      }
    }
    if (!accepted) throw SamplingError("rejection sampler did not accept");
  }
  return ParticleState(std::move(xs));
}

inline ParticleState sample_initial_positions(const FourierField& v0, std::size_t n,
                                              std::uint64_t master_seed,
                                              std::uint32_t ensemble_id) {
  const auto [lo, hi] = grid_min_max(to_grid(v0));
  if (!(lo > 0.0)) throw InvalidInput("sample_initial_positions: density not positive on grid");
  const SparseEvaluator eval(v0);
  return sample_initial_positions([&](TorusPoint x) { return eval(x); }, hi, n, master_seed,
                                  ensemble_id);
}

// ---------------------------------------------------------------------------
// Interaction drift.

enum class DriftMethod { direct, particle_mesh };

struct DriftOptions {
  DriftMethod method = DriftMethod::direct;
  int pm_oversample = 2;  // mesh side = pm_oversample * K_max
  unsigned threads = 1;
};

namespace detail {

// b_i = (1/N) sum_j K_eps(X_i - X_j). Each target's sum runs in fixed j order,
// so results are independent of the thread count.
inline std::vector<Vec2> direct_regularized_drift(const std::vector<TorusPoint>& xs,
                                                  double epsilon, unsigned threads) {
  const std::size_t n = xs.size();
  std::vector<double> x1(n), x2(n);
  for (std::size_t i = 0; i < n; ++i) {
    x1[i] = xs[i].x1;
    x2[i] = xs[i].x2;
  }
  const CorrectionCoefficients coef = correction_coefficients();
  const double inv_eps2 = 1.0 / (epsilon * epsilon);
  const double inv_n = 1.0 / static_cast<double>(n);
  std::vector<Vec2> b(n);
  constexpr std::size_t chunk = 64;
  const std::size_t chunks = (n + chunk - 1) / chunk;
  parallel_for(chunks, threads, [&](std::size_t c) {
    const double* px1 = x1.data();
    const double* px2 = x2.data();
    const double* pc = coef.data();
    for (std::size_t i = c * chunk; i < std::min(n, (c + 1) * chunk); ++i) {
      const double xi = px1[i];
      const double yi = px2[i];
      double s1 = 0.0;
      double s2 = 0.0;
#pragma omp simd reduction(+ : s1, s2)
      for (std::size_t j = 0; j < n; ++j) {
        double dx = xi - px1[j];
        double dy = yi - px2[j];
        dx -= two_pi * std::nearbyint(dx * (1.0 / two_pi));
        dy -= two_pi * std::nearbyint(dy * (1.0 / two_pi));
        double k1, k2;
        regularized_kernel(dx, dy, inv_eps2, pc, k1, k2);
        s1 += k1;
        s2 += k2;
      }
      b[i] = {s1 * inv_n, s2 * inv_n};
    }
  });
  return b;
}

// Tapered partial-sum kernel via the mode sums S_k = sum_j exp(-i k.X_j).
inline std::vector<Vec2> direct_spectral_drift(const std::vector<TorusPoint>& xs, int k_max) {
  const std::size_t n = xs.size();
  const int w = 2 * k_max + 1;
  std::vector<complex> s(static_cast<std::size_t>(w) * w);
  std::vector<complex> e1(w), e2(w);
  auto fill = [&](TorusPoint x, double sign) {
    for (int k = -k_max; k <= k_max; ++k) {
      e1[k + k_max] = std::polar(1.0, sign * k * x.x1);
      e2[k + k_max] = std::polar(1.0, sign * k * x.x2);
    }
  };
  for (const auto& x : xs) {
    fill(x, -1.0);
    for (int a = 0; a < w; ++a)
      for (int c = 0; c < w; ++c) s[static_cast<std::size_t>(a) * w + c] += e1[a] * e2[c];
  }
  std::vector<std::array<complex, 2>> mult(s.size());
  for (int a = 0; a < w; ++a)
    for (int c = 0; c < w; ++c) {
      const int k1 = a - k_max, k2 = c - k_max;
      auto m = velocity_multiplier(k1, k2);
      const double t = spectral_taper(std::hypot(k1, k2), k_max);
      const complex sk = s[static_cast<std::size_t>(a) * w + c];
      mult[static_cast<std::size_t>(a) * w + c] = {m[0] * t * sk, m[1] * t * sk};
    }
  std::vector<Vec2> b(n);
  const double scale = 1.0 / (four_pi_sq * static_cast<double>(n));
  for (std::size_t i = 0; i < n; ++i) {
    fill(xs[i], 1.0);
    complex u1{}, u2{};
    for (int a = 0; a < w; ++a) {
      complex r1{}, r2{};
      for (int c = 0; c < w; ++c) {
        const auto& m = mult[static_cast<std::size_t>(a) * w + c];
        r1 += m[0] * e2[c];
        r2 += m[1] * e2[c];
      }
      u1 += e1[a] * r1;
      u2 += e1[a] * r2;
    }
    b[i] = {u1.real() * scale, u2.real() * scale};
  }
  return b;
}

// Cubic B-spline weights for fractional offset t in [0,1), nodes base..base+3.
inline void bspline4(double t, double w[4]) {
  const double t2 = t * t;
  const double t3 = t2 * t;
  w[0] = (1.0 - t) * (1.0 - t) * (1.0 - t) / 6.0;
  w[1] = (3.0 * t3 - 6.0 * t2 + 4.0) / 6.0;
  w[2] = (-3.0 * t3 + 3.0 * t2 + 3.0 * t + 1.0) / 6.0;
  w[3] = t3 / 6.0;
}

// Particle-mesh drift for the tapered kernel: deposit with cubic B-splines,
// multiply by m(k) T(|k|) / W(k)^2 (W = spline transform), interpolate with
// the same spline. The mesh operator is odd, so the self-force vanishes.
inline std::vector<Vec2> particle_mesh_drift(const std::vector<TorusPoint>& xs, int k_max,
                                             int oversample) {
  int mp = oversample * k_max;
  if (mp % 2) ++mp;
  if (mp < 8) mp = 8;
  const Fft2d fft(mp);
  const double h = two_pi / mp;
  const std::size_t n = xs.size();
  RealBuffer rho(fft.n(), 0.0);
  std::vector<int> base1(n), base2(n);
  std::vector<std::array<double, 4>> w1(n), w2(n);
  auto mod = [mp](int i) { return ((i % mp) + mp) % mp; };
  for (std::size_t p = 0; p < n; ++p) {
    const double s1 = xs[p].x1 / h;
    const double s2 = xs[p].x2 / h;
    const double f1 = std::floor(s1);
    const double f2 = std::floor(s2);
    bspline4(s1 - f1, w1[p].data());
    bspline4(s2 - f2, w2[p].data());
    base1[p] = static_cast<int>(f1) - 1;
    base2[p] = static_cast<int>(f2) - 1;
    for (int a = 0; a < 4; ++a) {
      const std::size_t row = static_cast<std::size_t>(mod(base1[p] + a)) * mp;
      for (int c = 0; c < 4; ++c) rho[row + mod(base2[p] + c)] += w1[p][a] * w2[p][c];
    }
  }
  ComplexBuffer spec(fft.half_n());
  fft.forward_real(rho, spec);
  const int half = mp / 2 + 1;
  ComplexBuffer s1(fft.half_n()), s2(fft.half_n());
  auto spline_hat = [h](int k) {
    if (k == 0) return 1.0;
    const double x = 0.5 * k * h;
    const double s = std::sin(x) / x;
    return s * s * s * s;
  };
  for (int i1 = 0; i1 < mp; ++i1) {
    const int k1 = i1 <= mp / 2 ? i1 : i1 - mp;
    for (int k2 = 0; k2 < half; ++k2) {
      const std::size_t idx = static_cast<std::size_t>(i1) * half + k2;
      if (k1 == mp / 2 || k2 == mp / 2 || (k1 == 0 && k2 == 0)) continue;
      const double wk = spline_hat(k1) * spline_hat(k2);
      const double t = spectral_taper(std::hypot(k1, k2), k_max) / (wk * wk);
      const auto m = velocity_multiplier(k1, k2);
      s1[idx] = m[0] * t * spec[idx];
      s2[idx] = m[1] * t * spec[idx];
    }
  }
  RealBuffer u1(fft.n()), u2(fft.n());
  fft.inverse_real(s1, u1);
  fft.inverse_real(s2, u2);
  const double scale = 1.0 / (four_pi_sq * static_cast<double>(n));
  std::vector<Vec2> b(n);
  for (std::size_t p = 0; p < n; ++p) {
    double a1 = 0.0, a2 = 0.0;
    for (int a = 0; a < 4; ++a) {
      const std::size_t row = static_cast<std::size_t>(mod(base1[p] + a)) * mp;
      for (int c = 0; c < 4; ++c) {
        const double w = w1[p][a] * w2[p][c];
        const std::size_t g = row + mod(base2[p] + c);
        a1 += w * u1[g];
        a2 += w * u2[g];
      }
    }
    b[p] = {a1 * scale, a2 * scale};
  }
  return b;
}

}  // namespace detail

// b_i = (1/N) sum_{j != i} K_eps(X_i - X_j). The diagonal contributes
// K_eps(0) = 0 in every admissible mode. The particle-mesh path realizes the
// tapered spectral kernel at the spec's K_max.
inline std::vector<Vec2> pairwise_drift(const std::vector<TorusPoint>& xs,
                                        const KernelSpec& spec, const DriftOptions& opt = {}) {
  if (xs.empty()) return {};
  switch (spec.mode) {
    case KernelMode::off: return std::vector<Vec2>(xs.size());
    case KernelMode::free_space_plus_correction:
      throw DomainError("pairwise_drift: exact kernel is singular at collisions");
    default: break;
  }
  if (opt.method == DriftMethod::particle_mesh)
    return detail::particle_mesh_drift(xs, spec.k_max, opt.pm_oversample);
  if (spec.mode == KernelMode::regularized)
    return detail::direct_regularized_drift(xs, spec.epsilon, opt.threads);
  return detail::direct_spectral_drift(xs, spec.k_max);
}

// ---------------------------------------------------------------------------
// Time stepping (Euler-Maruyama on the Ito form).

// X <- wrap(X + (b + (sigma.grad)sigma / 2) dt + sqrt2 dB + sigma dW).
// With noise.milstein the correction uses dW^2 in place of dt, which is the
// scalar-noise Milstein term and makes the common-noise part strong order 1.
inline void advance_particles(std::vector<TorusPoint>& xs, const std::vector<Vec2>& drift,
                              const NoiseBundle& noise, const DivFreeVectorField& sigma) {
  if (!(noise.dt > 0.0)) throw InvalidInput("invalid step: dt must be positive");
  if (noise.dB.size() != xs.size() || drift.size() != xs.size())
    throw InvalidInput("advance_particles: size mismatch");
  const double dt = noise.dt;
  const bool with_sigma = !sigma.is_off();
  const double corr = noise.milstein ? noise.dW * noise.dW : dt;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    Vec2 dx = drift[i] * dt + std::sqrt(2.0) * noise.dB[i];
    if (with_sigma) dx += sigma.grad_sigma(xs[i]) * (0.5 * corr) + sigma(xs[i]) * noise.dW;
    xs[i] = wrap(xs[i] + dx);
  }
}

inline ParticleState step_interacting(const ParticleState& state, const NoiseBundle& noise,
                                      const KernelSpec& spec, const DivFreeVectorField& sigma,
                                      const DriftOptions& opt = {}) {
  if (!(noise.dt > 0.0)) throw InvalidInput("invalid step: dt must be positive");
  ParticleState next = state;
  advance_particles(next.positions, pairwise_drift(state.positions, spec, opt), noise, sigma);
  next.time += noise.dt;
  return next;
}

// u at arbitrary points by direct summation over |k|_inf <= k_eval.
inline std::vector<Vec2> evaluate_velocity(const std::array<FourierField, 2>& u,
                                           const std::vector<TorusPoint>& xs, int k_eval) {
  const auto& g = u[0].grid();
  u[0].require_same_grid(u[1]);
  const int k = std::min(k_eval, g.m() / 2 - 1);
  const int w = 2 * k + 1;
  std::vector<complex> c1(static_cast<std::size_t>(w) * w), c2(c1.size());
  for (int a = 0; a < w; ++a)
    for (int b = 0; b < w; ++b) {
      c1[static_cast<std::size_t>(a) * w + b] = u[0].at(a - k, b - k);
      c2[static_cast<std::size_t>(a) * w + b] = u[1].at(a - k, b - k);
    }
  std::vector<Vec2> out(xs.size());
  std::vector<complex> e1(w), e2(w);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    for (int a = 0; a < w; ++a) {
      e1[a] = std::polar(1.0, (a - k) * xs[i].x1);
      e2[a] = std::polar(1.0, (a - k) * xs[i].x2);
    }
    complex s1{}, s2{};
    for (int a = 0; a < w; ++a) {
      complex r1{}, r2{};
      const complex* p1 = &c1[static_cast<std::size_t>(a) * w];
      const complex* p2 = &c2[static_cast<std::size_t>(a) * w];
      for (int b = 0; b < w; ++b) {
        r1 += p1[b] * e2[b];
        r2 += p2[b] * e2[b];
      }
      s1 += e1[a] * r1;
      s2 += e1[a] * r2;
    }
    out[i] = {s1.real() / four_pi_sq, s2.real() / four_pi_sq};
  }
  return out;
}

inline ParticleState step_mckean_vlasov(const ParticleState& state,
                                        const std::array<FourierField, 2>& u,
                                        const NoiseBundle& noise,
                                        const DivFreeVectorField& sigma, int k_eval = 16) {
  if (!(noise.dt > 0.0)) throw InvalidInput("invalid step: dt must be positive");
  ParticleState next = state;
  advance_particles(next.positions, evaluate_velocity(u, state.positions, k_eval), noise, sigma);
  next.time += noise.dt;
  return next;
}

inline double coupling_mse(const ParticleState& a, const ParticleState& b) {
  if (a.size() != b.size()) throw InvalidInput("invalid pair: particle counts differ");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = torus_distance(a.positions[i], b.positions[i]);
    s += d * d;
  }
  return s / static_cast<double>(a.size());
}

// ---------------------------------------------------------------------------
// VFLP trajectory file: magic, u32 version, u64 N, u64 steps, then per stored
// step and particle the f64 triple (t, x1, x2).

class TrajectoryWriter {
 public:
  static constexpr std::uint32_t kVersion = 1;

  TrajectoryWriter(const std::string& path, std::uint64_t n)
      : os_(path, std::ios::binary | std::ios::trunc), n_(n) {
    if (!os_) throw FormatError("cannot open " + path);
    binary::put_magic(os_, "VFLP");
    binary::put<std::uint32_t>(os_, kVersion);
    binary::put<std::uint64_t>(os_, n_);
    count_pos_ = os_.tellp();
    binary::put<std::uint64_t>(os_, 0);
  }
  ~TrajectoryWriter() {
    try {
      close();
    } catch (...) {
    }
  }

  void append(const ParticleState& s) {
    if (s.size() != n_) throw InvalidInput("TrajectoryWriter: particle count changed");
    for (const auto& x : s.positions) {
      binary::put(os_, s.time);
      binary::put(os_, x.x1);
      binary::put(os_, x.x2);
    }
    ++steps_;
  }

  void close() {
    if (!os_.is_open()) return;
    os_.seekp(count_pos_);
    binary::put<std::uint64_t>(os_, steps_);
    os_.close();
  }

 private:
  std::ofstream os_;
  std::uint64_t n_;
  std::uint64_t steps_ = 0;
  std::streampos count_pos_;
};

inline std::vector<ParticleState> read_trajectory(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path);
  binary::expect_magic(is, "VFLP");
  binary::expect_version(binary::get<std::uint32_t>(is), TrajectoryWriter::kVersion, "VFLP");
  const auto n = binary::get<std::uint64_t>(is);
  const auto steps = binary::get<std::uint64_t>(is);
  if (n > (1ull << 28) || steps > (1ull << 28)) throw FormatError("VFLP: implausible header");
  std::vector<ParticleState> out;
  out.reserve(steps);
  for (std::uint64_t s = 0; s < steps; ++s) {
    ParticleState st;
    st.positions.resize(n);
    for (auto& x : st.positions) {
      st.time = binary::get<double>(is);
      x.x1 = binary::get<double>(is);
      x.x2 = binary::get<double>(is);
    }
    out.push_back(std::move(st));
  }
  return out;
}

}  // namespace vfl
