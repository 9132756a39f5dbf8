#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "vfl/binary.hpp"
#include "vfl/core.hpp"
#include "vfl/fft.hpp"
#include "vfl/kernel.hpp"
#include "vfl/rng.hpp"
#include "vfl/sigma.hpp"
#include "vfl/spectral.hpp"

namespace vfl {

enum class Integrator { integrating_factor_em, explicit_em };

struct SpdeScheme {
  double dt = 2.5e-3;
  bool dealias = true;
  Integrator integrator = Integrator::integrating_factor_em;
  // dt * |sigma|_inf^2 * M^2 <= stability_constant
  double stability_constant = 128.0;
  bool nonlinear = true;  // K-transport terms
  bool transport = true;  // sigma terms
  // Second-order sigma term weighted by dW^2 / dt (scalar-noise Milstein).
  bool milstein = false;
  double positivity_tolerance = 1e-6;
};

struct MeanFieldState {
  FourierField v;
  double time = 0.0;
};

struct FluctuationState {
  FourierField eta;
  double time = 0.0;
};

struct TransportTerms {
  FourierField drift;      // (1/2) sigma.grad(sigma.grad f)
  FourierField diffusion;  // -sigma.grad f
};

inline void check_stability(const SpdeScheme& s, const DivFreeVectorField& sigma, int m) {
  if (!(s.dt > 0.0)) throw ConfigError("SpdeScheme: dt must be positive");
  const double sn = sigma.sup_norm();
  const double load = s.dt * sn * sn * double(m) * m;
  if (load > s.stability_constant)
    throw ConfigError("stability bound violated: dt |sigma|^2 M^2 = " + std::to_string(load) +
                      " > " + std::to_string(s.stability_constant));
}

// Pseudo-spectral operators on one grid. Inputs are cut to the 2/3 band before
// any pointwise product and outputs are cut back, so products never alias.
class SpdeSolver {
 public:
  SpdeSolver(SpectralGrid grid, DivFreeVectorField sigma, SpdeScheme scheme)
      : grid_(grid), sigma_(std::move(sigma)), scheme_(scheme), fft_(grid.m()),
        sigma_grid_(sigma_.on_grid(grid)) {
    check_stability(scheme_, sigma_, grid.m());
    decay_.resize(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const auto k = grid.wavevector(i);
      decay_[i] = std::exp(-double(k[0] * k[0] + k[1] * k[1]) * scheme_.dt);
    }
  }

  const SpectralGrid& grid() const { return grid_; }
  const SpdeScheme& scheme() const { return scheme_; }
  const DivFreeVectorField& sigma() const { return sigma_; }

  // -div(u v), u = K*v.
  FourierField nonlinear_term(const FourierField& v) const {
    const FourierField vb = band(v);
    const auto u = apply_velocity_operator(vb);
    const RealBuffer vg = values(vb);
    FourierField out = divergence_of_products(values(u[0]), values(u[1]), vg);
    out *= -1.0;
    return out;
  }

  // -div(v K*eta) - div(eta K*v) for the fluctuation equation.
  FourierField coupling_term(const FourierField& eta, const FourierField& v) const {
    const FourierField eb = band(eta);
    const FourierField vb = band(v);
    const auto ue = apply_velocity_operator(eb);
    const auto uv = apply_velocity_operator(vb);
    const RealBuffer vg = values(vb), eg = values(eb);
    const RealBuffer ue1 = values(ue[0]), ue2 = values(ue[1]);
    const RealBuffer uv1 = values(uv[0]), uv2 = values(uv[1]);
    RealBuffer p1(grid_.size()), p2(grid_.size());
    for (std::size_t j = 0; j < p1.size(); ++j) {
      p1[j] = ue1[j] * vg[j] + uv1[j] * eg[j];
      p2[j] = ue2[j] * vg[j] + uv2[j] * eg[j];
    }
    FourierField out = divergence(from_grid_cut(p1), from_grid_cut(p2));
    out *= -1.0;
    return out;
  }

  TransportTerms transport_terms(const FourierField& f) const {
    TransportTerms t{FourierField(grid_), FourierField(grid_)};
    if (sigma_.is_off()) return t;
    const RealBuffer fg = values(band(f));
    // w = sigma.grad f = div(sigma f)
    const FourierField w = sigma_divergence(fg, false);
    const RealBuffer wg = values(w);
    t.drift = sigma_divergence(wg, true);
    t.drift *= 0.5;
    t.diffusion = w;
    t.diffusion *= -1.0;
    cut(t.diffusion);
    return t;
  }

  MeanFieldState step_mean_field(const MeanFieldState& s, double dW) const {
    if (!(s.v.grid() == grid_)) throw InvalidInput("step_mean_field: grid mismatch");
    FourierField rhs(grid_);
    if (scheme_.nonlinear) rhs += nonlinear_term(s.v);
    FourierField diff(grid_);
    if (scheme_.transport && !sigma_.is_off()) {
      auto t = transport_terms(s.v);
      if (scheme_.milstein) t.drift *= dW * dW / scheme_.dt;
      rhs += t.drift;
      diff = std::move(t.diffusion);
    }
    MeanFieldState out{advance(s.v, rhs, diff, dW, nullptr), s.time + scheme_.dt};
    out.v.ref(0, 0) = 1.0;
    return out;
  }

  FluctuationState step_fluctuation(const FluctuationState& s, const FourierField& v,
                                    double dW, const FourierField& dM) const {
    FourierField rhs(grid_);
    if (scheme_.nonlinear) rhs += coupling_term(s.eta, v);
    FourierField diff(grid_);
    if (scheme_.transport && !sigma_.is_off()) {
      auto t = transport_terms(s.eta);
      if (scheme_.milstein) t.drift *= dW * dW / scheme_.dt;
      rhs += t.drift;
      diff = std::move(t.diffusion);
    }
    FluctuationState out{advance(s.eta, rhs, diff, dW, &dM), s.time + scheme_.dt};
    out.eta.ref(0, 0) = 0.0;
    return out;
  }

  RealBuffer values(const FourierField& f) const {
    ComplexBuffer out(fft_.n());
    fft_.inverse(f.coeffs(), out);
    RealBuffer v(fft_.n());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = out[i].real() / four_pi_sq;
    return v;
  }

  FourierField coefficients(const RealBuffer& g) const {
    ComplexBuffer in(g.begin(), g.end());
    FourierField f(grid_);
    fft_.forward(in, f.coeffs());
    f *= grid_.cell_area();
    return f;
  }

 private:
  FourierField band(const FourierField& f) const {
    FourierField b = f;
    if (scheme_.dealias) b.project_to_band();
    return b;
  }
  void cut(FourierField& f) const {
    if (scheme_.dealias) f.project_to_band();
  }
  FourierField from_grid_cut(const RealBuffer& g) const {
    FourierField f = coefficients(g);
    cut(f);
    return f;
  }

  // i k . (a1, a2)
  FourierField divergence(const FourierField& a1, const FourierField& a2) const {
    FourierField out(grid_);
    for (std::size_t i = 0; i < grid_.size(); ++i) {
      const auto k = grid_.wavevector(i);
      if (grid_.is_nyquist(k[0], k[1])) continue;
      out.coeffs()[i] = complex(0.0, 1.0) * (double(k[0]) * a1.coeffs()[i] +
                                              double(k[1]) * a2.coeffs()[i]);
    }
    return out;
  }

  FourierField divergence_of_products(const RealBuffer& a1, const RealBuffer& a2,
                                      const RealBuffer& b) const {
    RealBuffer p1(b.size()), p2(b.size());
    for (std::size_t j = 0; j < b.size(); ++j) {
      p1[j] = a1[j] * b[j];
      p2[j] = a2[j] * b[j];
    }
    return divergence(from_grid_cut(p1), from_grid_cut(p2));
  }

  // div(sigma g) for grid values g; optionally cut to the band.
  FourierField sigma_divergence(const RealBuffer& g, bool cut_output) const {
    RealBuffer p1(g.size()), p2(g.size());
    for (std::size_t j = 0; j < g.size(); ++j) {
      p1[j] = sigma_grid_[j].x1 * g[j];
      p2[j] = sigma_grid_[j].x2 * g[j];
    }
    FourierField out = divergence(coefficients(p1), coefficients(p2));
    if (cut_output) cut(out);
    return out;
  }

  FourierField advance(const FourierField& f, const FourierField& rhs,
                       const FourierField& diff, double dW, const FourierField* additive) const {
    FourierField out(grid_);
    const double dt = scheme_.dt;
    for (std::size_t i = 0; i < grid_.size(); ++i) {
      complex inc = dt * rhs.coeffs()[i] + dW * diff.coeffs()[i];
      if (additive) inc += additive->coeffs()[i];
      if (scheme_.integrator == Integrator::integrating_factor_em) {
        out.coeffs()[i] = decay_[i] * (f.coeffs()[i] + inc);
      } else {
        const auto k = grid_.wavevector(i);
        const double k2 = double(k[0] * k[0] + k[1] * k[1]);
        out.coeffs()[i] = f.coeffs()[i] * (1.0 - k2 * dt) + inc;
      }
    }
    cut(out);
    return out;
  }

  SpectralGrid grid_;
  DivFreeVectorField sigma_;
  SpdeScheme scheme_;
  Fft2d fft_;
  std::vector<Vec2> sigma_grid_;
  std::vector<double> decay_;
};

// ---------------------------------------------------------------------------
// Gaussian samplers.

// Grid white noise xi_j = Z_j / h keyed by (seed, role, ensemble, cell, step).
inline RealBuffer grid_white_noise(const SpectralGrid& g, std::uint64_t master_seed,
                                   StreamRole role, std::uint32_t ensemble_id,
                                   std::uint32_t step, int component) {
  RealBuffer xi(g.size());
  const double inv_h = 1.0 / g.spacing();
  for (std::size_t j = 0; j < g.size(); ++j) {
    const KeyedStream s({master_seed, role, ensemble_id, static_cast<std::uint32_t>(j), step});
    xi[j] = s.normal_pair(0)[component] * inv_h;
  }
  return xi;
}

// eta0 = sqrt(v0) xi - (int sqrt(v0) xi) v0, cut to the band, zero mass.
// Cov(<eta0,phi>, <eta0,psi>) = <phi psi, v0> - <phi, v0><psi, v0>.
inline FluctuationState sample_eta0(const FourierField& v0, std::uint64_t master_seed,
                                    std::uint32_t ensemble_id, double tolerance = 1e-12) {
  const auto& g = v0.grid();
  const RealBuffer v = to_grid(v0);
  for (double x : v)
    if (x < -tolerance) throw InvalidInput("sample_eta0: invalid density (negative value)");
  const RealBuffer xi = grid_white_noise(g, master_seed, StreamRole::eta0, ensemble_id, 0, 0);
  RealBuffer e(g.size());
  double mass = 0.0;
  for (std::size_t j = 0; j < e.size(); ++j) {
    e[j] = std::sqrt(std::max(v[j], 0.0)) * xi[j];
    mass += e[j];
  }
  mass *= g.cell_area();
  for (std::size_t j = 0; j < e.size(); ++j) e[j] -= mass * v[j];
  FluctuationState s{from_grid(e, g), 0.0};
  s.eta.project_to_band();
  s.eta.ref(0, 0) = 0.0;
  return s;
}

// dM = div(sqrt(2 max(v,0)) zeta) sqrt(dt) with zeta a 2-component grid white
// noise keyed by (seed, mfield_noise, ensemble, cell, step). Conditionally on
// v, <dM, phi> ~ N(0, 2 dt <|grad phi|^2, v>). Returns the number of clamped
// (negative) grid values through `clamped`.
inline FourierField generate_M_increment(const FourierField& v, double dt,
                                         std::uint64_t master_seed, std::uint32_t ensemble_id,
                                         std::uint32_t step, std::size_t* clamped = nullptr) {
  const auto& g = v.grid();
  const RealBuffer vg = to_grid(v);
  const double inv_h = 1.0 / g.spacing();
  const double sdt = std::sqrt(dt);
  ComplexBuffer a1(g.size()), a2(g.size());
  std::size_t neg = 0;
  for (std::size_t j = 0; j < g.size(); ++j) {
    if (vg[j] < 0.0) ++neg;
    const double amp = std::sqrt(2.0 * std::max(vg[j], 0.0)) * sdt * inv_h;
    const KeyedStream s({master_seed, StreamRole::mfield_noise, ensemble_id,
                         static_cast<std::uint32_t>(j), step});
    const auto z = s.normal_pair(0);
    a1[j] = amp * z[0];
    a2[j] = amp * z[1];
  }
  if (clamped) *clamped = neg;
  const Fft2d fft(g.m());
  ComplexBuffer f1(g.size()), f2(g.size());
  fft.forward(a1, f1);
  fft.forward(a2, f2);
  FourierField dm(g);
  const double area = g.cell_area();
  for (std::size_t i = 0; i < g.size(); ++i) {
    const auto k = g.wavevector(i);
    if (!g.in_band(k[0], k[1])) continue;
    dm.coeffs()[i] = complex(0.0, area) * (double(k[0]) * f1[i] + double(k[1]) * f2[i]);
  }
  dm.ref(0, 0) = 0.0;
  return dm;
}

// Free-function forms of the solver operations.
inline FourierField nonlinear_term(const FourierField& v) {
  return SpdeSolver(v.grid(), DivFreeVectorField::off(), SpdeScheme{}).nonlinear_term(v);
}

inline TransportTerms transport_terms(const FourierField& v, const DivFreeVectorField& sigma) {
  SpdeScheme s;
  s.stability_constant = std::numeric_limits<double>::infinity();
  return SpdeSolver(v.grid(), sigma, s).transport_terms(v);
}

// ---------------------------------------------------------------------------
// VFLF field snapshots: magic, u32 version, u32 M, then complex f64 pairs with
// k1 ascending over (-M/2, M/2] and k2 ascending inside. Several records may
// be concatenated to form a trajectory.

inline constexpr std::uint32_t kFieldFormatVersion = 1;

inline void write_field(std::ostream& os, const FourierField& f) {
  const int m = f.grid().m();
  binary::put_magic(os, "VFLF");
  binary::put<std::uint32_t>(os, kFieldFormatVersion);
  binary::put<std::uint32_t>(os, static_cast<std::uint32_t>(m));
  for (int k1 = -m / 2 + 1; k1 <= m / 2; ++k1)
    for (int k2 = -m / 2 + 1; k2 <= m / 2; ++k2) {
      const complex c = f.at(k1, k2);
      binary::put(os, c.real());
      binary::put(os, c.imag());
    }
}

inline FourierField read_field(std::istream& is) {
  binary::expect_magic(is, "VFLF");
  binary::expect_version(binary::get<std::uint32_t>(is), kFieldFormatVersion, "VFLF");
  const int m = static_cast<int>(binary::get<std::uint32_t>(is));
  if (m < 8 || m > 1 << 14) throw FormatError("VFLF: implausible grid size");
  FourierField f{SpectralGrid(m)};
  for (int k1 = -m / 2 + 1; k1 <= m / 2; ++k1)
    for (int k2 = -m / 2 + 1; k2 <= m / 2; ++k2) {
      const double re = binary::get<double>(is);
      const double im = binary::get<double>(is);
      f.ref(k1, k2) = complex(re, im);
    }
  return f;
}

inline std::vector<FourierField> read_field_trajectory(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path);
  std::vector<FourierField> out;
  while (is.peek() != std::char_traits<char>::eof()) out.push_back(read_field(is));
  return out;
}

}  // namespace vfl
