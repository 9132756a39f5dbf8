#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "vfl/binary.hpp"
#include "vfl/core.hpp"
#include "vfl/spectral.hpp"
#include "vfl/torus.hpp"

namespace vfl {

// ---------------------------------------------------------------------------
// Spectral multipliers. u = K*f has u_hat(k) = m(k) f_hat(k) with
// m(k) = i (k2, -k1) / |k|^2, m(0) = 0.

inline std::array<complex, 2> velocity_multiplier(int k1, int k2) {
  if (k1 == 0 && k2 == 0) return {complex{}, complex{}};
  const double inv = 1.0 / double(k1 * k1 + k2 * k2);
  return {complex(0.0, k2 * inv), complex(0.0, -k1 * inv)};
}

inline std::vector<std::array<complex, 2>> velocity_multiplier(const SpectralGrid& g) {
  std::vector<std::array<complex, 2>> m(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    const auto k = g.wavevector(i);
    m[i] = velocity_multiplier(k[0], k[1]);
  }
  return m;
}

// exp(-36 (|k|/K)^8): 1 at low modes, below 1e-15 at |k| = K.
inline double spectral_taper(double kmag, int k_max) {
  const double r = kmag / k_max;
  const double r2 = r * r;
  const double r4 = r2 * r2;
  return std::exp(-36.0 * r4 * r4);
}

// u = K*f. Nyquist modes are dropped so u stays real.
inline std::array<FourierField, 2> apply_velocity_operator(const FourierField& f) {
  const auto& g = f.grid();
  std::array<FourierField, 2> u{FourierField(g), FourierField(g)};
  for (std::size_t i = 0; i < g.size(); ++i) {
    const auto k = g.wavevector(i);
    if (g.is_nyquist(k[0], k[1])) continue;
    const auto m = velocity_multiplier(k[0], k[1]);
    u[0].coeffs()[i] = m[0] * f.coeffs()[i];
    u[1].coeffs()[i] = m[1] * f.coeffs()[i];
  }
  return u;
}

// ---------------------------------------------------------------------------
// Pointwise kernels.

// -(1/2pi) x_perp / |x|^2 with x_perp = (x2, -x1).
inline Vec2 free_space_kernel(Vec2 x) {
  const double r2 = norm_sq(x);
  if (r2 == 0.0) throw SingularityError("free-space kernel evaluated at the origin");
  const double c = -1.0 / (two_pi * r2);
  return {c * x.x2, -c * x.x1};
}

// Periodic Biot-Savart kernel (zero mean), summed over image rows in x2.
// Valid for any x1 and |x2| up to a few periods; singular on the lattice 2pi Z^2.
inline Vec2 periodic_kernel_closed_form(Vec2 x) {
  constexpr int rows = 8;
  const double cx = std::cos(x.x1);
  const double sx = std::sin(x.x1);
  double s1 = 0.0;
  double s2 = 0.0;
  for (int m = -rows; m <= rows; ++m) {
    const double z = x.x2 - two_pi * m;
    const double den = std::cosh(z) - cx;
    if (den == 0.0) throw SingularityError("periodic kernel evaluated on a lattice point");
    s1 += std::sinh(z) / den - (m == 0 ? 0.0 : (z > 0 ? 1.0 : -1.0));
    s2 += sx / den;
  }
  return {-s1 / (4.0 * pi) + x.x2 / four_pi_sq, s2 / (4.0 * pi)};
}

// K0 = K_periodic - K_free is analytic on |x| < 2pi. Writing z = x1 + i x2,
// K0_1 - i K0_2 = i (conj(z)/(8 pi^2) + h(z)) with h(z) = sum_j c_j z^(4j-1):
// the lattice symmetry kills every other power.
inline constexpr int kCorrectionTerms = 18;
using CorrectionCoefficients = std::array<double, kCorrectionTerms>;

// Cauchy-integral fit of the c_j on a circle of radius 4.6 (inside the
// analyticity disc, outside the cell corners at pi sqrt 2).
inline const CorrectionCoefficients& correction_coefficients() {
  static const CorrectionCoefficients coef = [] {
    constexpr int nodes = 256;
    constexpr double radius = 4.6;
    std::vector<complex> g(nodes);
    for (int j = 0; j < nodes; ++j) {
      const double th = two_pi * j / nodes;
      const complex z = std::polar(radius, th);
      const Vec2 kp = periodic_kernel_closed_form({z.real(), z.imag()});
      const Vec2 kf = free_space_kernel({z.real(), z.imag()});
      const complex w0(kp.x1 - kf.x1, -(kp.x2 - kf.x2));
      g[j] = complex(0.0, -1.0) * w0 - std::conj(z) / (2.0 * four_pi_sq);
    }
    CorrectionCoefficients c{};
    for (int t = 0; t < kCorrectionTerms; ++t) {
      const int p = 4 * t + 3;
      complex acc{};
      for (int j = 0; j < nodes; ++j) acc += g[j] * std::polar(1.0, -two_pi * p * j / nodes);
      c[t] = (acc / double(nodes)).real() / std::pow(radius, p);
    }
    return c;
  }();
  return coef;
}

// Series evaluation of K0; error about 1e-11 on the cell [-pi, pi]^2.
// Branch-free so that it vectorizes inside force loops.
[[gnu::always_inline]] inline void correction_series(double x1, double x2, const double* c,
                                                     double& k1, double& k2) {
  constexpr double c8 = 1.0 / (8.0 * std::numbers::pi * std::numbers::pi);
  const double z2r = x1 * x1 - x2 * x2;
  const double z2i = 2.0 * x1 * x2;
  const double wr = z2r * z2r - z2i * z2i;
  const double wi = 2.0 * z2r * z2i;
  double pr = c[kCorrectionTerms - 1];
  double pim = 0.0;
  _Pragma("GCC unroll 32") for (int t = kCorrectionTerms - 2; t >= 0; --t) {
    const double nr = pr * wr - pim * wi + c[t];
    pim = pr * wi + pim * wr;
    pr = nr;
  }
  const double z3r = z2r * x1 - z2i * x2;
  const double z3i = z2r * x2 + z2i * x1;
  const double hr = pr * z3r - pim * z3i;
  const double hi = pr * z3i + pim * z3r;
  k1 = x2 * c8 - hi;
  k2 = -x1 * c8 - hr;
}

inline Vec2 correction_kernel_series(Vec2 x) {
  Vec2 k;
  correction_series(x.x1, x.x2, correction_coefficients().data(), k.x1, k.x2);
  return k;
}

// Smooth odd blob: K_eps = -(1/2pi) x_perp q(|x|^2) + K0 with q = 1/r^2 for
// r >= eps and a C^2 quadratic-in-rho continuation inside (rho = r^2/eps^2).
// K_eps = K exactly outside the eps-disc and K_eps(0) = 0.
[[gnu::always_inline]] inline void regularized_kernel(double x1, double x2, double inv_eps2,
                                                      const double* c, double& k1,
                                                      double& k2) {
  constexpr double inv2pi = 0.5 / std::numbers::pi;
  const double r2 = x1 * x1 + x2 * x2;
  const double rho = r2 * inv_eps2;
  const double om = 1.0 - rho;
  const double q = rho >= 1.0 ? 1.0 / r2 : inv_eps2 * (1.0 + om + om * om);
  correction_series(x1, x2, c, k1, k2);
  k1 += -inv2pi * x2 * q;
  k2 += inv2pi * x1 * q;
}

// ---------------------------------------------------------------------------
// Tabulated correction for free_space_plus_correction mode.

// K0 on the (R+1)^2 nodes -pi + i 2pi/R, i = 0..R, both components.
class CorrectionTable {
 public:
  static constexpr std::uint32_t kVersion = 1;

  explicit CorrectionTable(int resolution) : r_(resolution) {
    if (r_ < 8) throw InvalidInput("CorrectionTable: resolution must be >= 8");
    const std::size_t n = static_cast<std::size_t>(r_ + 1) * (r_ + 1);
    c1_.resize(n);
    c2_.resize(n);
    for (int i = 0; i <= r_; ++i)
      for (int j = 0; j <= r_; ++j) {
        const Vec2 x{node(i), node(j)};
        Vec2 k;
        if (norm(x) < 0.5) {
          k = correction_kernel_series(x);  // avoids cancellation near 0
        } else {
          k = periodic_kernel_closed_form(x) - free_space_kernel(x);
        }
        c1_[idx(i, j)] = k.x1;
        c2_[idx(i, j)] = k.x2;
      }
  }

  CorrectionTable(int resolution, std::vector<double> c1, std::vector<double> c2)
      : r_(resolution), c1_(std::move(c1)), c2_(std::move(c2)) {
    const std::size_t n = static_cast<std::size_t>(r_ + 1) * (r_ + 1);
    if (r_ < 8 || c1_.size() != n || c2_.size() != n)
      throw FormatError("CorrectionTable: inconsistent table size");
  }

  int resolution() const { return r_; }
  const std::vector<double>& component(int c) const { return c == 0 ? c1_ : c2_; }

  // Tensor-product 4-point Lagrange interpolation; stencils are shifted
  // inwards at the edges.
  Vec2 operator()(Vec2 x) const {
    const double h = two_pi / r_;
    std::array<double, 4> w1, w2;
    const int i0 = stencil((x.x1 + pi) / h, w1);
    const int j0 = stencil((x.x2 + pi) / h, w2);
    Vec2 out;
    for (int a = 0; a < 4; ++a)
      for (int b = 0; b < 4; ++b) {
        const double w = w1[a] * w2[b];
        out.x1 += w * c1_[idx(i0 + a, j0 + b)];
        out.x2 += w * c2_[idx(i0 + a, j0 + b)];
      }
    return out;
  }

  void save(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("cannot open " + path);
    binary::put_magic(os, "VFLK");
    binary::put<std::uint32_t>(os, kVersion);
    binary::put<std::uint32_t>(os, static_cast<std::uint32_t>(r_));
    for (double v : c1_) binary::put(os, v);
    for (double v : c2_) binary::put(os, v);
  }

  static CorrectionTable load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open " + path);
    binary::expect_magic(is, "VFLK");
    binary::expect_version(binary::get<std::uint32_t>(is), kVersion, "VFLK");
    const int r = static_cast<int>(binary::get<std::uint32_t>(is));
    if (r < 8 || r > 1 << 14) throw FormatError("VFLK: implausible resolution");
    const std::size_t n = static_cast<std::size_t>(r + 1) * (r + 1);
    std::vector<double> c1(n), c2(n);
    for (auto& v : c1) v = binary::get<double>(is);
    for (auto& v : c2) v = binary::get<double>(is);
    return CorrectionTable(r, std::move(c1), std::move(c2));
  }

 private:
  double node(int i) const { return -pi + two_pi * i / r_; }
  std::size_t idx(int i, int j) const { return static_cast<std::size_t>(i) * (r_ + 1) + j; }

  int stencil(double s, std::array<double, 4>& w) const {
    int i0 = static_cast<int>(std::floor(s)) - 1;
    i0 = std::clamp(i0, 0, r_ - 3);
    const double t = s - i0;
    for (int a = 0; a < 4; ++a) {
      double p = 1.0;
      for (int b = 0; b < 4; ++b)
        if (b != a) p *= (t - b) / double(a - b);
      w[a] = p;
    }
    return i0;
  }

  int r_;
  std::vector<double> c1_, c2_;
};

// Process-wide cache: tables are immutable once built.
inline std::shared_ptr<const CorrectionTable> shared_correction_table(int resolution) {
  static std::mutex mu;
  static std::map<int, std::shared_ptr<const CorrectionTable>> cache;
  std::lock_guard lock(mu);
  auto& slot = cache[resolution];
  if (!slot) slot = std::make_shared<const CorrectionTable>(resolution);
  return slot;
}

// ---------------------------------------------------------------------------
// Kernel realizations.

enum class KernelMode { spectral_truncated, free_space_plus_correction, regularized, off };

inline std::string to_string(KernelMode m) {
  switch (m) {
    case KernelMode::spectral_truncated: return "spectral_truncated";
    case KernelMode::free_space_plus_correction: return "free_space_plus_correction";
    case KernelMode::regularized: return "regularized";
    case KernelMode::off: return "off";
  }
  return "unknown";
}

inline KernelMode parse_kernel_mode(const std::string& s) {
  if (s == "spectral_truncated") return KernelMode::spectral_truncated;
  if (s == "free_space_plus_correction") return KernelMode::free_space_plus_correction;
  if (s == "regularized") return KernelMode::regularized;
  if (s == "off") return KernelMode::off;
  throw InvalidInput("unknown kernel mode '" + s + "'");
}

struct KernelSpec {
  KernelMode mode = KernelMode::regularized;
  int k_max = 128;
  int table_resolution = 256;
  double epsilon = pi / 128;
  std::shared_ptr<const CorrectionTable> table;  // optional preloaded VFLK table

  static KernelSpec spectral_truncated(int k_max) {
    if (k_max < 1) throw InvalidInput("KernelSpec: K_max must be positive");
    KernelSpec s;
    s.mode = KernelMode::spectral_truncated;
    s.k_max = k_max;
    s.epsilon = pi / k_max;
    return s;
  }
  static KernelSpec free_space_plus_correction(int table_resolution) {
    KernelSpec s;
    s.mode = KernelMode::free_space_plus_correction;
    s.table_resolution = table_resolution;
    return s;
  }
  static KernelSpec regularized(double epsilon) {
    if (!(epsilon > 0.0)) throw InvalidInput("KernelSpec: epsilon must be positive");
    KernelSpec s;
    s.mode = KernelMode::regularized;
    s.epsilon = epsilon;
    s.k_max = static_cast<int>(std::lround(pi / epsilon));
    return s;
  }
  // epsilon = pi / K_max
  static KernelSpec regularized_for(int k_max) {
    auto s = regularized(pi / k_max);
    s.k_max = k_max;
    return s;
  }
  static KernelSpec off() {
    KernelSpec s;
    s.mode = KernelMode::off;
    return s;
  }

  bool is_finite_at_origin() const { return mode != KernelMode::free_space_plus_correction; }

  std::string describe() const {
    switch (mode) {
      case KernelMode::spectral_truncated:
        return "spectral_truncated(K_max=" + std::to_string(k_max) + ")";
      case KernelMode::free_space_plus_correction:
        return "free_space_plus_correction(R=" + std::to_string(table_resolution) + ")";
      case KernelMode::regularized:
        return "regularized(eps=" + std::to_string(epsilon) + ")";
      case KernelMode::off: return "off";
    }
    return "unknown";
  }
};

// Tapered partial Fourier sum (2pi)^-2 sum_{|k|_inf <= K} m(k) T(|k|) exp(i k.x).
inline Vec2 spectral_kernel_point(int k_max, Vec2 x) {
  const int n = 2 * k_max + 1;
  std::vector<complex> e1(n), e2(n);
  for (int k = -k_max; k <= k_max; ++k) {
    e1[k + k_max] = std::polar(1.0, k * x.x1);
    e2[k + k_max] = std::polar(1.0, k * x.x2);
  }
  double s1 = 0.0;
  double s2 = 0.0;
  for (int k1 = -k_max; k1 <= k_max; ++k1) {
    for (int k2 = -k_max; k2 <= k_max; ++k2) {
      if (k1 == 0 && k2 == 0) continue;
      const double ksq = double(k1 * k1 + k2 * k2);
      const double w = spectral_taper(std::sqrt(ksq), k_max) / ksq;
      if (w == 0.0) continue;
      const double s = (e1[k1 + k_max] * e2[k2 + k_max]).imag();  // sin(k.x)
      // Re(i k2 w e^{ik.x}) = -k2 w sin(k.x)
      s1 -= k2 * w * s;
      s2 += k1 * w * s;
    }
  }
  return {s1 / four_pi_sq, s2 / four_pi_sq};
}

// K(x) in the requested realization; x must be a minimal-image displacement.
inline Vec2 eval_kernel_point(const KernelSpec& spec, Vec2 x) {
  if (!std::isfinite(x.x1) || !std::isfinite(x.x2))
    throw InvalidInput("eval_kernel_point: non-finite displacement");
  switch (spec.mode) {
    case KernelMode::off: return {};
    case KernelMode::spectral_truncated: return spectral_kernel_point(spec.k_max, x);
    case KernelMode::regularized: {
      Vec2 k;
      regularized_kernel(x.x1, x.x2, 1.0 / (spec.epsilon * spec.epsilon),
                         correction_coefficients().data(), k.x1, k.x2);
      return k;
    }
    case KernelMode::free_space_plus_correction: {
      const auto table =
          spec.table ? spec.table : shared_correction_table(spec.table_resolution);
      return free_space_kernel(x) + (*table)(x);
    }
  }
  return {};
}

}  // namespace vfl
