#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "vfl/core.hpp"
#include "vfl/spectral.hpp"

namespace vfl {

// Transport field sigma(x) = Re sum_m a_m exp(i k_m.x), a_m in C^2, k_m . a_m = 0.
// The Fourier coefficients are a_m/2 at k_m and conj(a_m)/2 at -k_m (a_m at k=0),
// so sigma is real and Hermitian by construction.
class DivFreeVectorField {
 public:
  struct Mode {
    int k1 = 0;
    int k2 = 0;
    std::array<complex, 2> a{};
  };

  DivFreeVectorField() = default;
  explicit DivFreeVectorField(std::vector<Mode> modes) : modes_(std::move(modes)) {
    for (const auto& m : modes_) {
      const complex div = double(m.k1) * m.a[0] + double(m.k2) * m.a[1];
      const double scale = std::hypot(m.k1, m.k2) * (std::abs(m.a[0]) + std::abs(m.a[1]));
      if (std::abs(div) > 1e-12 * std::max(scale, 1.0))
        throw InvalidInput("DivFreeVectorField: mode is not divergence-free");
    }
  }

  // amplitude * (cos x2, cos x1)
  static DivFreeVectorField standard(double amplitude = 1.0) {
    return DivFreeVectorField({{0, 1, {complex(amplitude), complex(0.0)}},
                               {1, 0, {complex(0.0), complex(amplitude)}}});
  }
  static DivFreeVectorField constant(double c1, double c2) {
    return DivFreeVectorField({{0, 0, {complex(c1), complex(c2)}}});
  }
  static DivFreeVectorField off() { return {}; }

  bool is_off() const { return modes_.empty(); }
  const std::vector<Mode>& modes() const { return modes_; }

  Vec2 operator()(Vec2 x) const {
    Vec2 s;
    for (const auto& m : modes_) {
      const complex e = phase(m, x);
      s.x1 += (m.a[0] * e).real();
      s.x2 += (m.a[1] * e).real();
    }
    return s;
  }

  // J[i][j] = d sigma_i / d x_j
  std::array<std::array<double, 2>, 2> jacobian(Vec2 x) const {
    std::array<std::array<double, 2>, 2> j{};
    for (const auto& m : modes_) {
      const complex e = complex(0.0, 1.0) * phase(m, x);
      for (int i = 0; i < 2; ++i) {
        const double t = (m.a[i] * e).real();
        j[i][0] += m.k1 * t;
        j[i][1] += m.k2 * t;
      }
    }
    return j;
  }

  // (sigma . grad) sigma, the Ito correction is half of this.
  Vec2 grad_sigma(Vec2 x) const {
    const Vec2 s = (*this)(x);
    const auto j = jacobian(x);
    return {j[0][0] * s.x1 + j[0][1] * s.x2, j[1][0] * s.x1 + j[1][1] * s.x2};
  }

  // Hermitian Fourier coefficient list (k, sigma_hat(k)), one entry per +-k.
  std::vector<Mode> fourier_coefficients() const {
    std::vector<Mode> out;
    for (const auto& m : modes_) {
      if (m.k1 == 0 && m.k2 == 0) {
        out.push_back({0, 0, {complex(m.a[0].real()), complex(m.a[1].real())}});
        continue;
      }
      out.push_back({m.k1, m.k2, {0.5 * m.a[0], 0.5 * m.a[1]}});
      out.push_back({-m.k1, -m.k2, {0.5 * std::conj(m.a[0]), 0.5 * std::conj(m.a[1])}});
    }
    return out;
  }

  // max |sigma| over a sample grid fine enough to resolve every mode.
  double sup_norm() const {
    if (modes_.empty()) return 0.0;
    int kmax = 1;
    for (const auto& m : modes_) kmax = std::max({kmax, std::abs(m.k1), std::abs(m.k2)});
    const int n = std::max(64, 16 * kmax);
    double best = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        const Vec2 x{-pi + two_pi * i / n, -pi + two_pi * j / n};
        best = std::max(best, norm((*this)(x)));
      }
    return best;
  }

  // sigma at every collocation node, row-major (j1 major).
  std::vector<Vec2> on_grid(const SpectralGrid& g) const {
    std::vector<Vec2> out(g.size());
    const double h = g.spacing();
    for (int j1 = 0; j1 < g.m(); ++j1)
      for (int j2 = 0; j2 < g.m(); ++j2)
        out[static_cast<std::size_t>(j1) * g.m() + j2] = (*this)(Vec2{j1 * h, j2 * h});
    return out;
  }

 private:
  static complex phase(const Mode& m, Vec2 x) {
    return std::polar(1.0, m.k1 * x.x1 + m.k2 * x.x2);
  }

  std::vector<Mode> modes_;
};

}  // namespace vfl
