#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "vfl/core.hpp"
#include "vfl/fft.hpp"
#include "vfl/torus.hpp"

namespace vfl {

// Wavevectors {k : -M/2 < k_i <= M/2} stored in FFT order: slot i along an axis
// holds k = i for i <= M/2 and k = i - M otherwise.
class SpectralGrid {
 public:
  explicit SpectralGrid(int modes_per_axis) : m_(modes_per_axis) {
    if (m_ < 8 || m_ % 2 != 0) throw InvalidInput("SpectralGrid: M must be even and >= 8");
  }

  int m() const { return m_; }
  std::size_t size() const { return static_cast<std::size_t>(m_) * m_; }
  double spacing() const { return two_pi / m_; }
  double cell_area() const { return spacing() * spacing(); }

  bool contains(int k1, int k2) const { return in_range(k1) && in_range(k2); }
  int slot(int k) const { return k >= 0 ? k : k + m_; }
  int wavenumber(int slot) const { return slot <= m_ / 2 ? slot : slot - m_; }
  std::size_t index(int k1, int k2) const {
    return static_cast<std::size_t>(slot(k1)) * m_ + slot(k2);
  }
  std::array<int, 2> wavevector(std::size_t idx) const {
    return {wavenumber(static_cast<int>(idx / m_)), wavenumber(static_cast<int>(idx % m_))};
  }
  // Collocation node j = (j1, j2) sits at (j1 h, j2 h); returned wrapped.
  TorusPoint node(int j1, int j2) const {
    return wrap({j1 * spacing(), j2 * spacing()});
  }
  // 2/3 rule: keep |k_i| <= M/3.
  bool in_band(int k1, int k2) const {
    const int c = m_ / 3;
    return std::abs(k1) <= c && std::abs(k2) <= c;
  }
  bool is_nyquist(int k1, int k2) const { return k1 == m_ / 2 || k2 == m_ / 2; }

  bool operator==(const SpectralGrid&) const = default;

 private:
  bool in_range(int k) const { return k > -m_ / 2 && k <= m_ / 2; }
  int m_;
};

// Coefficients c_k = <f, e_k> = int f(x) exp(-i k.x) dx of a real field.
class FourierField {
 public:
  explicit FourierField(SpectralGrid g) : grid_(g), c_(g.size(), complex{}) {}

  const SpectralGrid& grid() const { return grid_; }
  ComplexBuffer& coeffs() { return c_; }
  const ComplexBuffer& coeffs() const { return c_; }

  complex at(int k1, int k2) const {
    return grid_.contains(k1, k2) ? c_[grid_.index(k1, k2)] : complex{};
  }
  complex& ref(int k1, int k2) {
    if (!grid_.contains(k1, k2)) throw InvalidInput("FourierField: wavevector outside grid");
    return c_[grid_.index(k1, k2)];
  }
  // Sets c_k and c_{-k} = conj(c_k) together.
  void set_pair(int k1, int k2, complex c) {
    ref(k1, k2) = c;
    if (grid_.contains(-k1, -k2)) ref(-k1, -k2) = std::conj(c);
  }

  // Max |c_{-k} - conj(c_k)| over wavevectors whose partner is on the grid.
  double hermitian_defect() const {
    double worst = 0.0;
    for (std::size_t i = 0; i < c_.size(); ++i) {
      const auto [k1, k2] = grid_.wavevector(i);
      if (!grid_.contains(-k1, -k2)) continue;
      worst = std::max(worst, std::abs(at(-k1, -k2) - std::conj(c_[i])));
    }
    return worst;
  }

  // Zeroes everything outside the 2/3 band, including Nyquist modes.
  void project_to_band() {
    for (std::size_t i = 0; i < c_.size(); ++i) {
      const auto [k1, k2] = grid_.wavevector(i);
      if (!grid_.in_band(k1, k2)) c_[i] = 0.0;
    }
  }

  FourierField& operator+=(const FourierField& o) {
    require_same_grid(o);
    for (std::size_t i = 0; i < c_.size(); ++i) c_[i] += o.c_[i];
    return *this;
  }
  FourierField& operator-=(const FourierField& o) {
    require_same_grid(o);
    for (std::size_t i = 0; i < c_.size(); ++i) c_[i] -= o.c_[i];
    return *this;
  }
  FourierField& operator*=(double s) {
    for (auto& v : c_) v *= s;
    return *this;
  }

  void require_same_grid(const FourierField& o) const {
    if (!(grid_ == o.grid_)) throw InvalidInput("FourierField: grid mismatch");
  }

 private:
  SpectralGrid grid_;
  ComplexBuffer c_;
};

inline FourierField uniform_density(SpectralGrid g) {
  FourierField f(g);
  f.ref(0, 0) = 1.0;
  return f;
}

// Values f(x_j) = (2pi)^-2 sum_k c_k exp(i k.x_j) on the collocation grid.
inline RealBuffer to_grid(const FourierField& f) {
  const Fft2d fft(f.grid().m());
  ComplexBuffer out(fft.n());
  fft.inverse(f.coeffs(), out);
  RealBuffer v(fft.n());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = out[i].real() / four_pi_sq;
  return v;
}

// Inverse of to_grid: c_k = h^2 sum_j f(x_j) exp(-i k.x_j).
inline FourierField from_grid(const RealBuffer& values, SpectralGrid g) {
  const Fft2d fft(g.m());
  if (values.size() != fft.n()) throw InvalidInput("from_grid: size mismatch");
  ComplexBuffer in(values.begin(), values.end());
  FourierField f(g);
  fft.forward(in, f.coeffs());
  f *= g.cell_area();
  return f;
}

// Coefficients of d f / d x_axis (axis 0 or 1). Nyquist modes are zeroed.
inline FourierField derivative(const FourierField& f, int axis) {
  FourierField d(f.grid());
  const auto& g = f.grid();
  for (std::size_t i = 0; i < g.size(); ++i) {
    const auto k = g.wavevector(i);
    if (g.is_nyquist(k[0], k[1])) continue;
    d.coeffs()[i] = complex(0.0, k[axis]) * f.coeffs()[i];
  }
  return d;
}

// Point evaluation by direct summation over |k|_inf <= k_eval (clipped to the grid).
// Separable: exp(i k.x) = exp(i k1 x1) exp(i k2 x2).
inline double evaluate_at(const FourierField& f, TorusPoint x, int k_eval) {
  const auto& g = f.grid();
  const int lo = std::max(-k_eval, -g.m() / 2 + 1);
  const int hi = std::min(k_eval, g.m() / 2);
  const int n = hi - lo + 1;
  std::vector<complex> e2(n);
  for (int k = lo; k <= hi; ++k) e2[k - lo] = std::polar(1.0, k * x.x2);
  double acc = 0.0;
  for (int k1 = lo; k1 <= hi; ++k1) {
    const complex e1 = std::polar(1.0, k1 * x.x1);
    complex row{};
    for (int k2 = lo; k2 <= hi; ++k2) row += f.coeffs()[g.index(k1, k2)] * e2[k2 - lo];
    acc += (e1 * row).real();
  }
  return acc / four_pi_sq;
}

// Pointwise evaluator restricted to the nonzero coefficients of a field;
// cheap for the sparse densities used as initial data.
class SparseEvaluator {
 public:
  explicit SparseEvaluator(const FourierField& f) {
    const auto& g = f.grid();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (f.coeffs()[i] == complex{}) continue;
      const auto k = g.wavevector(i);
      modes_.push_back({k[0], k[1], f.coeffs()[i]});
    }
  }

  double operator()(TorusPoint x) const {
    double acc = 0.0;
    for (const auto& m : modes_) {
      const double phase = m.k1 * x.x1 + m.k2 * x.x2;
      acc += m.c.real() * std::cos(phase) - m.c.imag() * std::sin(phase);
    }
    return acc / four_pi_sq;
  }

  std::size_t mode_count() const { return modes_.size(); }

 private:
  struct Mode {
    int k1, k2;
    complex c;
  };
  std::vector<Mode> modes_;
};

// (2pi)^2 sum |c_k|^2 / (2pi)^4 = int f^2 dx, i.e. the plain L2 norm squared.
inline double l2_norm_sq(const FourierField& f) {
  double s = 0.0;
  for (const auto& c : f.coeffs()) s += std::norm(c);
  return s / four_pi_sq;
}

inline std::pair<double, double> grid_min_max(const RealBuffer& v) {
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  return {*lo, *hi};
}

}  // namespace vfl
