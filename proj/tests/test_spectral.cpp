#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "vfl/sigma.hpp"
#include "vfl/spectral.hpp"
#include "vfl/trig.hpp"

using namespace vfl;

namespace {

// Naive O(M^4) transform: c_k = h^2 sum_j f(x_j) exp(-i k.x_j).
FourierField naive_forward(const std::vector<double>& v, SpectralGrid g) {
  FourierField f(g);
  const double h = g.spacing();
  for (std::size_t i = 0; i < g.size(); ++i) {
    const auto k = g.wavevector(i);
    complex s{};
    for (int j1 = 0; j1 < g.m(); ++j1)
      for (int j2 = 0; j2 < g.m(); ++j2)
        s += v[std::size_t(j1) * g.m() + j2] * std::polar(1.0, -(k[0] * j1 + k[1] * j2) * h);
    f.coeffs()[i] = s * g.cell_area();
  }
  return f;
}

FourierField random_hermitian(SpectralGrid g, int kmax, unsigned seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> z;
  FourierField f(g);
  for (int k1 = -kmax; k1 <= kmax; ++k1)
    for (int k2 = -kmax; k2 <= kmax; ++k2) {
      if (k1 < 0 || (k1 == 0 && k2 < 0)) continue;
      if (k1 == 0 && k2 == 0) {
        f.ref(0, 0) = z(gen);
        continue;
      }
      f.set_pair(k1, k2, complex(z(gen), z(gen)));
    }
  return f;
}

}  // namespace

TEST(SpectralGrid, Layout) {
  const SpectralGrid g(16);
  EXPECT_EQ(g.size(), 256u);
  EXPECT_EQ(g.wavenumber(0), 0);
  EXPECT_EQ(g.wavenumber(8), 8);
  EXPECT_EQ(g.wavenumber(9), -7);
  EXPECT_EQ(g.slot(-7), 9);
  EXPECT_TRUE(g.contains(8, -7));
  EXPECT_FALSE(g.contains(-8, 0));
  EXPECT_TRUE(g.in_band(5, -5));
  EXPECT_FALSE(g.in_band(6, 0));
  EXPECT_TRUE(g.is_nyquist(8, 0));
  for (std::size_t i = 0; i < g.size(); ++i) {
    const auto k = g.wavevector(i);
    ASSERT_EQ(g.index(k[0], k[1]), i);
  }
  EXPECT_THROW(SpectralGrid(7), InvalidInput);
  EXPECT_THROW(SpectralGrid(6), InvalidInput);
}

TEST(Transform, MatchesNaiveSum) {
  const SpectralGrid g(8);
  std::mt19937_64 gen(1);
  std::normal_distribution<double> z;
  RealBuffer v(g.size());
  std::vector<double> vv(g.size());
  for (std::size_t j = 0; j < v.size(); ++j) vv[j] = v[j] = z(gen);
  const auto fast = from_grid(v, g);
  const auto slow = naive_forward(vv, g);
  for (std::size_t i = 0; i < g.size(); ++i)
    EXPECT_LT(std::abs(fast.coeffs()[i] - slow.coeffs()[i]), 1e-12);
}

TEST(Transform, RoundTrip) {
  const SpectralGrid g(32);
  std::mt19937_64 gen(2);
  std::normal_distribution<double> z;
  RealBuffer v(g.size());
  for (auto& x : v) x = z(gen);
  const auto back = to_grid(from_grid(v, g));
  for (std::size_t j = 0; j < v.size(); ++j) ASSERT_NEAR(back[j], v[j], 1e-12);
}

TEST(Transform, UniformDensity) {
  const SpectralGrid g(16);
  for (double x : to_grid(uniform_density(g))) ASSERT_NEAR(x, 1.0 / four_pi_sq, 1e-15);
}

// (2pi)^-2 sum |c_k|^2 = int f^2 = h^2 sum_j f_j^2.
TEST(Transform, Parseval) {
  const SpectralGrid g(32);
  const auto f = random_hermitian(g, 10, 3);
  const auto v = to_grid(f);
  double direct = 0.0;
  for (double x : v) direct += x * x;
  direct *= g.cell_area();
  EXPECT_NEAR(l2_norm_sq(f), direct, 1e-12 * direct);
}

TEST(Transform, RealFieldIsHermitian) {
  const SpectralGrid g(16);
  std::mt19937_64 gen(4);
  std::uniform_real_distribution<double> u;
  RealBuffer v(g.size());
  for (auto& x : v) x = u(gen);
  EXPECT_LT(from_grid(v, g).hermitian_defect(), 1e-13);
}

TEST(Derivative, SinglesMode) {
  const SpectralGrid g(32);
  FourierField f(g);
  f.set_pair(3, -2, complex(0.7, 0.2));
  const auto d1 = to_grid(derivative(f, 0));
  const auto d2 = to_grid(derivative(f, 1));
  const SparseEvaluator e(f);
  // f = (2/(4 pi^2)) Re(c exp(i k.x)); df/dx1 = (2/(4pi^2)) Re(i k1 c exp(i k.x))
  for (int j1 = 0; j1 < 32; j1 += 5)
    for (int j2 = 0; j2 < 32; j2 += 3) {
      const Vec2 x = g.node(j1, j2);
      const complex ph = complex(0.7, 0.2) * std::polar(1.0, 3 * x.x1 - 2 * x.x2);
      const double w1 = 2.0 * (complex(0, 3) * ph).real() / four_pi_sq;
      const double w2 = 2.0 * (complex(0, -2) * ph).real() / four_pi_sq;
      const std::size_t j = std::size_t(j1) * 32 + j2;
      ASSERT_NEAR(d1[j], w1, 1e-14);
      ASSERT_NEAR(d2[j], w2, 1e-14);
      ASSERT_NEAR(to_grid(f)[j], 2.0 * ph.real() / four_pi_sq, 1e-15);
      ASSERT_NEAR(e(x), 2.0 * ph.real() / four_pi_sq, 1e-15);
    }
}

TEST(EvaluateAt, MatchesDirectSum) {
  const SpectralGrid g(32);
  const auto f = random_hermitian(g, 6, 5);
  std::mt19937_64 gen(6);
  std::uniform_real_distribution<double> u(-pi, pi);
  const SparseEvaluator sparse(f);
  for (int t = 0; t < 50; ++t) {
    const Vec2 x{u(gen), u(gen)};
    double direct = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const auto k = g.wavevector(i);
      direct += (f.coeffs()[i] * std::polar(1.0, k[0] * x.x1 + k[1] * x.x2)).real();
    }
    direct /= four_pi_sq;
    EXPECT_NEAR(evaluate_at(f, x, 16), direct, 1e-13);
    EXPECT_NEAR(sparse(x), direct, 1e-13);
  }
}

TEST(EvaluateAt, AgreesWithGridAtNodes) {
  const SpectralGrid g(16);
  const auto f = random_hermitian(g, 5, 7);
  const auto v = to_grid(f);
  for (int j1 = 0; j1 < 16; ++j1)
    for (int j2 = 0; j2 < 16; ++j2)
      ASSERT_NEAR(evaluate_at(f, g.node(j1, j2), 8), v[std::size_t(j1) * 16 + j2], 1e-13);
}

TEST(Band, ProjectionZeroesOutside) {
  const SpectralGrid g(24);
  auto f = random_hermitian(g, 11, 8);
  f.project_to_band();
  for (std::size_t i = 0; i < g.size(); ++i) {
    const auto k = g.wavevector(i);
    if (!g.in_band(k[0], k[1])) {
      ASSERT_EQ(f.coeffs()[i], complex{});
    }
  }
  EXPECT_NE(f.at(8, -8), complex{});
}

TEST(TestFunctionParse, Examples) {
  const auto a = TestFunction::parse("cos(x1)");
  ASSERT_EQ(a.modes().size(), 1u);
  EXPECT_EQ(a.modes()[0].k1, 1);
  EXPECT_EQ(a.modes()[0].k2, 0);

  const auto b = TestFunction::parse("2*sin(3x1-2x2) - 0.5*cos(x2) + 1");
  ASSERT_EQ(b.modes().size(), 3u);
  const Vec2 x{0.4, -1.3};
  const double want = 2 * std::sin(3 * 0.4 + 2 * 1.3) - 0.5 * std::cos(-1.3) + 1.0;
  EXPECT_NEAR(b.value(x), want, 1e-14);

  EXPECT_NEAR(TestFunction::parse("cos(x1+x2)").value(x), std::cos(0.4 - 1.3), 1e-15);
  EXPECT_THROW(TestFunction::parse("tan(x1)"), InvalidInput);
  EXPECT_THROW(TestFunction::parse("cos(x3)"), InvalidInput);
  EXPECT_THROW(TestFunction::parse("cos(x1"), InvalidInput);
}

TEST(TestFunctionCalculus, MatchesFiniteDifferences) {
  const auto phi = TestFunction::parse("cos(x1+2x2) + 0.3*sin(x1) - sin(2x2)");
  const double h = 1e-5;
  std::mt19937_64 gen(9);
  std::uniform_real_distribution<double> u(-pi, pi);
  for (int t = 0; t < 20; ++t) {
    const Vec2 x{u(gen), u(gen)};
    const Vec2 g = phi.gradient(x);
    EXPECT_NEAR(g.x1, (phi.value({x.x1 + h, x.x2}) - phi.value({x.x1 - h, x.x2})) / (2 * h),
                1e-8);
    EXPECT_NEAR(g.x2, (phi.value({x.x1, x.x2 + h}) - phi.value({x.x1, x.x2 - h})) / (2 * h),
                1e-8);
    EXPECT_NEAR(phi.laplacian(x), phi.laplacian_function().value(x), 1e-13);
    EXPECT_NEAR(phi.derivative(0).value(x), g.x1, 1e-13);
    EXPECT_NEAR(phi.derivative(1).value(x), g.x2, 1e-13);
  }
}

// <phi, f> by grid quadrature agrees with the coefficient formula.
TEST(TestFunctionPair, MatchesQuadrature) {
  const SpectralGrid g(32);
  const auto f = random_hermitian(g, 6, 10);
  const auto v = to_grid(f);
  for (const char* s : {"cos(x1)", "sin(2x1-x2)", "cos(x1+x2) + 3"}) {
    const auto phi = TestFunction::parse(s);
    double q = 0.0;
    for (int j1 = 0; j1 < 32; ++j1)
      for (int j2 = 0; j2 < 32; ++j2)
        q += phi.value(g.node(j1, j2)) * v[std::size_t(j1) * 32 + j2];
    q *= g.cell_area();
    EXPECT_NEAR(phi.pair(f), q, 1e-12) << s;
  }
  EXPECT_NEAR(TestFunction::constant(2.0).pair(uniform_density(g)), 2.0, 1e-15);
  EXPECT_NEAR(TestFunction::parse("cos(x1)").pair_empirical({{0.0, 0.0}, {pi / 2, 1.0}}), 0.5,
              1e-15);
}

TEST(Sigma, StandardFieldValues) {
  const auto s = DivFreeVectorField::standard();
  const Vec2 x{0.3, -0.7};
  const Vec2 v = s(x);
  EXPECT_NEAR(v.x1, std::cos(-0.7), 1e-15);
  EXPECT_NEAR(v.x2, std::cos(0.3), 1e-15);
  EXPECT_NEAR(s.sup_norm(), std::sqrt(2.0), 1e-12);
  EXPECT_TRUE(DivFreeVectorField::off().is_off());
  EXPECT_EQ(DivFreeVectorField::off()(x), (Vec2{}));
  EXPECT_EQ(DivFreeVectorField::constant(0.5, -1.0)(x), (Vec2{0.5, -1.0}));
}

TEST(Sigma, RejectsCompressibleMode) {
  EXPECT_THROW(DivFreeVectorField({{1, 0, {complex(1.0), complex(0.0)}}}), InvalidInput);
}

// (sigma.grad)sigma and sigma.grad(sigma.grad phi) from symbolic differentiation.
TEST(Sigma, GradSigmaFixtures) {
  const auto s = DivFreeVectorField::standard();
  const Vec2 a = s.grad_sigma({0.0, 0.0});
  EXPECT_NEAR(a.x1, 0.0, 1e-15);
  EXPECT_NEAR(a.x2, 0.0, 1e-15);
  const Vec2 b = s.grad_sigma({pi / 2, pi / 2});
  EXPECT_NEAR(b.x1, 0.0, 1e-15);
  EXPECT_NEAR(b.x2, 0.0, 1e-15);
  const Vec2 c = s.grad_sigma({0.3, -0.7});
  EXPECT_NEAR(c.x1, 0.6154446635582735, 1e-14);
  EXPECT_NEAR(c.x2, -0.22602632124962302, 1e-14);
}

TEST(Sigma, JacobianMatchesFiniteDifferences) {
  const DivFreeVectorField s({{0, 1, {complex(1.0), complex(0.0)}},
                              {1, 0, {complex(0.0), complex(1.0)}},
                              {2, -1, {complex(0.3, 0.1), complex(0.6, 0.2)}}});
  const double h = 1e-5;
  std::mt19937_64 gen(12);
  std::uniform_real_distribution<double> u(-pi, pi);
  for (int t = 0; t < 50; ++t) {
    const Vec2 x{u(gen), u(gen)};
    const auto j = s.jacobian(x);
    const Vec2 d1 = (s({x.x1 + h, x.x2}) - s({x.x1 - h, x.x2})) * (0.5 / h);
    const Vec2 d2 = (s({x.x1, x.x2 + h}) - s({x.x1, x.x2 - h})) * (0.5 / h);
    EXPECT_NEAR(j[0][0], d1.x1, 1e-6);
    EXPECT_NEAR(j[1][0], d1.x2, 1e-6);
    EXPECT_NEAR(j[0][1], d2.x1, 1e-6);
    EXPECT_NEAR(j[1][1], d2.x2, 1e-6);
    // divergence-free pointwise
    EXPECT_NEAR(j[0][0] + j[1][1], 0.0, 1e-14);
  }
}

// The Hermitian coefficient list reproduces sigma and has zero spectral divergence.
TEST(Sigma, FourierCoefficients) {
  const DivFreeVectorField s({{0, 0, {complex(0.2), complex(-0.1)}},
                              {1, 2, {complex(0.4, 0.3), complex(-0.2, -0.15)}}});
  const auto coef = s.fourier_coefficients();
  ASSERT_EQ(coef.size(), 3u);
  const Vec2 x{1.1, -0.4};
  Vec2 acc;
  for (const auto& m : coef) {
    const complex e = std::polar(1.0, m.k1 * x.x1 + m.k2 * x.x2);
    acc.x1 += (m.a[0] * e).real();
    acc.x2 += (m.a[1] * e).real();
    EXPECT_LT(std::abs(double(m.k1) * m.a[0] + double(m.k2) * m.a[1]), 1e-15);
  }
  EXPECT_NEAR(acc.x1, s(x).x1, 1e-15);
  EXPECT_NEAR(acc.x2, s(x).x2, 1e-15);
}

TEST(Sigma, OnGridMatchesPointwise) {
  const SpectralGrid g(16);
  const auto s = DivFreeVectorField::standard(0.5);
  const auto v = s.on_grid(g);
  for (int j1 = 0; j1 < 16; ++j1)
    for (int j2 = 0; j2 < 16; ++j2) {
      const Vec2 w = s(g.node(j1, j2));
      ASSERT_NEAR(v[std::size_t(j1) * 16 + j2].x1, w.x1, 1e-15);
      ASSERT_NEAR(v[std::size_t(j1) * 16 + j2].x2, w.x2, 1e-15);
    }
}
