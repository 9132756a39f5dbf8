#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>

#include <gtest/gtest.h>

#include "vfl/kernel.hpp"

using namespace vfl;

namespace {

// Periodic kernel and K - K_free at four points, from Ewald summation (tests/oracles).
struct EwaldPoint {
  Vec2 x, k, k0;
};
const EwaldPoint kEwald[] = {
    {{0.3, -1.1},
     {0.12040537163258658, 0.033270933775057514},
     {-0.014264195599017149, -0.0034571300153798667}},
    {{2.5, 0.7},
     {-0.011986634429303124, 0.023605416905801067},
     {0.004542810698935262, -0.035428315695050325}},
    {{-3.0, 3.0},
     {-0.0018024267747186059, -0.0018024267747186057},
     {0.02472339707393062, 0.02472339707393062}},
    {{1e-3, 2e-3},
     {-63.6619519064615, 31.83097595323466},
     {2.5330296629988425e-05, -1.2665144407009166e-05}},
};

void expect_vec_near(Vec2 a, Vec2 b, double tol) {
  EXPECT_NEAR(a.x1, b.x1, tol);
  EXPECT_NEAR(a.x2, b.x2, tol);
}

}  // namespace

TEST(Multiplier, Examples) {
  auto m = velocity_multiplier(1, 0);
  EXPECT_EQ(m[0], complex(0.0, 0.0));
  EXPECT_EQ(m[1], complex(0.0, -1.0));
  m = velocity_multiplier(0, 1);
  EXPECT_EQ(m[0], complex(0.0, 1.0));
  EXPECT_EQ(m[1], complex(0.0, 0.0));
  m = velocity_multiplier(1, 1);
  EXPECT_EQ(m[0], complex(0.0, 0.5));
  EXPECT_EQ(m[1], complex(0.0, -0.5));
  m = velocity_multiplier(0, 0);
  EXPECT_EQ(m[0], complex{});
  EXPECT_EQ(m[1], complex{});
  const SpectralGrid g(8);
  const auto all = velocity_multiplier(g);
  EXPECT_EQ(all[g.index(-2, 3)], velocity_multiplier(-2, 3));
}

// u = K*f must satisfy curl u = f - mean and div u = 0; checked on an 8x8 grid
// with finite sums written out by hand.
TEST(VelocityOperator, CurlAndDivergenceOnSmallGrid) {
  const SpectralGrid g(8);
  std::mt19937_64 gen(1);
  std::normal_distribution<double> z;
  FourierField f(g);
  for (int k1 = -3; k1 <= 3; ++k1)
    for (int k2 = -3; k2 <= 3; ++k2)
      if (k1 > 0 || (k1 == 0 && k2 > 0)) f.set_pair(k1, k2, complex(z(gen), z(gen)));
  f.ref(0, 0) = 1.0;
  const auto u = apply_velocity_operator(f);
  const double h = g.spacing();
  auto value = [&](const FourierField& c, double x1, double x2) {
    double s = 0.0;
    for (int k1 = -3; k1 <= 4; ++k1)
      for (int k2 = -3; k2 <= 4; ++k2) {
        const complex ck = c.at(k1, k2);
        s += ck.real() * std::cos(k1 * x1 + k2 * x2) - ck.imag() * std::sin(k1 * x1 + k2 * x2);
      }
    return s / four_pi_sq;
  };
  auto grad = [&](const FourierField& c, double x1, double x2, int axis) {
    double s = 0.0;
    for (int k1 = -3; k1 <= 4; ++k1)
      for (int k2 = -3; k2 <= 4; ++k2) {
        const complex ck = c.at(k1, k2);
        const double k = axis == 0 ? k1 : k2;
        const double ph = k1 * x1 + k2 * x2;
        s += -k * (ck.real() * std::sin(ph) + ck.imag() * std::cos(ph));
      }
    return s / four_pi_sq;
  };
  for (int j1 = 0; j1 < 8; ++j1)
    for (int j2 = 0; j2 < 8; ++j2) {
      const double x1 = j1 * h, x2 = j2 * h;
      const double curl = grad(u[1], x1, x2, 0) - grad(u[0], x1, x2, 1);
      const double div = grad(u[0], x1, x2, 0) + grad(u[1], x1, x2, 1);
      EXPECT_NEAR(curl, value(f, x1, x2) - 1.0 / four_pi_sq, 1e-13);
      EXPECT_NEAR(div, 0.0, 1e-13);
    }
  EXPECT_EQ(u[0].at(0, 0), complex{});
  EXPECT_LT(u[0].hermitian_defect(), 1e-15);
  EXPECT_LT(u[1].hermitian_defect(), 1e-15);
}

TEST(Taper, Shape) {
  EXPECT_NEAR(spectral_taper(0.0, 64), 1.0, 0.0);
  EXPECT_GT(spectral_taper(32.0, 64), 0.86);
  EXPECT_LT(spectral_taper(64.0, 64), 1e-15);
}

TEST(PeriodicKernel, ClosedFormMatchesEwald) {
  for (const auto& p : kEwald) {
    // cosh(x2) - cos(x1) ~ |x|^2/2 loses eps/|x|^2 relative accuracy
    const double rel = 1e-11 + 1e-16 / norm_sq(p.x);
    expect_vec_near(periodic_kernel_closed_form(p.x), p.k, rel * std::max(1.0, norm(p.k)));
  }
}

TEST(PeriodicKernel, CorrectionSeriesMatchesEwald) {
  for (const auto& p : kEwald) expect_vec_near(correction_kernel_series(p.x), p.k0, 1e-10);
}

TEST(PeriodicKernel, CorrectionSeriesMatchesClosedFormOnCell) {
  std::mt19937_64 gen(2);
  std::uniform_real_distribution<double> u(-pi, pi);
  for (int i = 0; i < 2000; ++i) {
    const Vec2 x{u(gen), u(gen)};
    if (norm(x) < 0.3) continue;  // closed form cancels badly there
    const Vec2 want = periodic_kernel_closed_form(x) - free_space_kernel(x);
    expect_vec_near(correction_kernel_series(x), want, 1e-10);
  }
}

TEST(PeriodicKernel, PeriodicInBothDirections) {
  const Vec2 x{0.9, -2.2};
  const Vec2 k = periodic_kernel_closed_form(x);
  expect_vec_near(periodic_kernel_closed_form({x.x1 + two_pi, x.x2}), k, 1e-12);
  expect_vec_near(periodic_kernel_closed_form({x.x1, x.x2 + two_pi}), k, 1e-12);
}

TEST(PeriodicKernel, SingularityThrows) {
  EXPECT_THROW(free_space_kernel({0.0, 0.0}), SingularityError);
  EXPECT_THROW(periodic_kernel_closed_form({0.0, 0.0}), SingularityError);
  EXPECT_THROW(eval_kernel_point(KernelSpec::free_space_plus_correction(64), {0.0, 0.0}),
               SingularityError);
  EXPECT_THROW(eval_kernel_point(KernelSpec::regularized(0.1), {std::nan(""), 0.0}),
               InvalidInput);
}

TEST(KernelSpec, Constructors) {
  EXPECT_THROW(KernelSpec::regularized(0.0), InvalidInput);
  EXPECT_THROW(KernelSpec::spectral_truncated(0), InvalidInput);
  const auto r = KernelSpec::regularized_for(64);
  EXPECT_EQ(r.k_max, 64);
  EXPECT_DOUBLE_EQ(r.epsilon, pi / 64);
  EXPECT_EQ(parse_kernel_mode("spectral_truncated"), KernelMode::spectral_truncated);
  EXPECT_THROW(parse_kernel_mode("exact"), InvalidInput);
  EXPECT_FALSE(KernelSpec::free_space_plus_correction(64).is_finite_at_origin());
  EXPECT_TRUE(KernelSpec::off().is_finite_at_origin());
}

// Property: every realization is odd.
TEST(KernelProperties, Odd) {
  const KernelSpec specs[] = {KernelSpec::regularized(0.2), KernelSpec::regularized_for(128),
                              KernelSpec::spectral_truncated(12),
                              KernelSpec::free_space_plus_correction(128), KernelSpec::off()};
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> u(-pi + 1e-9, pi);
  for (const auto& s : specs)
    for (int i = 0; i < 1000; ++i) {
      const Vec2 x{u(gen), u(gen)};
      const Vec2 a = eval_kernel_point(s, x);
      const Vec2 b = eval_kernel_point(s, -x);
      const double tol = 1e-12 * std::max(1.0, norm(a));
      ASSERT_NEAR(a.x1, -b.x1, tol) << s.describe();
      ASSERT_NEAR(a.x2, -b.x2, tol) << s.describe();
    }
}

// Near the origin K(x) is perpendicular to x up to the O(|x|) correction.
TEST(KernelProperties, PerpendicularNearOrigin) {
  std::mt19937_64 gen(4);
  std::uniform_real_distribution<double> ang(0.0, two_pi);
  const auto spec = KernelSpec::free_space_plus_correction(256);
  for (int i = 0; i < 200; ++i) {
    const double r = 1e-3;
    const double t = ang(gen);
    const Vec2 x{r * std::cos(t), r * std::sin(t)};
    for (const Vec2 k : {periodic_kernel_closed_form(x), eval_kernel_point(spec, x)}) {
      EXPECT_LT(std::abs(dot(k, x)) / (norm(k) * r), 1e-5);
      // magnitude is 1/(2 pi r) to leading order
      EXPECT_NEAR(norm(k) * two_pi * r, 1.0, 1e-5);
    }
  }
}

// |K(x)| <= C / d(x) on the cell, with C close to 1/(2 pi).
TEST(KernelProperties, SingularBound) {
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> u(-pi, pi);
  double worst = 0.0;
  for (int i = 0; i < 20000; ++i) {
    const Vec2 x{u(gen), u(gen)};
    worst = std::max(worst, norm(periodic_kernel_closed_form(x)) * norm(x));
  }
  EXPECT_LT(worst, 0.25);
  EXPECT_GT(worst, 1.0 / two_pi - 0.05);
}

TEST(Regularized, EqualsExactOutsideCore) {
  const double eps = 0.15;
  const auto spec = KernelSpec::regularized(eps);
  std::mt19937_64 gen(6);
  std::uniform_real_distribution<double> u(-pi, pi);
  int checked = 0;
  for (int i = 0; i < 5000; ++i) {
    const Vec2 x{u(gen), u(gen)};
    if (norm(x) <= eps) continue;
    const Vec2 want = periodic_kernel_closed_form(x);
    expect_vec_near(eval_kernel_point(spec, x), want, 1e-10 * std::max(1.0, norm(want)));
    ++checked;
  }
  EXPECT_GT(checked, 4000);
  for (const auto& p : kEwald) {
    if (norm(p.x) <= pi / 128) continue;
    expect_vec_near(eval_kernel_point(KernelSpec::regularized_for(128), p.x), p.k, 1e-10);
  }
}

TEST(Regularized, FiniteInsideCore) {
  const double eps = 0.1;
  const auto spec = KernelSpec::regularized(eps);
  EXPECT_EQ(eval_kernel_point(spec, {0.0, 0.0}), (Vec2{}));
  double worst = 0.0;
  for (int i = 0; i <= 100; ++i) {
    const double r = eps * i / 100.0;
    worst = std::max(worst, norm(eval_kernel_point(spec, {r, 0.0})));
  }
  // |K_eps| <= c / eps inside the core
  EXPECT_LT(worst * eps, 0.5);
  // continuity across r = eps
  const Vec2 in = eval_kernel_point(spec, {eps * (1 - 1e-9), 0.0});
  const Vec2 out = eval_kernel_point(spec, {eps * (1 + 1e-9), 0.0});
  EXPECT_NEAR(in.x2, out.x2, 1e-6);
}

// Tapered partial sums, from the dense sums in tests/oracles.
TEST(SpectralKernel, Fixtures) {
  const Vec2 x{0.05, 0.0};
  const Vec2 free = free_space_kernel(x);
  const Vec2 a = spectral_kernel_point(256, x);
  EXPECT_NEAR(a.x1, 0.0, 1e-12);
  EXPECT_NEAR(a.x2, 2.8108115804902116, 1e-11);
  EXPECT_NEAR(norm(a - free) / norm(free), 0.1169574988106835, 1e-10);
  const Vec2 b = spectral_kernel_point(1024, x);
  EXPECT_NEAR(b.x2, 3.1833643022776648, 1e-10);
  EXPECT_NEAR(norm(b - free) / norm(free), 8.339057355099424e-05, 1e-9);
}

// Far from the origin the tapered sum converges to the periodic kernel.
TEST(SpectralKernel, ConvergesAwayFromOrigin) {
  for (const auto& p : kEwald) {
    if (norm(p.x) < 0.1) continue;
    expect_vec_near(spectral_kernel_point(128, p.x), p.k, 1e-6);
  }
}

TEST(CorrectionTable, MatchesSeries) {
  const auto table = shared_correction_table(256);
  std::mt19937_64 gen(7);
  std::uniform_real_distribution<double> u(-pi, pi);
  double worst = 0.0;
  for (int i = 0; i < 5000; ++i) {
    const Vec2 x{u(gen), u(gen)};
    worst = std::max(worst, norm((*table)(x) - correction_kernel_series(x)));
  }
  EXPECT_LT(worst, 1e-8);
  for (const auto& p : kEwald) expect_vec_near((*table)(p.x), p.k0, 1e-8);
  EXPECT_THROW(CorrectionTable(4), InvalidInput);
}

TEST(CorrectionTable, FileRoundTrip) {
  const auto path = (std::filesystem::temp_directory_path() / "vfl_test_table.bin").string();
  const CorrectionTable t(32);
  t.save(path);
  const auto back = CorrectionTable::load(path);
  EXPECT_EQ(back.resolution(), 32);
  EXPECT_EQ(back.component(0), t.component(0));
  EXPECT_EQ(back.component(1), t.component(1));
  std::remove(path.c_str());
  EXPECT_THROW(CorrectionTable::load(path), FormatError);
}
