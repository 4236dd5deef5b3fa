#include <gtest/gtest.h>

#include <cmath>

#include "phi42/stats.hpp"
#include "phi42/stochastic.hpp"
#include "phi42/wick.hpp"

using namespace phi42;

namespace {

// Mean and standard error of |c|^2 over draws.
stats::Estimate second_moment(const std::vector<Complex>& draws) {
  std::vector<double> sq;
  for (const auto& c : draws) sq.push_back(std::norm(c));
  return {stats::mean(sq), stats::standard_error(sq)};
}

}  // namespace

TEST(Gff, ModeVariances) {
  const GridSpec g = dealiased_grid(1);
  RngStream rng(100, 0);
  std::vector<Complex> zero, one;
  for (int i = 0; i < 100000; ++i) {
    const FourierField f = sample_gff(g, rng);
    ASSERT_TRUE(f.is_hermitian());
    ASSERT_EQ(f(0, 0).imag(), 0.0);
    zero.push_back(f(0, 0));
    one.push_back(f(1, 0));
  }
  const auto e0 = second_moment(zero);
  const auto e1 = second_moment(one);
  EXPECT_NEAR(e0.mean, 0.5, 3 * e0.se);
  EXPECT_NEAR(e1.mean, 0.25, 3 * e1.se);
}

TEST(Gff, PointwiseVarianceIsRenormConstant) {
  const GridSpec g = dealiased_grid(2);
  RngStream rng(101, 0);
  std::vector<double> sq;
  for (int i = 0; i < 100000; ++i) {
    const PhysicalField v = to_physical(sample_gff(g, rng));
    sq.push_back(v(3, 5) * v(3, 5));
  }
  EXPECT_NEAR(stats::mean(sq), renorm_constant(g), 3 * stats::standard_error(sq));
}

TEST(Ou, StepFromZeroVariance) {
  const GridSpec g = dealiased_grid(1);
  RngStream rng(102, 0);
  const double dt = std::log(2.0);
  std::vector<Complex> draws;
  const OuPropagator prop(g, dt);
  for (int i = 0; i < 100000; ++i) {
    draws.push_back(prop.step(OuState{FourierField(g), 0.0, false}, rng).z(0, 0));
  }
  const auto e = second_moment(draws);
  EXPECT_NEAR(e.mean, 3.0 / 8.0, 3 * e.se);
  EXPECT_DOUBLE_EQ(OuPropagator::step_variance(1.0, dt), 3.0 / 8.0);
}

TEST(Ou, ExactInDtClosedForm) {
  // Variance after n steps of dt/n from zero: sum_j e^{-2 lam j dt/n} v(dt/n) == v(dt).
  for (double lam : {1.0, 2.0, 5.0, 65.0}) {
    for (int n : {2, 3, 10, 100}) {
      const double dt = 0.37;
      const double h = dt / n;
      double var = 0.0;
      for (int j = 0; j < n; ++j) var = std::exp(-2.0 * lam * h) * var + OuPropagator::step_variance(lam, h);
      EXPECT_NEAR(var, OuPropagator::step_variance(lam, dt), 1e-15);
    }
  }
}

TEST(Ou, LargeDtGivesStationaryLaw) {
  const double lam = eigenvalue(1, 1);
  EXPECT_NEAR(OuPropagator::step_variance(lam, 50.0), 0.5 / lam, 1e-15);
}

TEST(Ou, StationarityPreserved) {
  const GridSpec g = dealiased_grid(2);
  RngStream rng(103, 0);
  const OuPropagator prop(g, 0.3);
  std::vector<std::vector<double>> sq(g.mode_count());
  for (int i = 0; i < 10000; ++i) {
    RngStream r = rng.split(i);
    const OuState s = prop.step(sample_stationary_ou(g, r), r);
    ASSERT_TRUE(s.stationary);
    ASSERT_TRUE(s.z.is_hermitian());
    for (std::size_t m = 0; m < g.mode_count(); ++m) sq[m].push_back(std::norm(s.z.coeffs()[m]));
  }
  std::size_t m = 0;
  for_each_mode(g, [&](int k1, int k2) {
    EXPECT_NEAR(stats::mean(sq[m]), gff_mode_variance(k1, k2), 4 * stats::standard_error(sq[m]))
        << "k=(" << k1 << "," << k2 << ")";
    ++m;
  });
}

TEST(Ou, LagAutocovariance) {
  const GridSpec g = dealiased_grid(1);
  RngStream rng(104, 0);
  const double s = 0.4;
  const OuPropagator prop(g, s);
  std::vector<double> prod;
  for (int i = 0; i < 100000; ++i) {
    const OuState a = sample_stationary_ou(g, rng);
    const OuState b = prop.step(a, rng);
    prod.push_back((a.z(1, 0) * std::conj(b.z(1, 0))).real());
  }
  const double lam = eigenvalue(1, 0);
  EXPECT_NEAR(stats::mean(prod), std::exp(-lam * s) / (2 * lam), 3 * stats::standard_error(prod));
}

TEST(Ou, DeterministicReplay) {
  const GridSpec g = dealiased_grid(3);
  RngStream a(7, 3), b(7, 3);
  OuState sa{FourierField(g), 0, false}, sb{FourierField(g), 0, false};
  for (int i = 0; i < 20; ++i) {
    sa = ou_step_exact(sa, 0.01, a);
    sb = ou_step_exact(sb, 0.01, b);
  }
  for (std::size_t i = 0; i < g.mode_count(); ++i) EXPECT_EQ(sa.z.coeffs()[i], sb.z.coeffs()[i]);
}

TEST(HeatDrift, Examples) {
  const GridSpec g = dealiased_grid(3);
  RngStream rng(105, 0);
  const FourierField x = sample_gff(g, rng);
  const FourierField v0 = heat_drift(x, 0.0);
  for (std::size_t i = 0; i < g.mode_count(); ++i) EXPECT_EQ(v0.coeffs()[i], x.coeffs()[i]);
  EXPECT_NEAR(heat_drift(FourierField::constant(g, 2.0), 1.0)(0, 0).real(), kTwoPi * 2.0 * std::exp(-1.0), 1e-13);
  double prev = l2_norm(x);
  for (double t : {0.1, 0.2, 0.5, 1.0, 2.0}) {
    const FourierField v = heat_drift(x, t);
    EXPECT_TRUE(v.is_hermitian());
    EXPECT_LT(l2_norm(v), prev);
    prev = l2_norm(v);
  }
}
