#include <gtest/gtest.h>

#include <cmath>

#include "phi42/stats.hpp"
#include "phi42/stochastic.hpp"
#include "phi42/wick.hpp"

using namespace phi42;

namespace {

// Independent lattice oracle: E|(:phi^n:)_k|^2 = n! (2pi)^{-2(n-1)} sum_{l_1+..+l_n=k} prod v_{l_i}.
double wick_isometry_oracle(int n, int cutoff, int k1, int k2) {
  std::vector<std::pair<int, int>> box;
  for (int a = -cutoff; a <= cutoff; ++a)
    for (int b = -cutoff; b <= cutoff; ++b) box.emplace_back(a, b);
  auto v = [](int a, int b) { return 0.5 / (a * a + b * b + 1.0); };
  std::function<double(int, int, int)> rec = [&](int left, int r1, int r2) -> double {
    if (left == 1) return (std::abs(r1) <= cutoff && std::abs(r2) <= cutoff) ? v(r1, r2) : 0.0;
    double s = 0.0;
    for (auto [a, b] : box) s += v(a, b) * rec(left - 1, r1 - a, r2 - b);
    return s;
  };
  double fact = 1.0;
  for (int i = 2; i <= n; ++i) fact *= i;
  return fact * std::pow(kTwoPi, -2.0 * (n - 1)) * rec(n, k1, k2);
}

// Oracle for E||:phi_a^2: - :phi_b^2:||^2_{H^{-s}} with phi_a the restriction of phi_b, a < b.
double quadratic_increment_oracle(int a, int b, double s) {
  auto v = [](int p, int q) { return 0.5 / (p * p + q * q + 1.0); };
  auto inside = [](int p, int q, int c) { return std::abs(p) <= c && std::abs(q) <= c; };
  double total = 0.0;
  const int kmax = 2 * b;
  for (int k1 = -kmax; k1 <= kmax; ++k1)
    for (int k2 = -kmax; k2 <= kmax; ++k2) {
      double pairs = 0.0;
      for (int l1 = -b; l1 <= b; ++l1)
        for (int l2 = -b; l2 <= b; ++l2) {
          const int m1 = k1 - l1, m2 = k2 - l2;
          if (!inside(m1, m2, b)) continue;
          if (inside(l1, l2, a) && inside(m1, m2, a)) continue;
          pairs += v(l1, l2) * v(m1, m2);
        }
      total += std::pow(k1 * k1 + k2 * k2 + 1.0, -s) * 2.0 * pairs / (kTwoPi * kTwoPi);
    }
  return total;
}

}  // namespace

TEST(Hermite, ExplicitPolynomials) {
  for (double x : {-2.3, -0.4, 0.0, 0.7, 1.9}) {
    EXPECT_DOUBLE_EQ(hermite(0, x), 1.0);
    EXPECT_DOUBLE_EQ(hermite(1, x), x);
    EXPECT_NEAR(hermite(2, x), x * x - 1.0, 1e-14);
    EXPECT_NEAR(hermite(3, x), x * x * x - 3.0 * x, 1e-13);
    EXPECT_NEAR(hermite(4, x), x * x * x * x - 6.0 * x * x + 3.0, 1e-13);
  }
}

TEST(Hermite, BinomialShiftIdentity) {
  for (int n = 0; n <= 4; ++n)
    for (double s : {-1.2, 0.3, 2.0})
      for (double t : {-0.7, 0.0, 1.4})
        EXPECT_NEAR(hermite_binomial_shift(n, s, t), hermite(n, s + t), 1e-12);
}

TEST(Hermite, UnsupportedDegree) {
  try {
    hermite(5, 1.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnsupportedDegree);
  }
  const GridSpec g = dealiased_grid(1);
  EXPECT_THROW(wick_power(FourierField(g), -1, make_wick_context(g)), Error);
  WickBundle b = make_bundle(FourierField(g), 0.0, make_wick_context(g));
  EXPECT_THROW(shifted_wick(b, FourierField(g), 4), Error);
}

TEST(RenormConstant, SmallCutoffs) {
  EXPECT_NEAR(renorm_constant(dealiased_grid(0)), 1.0 / (8.0 * kPi * kPi), 1e-16);
  EXPECT_NEAR(renorm_constant(dealiased_grid(1)), (0.5 + 1.0 + 4.0 / 6.0) / (4.0 * kPi * kPi), 1e-16);
  // Logarithmic growth: c_{2N} - c_N approaches (1/4pi) log 2.
  const double d = renorm_constant(dealiased_grid(64)) - renorm_constant(dealiased_grid(32));
  EXPECT_NEAR(d, std::log(2.0) / (4.0 * kPi), 2e-3);
}

TEST(WickPower, DegreesZeroAndOne) {
  const GridSpec g = dealiased_grid(3);
  const WickContext ctx = make_wick_context(g);
  RngStream rng(20, 0);
  const FourierField f = sample_gff(g, rng);
  const FourierField w1 = wick_power(f, 1, ctx);
  for (std::size_t i = 0; i < g.mode_count(); ++i) EXPECT_NEAR(std::abs(w1.coeffs()[i] - f.coeffs()[i]), 0.0, 1e-12);
  const FourierField w0 = wick_power(f, 0, ctx);
  EXPECT_NEAR(w0(0, 0).real(), kTwoPi, 1e-12);
}

TEST(WickPower, PointwiseMomentsMatchHermiteOrthogonality) {
  const GridSpec g = dealiased_grid(2);
  const WickContext ctx = make_wick_context(g);
  const double c = ctx.c_n;
  RngStream rng(21, 0);
  std::vector<std::vector<double>> vals(4);
  std::vector<double> cross;
  for (int i = 0; i < 50000; ++i) {
    const PhysicalField x = to_physical(sample_gff(g, rng));
    const double w2 = wick_scalar(2, x(1, 4), c), w3 = wick_scalar(3, x(1, 4), c);
    vals[0].push_back(w2);
    vals[1].push_back(w2 * w2);
    vals[2].push_back(w3 * w3);
    vals[3].push_back(wick_scalar(4, x(1, 4), c));
    cross.push_back(w2 * w3);
  }
  EXPECT_NEAR(stats::mean(vals[0]), 0.0, 4 * stats::standard_error(vals[0]));
  EXPECT_NEAR(stats::mean(vals[1]), 2 * c * c, 4 * stats::standard_error(vals[1]));
  EXPECT_NEAR(stats::mean(vals[2]), 6 * c * c * c, 4 * stats::standard_error(vals[2]));
  EXPECT_NEAR(stats::mean(vals[3]), 0.0, 4 * stats::standard_error(vals[3]));
  EXPECT_NEAR(stats::mean(cross), 0.0, 4 * stats::standard_error(cross));
}

TEST(WickPower, FourierIsometryAgainstLatticeSum) {
  const int n_cut = 2;
  RngStream rng(22, 0);
  struct Case {
    int degree;
    GridSpec grid;
  };
  // Degree 4 needs a wider padding than the degree-3 dealiased grid.
  const std::vector<Case> cases = {{2, dealiased_grid(n_cut)}, {3, dealiased_grid(n_cut)},
                                   {4, make_grid(n_cut, 12)}};
  for (const auto& cs : cases) {
    const WickContext ctx = make_wick_context(cs.grid);
    std::vector<double> m00, m10, m21;
    for (int i = 0; i < 20000; ++i) {
      const FourierField w = wick_power(sample_gff(cs.grid, rng), cs.degree, ctx);
      ASSERT_TRUE(w.is_hermitian());
      m00.push_back(std::norm(w(0, 0)));
      m10.push_back(std::norm(w(1, 0)));
      m21.push_back(std::norm(w(2, -1)));
    }
    EXPECT_NEAR(stats::mean(m00), wick_isometry_oracle(cs.degree, n_cut, 0, 0), 4 * stats::standard_error(m00))
        << "n=" << cs.degree;
    EXPECT_NEAR(stats::mean(m10), wick_isometry_oracle(cs.degree, n_cut, 1, 0), 4 * stats::standard_error(m10))
        << "n=" << cs.degree;
    EXPECT_NEAR(stats::mean(m21), wick_isometry_oracle(cs.degree, n_cut, 2, -1), 4 * stats::standard_error(m21))
        << "n=" << cs.degree;
  }
}

TEST(WickPower, ShiftedExpansionMatchesDirectEvaluation) {
  const GridSpec g = dealiased_grid(3);
  const WickContext ctx = make_wick_context(g);
  RngStream rng(23, 0);
  const WickBundle b = make_bundle(sample_gff(g, rng), 0.5, ctx);
  const FourierField v = sample_gff(g, rng);
  const PhysicalField vv = to_physical(v);
  for (int n = 0; n <= 3; ++n) {
    const PhysicalField s = shifted_wick(b, v, n);
    for (std::size_t i = 0; i < s.size(); ++i) {
      EXPECT_NEAR(s[i], wick_scalar(n, b.z_values[i] + vv[i], ctx.c_n), 1e-11);
    }
  }
}

TEST(WickPower, BundleProjectionsMatchWickPower) {
  const GridSpec g = dealiased_grid(4);
  const WickContext ctx = make_wick_context(g);
  RngStream rng(24, 0);
  const FourierField z = sample_gff(g, rng);
  const WickBundle b = make_bundle(z, 0.0, ctx);
  EXPECT_LT(l2_norm(b.z2_field() - wick_power(z, 2, ctx)), 1e-12);
  EXPECT_LT(l2_norm(b.z3_field() - wick_power(z, 3, ctx)), 1e-12);
}

TEST(WickConvergence, QuadraticIncrementsMatchOracle) {
  RngStream rng(25, 0);
  const std::vector<int> cutoffs = {1, 2, 4};
  const double s = 0.5;
  const auto probe = wick_convergence_probe(2, cutoffs, 3000, s, rng);
  ASSERT_EQ(probe.size(), 2u);
  for (std::size_t j = 0; j < probe.size(); ++j) {
    const double oracle = quadratic_increment_oracle(cutoffs[j], cutoffs[j + 1], s);
    EXPECT_NEAR(probe[j], oracle, 0.08 * oracle) << "pair " << j;
  }
}

TEST(WickConvergence, IncrementsShrink) {
  RngStream rng(26, 0);
  for (int n : {2, 3}) {
    const auto probe = wick_convergence_probe(n, {2, 4, 8, 16}, 200, 1.0, rng);
    ASSERT_EQ(probe.size(), 3u);
    EXPECT_GT(probe[0], probe[2]) << "n=" << n;
  }
}
