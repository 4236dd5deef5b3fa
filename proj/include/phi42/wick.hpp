#pragma once

// Hermite polynomials, the cutoff renormalization constant and Wick powers.
//
// Wick powers are evaluated pointwise on the padded physical grid, where the
// cutoff identities :f^2: = f^2 - c and :f^3: = f^3 - 3cf hold exactly.
// Projecting those samples back to the retained modes is exact as long as
// the grid is dealiased.

#include <array>
#include <cmath>
#include <vector>

#include "phi42/rng.hpp"
#include "phi42/spectral.hpp"
#include "phi42/stochastic.hpp"

namespace phi42 {

inline constexpr int kMaxWickDegree = 4;

inline void check_degree(int n) {
  if (n < 0 || n > kMaxWickDegree) {
    throw Error(ErrorCode::UnsupportedDegree, "degree " + std::to_string(n) + " not in [0, 4]");
  }
}

inline double binomial(int n, int m) {
  double r = 1.0;
  for (int i = 1; i <= m; ++i) r = r * (n - m + i) / i;
  return r;
}

/// Probabilists' Hermite polynomial P_n(x) = sum_j (-1)^j n!/((n-2j)! j! 2^j) x^{n-2j}.
inline double hermite(int n, double x) {
  check_degree(n);
  double factorial_n = 1.0;
  for (int i = 2; i <= n; ++i) factorial_n *= i;
  double sum = 0.0;
  for (int j = 0; 2 * j <= n; ++j) {
    double denom = std::pow(2.0, j);
    for (int i = 2; i <= n - 2 * j; ++i) denom *= i;
    for (int i = 2; i <= j; ++i) denom *= i;
    const double term = factorial_n / denom * std::pow(x, n - 2 * j);
    sum += (j % 2 == 0) ? term : -term;
  }
  return sum;
}

/// sum_m C(n,m) P_m(s) t^{n-m}; equals P_n(s + t).
inline double hermite_binomial_shift(int n, double s, double t) {
  check_degree(n);
  double sum = 0.0;
  for (int m = 0; m <= n; ++m) sum += binomial(n, m) * hermite(m, s) * std::pow(t, n - m);
  return sum;
}

/// c_N = (2pi)^{-2} sum_{|k|_inf <= N} 1/(2(|k|^2+1)), the pointwise variance of the cutoff GFF.
inline double renorm_constant(const GridSpec& grid) {
  double sum = 0.0;
  const int n = grid.cutoff_n;
  // Accumulate from the outermost shell inward to keep round-off small.
  for (int r = n; r >= 0; --r) {
    double shell = 0.0;
    for_each_mode(grid, [&](int k1, int k2) {
      if (std::max(std::abs(k1), std::abs(k2)) == r) shell += gff_mode_variance(k1, k2);
    });
    sum += shell;
  }
  return sum / (kTwoPi * kTwoPi);
}

struct WickContext {
  GridSpec grid;
  double c_n = 0.0;
};

inline WickContext make_wick_context(const GridSpec& grid) { return {grid, renorm_constant(grid)}; }

/// c^{n/2} P_n(c^{-1/2} x).
inline double wick_scalar(int n, double x, double c) {
  const double sc = std::sqrt(c);
  return std::pow(sc, n) * hermite(n, x / sc);
}

inline PhysicalField wick_power_values(const PhysicalField& f, int n, const WickContext& ctx) {
  check_degree(n);
  const double c = ctx.c_n;
  return map_values(f, [&](double x) { return wick_scalar(n, x, c); });
}

inline PhysicalField wick_power_values(const FourierField& f, int n, const WickContext& ctx) {
  return wick_power_values(to_physical(f), n, ctx);
}

/// :f^n: projected onto the retained modes of f's grid.
inline FourierField wick_power(const FourierField& f, int n, const WickContext& ctx) {
  return to_fourier(wick_power_values(f, n, ctx), f.grid());
}

/// Z together with its Wick powers, the latter as exact padded-grid samples.
struct WickBundle {
  FourierField z;
  PhysicalField z_values;
  PhysicalField z2;
  PhysicalField z3;
  double t = 0.0;

  FourierField z2_field() const { return to_fourier(z2, z.grid()); }
  FourierField z3_field() const { return to_fourier(z3, z.grid()); }
};

inline WickBundle make_bundle(const FourierField& z, double t, const WickContext& ctx) {
  WickBundle b;
  b.z = z;
  b.z_values = to_physical(z);
  b.z2 = wick_power_values(b.z_values, 2, ctx);
  b.z3 = wick_power_values(b.z_values, 3, ctx);
  b.t = t;
  return b;
}

/// :Zbar^n: = sum_k C(n,k) v^{n-k} :Z^k: for Zbar = Z + v, evaluated at the grid points.
inline PhysicalField shifted_wick(const WickBundle& bundle, const PhysicalField& v, int n) {
  if (n < 0 || n > 3) throw Error(ErrorCode::UnsupportedDegree, "shifted Wick powers need n <= 3");
  bundle.z_values.check_same_side(v);
  const std::array<const PhysicalField*, 4> powers = {nullptr, &bundle.z_values, &bundle.z2,
                                                      &bundle.z3};
  PhysicalField out(v.side());
  for (std::size_t i = 0; i < out.size(); ++i) {
    double acc = 0.0;
    for (int k = 0; k <= n; ++k) {
      const double wk = (k == 0) ? 1.0 : (*powers[k])[i];
      acc += binomial(n, k) * std::pow(v[i], n - k) * wk;
    }
    out[i] = acc;
  }
  return out;
}

inline PhysicalField shifted_wick(const WickBundle& bundle, const FourierField& v, int n) {
  bundle.z.check_same_grid(v);
  return shifted_wick(bundle, to_physical(v), n);
}

/// Squared H^{-s}_2 norm: sum_k (|k|^2+1)^{-s} |f_k|^2.
inline double sobolev_neg_sq(const FourierField& f, double s) {
  double acc = 0.0;
  for_each_mode(f.grid(), [&](int k1, int k2) {
    acc += std::pow(eigenvalue(k1, k2), -s) * std::norm(f(k1, k2));
  });
  return acc;
}

/// Monte Carlo estimates of E||:phi_N^n: - :phi_N'^n:||^2_{H^{-s}_2} for consecutive
/// cutoffs of `cutoffs`, all drawn from one GFF sample at the largest cutoff.
inline std::vector<double> wick_convergence_probe(int n, const std::vector<int>& cutoffs,
                                                  int samples, double s, RngStream& rng) {
  check_degree(n);
  if (cutoffs.empty()) return {};
  int n_max = 0;
  for (int c : cutoffs) n_max = std::max(n_max, c);
  const int probe_cutoff = std::max(1, n) * n_max;
  const GridSpec probe = make_grid(probe_cutoff, 2 * probe_cutoff + 2);
  const GridSpec top = make_grid(n_max, 2 * n_max + 2);

  std::vector<WickContext> contexts;
  for (int c : cutoffs) contexts.push_back({probe, renorm_constant(make_grid(c, 2 * c + 2))});

  std::vector<double> sums(cutoffs.size() > 0 ? cutoffs.size() - 1 : 0, 0.0);
  for (int i = 0; i < samples; ++i) {
    const FourierField phi = sample_gff(top, rng);
    std::vector<FourierField> powers;
    for (std::size_t j = 0; j < cutoffs.size(); ++j) {
      const GridSpec gj = make_grid(cutoffs[j], 2 * cutoffs[j] + 2);
      const FourierField on_probe = change_grid(change_grid(phi, gj), probe);
      powers.push_back(to_fourier(wick_power_values(on_probe, n, contexts[j]), probe));
    }
    for (std::size_t j = 0; j + 1 < powers.size(); ++j) {
      sums[j] += sobolev_neg_sq(powers[j] - powers[j + 1], s);
    }
  }
  for (auto& v : sums) v /= samples;
  return sums;
}

}  // namespace phi42
