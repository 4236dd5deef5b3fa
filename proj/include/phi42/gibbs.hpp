#pragma once

// Preconditioned Crank-Nicolson sampling of the cutoff Gibbs measure
//     nu_N(d phi) ~ exp(-U(phi)) mu(d phi),
//     U(phi) = 1/2 int (a1 :phi^4: - 2 a2 :phi^2:) dxi,
// and the integration-by-parts check for its logarithmic derivative
//     beta_k = 2<phi, Ak> - 2<a1 :phi^3: - a2 phi, k>.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "phi42/rng.hpp"
#include "phi42/spectral.hpp"
#include "phi42/stats.hpp"
#include "phi42/stochastic.hpp"
#include "phi42/wick.hpp"

namespace phi42 {

struct GibbsTarget {
  double a1 = 1.0;
  double a2 = 0.0;
  WickContext ctx;
};

inline GibbsTarget make_gibbs_target(double a1, double a2, const GridSpec& grid) {
  if (!(a1 >= 0.0)) throw Error(ErrorCode::InvalidArgument, "a1 must be non-negative");
  return {a1, a2, make_wick_context(grid)};
}

inline double potential(const PhysicalField& values, const GibbsTarget& target) {
  const double c = target.ctx.c_n;
  double acc = 0.0;
  for (double x : values.values()) {
    const double x2 = x * x;
    const double w4 = x2 * x2 - 6.0 * c * x2 + 3.0 * c * c;
    const double w2 = x2 - c;
    acc += target.a1 * w4 - 2.0 * target.a2 * w2;
  }
  const double h = kTwoPi / values.side();
  return 0.5 * acc * h * h;
}

inline double potential(const FourierField& f, const GibbsTarget& target) {
  return potential(to_physical(f), target);
}

struct GibbsChain {
  FourierField current;
  double current_potential = 0.0;
  double step_size = 0.2;
  long long accepted = 0;
  long long proposed = 0;

  double acceptance_rate() const {
    return proposed == 0 ? 0.0 : static_cast<double>(accepted) / static_cast<double>(proposed);
  }
};

inline GibbsChain make_chain(const FourierField& start, const GibbsTarget& target,
                             double step_size) {
  return GibbsChain{start, potential(start, target), step_size, 0, 0};
}

/// phi' = sqrt(1 - s^2) phi + s xi with xi ~ mu, accepted with probability min(1, e^{U(phi) - U(phi')}).
inline GibbsChain pcn_step(GibbsChain chain, const GibbsTarget& target, RngStream& rng) {
  const double s = chain.step_size;
  if (!(s > 0.0 && s < 1.0)) throw Error(ErrorCode::InvalidArgument, "step size must be in (0, 1)");
  FourierField proposal = std::sqrt(1.0 - s * s) * chain.current;
  proposal += s * sample_gff(chain.current.grid(), rng);
  const double u_new = potential(proposal, target);
  ++chain.proposed;
  if (std::log(rng.uniform()) < chain.current_potential - u_new) {
    chain.current = std::move(proposal);
    chain.current_potential = u_new;
    ++chain.accepted;
  }
  return chain;
}

/// Adapts the step size toward a target acceptance rate in blocks of 100
/// proposals, then resets the counters. The adapted size is frozen afterwards.
inline GibbsChain tune_step_size(GibbsChain chain, const GibbsTarget& target, RngStream& rng,
                                 long long warmup, double target_rate = 0.25) {
  constexpr int kBlock = 100;
  for (long long done = 0; done < warmup; done += kBlock) {
    const long long acc0 = chain.accepted, prop0 = chain.proposed;
    for (int i = 0; i < kBlock; ++i) chain = pcn_step(std::move(chain), target, rng);
    const double rate = static_cast<double>(chain.accepted - acc0) / (chain.proposed - prop0);
    chain.step_size = std::clamp(chain.step_size * std::exp(rate - target_rate), 1e-4, 0.999);
  }
  chain.accepted = 0;
  chain.proposed = 0;
  return chain;
}

struct ChainSchedule {
  long long warmup = 5000;
  long long burn_in = 10000;
  long long thin = 10;
  double target_acceptance = 0.25;
};

/// Runs warm-up, burn-in, then calls visit(sample) for `count` thinned samples.
template <class Visitor>
GibbsChain run_chain(GibbsChain chain, const GibbsTarget& target, RngStream& rng,
                     const ChainSchedule& schedule, long long count, Visitor&& visit) {
  chain = tune_step_size(std::move(chain), target, rng, schedule.warmup, schedule.target_acceptance);
  for (long long i = 0; i < schedule.burn_in; ++i) chain = pcn_step(std::move(chain), target, rng);
  for (long long n = 0; n < count; ++n) {
    for (long long i = 0; i < schedule.thin; ++i) chain = pcn_step(std::move(chain), target, rng);
    visit(static_cast<const FourierField&>(chain.current));
  }
  return chain;
}

/// Unit-L^2 real direction built from e_k and e_{-k}.
inline FourierField unit_direction(const GridSpec& grid, int k1, int k2) {
  if (k1 == 0 && k2 == 0) return FourierField::mode(grid, 0, 0, 1.0);
  return FourierField::mode(grid, k1, k2, Complex(std::numbers::sqrt2 / 2.0, 0.0));
}

/// beta_k(f) = 2<f, Ak> - 2<a1 :f^3: - a2 f, k>, pairings by grid quadrature.
inline double log_derivative(const FourierField& f, const FourierField& k, const GibbsTarget& target) {
  f.check_same_grid(k);
  const PhysicalField fv = to_physical(f);
  const PhysicalField kv = to_physical(k);
  const PhysicalField akv = to_physical(apply_operator(generator_a(), k));
  const double c = target.ctx.c_n;
  double acc = 0.0;
  for (std::size_t i = 0; i < fv.size(); ++i) {
    const double x = fv[i];
    const double wick3 = x * x * x - 3.0 * c * x;
    acc += x * akv[i] - (target.a1 * wick3 - target.a2 * x) * kv[i];
  }
  return 2.0 * acc * f.grid().cell_area();
}

/// u(z) = g(<l_1, z>, ..., <l_m, z>) with g smooth and bounded.
struct CylinderFunctional {
  std::vector<FourierField> directions;
  std::function<double(std::span<const double>)> g;
  std::function<std::vector<double>(std::span<const double>)> grad_g;

  std::vector<double> coordinates(const FourierField& z) const {
    std::vector<double> out;
    for (const auto& l : directions) out.push_back(inner_product(l, z));
    return out;
  }
  double value(const FourierField& z) const { return g(coordinates(z)); }
  /// Directional derivative along k.
  double derivative(const FourierField& z, const FourierField& k) const {
    const auto coords = coordinates(z);
    const auto grad = grad_g(coords);
    double acc = 0.0;
    for (std::size_t i = 0; i < directions.size(); ++i) acc += grad[i] * inner_product(directions[i], k);
    return acc;
  }
};

struct IbpReport {
  stats::Estimate lhs;         // E[d u / d k]
  stats::Estimate rhs;         // -E[beta_k u]
  stats::Estimate difference;  // E[d u / d k + beta_k u]
  double z_score = 0.0;        // |difference| in units of its standard error
  bool passed(double sigmas = 3.0) const { return z_score <= sigmas; }
};

/// Both sides of int du/dk dnu = -int beta_k u dnu from paired per-sample values.
inline IbpReport ibp_report(std::span<const double> lhs, std::span<const double> rhs, int batches = 50) {
  std::vector<double> diff(lhs.size());
  for (std::size_t i = 0; i < lhs.size(); ++i) diff[i] = lhs[i] - rhs[i];
  IbpReport r;
  r.lhs = stats::batch_means(lhs, batches);
  r.rhs = stats::batch_means(rhs, batches);
  r.difference = stats::batch_means(diff, batches);
  if (!(r.difference.se > 0.0)) {
    throw Error(ErrorCode::DegenerateTest, "integration-by-parts difference has zero variance");
  }
  r.z_score = std::abs(r.difference.mean) / r.difference.se;
  return r;
}

inline IbpReport ibp_test(std::span<const FourierField> samples, const FourierField& k,
                          const CylinderFunctional& u, const GibbsTarget& target, int batches = 50) {
  std::vector<double> lhs, rhs;
  for (const auto& z : samples) {
    lhs.push_back(u.derivative(z, k));
    rhs.push_back(-log_derivative(z, k, target) * u.value(z));
  }
  return ibp_report(lhs, rhs, batches);
}

}  // namespace phi42
