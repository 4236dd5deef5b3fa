#pragma once

// Time stepping of the shifted equation
//     dY = [AY - a1 Y^3 + Psi(Y, Zbar_x)] dt,  Y(0) = 0,  X = Y + e^{tA}x + Z,
// and of the lambda-dissipative coupled pair driven by the same Z.
//
// Y is advanced by exponential Euler (exact linear flow, nonlinearity frozen
// over one step); Z by the exact OU transition. All cubic terms are formed on
// the padded grid and projected once, so the Galerkin drift is exactly
// P_N(-a1 :X^3: + a2 X).

#include <cmath>
#include <optional>
#include <vector>

#include "phi42/besov.hpp"
#include "phi42/rng.hpp"
#include "phi42/spectral.hpp"
#include "phi42/stochastic.hpp"
#include "phi42/wick.hpp"

namespace phi42 {

struct SimConfig {
  double a1 = 1.0;
  double a2 = 0.0;
  GridSpec grid = dealiased_grid(8);
  double dt = 1e-3;
  double horizon = 1.0;
  int record_stride = 10;
  BesovParams besov{};
  double delta = 0.02;  // time weight exponent of the trajectory norm
  bool noise = true;    // false freezes Z at 0

  void validate() const {
    if (!(a1 >= 0.0)) throw Error(ErrorCode::InvalidArgument, "a1 must be non-negative");
    if (!std::isfinite(a2)) throw Error(ErrorCode::InvalidArgument, "a2 must be finite");
    if (!(dt > 0.0) || !std::isfinite(dt)) throw Error(ErrorCode::InvalidArgument, "dt must be positive");
    if (!(horizon > 0.0)) throw Error(ErrorCode::InvalidArgument, "horizon must be positive");
    if (record_stride < 1) throw Error(ErrorCode::InvalidArgument, "record_stride must be >= 1");
    if (!(delta > 0.0 && delta < -besov.alpha)) {
      throw Error(ErrorCode::InvalidArgument, "need 0 < delta < -alpha");
    }
    make_grid(grid.cutoff_n, grid.side_points);
  }

  long long steps() const { return std::llround(horizon / dt); }
};

struct ShiftedState {
  FourierField y;
  WickBundle bundle;
  FourierField x0;
  double t = 0.0;
};

inline ShiftedState make_shifted_state(const FourierField& x0, const WickContext& ctx) {
  const FourierField zero(x0.grid());
  return ShiftedState{zero, make_bundle(zero, 0.0, ctx), x0, 0.0};
}

/// X = Y + e^{tA}x0 + Z.
inline FourierField reconstruct_x(const ShiftedState& s) {
  return s.y + heat_drift(s.x0, s.t) + s.bundle.z;
}

namespace detail {

/// Pointwise Psi(Y, Zbar) = -a1(3Y^2 Zbar + 3Y :Zbar^2: + :Zbar^3:) + a2(Y + Zbar).
inline PhysicalField psi_values(const PhysicalField& y, const WickBundle& bundle,
                                const PhysicalField& v, double a1, double a2) {
  const PhysicalField zbar2 = shifted_wick(bundle, v, 2);
  const PhysicalField zbar3 = shifted_wick(bundle, v, 3);
  PhysicalField out(y.side());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double zbar = bundle.z_values[i] + v[i];
    out[i] = -a1 * (3.0 * y[i] * y[i] * zbar + 3.0 * y[i] * zbar2[i] + zbar3[i]) + a2 * (y[i] + zbar);
  }
  return out;
}

/// Frozen drift of the shifted equation, -a1 Y^3 + Psi, projected to the retained modes.
inline FourierField shifted_drift(const PhysicalField& y, const WickBundle& bundle,
                                  const PhysicalField& v, double a1, double a2,
                                  const GridSpec& grid) {
  PhysicalField total = psi_values(y, bundle, v, a1, a2);
  for (std::size_t i = 0; i < total.size(); ++i) total[i] -= a1 * y[i] * y[i] * y[i];
  return to_fourier(total, grid);
}

/// N(X + u) - N(X) for N(X) = -a1 (X^3 - 3cX) + a2 X, expanded so it is exactly linear in
/// small u (no cancellation between two separately rounded drifts).
inline FourierField drift_difference(const PhysicalField& x, const PhysicalField& u, double a1,
                                     double a2, double c, const GridSpec& grid) {
  PhysicalField out(x.side());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double xi = x[i], ui = u[i];
    out[i] = -a1 * ui * (3.0 * xi * xi + 3.0 * xi * ui + ui * ui - 3.0 * c) + a2 * ui;
  }
  return to_fourier(out, grid);
}

inline void check_finite(const FourierField& f, const char* what) {
  if (!f.all_finite()) throw Error(ErrorCode::NonfiniteField, what);
}

}  // namespace detail

inline FourierField psi(const FourierField& y, const WickBundle& bundle, const FourierField& v,
                        const SimConfig& cfg) {
  y.check_same_grid(v);
  y.check_same_grid(bundle.z);
  return to_fourier(detail::psi_values(to_physical(y), bundle, to_physical(v), cfg.a1, cfg.a2),
                    y.grid());
}

/// Exponential Euler propagators for one (grid, dt, shift) triple:
/// decay e^{-(lam_k + shift) dt} and weight (1 - e^{-(lam_k + shift) dt}) / (lam_k + shift).
class ExpEulerMultipliers {
 public:
  ExpEulerMultipliers(const GridSpec& grid, double dt, double shift = 0.0)
      : decay_({[=](int k1, int k2) { return std::exp(-(eigenvalue(k1, k2) + shift) * dt); }}, grid),
        weight_({[=](int k1, int k2) {
                   const double rate = eigenvalue(k1, k2) + shift;
                   return -std::expm1(-rate * dt) / rate;
                 }},
                grid) {}

  /// e^{L dt} f + phi_1(L dt) dt g.
  FourierField advance(const FourierField& f, const FourierField& g) const {
    FourierField out = decay_.apply(f);
    out += weight_.apply(g);
    return out;
  }

 private:
  ModeMultiplier decay_;
  ModeMultiplier weight_;
};

/// Stepper for the shifted equation with tabulated multipliers.
class ShiftedIntegrator {
 public:
  ShiftedIntegrator(const SimConfig& cfg, const WickContext& ctx)
      : cfg_(cfg), ctx_(ctx), euler_(cfg.grid, cfg.dt), ou_(cfg.grid, cfg.dt, cfg.noise ? 1.0 : 0.0) {
    cfg.validate();
  }

  const SimConfig& config() const { return cfg_; }
  const WickContext& context() const { return ctx_; }

  /// The frozen drift -a1 Y^3 + Psi(Y, Zbar) at the current state.
  FourierField drift(const ShiftedState& s) const {
    return detail::shifted_drift(to_physical(s.y), s.bundle, to_physical(heat_drift(s.x0, s.t)),
                                 cfg_.a1, cfg_.a2, cfg_.grid);
  }

  /// Next Z from the exact OU transition (stays 0 with noise disabled).
  FourierField next_noise(const ShiftedState& s, RngStream& rng) const {
    if (!cfg_.noise) return s.bundle.z;
    return ou_.step(OuState{s.bundle.z, s.t, false}, rng).z;
  }

  /// Advances Y by one step and installs `next_z` as Z(t + dt).
  ShiftedState step_with_noise(const ShiftedState& s, const FourierField& next_z) const {
    ShiftedState out;
    out.y = euler_.advance(s.y, drift(s));
    detail::check_finite(out.y, "shifted remainder Y blew up");
    out.t = s.t + cfg_.dt;
    out.bundle = make_bundle(next_z, out.t, ctx_);
    out.x0 = s.x0;
    return out;
  }

  ShiftedState step(const ShiftedState& s, RngStream& rng) const {
    return step_with_noise(s, next_noise(s, rng));
  }

 private:
  SimConfig cfg_;
  WickContext ctx_;
  ExpEulerMultipliers euler_;
  OuPropagator ou_;
};

inline ShiftedState step_shifted(const ShiftedState& state, const SimConfig& cfg,
                                 const WickContext& ctx, RngStream& rng) {
  return ShiftedIntegrator(cfg, ctx).step(state, rng);
}

// ---------------------------------------------------------------------------
// Coupled pair

struct CouplingState {
  ShiftedState shifted;  // Y, Z and x0
  FourierField u;        // X~ - X
  FourierField x1;
  double lambda = 20.0;
  double drift_cost = 0.0;  // int_0^t ||X - X~||^2_{L^2} ds
  double R = 1e6;
  bool tau_r_hit = false;

  /// Y~ = Y + u - e^{tA}(x1 - x0).
  FourierField y_tilde() const {
    return shifted.y + u - heat_drift(x1 - shifted.x0, shifted.t);
  }
  FourierField x() const { return reconstruct_x(shifted); }
  FourierField x_tilde() const { return reconstruct_x(shifted) + u; }
};

inline CouplingState make_coupling_state(const FourierField& x0, const FourierField& x1,
                                         double lambda, double R, const WickContext& ctx) {
  if (!(lambda >= 0.0)) throw Error(ErrorCode::InvalidArgument, "lambda must be non-negative");
  return CouplingState{make_shifted_state(x0, ctx), x1 - x0, x1, lambda, 0.0, R, false};
}

/// v = lambda (X~ - X), switched off once the drift budget R is spent.
inline FourierField girsanov_drift(const CouplingState& s) {
  if (s.tau_r_hit) return FourierField(s.u.grid());
  return s.lambda * s.u;
}

/// Stepper for the coupled system. The coupled member is advanced through
/// u = X~ - X with du = (A - lambda)u + [N(X~) - N(X)], the lambda term inside
/// the exact linear flow; u = 0 is therefore preserved exactly.
class CoupledIntegrator {
 public:
  CoupledIntegrator(const SimConfig& cfg, const WickContext& ctx, double lambda)
      : shifted_(cfg, ctx), plain_(cfg.grid, cfg.dt), coupled_(cfg.grid, cfg.dt, lambda),
        lambda_(lambda) {}

  const ShiftedIntegrator& shifted() const { return shifted_; }

  CouplingState step_with_noise(const CouplingState& s, const FourierField& next_z) const {
    if (s.lambda != lambda_) throw Error(ErrorCode::InvalidArgument, "lambda differs from integrator");
    const SimConfig& cfg = shifted_.config();
    const ShiftedState& sh = s.shifted;
    const PhysicalField y = to_physical(sh.y);
    const PhysicalField v0 = to_physical(heat_drift(sh.x0, sh.t));
    const FourierField n0 = detail::shifted_drift(y, sh.bundle, v0, cfg.a1, cfg.a2, cfg.grid);
    const FourierField dn = detail::drift_difference(y + sh.bundle.z_values + v0, to_physical(s.u),
                                                     cfg.a1, cfg.a2, shifted_.context().c_n, cfg.grid);

    CouplingState out = s;
    out.shifted.y = plain_.advance(sh.y, n0);
    detail::check_finite(out.shifted.y, "shifted remainder Y blew up");
    // After tau_R the Girsanov drift is off and u follows the uncoupled difference.
    out.u = (s.tau_r_hit ? plain_ : coupled_).advance(s.u, dn);
    detail::check_finite(out.u, "coupling difference blew up");
    out.shifted.t = sh.t + cfg.dt;
    out.shifted.bundle = make_bundle(next_z, out.shifted.t, shifted_.context());

    const double gap = l2_norm(s.u);
    out.drift_cost = s.drift_cost + cfg.dt * gap * gap;
    if (out.drift_cost >= s.R) out.tau_r_hit = true;
    return out;
  }

  CouplingState step(const CouplingState& s, RngStream& rng) const {
    return step_with_noise(s, shifted_.next_noise(s.shifted, rng));
  }

 private:
  ShiftedIntegrator shifted_;
  ExpEulerMultipliers plain_;
  ExpEulerMultipliers coupled_;
  double lambda_;
};

inline CouplingState step_coupled(const CouplingState& state, const SimConfig& cfg,
                                  const WickContext& ctx, RngStream& rng) {
  return CoupledIntegrator(cfg, ctx, state.lambda).step(state, rng);
}

// ---------------------------------------------------------------------------
// A-priori L^p diagnostics

struct ShiftedSnapshot {
  double t = 0.0;
  FourierField y;
  WickNorms norms;
};

inline ShiftedSnapshot snapshot(const ShiftedState& s, const BesovParams& params) {
  return {s.t, s.y, wick_norms(s.bundle, params)};
}

struct AprioriRow {
  double t = 0.0;
  double lp_power = 0.0;         // ||Y(t)||_{L^p}^p
  double lp_integral = 0.0;      // int_1^t ||Y||_{L^p}^p ds
  double gradient_integral = 0.0;  // int_1^t ||Y^{p-2} |grad Y|^2||_{L^1} ds
  double noise_integral = 0.0;   // int_1^t (1 + ||x0||^g + ||Z||^g + sum ||:Z^n:||^g) ds
  double lhs() const { return lp_power + lp_integral + gradient_integral; }
};

struct AprioriReport {
  int p = 2;
  double gamma = 4.0;
  std::vector<AprioriRow> rows;
  double fitted_constant = 0.0;  // smallest C with lhs <= C (1 + noise_integral)
  double growth_exponent = 0.0;  // slope of log lp_integral against log(t - 1), second half
  bool superlinear = false;
};

/// Physical samples of d/dx_i f.
inline PhysicalField partial_derivative(const FourierField& f, int axis) {
  FourierField d(f.grid());
  for_each_mode(f.grid(), [&](int k1, int k2) {
    d(k1, k2) = Complex(0.0, axis == 0 ? k1 : k2) * f(k1, k2);
  });
  return to_physical(d);
}

inline AprioriReport apriori_diagnostic(const std::vector<ShiftedSnapshot>& traj, int p,
                                        double x0_norm, double gamma = 4.0) {
  if (p < 2 || p % 2 != 0) throw Error(ErrorCode::InvalidArgument, "p must be even and >= 2");
  if (traj.empty() || traj.back().t < 1.0 - 1e-12) {
    throw Error(ErrorCode::InsufficientHorizon, "trajectory must reach t = 1");
  }
  AprioriReport report;
  report.p = p;
  report.gamma = gamma;
  double prev_t = 0.0, prev_lp = 0.0, prev_grad = 0.0, prev_noise = 0.0;
  bool started = false;
  AprioriRow acc;
  for (const auto& snap : traj) {
    if (snap.t < 1.0 - 1e-12) continue;
    const PhysicalField y = to_physical(snap.y);
    const PhysicalField dx = partial_derivative(snap.y, 0);
    const PhysicalField dy = partial_derivative(snap.y, 1);
    double lp = 0.0, grad = 0.0;
    const double w = snap.y.grid().cell_area();
    for (std::size_t i = 0; i < y.size(); ++i) {
      const double yp2 = std::pow(y[i], p - 2);
      lp += yp2 * y[i] * y[i] * w;
      grad += yp2 * (dx[i] * dx[i] + dy[i] * dy[i]) * w;
    }
    const double noise = 1.0 + std::pow(x0_norm, gamma) + std::pow(snap.norms.z, gamma) +
                         std::pow(snap.norms.z2, gamma) + std::pow(snap.norms.z3, gamma);
    if (started) {
      const double h = snap.t - prev_t;
      acc.lp_integral += 0.5 * h * (lp + prev_lp);
      acc.gradient_integral += 0.5 * h * (grad + prev_grad);
      acc.noise_integral += 0.5 * h * (noise + prev_noise);
    }
    acc.t = snap.t;
    acc.lp_power = lp;
    report.rows.push_back(acc);
    report.fitted_constant = std::max(report.fitted_constant, acc.lhs() / (1.0 + acc.noise_integral));
    prev_t = snap.t;
    prev_lp = lp;
    prev_grad = grad;
    prev_noise = noise;
    started = true;
  }
  // Growth exponent of int_1^t over the second half of the horizon; linear growth gives 1.
  const double t_end = report.rows.back().t;
  if (t_end >= 4.0) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int n = 0;
    for (const auto& r : report.rows) {
      if (r.t < 0.5 * t_end || r.lp_integral <= 0.0) continue;
      const double lx = std::log(r.t - 1.0), ly = std::log(r.lp_integral);
      sx += lx; sy += ly; sxx += lx * lx; sxy += lx * ly; ++n;
    }
    if (n >= 2 && sxx * n - sx * sx > 0.0) {
      report.growth_exponent = (n * sxy - sx * sy) / (n * sxx - sx * sx);
      report.superlinear = report.growth_exponent > 1.25;
    }
  }
  return report;
}

}  // namespace phi42
