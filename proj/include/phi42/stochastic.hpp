#pragma once

// Gaussian free field samples and the exact Ornstein-Uhlenbeck transition
// of the stochastic convolution Z(t) = int_0^t e^{(t-s)A} dW(s).

#include <cmath>
#include <vector>

#include "phi42/rng.hpp"
#include "phi42/spectral.hpp"

namespace phi42 {

/// True for the representative of each {k, -k} pair (k = 0 included).
inline bool in_half_space(int k1, int k2) { return k2 > 0 || (k2 == 0 && k1 >= 0); }

/// Variance 1/(2(|k|^2+1)) of mode k under mu = N(0, (1/2)(-Laplacian+1)^{-1}).
inline double gff_mode_variance(int k1, int k2) { return 0.5 / eigenvalue(k1, k2); }

namespace detail {

/// Fills `f` with independent Gaussians of the given per-mode variance
/// (E|f_k|^2 = var(k)), Hermitian by construction.
template <class VarianceFn>
void fill_gaussian(FourierField& f, RngStream& rng, VarianceFn&& var) {
  const int n = f.cutoff();
  for (int k2 = 0; k2 <= n; ++k2) {
    for (int k1 = -n; k1 <= n; ++k1) {
      if (!in_half_space(k1, k2)) continue;
      const double sd = std::sqrt(var(k1, k2));
      if (k1 == 0 && k2 == 0) {
        f(0, 0) = Complex(sd * rng.normal(), 0.0);
      } else {
        const double re = rng.normal();
        const double im = rng.normal();
        const Complex c = Complex(re, im) * (sd * std::numbers::sqrt2 * 0.5);
        f(k1, k2) = c;
        f(-k1, -k2) = std::conj(c);
      }
    }
  }
}

}  // namespace detail

/// Draw from the Gaussian free field mu on the retained modes.
inline FourierField sample_gff(const GridSpec& grid, RngStream& rng) {
  FourierField f(grid);
  detail::fill_gaussian(f, rng, [](int k1, int k2) { return gff_mode_variance(k1, k2); });
  return f;
}

struct OuState {
  FourierField z;
  double t = 0.0;
  bool stationary = false;
};

/// Exact one-step transition of dZ = AZ dt + dW for a fixed dt, tabulated per mode.
class OuPropagator {
 public:
  OuPropagator(const GridSpec& grid, double dt, double noise_scale = 1.0) : grid_(grid), dt_(dt) {
    if (!(dt > 0.0)) throw Error(ErrorCode::InvalidArgument, "dt must be positive");
    decay_.reserve(grid.mode_count());
    variance_.reserve(grid.mode_count());
    for_each_mode(grid, [&](int k1, int k2) {
      const double lam = eigenvalue(k1, k2);
      decay_.push_back(std::exp(-lam * dt));
      variance_.push_back(noise_scale * noise_scale * step_variance(lam, dt));
    });
  }

  /// Variance (1 - e^{-2 lam dt}) / (2 lam) of the noise added in one step.
  static double step_variance(double lam, double dt) { return -std::expm1(-2.0 * lam * dt) / (2.0 * lam); }

  double dt() const { return dt_; }

  OuState step(const OuState& state, RngStream& rng) const {
    if (!(state.z.grid() == grid_)) throw Error(ErrorCode::GridMismatch, "OU grid differs");
    FourierField eta(grid_);
    const int n = grid_.cutoff_n;
    const int side = grid_.modes_per_side();
    detail::fill_gaussian(eta, rng, [&](int k1, int k2) {
      return variance_[static_cast<std::size_t>(k1 + n) * side + (k2 + n)];
    });
    OuState next{state.z, state.t + dt_, state.stationary};
    auto c = next.z.coeffs();
    auto e = eta.coeffs();
    for (std::size_t i = 0; i < c.size(); ++i) c[i] = decay_[i] * c[i] + e[i];
    return next;
  }

 private:
  GridSpec grid_;
  double dt_;
  std::vector<double> decay_;
  std::vector<double> variance_;
};

inline OuState ou_step_exact(const OuState& state, double dt, RngStream& rng) {
  return OuPropagator(state.z.grid(), dt).step(state, rng);
}

/// Z_1(0) for the process started at t = -infinity: a draw from mu.
inline OuState sample_stationary_ou(const GridSpec& grid, RngStream& rng) {
  return OuState{sample_gff(grid, rng), 0.0, true};
}

/// V(t) = e^{tA} x.
inline FourierField heat_drift(const FourierField& x, double t) {
  return apply_operator(heat_semigroup(t), x);
}

}  // namespace phi42
