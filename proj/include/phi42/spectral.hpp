#pragma once

// Discrete torus geometry and Fourier-space fields.
//
// The torus is [0, 2pi)^2 with orthonormal basis e_k(x) = (2pi)^{-1} exp(i k.x).
// A FourierField stores the coefficients f_k = <f, e_k> for |k|_inf <= N
// densely; physical samples live on a uniform side x side grid.

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "phi42/error.hpp"

namespace phi42 {

using Complex = std::complex<double>;

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

struct GridSpec {
  int cutoff_n = 0;
  int side_points = 2;

  int modes_per_side() const { return 2 * cutoff_n + 1; }
  std::size_t mode_count() const {
    return static_cast<std::size_t>(modes_per_side()) * modes_per_side();
  }
  std::size_t point_count() const {
    return static_cast<std::size_t>(side_points) * side_points;
  }
  /// Quadrature weight of one physical grid point.
  double cell_area() const {
    const double h = kTwoPi / side_points;
    return h * h;
  }
  /// True when products of three retained fields project without aliasing.
  bool dealiased() const { return side_points >= 2 * modes_per_side(); }

  friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

inline GridSpec make_grid(int cutoff_n, int side_points) {
  if (cutoff_n < 0) {
    throw Error(ErrorCode::InvalidDimensions, "cutoff_n must be non-negative");
  }
  if (side_points < 2 || side_points % 2 != 0) {
    throw Error(ErrorCode::InvalidDimensions, "side_points must be even and >= 2");
  }
  if (side_points < 2 * cutoff_n + 1) {
    throw Error(ErrorCode::InvalidDimensions,
                "side_points " + std::to_string(side_points) + " < 2*cutoff_n+1 = " +
                    std::to_string(2 * cutoff_n + 1));
  }
  return GridSpec{cutoff_n, side_points};
}

/// Grid padded to 2(2N+1) points per side, the smallest exact size for cubic terms.
inline GridSpec dealiased_grid(int cutoff_n) {
  return make_grid(cutoff_n, 2 * (2 * cutoff_n + 1));
}

/// Eigenvalue |k|^2 + 1 of -A.
inline double eigenvalue(int k1, int k2) {
  return static_cast<double>(k1) * k1 + static_cast<double>(k2) * k2 + 1.0;
}

class FourierField {
 public:
  FourierField() : FourierField(GridSpec{}) {}
  explicit FourierField(const GridSpec& grid) : grid_(grid), coeffs_(grid.mode_count()) {}

  /// Field equal to `value` everywhere in physical space.
  static FourierField constant(const GridSpec& grid, double value) {
    FourierField f(grid);
    f(0, 0) = kTwoPi * value;
    return f;
  }

  /// Real field with coefficient `c` at k and conj(c) at -k.
  static FourierField mode(const GridSpec& grid, int k1, int k2, Complex c) {
    FourierField f(grid);
    if (!f.contains(k1, k2)) throw Error(ErrorCode::InvalidArgument, "mode outside the retained set");
    if (k1 == 0 && k2 == 0) {
      f(0, 0) = Complex(c.real(), 0.0);
    } else {
      f(k1, k2) = c;
      f(-k1, -k2) = std::conj(c);
    }
    return f;
  }

  const GridSpec& grid() const { return grid_; }
  int cutoff() const { return grid_.cutoff_n; }

  std::size_t index(int k1, int k2) const {
    const int n = grid_.cutoff_n;
    return static_cast<std::size_t>(k1 + n) * grid_.modes_per_side() +
           static_cast<std::size_t>(k2 + n);
  }
  bool contains(int k1, int k2) const {
    const int n = grid_.cutoff_n;
    return std::abs(k1) <= n && std::abs(k2) <= n;
  }

  Complex& operator()(int k1, int k2) { return coeffs_[index(k1, k2)]; }
  const Complex& operator()(int k1, int k2) const { return coeffs_[index(k1, k2)]; }

  std::span<Complex> coeffs() { return coeffs_; }
  std::span<const Complex> coeffs() const { return coeffs_; }

  /// Exact check of coeffs[-k] == conj(coeffs[k]).
  bool is_hermitian() const {
    const int n = grid_.cutoff_n;
    for (int k1 = -n; k1 <= n; ++k1) {
      for (int k2 = -n; k2 <= n; ++k2) {
        if ((*this)(-k1, -k2) != std::conj((*this)(k1, k2))) return false;
      }
    }
    return true;
  }

  bool all_finite() const {
    return std::all_of(coeffs_.begin(), coeffs_.end(), [](const Complex& c) {
      return std::isfinite(c.real()) && std::isfinite(c.imag());
    });
  }

  FourierField& operator+=(const FourierField& other) {
    check_same_grid(other);
    for (std::size_t i = 0; i < coeffs_.size(); ++i) coeffs_[i] += other.coeffs_[i];
    return *this;
  }
  FourierField& operator-=(const FourierField& other) {
    check_same_grid(other);
    for (std::size_t i = 0; i < coeffs_.size(); ++i) coeffs_[i] -= other.coeffs_[i];
    return *this;
  }
  FourierField& operator*=(double s) {
    for (auto& c : coeffs_) c *= s;
    return *this;
  }

  friend FourierField operator+(FourierField a, const FourierField& b) { return a += b; }
  friend FourierField operator-(FourierField a, const FourierField& b) { return a -= b; }
  friend FourierField operator*(double s, FourierField a) { return a *= s; }
  friend FourierField operator*(FourierField a, double s) { return a *= s; }

  void check_same_grid(const FourierField& other) const {
    if (!(grid_ == other.grid_)) {
      throw Error(ErrorCode::GridMismatch, "fields live on different grids");
    }
  }

 private:
  GridSpec grid_;
  std::vector<Complex> coeffs_;
};

/// Calls fn(k1, k2) for every retained mode.
template <class Fn>
void for_each_mode(const GridSpec& grid, Fn&& fn) {
  const int n = grid.cutoff_n;
  for (int k1 = -n; k1 <= n; ++k1) {
    for (int k2 = -n; k2 <= n; ++k2) fn(k1, k2);
  }
}

/// Point samples of a real field, row-major with x1 the slow index.
class PhysicalField {
 public:
  PhysicalField() = default;
  explicit PhysicalField(int side, double value = 0.0)
      : side_(side), values_(static_cast<std::size_t>(side) * side, value) {}

  int side() const { return side_; }
  std::size_t size() const { return values_.size(); }

  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }
  double& operator()(int j1, int j2) { return values_[static_cast<std::size_t>(j1) * side_ + j2]; }
  double operator()(int j1, int j2) const {
    return values_[static_cast<std::size_t>(j1) * side_ + j2];
  }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }

  PhysicalField& operator+=(const PhysicalField& o) {
    check_same_side(o);
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += o.values_[i];
    return *this;
  }
  PhysicalField& operator-=(const PhysicalField& o) {
    check_same_side(o);
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] -= o.values_[i];
    return *this;
  }
  PhysicalField& operator*=(const PhysicalField& o) {
    check_same_side(o);
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] *= o.values_[i];
    return *this;
  }
  PhysicalField& operator*=(double s) {
    for (auto& v : values_) v *= s;
    return *this;
  }
  friend PhysicalField operator+(PhysicalField a, const PhysicalField& b) { return a += b; }
  friend PhysicalField operator-(PhysicalField a, const PhysicalField& b) { return a -= b; }
  friend PhysicalField operator*(PhysicalField a, const PhysicalField& b) { return a *= b; }
  friend PhysicalField operator*(double s, PhysicalField a) { return a *= s; }

  void check_same_side(const PhysicalField& o) const {
    if (side_ != o.side_) throw Error(ErrorCode::GridMismatch, "physical grids differ");
  }

 private:
  int side_ = 0;
  std::vector<double> values_;
};

/// Applies fn elementwise, returning a new field.
template <class Fn>
PhysicalField map_values(const PhysicalField& f, Fn&& fn) {
  PhysicalField out(f.side());
  for (std::size_t i = 0; i < f.size(); ++i) out[i] = fn(f[i]);
  return out;
}

namespace detail {

struct FftPlans {
  fftw_plan forward = nullptr;   // r2c
  fftw_plan backward = nullptr;  // c2r
};

inline const FftPlans& plans_for(int side) {
  static std::mutex mutex;
  static std::map<int, FftPlans> cache;
  std::lock_guard lock(mutex);
  auto it = cache.find(side);
  if (it != cache.end()) return it->second;
  const std::size_t half = static_cast<std::size_t>(side) * (side / 2 + 1);
  std::vector<double> real(static_cast<std::size_t>(side) * side);
  std::vector<Complex> spec(half);
  auto* spec_ptr = reinterpret_cast<fftw_complex*>(spec.data());
  FftPlans plans;
  const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
  plans.forward = fftw_plan_dft_r2c_2d(side, side, real.data(), spec_ptr, flags);
  plans.backward = fftw_plan_dft_c2r_2d(side, side, spec_ptr, real.data(), flags);
  return cache.emplace(side, plans).first->second;
}

}  // namespace detail

/// Point values of f on its grid.
inline PhysicalField to_physical(const FourierField& f) {
  const GridSpec& g = f.grid();
  const int m = g.side_points;
  const int half = m / 2 + 1;
  const int n = g.cutoff_n;
  std::vector<Complex> spec(static_cast<std::size_t>(m) * half);
  const double scale = 1.0 / kTwoPi;
  for (int k1 = -n; k1 <= n; ++k1) {
    const int m1 = (k1 + m) % m;
    for (int k2 = 0; k2 <= n; ++k2) {
      spec[static_cast<std::size_t>(m1) * half + k2] = f(k1, k2) * scale;
    }
  }
  PhysicalField out(m);
  fftw_execute_dft_c2r(detail::plans_for(m).backward,
                       reinterpret_cast<fftw_complex*>(spec.data()), out.values().data());
  return out;
}

/// Projection of physical samples onto the retained modes of `grid`.
/// Hermitian symmetry of the result is exact.
inline FourierField to_fourier(const PhysicalField& values, const GridSpec& grid) {
  const int m = grid.side_points;
  if (values.side() != m) throw Error(ErrorCode::GridMismatch, "sample grid does not match");
  const int half = m / 2 + 1;
  const int n = grid.cutoff_n;
  std::vector<Complex> spec(static_cast<std::size_t>(m) * half);
  std::vector<double> input(values.values().begin(), values.values().end());
  fftw_execute_dft_r2c(detail::plans_for(m).forward, input.data(),
                       reinterpret_cast<fftw_complex*>(spec.data()));
  const double scale = kTwoPi / (static_cast<double>(m) * m);
  FourierField f(grid);
  for (int k1 = -n; k1 <= n; ++k1) {
    const int m1 = (k1 + m) % m;
    for (int k2 = 1; k2 <= n; ++k2) {
      const Complex c = spec[static_cast<std::size_t>(m1) * half + k2] * scale;
      f(k1, k2) = c;
      f(-k1, -k2) = std::conj(c);
    }
  }
  for (int k1 = 1; k1 <= n; ++k1) {
    const Complex c = spec[static_cast<std::size_t>(k1) * half] * scale;
    f(k1, 0) = c;
    f(-k1, 0) = std::conj(c);
  }
  f(0, 0) = Complex(spec[0].real() * scale, 0.0);
  return f;
}

/// Copies the modes two grids have in common; modes beyond the target cutoff are dropped.
/// f(. - s h) for a shift of (s1, s2) grid cells, h = 2pi / side; grid samples are permuted exactly.
inline FourierField translate(const FourierField& f, int s1, int s2) {
  FourierField out(f.grid());
  const double h = kTwoPi / f.grid().side_points;
  for_each_mode(f.grid(), [&](int k1, int k2) {
    const double phase = -h * (static_cast<double>(k1) * s1 + static_cast<double>(k2) * s2);
    out(k1, k2) = f(k1, k2) * Complex(std::cos(phase), std::sin(phase));
  });
  return out;
}

inline FourierField change_grid(const FourierField& f, const GridSpec& target) {
  FourierField out(target);
  const int n = std::min(f.cutoff(), target.cutoff_n);
  for (int k1 = -n; k1 <= n; ++k1) {
    for (int k2 = -n; k2 <= n; ++k2) out(k1, k2) = f(k1, k2);
  }
  return out;
}

/// Fourier multiplier given by a real symbol k -> s(k).
struct LinearOperator {
  std::function<double(int, int)> symbol;
  double operator()(int k1, int k2) const { return symbol(k1, k2); }
};

/// A = Laplacian - 1.
inline LinearOperator generator_a() {
  return {[](int k1, int k2) { return -eigenvalue(k1, k2); }};
}

/// e^{tA}.
inline LinearOperator heat_semigroup(double t) {
  return {[t](int k1, int k2) { return std::exp(-t * eigenvalue(k1, k2)); }};
}

/// Lambda^s = (-A)^{s/2}.
inline LinearOperator bessel_potential(double s) {
  return {[s](int k1, int k2) { return std::pow(eigenvalue(k1, k2), 0.5 * s); }};
}

inline FourierField apply_operator(const LinearOperator& op, FourierField f) {
  for_each_mode(f.grid(), [&](int k1, int k2) { f(k1, k2) *= op(k1, k2); });
  return f;
}

/// Symbol tabulated on one grid, for operators applied every time step.
class ModeMultiplier {
 public:
  ModeMultiplier() = default;
  ModeMultiplier(const LinearOperator& op, const GridSpec& grid) : grid_(grid) {
    values_.reserve(grid.mode_count());
    for_each_mode(grid, [&](int k1, int k2) { values_.push_back(op(k1, k2)); });
  }

  const GridSpec& grid() const { return grid_; }
  std::span<const double> values() const { return values_; }

  FourierField apply(FourierField f) const {
    if (!(f.grid() == grid_)) throw Error(ErrorCode::GridMismatch, "multiplier grid differs");
    auto c = f.coeffs();
    for (std::size_t i = 0; i < c.size(); ++i) c[i] *= values_[i];
    return f;
  }

 private:
  GridSpec grid_;
  std::vector<double> values_;
};

/// Fourier coefficients of the pointwise product f*g, truncated to the retained modes.
inline FourierField dealiased_product(const FourierField& f, const FourierField& g) {
  f.check_same_grid(g);
  PhysicalField p = to_physical(f);
  p *= to_physical(g);
  return to_fourier(p, f.grid());
}

/// Quadrature L^p norm of physical samples (p = infinity allowed).
inline double lp_norm(const PhysicalField& f, double p) {
  if (!(p >= 1.0)) throw Error(ErrorCode::InvalidArgument, "p must be >= 1");
  double peak = 0.0;
  for (double v : f.values()) peak = std::max(peak, std::abs(v));
  if (std::isinf(p) || peak == 0.0) return peak;
  const double h = kTwoPi / f.side();
  double acc = 0.0;
  for (double v : f.values()) acc += std::pow(std::abs(v) / peak, p);
  return peak * std::pow(acc * h * h, 1.0 / p);
}

inline double lp_norm_physical(const FourierField& f, double p) {
  return lp_norm(to_physical(f), p);
}

/// L^2 norm by Parseval, scaled so tiny fields do not underflow.
inline double l2_norm(const FourierField& f) {
  double peak = 0.0;
  for (const auto& c : f.coeffs()) peak = std::max({peak, std::abs(c.real()), std::abs(c.imag())});
  if (peak == 0.0) return 0.0;
  double acc = 0.0;
  for (const auto& c : f.coeffs()) acc += std::norm(c / peak);
  return peak * std::sqrt(acc);
}

/// L^2(T^2) inner product of two real fields.
inline double inner_product(const FourierField& f, const FourierField& g) {
  f.check_same_grid(g);
  double acc = 0.0;
  auto a = f.coeffs();
  auto b = g.coeffs();
  for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] * std::conj(b[i])).real();
  return acc;
}

/// Quadrature of samples over the torus.
inline double integrate(const PhysicalField& f) {
  const double h = kTwoPi / f.side();
  double acc = 0.0;
  for (double v : f.values()) acc += v;
  return acc * h * h;
}

}  // namespace phi42
