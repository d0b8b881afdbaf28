#pragma once

#include "edm/types.hpp"

namespace edm {

/// Coefficients of the Gaussian perturbation kernel q(y_t | y_0) =
/// N(mean_coeff * y_0, std^2 I).
struct KernelCoeffs {
  double mean_coeff = 1.0;
  double std = 0.0;
};

/// Variance-preserving SDE with a linear noise rate
///   beta(t) = beta_min + t (beta_max - beta_min),  t in [0, horizon].
/// Forward process: dy = -1/2 beta(t) y dt + sqrt(beta(t)) dw.
class DiffusionSchedule {
 public:
  static constexpr double kDefaultBetaMin = 0.1;
  static constexpr double kDefaultBetaMax = 20.0;
  /// Times within this distance outside [0, T] are clamped instead of rejected.
  static constexpr double kClampTolerance = 1e-12;

  DiffusionSchedule() = default;
  DiffusionSchedule(double beta_min, double beta_max, double horizon = 1.0);

  double beta_min() const { return beta_min_; }
  double beta_max() const { return beta_max_; }
  double horizon() const { return horizon_; }

  /// Clamp t into [0, T] when the violation is floating-point drift; throw
  /// DomainError otherwise.
  double checked_time(double t) const;

  double beta(double t) const;
  /// Closed form of the integral of beta over [0, t].
  double integral_beta(double t) const;
  KernelCoeffs kernel_coeffs(double t) const;

  /// mean_coeff(t) * x0 + std(t) * noise.
  Vec perturb(const Vec& x0, double t, const Vec& noise) const;

  /// VP drift f(y, t) = -1/2 beta(t) y.
  Vec drift(const Vec& y, double t) const;
  /// VP diffusion g(t) = sqrt(beta(t)).
  double diffusion(double t) const;

 private:
  double beta_min_ = kDefaultBetaMin;
  double beta_max_ = kDefaultBetaMax;
  double horizon_ = 1.0;
};

}  // namespace edm
