#include "edm/schedule.hpp"

#include <cmath>
#include <string>

namespace edm {

DiffusionSchedule::DiffusionSchedule(double beta_min, double beta_max, double horizon)
    : beta_min_(beta_min), beta_max_(beta_max), horizon_(horizon) {
  if (!(beta_min > 0.0)) throw ConfigError("beta_min must be positive");
  if (!(beta_max > beta_min)) throw ConfigError("beta_max must exceed beta_min");
  if (!(horizon > 0.0)) throw ConfigError("horizon must be positive");
}

double DiffusionSchedule::checked_time(double t) const {
  if (t >= 0.0 && t <= horizon_) return t;
  if (t < 0.0 && t >= -kClampTolerance) return 0.0;
  if (t > horizon_ && t <= horizon_ + kClampTolerance) return horizon_;
  throw DomainError("time " + std::to_string(t) + " outside [0, " + std::to_string(horizon_) +
                    "]");
}

double DiffusionSchedule::beta(double t) const {
  t = checked_time(t);
  return beta_min_ + t * (beta_max_ - beta_min_);
}

double DiffusionSchedule::integral_beta(double t) const {
  t = checked_time(t);
  return beta_min_ * t + 0.5 * (beta_max_ - beta_min_) * t * t;
}

KernelCoeffs DiffusionSchedule::kernel_coeffs(double t) const {
  const double ib = integral_beta(t);
  // expm1 keeps std accurate near t = 0, and std(0) is exactly 0.
  return {std::exp(-0.5 * ib), std::sqrt(-std::expm1(-ib))};
}

Vec DiffusionSchedule::perturb(const Vec& x0, double t, const Vec& noise) const {
  require_same_dim(x0, noise, "perturb");
  const KernelCoeffs k = kernel_coeffs(t);
  return k.mean_coeff * x0 + k.std * noise;
}

Vec DiffusionSchedule::drift(const Vec& y, double t) const { return -0.5 * beta(t) * y; }

double DiffusionSchedule::diffusion(double t) const { return std::sqrt(beta(t)); }

}  // namespace edm
