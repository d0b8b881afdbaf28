#pragma once

#include <vector>

#include "edm/feature_space.hpp"
#include "edm/rng.hpp"
#include "edm/schedule.hpp"
#include "edm/types.hpp"

namespace edm {

struct EnergyConfig {
  double lambda1 = 73.0;
  double lambda2 = 0.72;
  /// One weight per encoder layer; s2 averages over their count.
  std::vector<double> layer_weights = {0.5, 1.0, 1.0, 1.0, 1.0};
  /// Reference is x_t ~ q(x_t | x0) when true, the raw x0 otherwise.
  bool perturb_reference = true;
  /// Debug variants for ablations: squared per-layer distances in s2, and
  /// lambda1 s1 - lambda2 s2 instead of the sum.
  bool squared_distance = false;
  bool subtract_preserving = false;

  bool guided() const { return lambda1 + lambda2 > 0.0; }
  void validate(const FeatureEncoder& encoder) const;
};

/// Rain-relevance term: z(x_ref, p_n) + z(y, p_n). Lies in [0, 2].
double s1(const Vec& y, const Vec& x_ref, const FeatureEncoder& encoder, const PromptPair& prompts);

/// Rain-irrelevance term: (1/m) sum_k w_k ||E^k(y) - E^k(x_ref)||.
double s2(const Vec& y, const Vec& x_ref, const FeatureEncoder& encoder, const EnergyConfig& config);

struct EnergyValue {
  double value = 0.0;
  /// The reference the value was computed against (x_t or x0).
  Vec reference;
};

/// Draws eps from rng and returns perturb(x0, t, eps) when perturb_reference is
/// set, x0 unchanged otherwise (the kernel at t = 0).
Vec draw_reference(const Vec& x0, double t, const DiffusionSchedule& schedule,
                   const EnergyConfig& config, CounterRng& rng);

/// lambda1 s1(y, x_ref) + lambda2 s2(y, x_ref) for a given reference.
double energy_at(const Vec& y, const Vec& x_ref, const FeatureEncoder& encoder,
                 const PromptPair& prompts, const EnergyConfig& config);

/// Single-sample Monte Carlo energy: draws the reference, then evaluates.
EnergyValue total_energy(const Vec& y, const Vec& x0, double t, const DiffusionSchedule& schedule,
                         const FeatureEncoder& encoder, const PromptPair& prompts,
                         const EnergyConfig& config, CounterRng& rng);

Vec s1_gradient(const Vec& y, const FeatureEncoder& encoder, const PromptPair& prompts);
/// A layer whose features coincide contributes a zero subgradient.
Vec s2_gradient(const Vec& y, const Vec& x_ref, const FeatureEncoder& encoder,
                const EnergyConfig& config);

/// Exact gradient of energy_at with respect to y.
Vec energy_gradient(const Vec& y, const Vec& x_ref, const FeatureEncoder& encoder,
                    const PromptPair& prompts, const EnergyConfig& config);

/// Value and gradient sharing one encoder pass over y and x_ref.
struct EnergyEvaluation {
  double value = 0.0;
  Vec gradient;
};
EnergyEvaluation evaluate_energy(const Vec& y, const Vec& x_ref, const FeatureEncoder& encoder,
                                 const PromptPair& prompts, const EnergyConfig& config);

}  // namespace edm
