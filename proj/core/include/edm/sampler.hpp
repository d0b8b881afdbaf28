#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "edm/energy.hpp"
#include "edm/feature_space.hpp"
#include "edm/rng.hpp"
#include "edm/schedule.hpp"
#include "edm/types.hpp"

namespace edm {

class ScoreNetwork;

using ScoreFn = std::function<Vec(const Vec&, double)>;

ScoreFn score_fn(const ScoreNetwork& net);

enum class Stepper { vp_rule, euler_maruyama };

/// Everything the reverse process reads. Encoder and prompts may be null when
/// guidance is off.
struct SamplerComponents {
  DiffusionSchedule schedule;
  ScoreFn score;
  const FeatureEncoder* encoder = nullptr;
  const PromptPair* prompts = nullptr;
};

struct SamplerConfig {
  double ts_fraction = 0.4;
  std::size_t steps = 100;
  std::uint64_t seed = 0;
  EnergyConfig energy;
  Stepper stepper = Stepper::vp_rule;

  double start_time(const DiffusionSchedule& schedule) const {
    return ts_fraction * schedule.horizon();
  }
  double step_size(const DiffusionSchedule& schedule) const {
    return start_time(schedule) / static_cast<double>(steps);
  }
  /// Rejects ts outside (0, 1], N = 0, and beta(t) h >= 1 anywhere on [0, Ts].
  void validate(const DiffusionSchedule& schedule) const;
};

struct TraceRow {
  std::size_t step = 0;  // 0-based iteration index
  double n = 0.0;        // time at the start of the step
  double energy = 0.0;
  double grad_norm = 0.0;
};

struct SampleResult {
  Vec y0;
  std::vector<TraceRow> trace;
};

/// y_Ts = perturb(x0, ts, eps) with eps drawn from rng.
Vec initialize(const Vec& x0, const DiffusionSchedule& schedule, double ts, CounterRng& rng);

/// VP iteration from n to n - h:
///   (y + beta h (s - g)) / sqrt(1 - beta h) + sqrt(beta h) eta.
/// `guidance` is the energy gradient g; eta may be null for the final step.
Vec vp_update(const Vec& y, double n, double h, const DiffusionSchedule& schedule, const Vec& score,
              const Vec& guidance, const Vec* eta);

/// Euler-Maruyama iteration: y - [f(y, n) - g(n)^2 (s - g)] h + g(n) sqrt(h) eta.
Vec em_update(const Vec& y, double n, double h, const DiffusionSchedule& schedule, const Vec& score,
              const Vec& guidance, const Vec* eta);

struct StepInfo {
  double energy = 0.0;
  double grad_norm = 0.0;
};

/// One full reverse step: draws the reference (if guided), evaluates the
/// energy gradient, draws eta (unless last) and applies the chosen rule.
Vec reverse_step(const Vec& y, const Vec& x0, double n, double h, const SamplerComponents& comp,
                 const SamplerConfig& config, CounterRng& rng, bool last, StepInfo* info = nullptr);

/// Energy-guided reverse process from Ts = ts_fraction T down to 0.
/// Throws NumericalError naming the step if the state becomes non-finite.
SampleResult sample(const Vec& x0, const SamplerComponents& comp, const SamplerConfig& config);

/// Plain reverse diffusion without any guidance machinery. Shares the RNG
/// layout of sample() so that zero energy weights give identical output.
Vec sample_unguided(const Vec& x0, const DiffusionSchedule& schedule, const ScoreFn& score,
                    double ts_fraction, std::size_t steps, Stepper stepper, std::uint64_t seed);

/// Stream id used for the per-call sampler generator.
inline constexpr std::uint64_t kSamplerStream = 0x5A3F;

}  // namespace edm
