#include "edm/sampler.hpp"

#include <cmath>
#include <string>

#include "edm/score_net.hpp"

namespace edm {

ScoreFn score_fn(const ScoreNetwork& net) {
  return [&net](const Vec& y, double t) { return net.score(y, t); };
}

void SamplerConfig::validate(const DiffusionSchedule& schedule) const {
  if (!(ts_fraction > 0.0 && ts_fraction <= 1.0)) throw ConfigError("ts must lie in (0, 1]");
  if (steps == 0) throw ConfigError("steps must be at least 1");
  // beta is increasing, so its largest value on [0, Ts] is at Ts.
  const double bh = schedule.beta(start_time(schedule)) * step_size(schedule);
  if (!(bh < 1.0)) {
    throw ConfigError("beta(t) h = " + std::to_string(bh) + " must stay below 1; raise steps");
  }
}

Vec initialize(const Vec& x0, const DiffusionSchedule& schedule, double ts, CounterRng& rng) {
  if (!(ts > 0.0)) throw DomainError("initialize: ts must be positive");
  return schedule.perturb(x0, ts, rng.normal_vector(x0.size()));
}

Vec vp_update(const Vec& y, double n, double h, const DiffusionSchedule& schedule, const Vec& score,
              const Vec& guidance, const Vec* eta) {
  const double bh = schedule.beta(n) * h;
  if (!(bh < 1.0)) throw ConfigError("vp_update: beta(n) h >= 1");
  Vec out = (y + bh * (score - guidance)) / std::sqrt(1.0 - bh);
  if (eta != nullptr) out += std::sqrt(bh) * *eta;
  return out;
}

Vec em_update(const Vec& y, double n, double h, const DiffusionSchedule& schedule, const Vec& score,
              const Vec& guidance, const Vec* eta) {
  const double g = schedule.diffusion(n);
  Vec out = y - (schedule.drift(y, n) - g * g * (score - guidance)) * h;
  if (eta != nullptr) out += g * std::sqrt(h) * *eta;
  return out;
}

namespace {

Vec apply_rule(Stepper stepper, const Vec& y, double n, double h, const DiffusionSchedule& schedule,
               const Vec& score, const Vec& guidance, const Vec* eta) {
  return stepper == Stepper::vp_rule ? vp_update(y, n, h, schedule, score, guidance, eta)
                                     : em_update(y, n, h, schedule, score, guidance, eta);
}

}  // namespace

Vec reverse_step(const Vec& y, const Vec& x0, double n, double h, const SamplerComponents& comp,
                 const SamplerConfig& config, CounterRng& rng, bool last, StepInfo* info) {
  require_same_dim(y, x0, "reverse_step");
  const Vec score = comp.score(y, n);
  Vec guidance = Vec::Zero(y.size());
  StepInfo local;
  if (config.energy.guided()) {
    if (comp.encoder == nullptr || comp.prompts == nullptr) {
      throw ConfigError("guided sampling needs an encoder and prompts");
    }
    const Vec x_ref = draw_reference(x0, n, comp.schedule, config.energy, rng);
    EnergyEvaluation e = evaluate_energy(y, x_ref, *comp.encoder, *comp.prompts, config.energy);
    local.energy = e.value;
    local.grad_norm = e.gradient.norm();
    guidance = std::move(e.gradient);
  }
  Vec eta;
  if (!last) eta = rng.normal_vector(y.size());
  if (info != nullptr) *info = local;
  return apply_rule(config.stepper, y, n, h, comp.schedule, score, guidance,
                    last ? nullptr : &eta);
}

SampleResult sample(const Vec& x0, const SamplerComponents& comp, const SamplerConfig& config) {
  config.validate(comp.schedule);
  if (!comp.score) throw ConfigError("sample: no score function");
  if (config.energy.guided() && comp.encoder != nullptr) config.energy.validate(*comp.encoder);

  CounterRng rng(config.seed, kSamplerStream);
  const double h = config.step_size(comp.schedule);
  SampleResult result;
  result.trace.reserve(config.steps);
  Vec y = initialize(x0, comp.schedule, config.start_time(comp.schedule), rng);
  for (std::size_t i = config.steps; i >= 1; --i) {
    const double n = static_cast<double>(i) * h;
    StepInfo info;
    y = reverse_step(y, x0, n, h, comp, config, rng, i == 1, &info);
    const std::size_t step = config.steps - i;
    if (!y.allFinite()) {
      throw NumericalError("sampler state became non-finite at step " + std::to_string(step) +
                           " (n=" + std::to_string(n) + ")");
    }
    result.trace.push_back({step, n, info.energy, info.grad_norm});
  }
  result.y0 = std::move(y);
  return result;
}

Vec sample_unguided(const Vec& x0, const DiffusionSchedule& schedule, const ScoreFn& score,
                    double ts_fraction, std::size_t steps, Stepper stepper, std::uint64_t seed) {
  SamplerConfig cfg;
  cfg.ts_fraction = ts_fraction;
  cfg.steps = steps;
  cfg.validate(schedule);

  CounterRng rng(seed, kSamplerStream);
  const double h = cfg.step_size(schedule);
  const Vec zero = Vec::Zero(x0.size());
  Vec y = initialize(x0, schedule, cfg.start_time(schedule), rng);
  for (std::size_t i = steps; i >= 1; --i) {
    const double n = static_cast<double>(i) * h;
    const Vec s = score(y, n);
    if (i == 1) {
      y = apply_rule(stepper, y, n, h, schedule, s, zero, nullptr);
    } else {
      const Vec eta = rng.normal_vector(y.size());
      y = apply_rule(stepper, y, n, h, schedule, s, zero, &eta);
    }
  }
  return y;
}

}  // namespace edm
