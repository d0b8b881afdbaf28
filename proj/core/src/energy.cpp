#include "edm/energy.hpp"

#include <string>

namespace edm {

void EnergyConfig::validate(const FeatureEncoder& encoder) const {
  if (!(lambda1 >= 0.0) || !(lambda2 >= 0.0)) throw ConfigError("energy weights must be >= 0");
  if (layer_weights.size() != encoder.layer_count()) {
    throw ConfigError("energy needs " + std::to_string(encoder.layer_count()) +
                      " layer weights, got " + std::to_string(layer_weights.size()));
  }
}

namespace {

double sign_of_preserving(const EnergyConfig& config) {
  return config.subtract_preserving ? -1.0 : 1.0;
}

double s2_from_taps(const std::vector<Vec>& ty, const std::vector<Vec>& tx,
                    const EnergyConfig& config, std::vector<Vec>* tap_grads, double scale) {
  const double m = static_cast<double>(ty.size());
  double total = 0.0;
  for (std::size_t k = 0; k < ty.size(); ++k) {
    const Vec diff = ty[k] - tx[k];
    const double w = config.layer_weights[k] / m;
    if (config.squared_distance) {
      total += w * diff.squaredNorm();
      if (tap_grads != nullptr) (*tap_grads)[k] = scale * 2.0 * w * diff;
    } else {
      const double dist = diff.norm();
      total += w * dist;
      if (tap_grads != nullptr) {
        (*tap_grads)[k] = dist > 0.0 ? Vec(scale * w / dist * diff) : Vec::Zero(diff.size());
      }
    }
  }
  return total;
}

}  // namespace

double s1(const Vec& y, const Vec& x_ref, const FeatureEncoder& encoder, const PromptPair& prompts) {
  return clip_probability(encoder, x_ref, prompts, PromptRole::negative) +
         clip_probability(encoder, y, prompts, PromptRole::negative);
}

double s2(const Vec& y, const Vec& x_ref, const FeatureEncoder& encoder, const EnergyConfig& config) {
  require_same_dim(y, x_ref, "s2");
  config.validate(encoder);
  return s2_from_taps(encoder.taps(y), encoder.taps(x_ref), config, nullptr, 0.0);
}

Vec draw_reference(const Vec& x0, double t, const DiffusionSchedule& schedule,
                   const EnergyConfig& config, CounterRng& rng) {
  // eps is consumed either way so both reference modes share one noise stream.
  const Vec eps = rng.normal_vector(x0.size());
  return config.perturb_reference ? schedule.perturb(x0, t, eps) : x0;
}

double energy_at(const Vec& y, const Vec& x_ref, const FeatureEncoder& encoder,
                 const PromptPair& prompts, const EnergyConfig& config) {
  return evaluate_energy(y, x_ref, encoder, prompts, config).value;
}

EnergyValue total_energy(const Vec& y, const Vec& x0, double t, const DiffusionSchedule& schedule,
                         const FeatureEncoder& encoder, const PromptPair& prompts,
                         const EnergyConfig& config, CounterRng& rng) {
  EnergyValue out;
  out.reference = draw_reference(x0, t, schedule, config, rng);
  out.value = energy_at(y, out.reference, encoder, prompts, config);
  return out;
}

Vec s1_gradient(const Vec& y, const FeatureEncoder& encoder, const PromptPair& prompts) {
  std::vector<Vec> taps = encoder.taps(y);
  const Vec& e = taps.back();
  const double zn = prompt_probability(e, prompts, PromptRole::negative);
  std::vector<Vec> grads(taps.size());
  grads.back() =
      zn * (1.0 - zn) * (cosine_grad(e, prompts.negative) - cosine_grad(e, prompts.positive));
  return encoder.backward(taps, grads);
}

Vec s2_gradient(const Vec& y, const Vec& x_ref, const FeatureEncoder& encoder,
                const EnergyConfig& config) {
  require_same_dim(y, x_ref, "s2_gradient");
  config.validate(encoder);
  std::vector<Vec> ty = encoder.taps(y);
  std::vector<Vec> grads(ty.size());
  s2_from_taps(ty, encoder.taps(x_ref), config, &grads, 1.0);
  return encoder.backward(ty, grads);
}

Vec energy_gradient(const Vec& y, const Vec& x_ref, const FeatureEncoder& encoder,
                    const PromptPair& prompts, const EnergyConfig& config) {
  return evaluate_energy(y, x_ref, encoder, prompts, config).gradient;
}

EnergyEvaluation evaluate_energy(const Vec& y, const Vec& x_ref, const FeatureEncoder& encoder,
                                 const PromptPair& prompts, const EnergyConfig& config) {
  require_same_dim(y, x_ref, "energy");
  config.validate(encoder);
  EnergyEvaluation out;
  out.gradient = Vec::Zero(y.size());
  if (!config.guided()) return out;

  const std::vector<Vec> ty = encoder.taps(y);
  const std::vector<Vec> tx = encoder.taps(x_ref);
  std::vector<Vec> grads(ty.size());

  if (config.lambda1 > 0.0) {
    const Vec& e = ty.back();
    const double zn_y = prompt_probability(e, prompts, PromptRole::negative);
    const double zn_x = prompt_probability(tx.back(), prompts, PromptRole::negative);
    out.value += config.lambda1 * (zn_x + zn_y);
    grads.back() = config.lambda1 * zn_y * (1.0 - zn_y) *
                   (cosine_grad(e, prompts.negative) - cosine_grad(e, prompts.positive));
  }
  if (config.lambda2 > 0.0) {
    const double scale = sign_of_preserving(config) * config.lambda2;
    std::vector<Vec> g2(ty.size());
    out.value += scale * s2_from_taps(ty, tx, config, &g2, scale);
    for (std::size_t k = 0; k < ty.size(); ++k) {
      grads[k] = grads[k].size() > 0 ? Vec(grads[k] + g2[k]) : g2[k];
    }
  }
  out.gradient = encoder.backward(ty, grads);
  return out;
}

}  // namespace edm
