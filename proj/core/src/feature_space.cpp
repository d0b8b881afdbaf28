#include "edm/feature_space.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "edm/adam.hpp"
#include "edm/init.hpp"
#include "edm/rng.hpp"

namespace edm {

namespace {

Mat round_to_float(Mat m) {
  return m.unaryExpr([](double x) { return static_cast<double>(static_cast<float>(x)); });
}

Vec round_to_float(Vec v) {
  return v.unaryExpr([](double x) { return static_cast<double>(static_cast<float>(x)); });
}

double apply(Activation a, double x) { return a == Activation::tanh ? std::tanh(x) : x; }

// Derivative expressed through the activation output.
double apply_grad_from_output(Activation a, double out) {
  return a == Activation::tanh ? 1.0 - out * out : 1.0;
}

}  // namespace

FeatureEncoder::FeatureEncoder(const EncoderConfig& config)
    : activation_(config.activation), seed_(config.seed) {
  if (config.input_dim == 0) throw ConfigError("encoder input_dim must be positive");
  if (config.widths.empty()) throw ConfigError("encoder needs at least one layer");
  if (!config.gains.empty() && config.gains.size() != config.widths.size()) {
    throw ConfigError("encoder gains must list one value per layer");
  }
  CounterRng rng(config.seed, /*stream=*/0xE7C0);
  std::size_t fan_in = config.input_dim;
  for (std::size_t l = 0; l < config.widths.size(); ++l) {
    if (config.widths[l] == 0) throw ConfigError("encoder layer width must be positive");
    const double gain = config.gains.empty() ? 1.0 : config.gains[l];
    weights_.push_back(round_to_float(orthogonal_matrix(config.widths[l], fan_in, rng, gain)));
    biases_.push_back(round_to_float(Vec(Vec::Constant(static_cast<Eigen::Index>(config.widths[l]),
                                                       config.bias))));
    fan_in = config.widths[l];
  }
}

FeatureEncoder::FeatureEncoder(std::vector<Mat> weights, std::vector<Vec> biases,
                               Activation activation, std::uint64_t seed)
    : activation_(activation), seed_(seed) {
  if (weights.empty() || weights.size() != biases.size()) {
    throw ConfigError("encoder needs matching non-empty weight and bias lists");
  }
  for (std::size_t l = 0; l < weights.size(); ++l) {
    if (biases[l].size() != weights[l].rows()) {
      throw DimensionError("encoder layer " + std::to_string(l + 1) + ": bias size mismatch");
    }
    if (l > 0 && weights[l].cols() != weights_[l - 1].rows()) {
      throw DimensionError("encoder layer " + std::to_string(l + 1) + ": input size mismatch");
    }
    weights_.push_back(round_to_float(std::move(weights[l])));
    biases_.push_back(round_to_float(std::move(biases[l])));
  }
}

FeatureEncoder FeatureEncoder::identity(std::size_t dim, Activation activation) {
  const auto n = static_cast<Eigen::Index>(dim);
  return FeatureEncoder({Mat::Identity(n, n)}, {Vec::Zero(n)}, activation);
}

std::size_t FeatureEncoder::layer_dim(std::size_t k) const {
  if (k < 1 || k > weights_.size()) {
    throw DomainError("layer index " + std::to_string(k) + " outside 1.." +
                      std::to_string(weights_.size()));
  }
  return static_cast<std::size_t>(weights_[k - 1].rows());
}

void FeatureEncoder::check_input(const Vec& v) const {
  if (static_cast<std::size_t>(v.size()) != input_dim()) {
    throw DimensionError("encoder expects dimension " + std::to_string(input_dim()) + ", got " +
                         std::to_string(v.size()));
  }
}

std::vector<Vec> FeatureEncoder::taps(const Vec& v) const {
  check_input(v);
  std::vector<Vec> out;
  out.reserve(weights_.size());
  const Vec* h = &v;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    Vec a = weights_[l] * *h + biases_[l];
    out.push_back(a.unaryExpr([this](double x) { return apply(activation_, x); }));
    h = &out.back();
  }
  return out;
}

Vec FeatureEncoder::embed(const Vec& v) const { return taps(v).back(); }

Vec FeatureEncoder::layer_features(const Vec& v, std::size_t k) const {
  layer_dim(k);
  return taps(v)[k - 1];
}

Mat FeatureEncoder::embed_batch(const Mat& vs) const {
  if (static_cast<std::size_t>(vs.rows()) != input_dim()) {
    throw DimensionError("encoder expects dimension " + std::to_string(input_dim()) + ", got " +
                         std::to_string(vs.rows()));
  }
  Mat h = vs;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    Mat a = weights_[l] * h;
    a.colwise() += biases_[l];
    h = a.unaryExpr([this](double x) { return apply(activation_, x); });
  }
  return h;
}

Vec FeatureEncoder::backward(const std::vector<Vec>& taps,
                             const std::vector<Vec>& tap_grads) const {
  if (taps.size() != weights_.size() || tap_grads.size() != weights_.size()) {
    throw DimensionError("encoder backward needs one tap and one gradient per layer");
  }
  Vec g = Vec::Zero(weights_.back().rows());
  for (std::size_t l = weights_.size(); l-- > 0;) {
    if (tap_grads[l].size() > 0) {
      if (tap_grads[l].size() != g.size()) {
        throw DimensionError("tap gradient " + std::to_string(l + 1) + " has the wrong size");
      }
      g += tap_grads[l];
    }
    const Vec local = taps[l].unaryExpr(
        [this](double out) { return apply_grad_from_output(activation_, out); });
    g = weights_[l].transpose() * g.cwiseProduct(local);
  }
  return g;
}

double cosine(const Vec& a, const Vec& b) {
  require_same_dim(a, b, "cosine");
  const double na = a.norm();
  const double nb = b.norm();
  if (!std::isfinite(na) || !std::isfinite(nb)) throw NumericalError("cosine of a non-finite vector");
  if (!(na > 0.0) || !(nb > 0.0)) throw DomainError("cosine similarity of a zero vector");
  return std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
}

Vec cosine_grad(const Vec& a, const Vec& b) {
  require_same_dim(a, b, "cosine_grad");
  const double na = a.norm();
  const double nb = b.norm();
  if (!std::isfinite(na) || !std::isfinite(nb)) throw NumericalError("cosine of a non-finite vector");
  if (!(na > 0.0) || !(nb > 0.0)) throw DomainError("cosine similarity of a zero vector");
  const double c = a.dot(b) / (na * nb);
  return (b / nb - c * a / na) / na;
}

double prompt_probability(const Vec& embedding, const PromptPair& prompts, PromptRole which) {
  const double cp = cosine(embedding, prompts.positive);
  const double cn = cosine(embedding, prompts.negative);
  // Two-way softmax written as a logistic of the difference.
  const double diff = which == PromptRole::positive ? cp - cn : cn - cp;
  return 1.0 / (1.0 + std::exp(-diff));
}

double clip_probability(const FeatureEncoder& encoder, const Vec& v, const PromptPair& prompts,
                        PromptRole which) {
  return prompt_probability(encoder.embed(v), prompts, which);
}

double prompt_loss(const Mat& embeddings, std::span<const int> labels, const PromptPair& prompts,
                   Vec* grad_pos, Vec* grad_neg) {
  if (static_cast<std::size_t>(embeddings.cols()) != labels.size() || labels.empty()) {
    throw DimensionError("prompt_loss: one label per embedding required");
  }
  const Eigen::Index dim = prompts.positive.size();
  if (grad_pos != nullptr) *grad_pos = Vec::Zero(dim);
  if (grad_neg != nullptr) *grad_neg = Vec::Zero(dim);
  const double n = static_cast<double>(labels.size());
  double loss = 0.0;
  for (Eigen::Index j = 0; j < embeddings.cols(); ++j) {
    const Vec e = embeddings.col(j);
    const double cp = cosine(e, prompts.positive);
    const double cn = cosine(e, prompts.negative);
    const double d = cp - cn;
    const int z = labels[static_cast<std::size_t>(j)];
    // -[z log s(d) + (1-z) log(1 - s(d))] in a form stable for either sign of d.
    loss += std::log1p(std::exp(-std::abs(d))) + std::max(d, 0.0) - z * d;
    const double r = (1.0 / (1.0 + std::exp(-d)) - z) / n;
    if (grad_pos != nullptr) *grad_pos += r * cosine_grad(prompts.positive, e);
    if (grad_neg != nullptr) *grad_neg -= r * cosine_grad(prompts.negative, e);
  }
  return loss / n;
}

double prompt_accuracy(const Mat& clean_embeddings, const Mat& rainy_embeddings,
                       const PromptPair& prompts) {
  const Eigen::Index total = clean_embeddings.cols() + rainy_embeddings.cols();
  if (total == 0) throw DomainError("prompt_accuracy: no samples");
  Eigen::Index correct = 0;
  for (Eigen::Index j = 0; j < clean_embeddings.cols(); ++j) {
    correct += classify_clean(
        prompt_probability(clean_embeddings.col(j), prompts, PromptRole::positive));
  }
  for (Eigen::Index j = 0; j < rainy_embeddings.cols(); ++j) {
    correct += !classify_clean(
        prompt_probability(rainy_embeddings.col(j), prompts, PromptRole::positive));
  }
  return static_cast<double>(correct) / static_cast<double>(total);
}

double prompt_accuracy(const FeatureEncoder& encoder, std::span<const Sample> clean,
                       std::span<const Sample> rainy, const PromptPair& prompts) {
  const Mat ec = clean.empty() ? Mat(encoder.embed_dim(), 0) : encoder.embed_batch(stack_columns(clean));
  const Mat er = rainy.empty() ? Mat(encoder.embed_dim(), 0) : encoder.embed_batch(stack_columns(rainy));
  return prompt_accuracy(ec, er, prompts);
}

PromptPair init_prompts(std::size_t dim, std::uint64_t seed, double std) {
  if (!(std > 0.0)) throw ConfigError("prompt init std must be positive");
  CounterRng rng(seed, /*stream=*/0x9407);
  PromptPair p;
  p.negative = std * rng.normal_vector(static_cast<Eigen::Index>(dim));
  p.positive = std * rng.normal_vector(static_cast<Eigen::Index>(dim));
  return p;
}

PromptTrainResult train_prompts(const FeatureEncoder& encoder, std::span<const Sample> rainy,
                                std::span<const Sample> clean, const TrainConfig& config,
                                double init_std) {
  config.validate();
  if (rainy.empty() || clean.empty()) throw ConfigError("train_prompts: empty collection");

  // The encoder is frozen, so embeddings are computed once.
  const Mat ec = encoder.embed_batch(stack_columns(clean));
  const Mat er = encoder.embed_batch(stack_columns(rainy));
  const auto dim = static_cast<Eigen::Index>(encoder.embed_dim());

  PromptTrainResult result{init_prompts(encoder.embed_dim(), config.seed, init_std), {}};
  PromptPair& p = result.prompts;
  std::vector<double> params(static_cast<std::size_t>(2 * dim));
  std::vector<double> grad(params.size());
  Adam adam(params.size(), {config.learning_rate, config.adam_beta1, config.adam_beta2, 1e-8});
  CounterRng rng(config.seed, /*stream=*/0xB47C);

  const std::size_t b = config.batch_size;
  const std::size_t n_clean = (b + 1) / 2;
  Mat batch(dim, static_cast<Eigen::Index>(b));
  std::vector<int> labels(b);
  for (std::size_t j = 0; j < b; ++j) labels[j] = j < n_clean ? 1 : 0;

  Vec gp;
  Vec gn;
  result.losses.reserve(config.steps);
  for (std::size_t step = 0; step < config.steps; ++step) {
    for (std::size_t j = 0; j < b; ++j) {
      const auto col = static_cast<Eigen::Index>(j);
      batch.col(col) = j < n_clean ? ec.col(static_cast<Eigen::Index>(rng.below(clean.size())))
                                   : er.col(static_cast<Eigen::Index>(rng.below(rainy.size())));
    }
    const double loss = prompt_loss(batch, labels, p, &gp, &gn);
    if (!std::isfinite(loss)) {
      throw NumericalError("train_prompts: non-finite loss at step " + std::to_string(step));
    }
    result.losses.push_back(loss);
    Eigen::Map<Vec>(params.data(), dim) = p.positive;
    Eigen::Map<Vec>(params.data() + dim, dim) = p.negative;
    Eigen::Map<Vec>(grad.data(), dim) = gp;
    Eigen::Map<Vec>(grad.data() + dim, dim) = gn;
    adam.step(params, grad);
    p.positive = Eigen::Map<const Vec>(params.data(), dim);
    p.negative = Eigen::Map<const Vec>(params.data() + dim, dim);
  }
  return result;
}

Mat stack_columns(std::span<const Sample> samples) {
  if (samples.empty()) return Mat();
  const auto d = static_cast<Eigen::Index>(samples.front().dim());
  Mat m(d, static_cast<Eigen::Index>(samples.size()));
  for (std::size_t j = 0; j < samples.size(); ++j) {
    if (samples[j].values.size() != d) throw DimensionError("stack_columns: mixed dimensions");
    m.col(static_cast<Eigen::Index>(j)) = samples[j].values;
  }
  return m;
}

}  // namespace edm
