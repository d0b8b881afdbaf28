#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "edm/train_config.hpp"
#include "edm/types.hpp"

namespace edm {

enum class Activation { tanh, identity };

struct EncoderConfig {
  std::size_t input_dim = 256;
  std::vector<std::size_t> widths = {64, 64, 64, 64, 32};
  /// Orthogonal init gain per layer; empty means 1 everywhere.
  std::vector<double> gains;
  /// Constant bias added at every unit. Zero keeps the encoder odd, so
  /// embed(-v) = -embed(v).
  double bias = 0.0;
  Activation activation = Activation::tanh;
  std::uint64_t seed = 0;
};

/// Frozen feature map standing in for a pretrained image encoder.
///
/// Each layer computes act(W h + b); the post-activation output of every
/// layer is a tap. Weights are rounded to float at construction so that a
/// checkpoint (float payload) reproduces the encoder bit for bit.
class FeatureEncoder {
 public:
  explicit FeatureEncoder(const EncoderConfig& config);
  FeatureEncoder(std::vector<Mat> weights, std::vector<Vec> biases,
                 Activation activation = Activation::tanh, std::uint64_t seed = 0);

  /// Single square layer with W = I and zero bias.
  static FeatureEncoder identity(std::size_t dim, Activation activation = Activation::tanh);

  std::size_t input_dim() const { return static_cast<std::size_t>(weights_.front().cols()); }
  std::size_t embed_dim() const { return static_cast<std::size_t>(weights_.back().rows()); }
  std::size_t layer_count() const { return weights_.size(); }
  std::size_t layer_dim(std::size_t k) const;
  Activation activation() const { return activation_; }
  std::uint64_t seed() const { return seed_; }
  const std::vector<Mat>& weights() const { return weights_; }
  const std::vector<Vec>& biases() const { return biases_; }

  /// Post-activation output of every layer, index 0 = layer 1.
  std::vector<Vec> taps(const Vec& v) const;
  Vec embed(const Vec& v) const;
  /// Layer index k is 1-based, in 1..layer_count().
  Vec layer_features(const Vec& v, std::size_t k) const;

  /// Embeddings of every column of vs.
  Mat embed_batch(const Mat& vs) const;

  /// Vector-Jacobian product through the encoder: given d(objective)/d(tap_k)
  /// for each layer (an empty vector means zero), returns d(objective)/dv.
  /// `taps` must come from taps(v).
  Vec backward(const std::vector<Vec>& taps, const std::vector<Vec>& tap_grads) const;

 private:
  void check_input(const Vec& v) const;

  std::vector<Mat> weights_;
  std::vector<Vec> biases_;
  Activation activation_ = Activation::tanh;
  std::uint64_t seed_ = 0;
};

enum class PromptRole { positive, negative };

/// Learnable domain embeddings. The text side is the identity map, so the
/// prompts live directly in the encoder's embedding space. Stored
/// un-normalized.
struct PromptPair {
  Vec negative;
  Vec positive;

  bool all_finite() const { return negative.allFinite() && positive.allFinite(); }
  PromptPair swapped() const { return {positive, negative}; }
};

/// Cosine similarity; throws DomainError when either vector is zero.
double cosine(const Vec& a, const Vec& b);

/// Gradient of cosine(a, b) with respect to a.
Vec cosine_grad(const Vec& a, const Vec& b);

/// Two-way softmax over cosine similarities of an embedding with each prompt.
double prompt_probability(const Vec& embedding, const PromptPair& prompts, PromptRole which);

double clip_probability(const FeatureEncoder& encoder, const Vec& v, const PromptPair& prompts,
                        PromptRole which);

/// Clean iff the positive probability is strictly above 0.5.
inline bool classify_clean(double positive_probability) { return positive_probability > 0.5; }

/// Mean binary cross-entropy over embeddings (columns) with labels
/// 1 = clean, 0 = rainy. When non-null, grad_pos/grad_neg receive the
/// gradients with respect to the positive and negative prompt.
double prompt_loss(const Mat& embeddings, std::span<const int> labels, const PromptPair& prompts,
                   Vec* grad_pos = nullptr, Vec* grad_neg = nullptr);

/// Fraction of samples whose predicted label matches. Embeddings are columns.
double prompt_accuracy(const Mat& clean_embeddings, const Mat& rainy_embeddings,
                       const PromptPair& prompts);

double prompt_accuracy(const FeatureEncoder& encoder, std::span<const Sample> clean,
                       std::span<const Sample> rainy, const PromptPair& prompts);

/// Cosine similarity ignores scale, so this sets how far one Adam step
/// turns a prompt. See README for the calibration.
inline constexpr double kPromptInitStd = 0.005;

/// N(0, std^2) entries for both prompts.
PromptPair init_prompts(std::size_t dim, std::uint64_t seed, double std = kPromptInitStd);

struct PromptTrainResult {
  PromptPair prompts;
  std::vector<double> losses;
};

/// BCE prompt training with Adam. Each batch holds ceil(B/2) clean and
/// floor(B/2) rainy samples drawn with replacement; prompts start from
/// init_prompts(embed_dim, config.seed, init_std).
PromptTrainResult train_prompts(const FeatureEncoder& encoder, std::span<const Sample> rainy,
                                std::span<const Sample> clean, const TrainConfig& config,
                                double init_std = kPromptInitStd);

/// Stack sample vectors as columns.
Mat stack_columns(std::span<const Sample> samples);

}  // namespace edm
