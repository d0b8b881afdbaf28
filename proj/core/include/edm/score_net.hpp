#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "edm/schedule.hpp"
#include "edm/train_config.hpp"
#include "edm/types.hpp"

namespace edm {

/// One named parameter block inside a flat parameter vector. Matrices are
/// stored row-major with shape {rows, cols}; vectors have shape {n}.
struct TensorInfo {
  std::string name;
  std::vector<std::size_t> shape;
  std::size_t offset = 0;
  std::size_t size = 0;
};

struct ScoreNetworkConfig {
  std::size_t input_dim = 2;
  std::size_t time_features = 16;
  std::vector<std::size_t> hidden = {128, 128};
  /// Adds a zero-initialized linear path W_skip y / sigma_t to the noise
  /// prediction. Without it a narrow MLP cannot express the 1/sigma_t
  /// identity map the noise predictor needs off the data manifold.
  bool linear_skip = true;
  double t_min = 1e-3;
  std::uint64_t init_seed = 0;
};

/// Time-conditioned MLP that predicts the noise eps added by the forward
/// kernel; the score is -eps_hat / sigma_t.
///
/// Input layer takes [y, phi(t)] where phi(t) holds sin/cos of t at
/// geometrically spaced frequencies in [1, 1000]. Hidden layers use SiLU and
/// are orthogonally initialized; the output layer (and skip path) start at
/// zero, so a fresh network has score 0 everywhere.
class ScoreNetwork {
 public:
  ScoreNetwork(ScoreNetworkConfig config, DiffusionSchedule schedule);

  const ScoreNetworkConfig& config() const { return config_; }
  const DiffusionSchedule& schedule() const { return schedule_; }
  std::size_t input_dim() const { return config_.input_dim; }

  std::span<double> parameters() { return params_; }
  std::span<const double> parameters() const { return params_; }
  const std::vector<TensorInfo>& manifest() const { return manifest_; }

  Vec predict_noise(const Vec& y, double t) const;
  Vec score(const Vec& y, double t) const;

  /// Batched noise prediction; columns of ys are samples, times has one entry
  /// per column.
  Mat predict_noise_batch(const Mat& ys, const Vec& times) const;

  /// Mean over the batch of ||eps_hat - eps||^2. When grad is non-null it
  /// receives d(loss)/d(parameters) with the same layout as parameters().
  double dsm_loss(const Mat& ys, const Vec& times, const Mat& eps, std::vector<double>* grad) const;

  Vec time_features(double t) const;

 private:
  struct Layer {
    std::size_t w = 0;  // manifest index of weight
    std::size_t b = 0;  // manifest index of bias
    std::size_t rows = 0;
    std::size_t cols = 0;
  };
  struct Forward;

  void add_tensor(const std::string& name, std::vector<std::size_t> shape);
  double sigma(double t) const;
  double checked_time(double t) const;
  Forward run(const Mat& ys, const Vec& times) const;

  ScoreNetworkConfig config_;
  DiffusionSchedule schedule_;
  std::vector<TensorInfo> manifest_;
  std::vector<double> params_;
  std::vector<Layer> layers_;
  std::size_t skip_ = 0;
  Vec frequencies_;
};

struct DsmResult {
  ScoreNetwork network;
  std::vector<double> losses;
};

/// Called every `every` steps with the step count and the current network.
struct TrainingHook {
  std::size_t every = 0;
  std::function<void(std::size_t, const ScoreNetwork&)> callback;
};

/// Denoising score matching in noise-prediction form:
///   t ~ U[t_min, T], eps ~ N(0, I), y_t = alpha_t x0 + sigma_t eps,
///   loss = ||eps_hat(y_t, t) - eps||^2.
/// Deterministic for a fixed config.seed. Throws NumericalError on a
/// non-finite loss.
DsmResult train_dsm(std::span<const Sample> clean_data, const DiffusionSchedule& schedule,
                    const TrainConfig& config, ScoreNetworkConfig arch = {},
                    const TrainingHook& hook = {});

/// Closed-form score of the perturbed marginal of N(mean, var0 I) data:
///   -(y - alpha_t mean) / (alpha_t^2 var0 + sigma_t^2).
Vec gaussian_oracle_score(const Vec& y, double t, const Vec& mean, double var0,
                          const DiffusionSchedule& schedule, double t_min = 1e-3);

}  // namespace edm
