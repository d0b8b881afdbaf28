#include "edm/score_net.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "edm/adam.hpp"
#include "edm/init.hpp"
#include "edm/rng.hpp"

namespace edm {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMatMap = Eigen::Map<const RowMat>;
using MatMap = Eigen::Map<RowMat>;

double silu(double x) { return x / (1.0 + std::exp(-x)); }

double silu_grad(double x) {
  const double s = 1.0 / (1.0 + std::exp(-x));
  return s * (1.0 + x * (1.0 - s));
}

}  // namespace

struct ScoreNetwork::Forward {
  std::vector<Mat> inputs;  // input to each dense layer (including the output layer)
  std::vector<Mat> pre;     // pre-activations of hidden layers
  Mat output;
  Vec inv_sigma;
};

ScoreNetwork::ScoreNetwork(ScoreNetworkConfig config, DiffusionSchedule schedule)
    : config_(std::move(config)), schedule_(schedule) {
  if (config_.input_dim == 0) throw ConfigError("score network input_dim must be positive");
  if (config_.time_features == 0 || config_.time_features % 2 != 0) {
    throw ConfigError("time_features must be a positive even number");
  }
  if (!(config_.t_min > 0.0 && config_.t_min < schedule_.horizon())) {
    throw ConfigError("t_min must lie in (0, T)");
  }

  std::size_t fan_in = config_.input_dim + config_.time_features;
  std::vector<std::size_t> widths = config_.hidden;
  widths.push_back(config_.input_dim);
  for (std::size_t l = 0; l < widths.size(); ++l) {
    const bool last = l + 1 == widths.size();
    const std::string prefix = last ? "out" : "hidden" + std::to_string(l);
    Layer layer;
    layer.rows = widths[l];
    layer.cols = fan_in;
    layer.w = manifest_.size();
    add_tensor(prefix + ".weight", {layer.rows, layer.cols});
    layer.b = manifest_.size();
    add_tensor(prefix + ".bias", {layer.rows});
    layers_.push_back(layer);
    fan_in = widths[l];
  }
  if (config_.linear_skip) {
    skip_ = manifest_.size();
    add_tensor("skip.weight", {config_.input_dim, config_.input_dim});
  }
  params_.assign(manifest_.back().offset + manifest_.back().size, 0.0);

  CounterRng rng(config_.init_seed, /*stream=*/0x5C0E);
  for (std::size_t l = 0; l + 1 < layers_.size(); ++l) {
    const Layer& layer = layers_[l];
    const Mat w = orthogonal_matrix(layer.rows, layer.cols, rng, 1.0);
    MatMap(params_.data() + manifest_[layer.w].offset, static_cast<Eigen::Index>(layer.rows),
           static_cast<Eigen::Index>(layer.cols)) = w;
  }

  const std::size_t n_freq = config_.time_features / 2;
  frequencies_.resize(static_cast<Eigen::Index>(n_freq));
  for (std::size_t i = 0; i < n_freq; ++i) {
    const double frac = n_freq == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(n_freq - 1);
    frequencies_[static_cast<Eigen::Index>(i)] = std::pow(1000.0, frac);
  }
}

void ScoreNetwork::add_tensor(const std::string& name, std::vector<std::size_t> shape) {
  TensorInfo info;
  info.name = name;
  info.size = std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
  info.shape = std::move(shape);
  info.offset = manifest_.empty() ? 0 : manifest_.back().offset + manifest_.back().size;
  manifest_.push_back(std::move(info));
}

double ScoreNetwork::checked_time(double t) const {
  // Training never saw t < t_min, so the network is held at t_min there.
  return std::max(schedule_.checked_time(t), config_.t_min);
}

double ScoreNetwork::sigma(double t) const { return schedule_.kernel_coeffs(t).std; }

Vec ScoreNetwork::time_features(double t) const {
  const Eigen::Index n = frequencies_.size();
  Vec phi(2 * n);
  for (Eigen::Index i = 0; i < n; ++i) {
    phi[i] = std::sin(frequencies_[i] * t);
    phi[n + i] = std::cos(frequencies_[i] * t);
  }
  return phi;
}

ScoreNetwork::Forward ScoreNetwork::run(const Mat& ys, const Vec& times) const {
  const auto d = static_cast<Eigen::Index>(config_.input_dim);
  const auto f = static_cast<Eigen::Index>(config_.time_features);
  if (ys.rows() != d) {
    throw DimensionError("score network expects dimension " + std::to_string(d) + ", got " +
                         std::to_string(ys.rows()));
  }
  if (times.size() != ys.cols()) throw DimensionError("one time per sample required");

  Forward fw;
  Mat x(d + f, ys.cols());
  x.topRows(d) = ys;
  fw.inv_sigma.resize(ys.cols());
  for (Eigen::Index j = 0; j < ys.cols(); ++j) {
    const double t = checked_time(times[j]);
    x.col(j).tail(f) = time_features(t);
    fw.inv_sigma[j] = 1.0 / sigma(t);
  }

  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const Layer& layer = layers_[l];
    const ConstMatMap w(params_.data() + manifest_[layer.w].offset,
                        static_cast<Eigen::Index>(layer.rows), static_cast<Eigen::Index>(layer.cols));
    const Eigen::Map<const Vec> b(params_.data() + manifest_[layer.b].offset,
                                  static_cast<Eigen::Index>(layer.rows));
    Mat a = w * x;
    a.colwise() += b;
    fw.inputs.push_back(std::move(x));
    if (l + 1 == layers_.size()) {
      fw.output = std::move(a);
    } else {
      x = a.unaryExpr(&silu);
      fw.pre.push_back(std::move(a));
    }
  }
  if (config_.linear_skip) {
    const ConstMatMap s(params_.data() + manifest_[skip_].offset, d, d);
    fw.output.noalias() += (s * ys) * fw.inv_sigma.asDiagonal();
  }
  return fw;
}

Mat ScoreNetwork::predict_noise_batch(const Mat& ys, const Vec& times) const {
  return run(ys, times).output;
}

Vec ScoreNetwork::predict_noise(const Vec& y, double t) const {
  Vec times(1);
  times[0] = t;
  return run(y, times).output.col(0);
}

Vec ScoreNetwork::score(const Vec& y, double t) const {
  return -predict_noise(y, t) / sigma(checked_time(t));
}

double ScoreNetwork::dsm_loss(const Mat& ys, const Vec& times, const Mat& eps,
                              std::vector<double>* grad) const {
  if (eps.rows() != ys.rows() || eps.cols() != ys.cols()) {
    throw DimensionError("dsm_loss: noise batch shape differs from sample batch");
  }
  Forward fw = run(ys, times);
  const double batch = static_cast<double>(ys.cols());
  const Mat resid = fw.output - eps;
  const double loss = resid.squaredNorm() / batch;
  if (grad == nullptr) return loss;

  grad->assign(params_.size(), 0.0);
  Mat g = (2.0 / batch) * resid;  // d loss / d output
  const auto d = static_cast<Eigen::Index>(config_.input_dim);
  if (config_.linear_skip) {
    MatMap(grad->data() + manifest_[skip_].offset, d, d) =
        (g * fw.inv_sigma.asDiagonal()) * ys.transpose();
  }
  for (std::size_t l = layers_.size(); l-- > 0;) {
    const Layer& layer = layers_[l];
    const auto rows = static_cast<Eigen::Index>(layer.rows);
    const auto cols = static_cast<Eigen::Index>(layer.cols);
    MatMap(grad->data() + manifest_[layer.w].offset, rows, cols) = g * fw.inputs[l].transpose();
    Eigen::Map<Vec>(grad->data() + manifest_[layer.b].offset, rows) = g.rowwise().sum();
    if (l == 0) break;
    const ConstMatMap w(params_.data() + manifest_[layer.w].offset, rows, cols);
    Mat gh = w.transpose() * g;
    g = gh.cwiseProduct(fw.pre[l - 1].unaryExpr(&silu_grad));
  }
  return loss;
}

DsmResult train_dsm(std::span<const Sample> clean_data, const DiffusionSchedule& schedule,
                    const TrainConfig& config, ScoreNetworkConfig arch, const TrainingHook& hook) {
  config.validate();
  if (clean_data.empty()) throw ConfigError("train_dsm: empty dataset");
  const std::size_t dim = clean_data.front().dim();
  for (const Sample& s : clean_data) {
    if (s.dim() != dim) throw DimensionError("train_dsm: samples have mixed dimensions");
  }
  arch.input_dim = dim;
  arch.t_min = config.t_min;

  DsmResult result{ScoreNetwork(arch, schedule), {}};
  ScoreNetwork& net = result.network;
  Adam adam(net.parameters().size(),
            {config.learning_rate, config.adam_beta1, config.adam_beta2, 1e-8});
  CounterRng rng(config.seed, /*stream=*/0xD5A);

  const auto d = static_cast<Eigen::Index>(dim);
  const auto b = static_cast<Eigen::Index>(config.batch_size);
  const double span = schedule.horizon() - config.t_min;
  Mat ys(d, b);
  Mat eps(d, b);
  Vec times(b);
  std::vector<double> grad;
  result.losses.reserve(config.steps);

  for (std::size_t step = 0; step < config.steps; ++step) {
    for (Eigen::Index j = 0; j < b; ++j) {
      const Sample& x0 = clean_data[rng.below(clean_data.size())];
      times[j] = config.t_min + span * rng.uniform();
      for (Eigen::Index i = 0; i < d; ++i) eps(i, j) = rng.normal();
      ys.col(j) = schedule.perturb(x0.values, times[j], eps.col(j));
    }
    const double loss = net.dsm_loss(ys, times, eps, &grad);
    if (!std::isfinite(loss)) {
      throw NumericalError("train_dsm: non-finite loss at step " + std::to_string(step));
    }
    result.losses.push_back(loss);
    adam.step(net.parameters(), grad);
    if (hook.every > 0 && hook.callback && (step + 1) % hook.every == 0) {
      hook.callback(step + 1, net);
    }
  }
  return result;
}

Vec gaussian_oracle_score(const Vec& y, double t, const Vec& mean, double var0,
                          const DiffusionSchedule& schedule, double t_min) {
  require_same_dim(y, mean, "gaussian_oracle_score");
  if (var0 < 0.0) throw ConfigError("gaussian_oracle_score: var0 must be non-negative");
  if (t < t_min) {
    throw DomainError("gaussian_oracle_score: t=" + std::to_string(t) + " below t_min");
  }
  const KernelCoeffs k = schedule.kernel_coeffs(t);
  const double var_t = k.mean_coeff * k.mean_coeff * var0 + k.std * k.std;
  if (!(var_t > 0.0)) throw DomainError("gaussian_oracle_score: singular marginal");
  return -(y - k.mean_coeff * mean) / var_t;
}

}  // namespace edm
