// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.
// Usage: edm_acceptance [workdir]   (default: a fresh temp directory, removed at exit)

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "edm/checkpoint.hpp"
#include "edm/energy.hpp"
#include "edm/pipeline.hpp"
#include "edm/rng.hpp"
#include "edm/sampler.hpp"
#include "edm/schedule.hpp"
#include "edm/score_net.hpp"
#include "test_support.hpp"

namespace fs = std::filesystem;
using namespace edm;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  const char* title;
  double time_limit;  // seconds, 0 = none
  std::function<Outcome()> run;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

// ---- 1 ---------------------------------------------------------------------

Outcome kernel_identity() {
  const DiffusionSchedule s;
  CounterRng rng(1);
  double worst = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const KernelCoeffs k = s.kernel_coeffs(rng.uniform());
    worst = std::max(worst, std::abs(k.mean_coeff * k.mean_coeff + k.std * k.std - 1.0));
  }
  const double ib = s.integral_beta(1.0);
  return {worst < 1e-12 && std::abs(ib - 10.05) < 1e-9,
          "max|a^2+s^2-1| = " + fmt("%.2e", worst) + " (< 1e-12), integral_beta(1) = " + fmt("%.12f", ib)};
}

// ---- 2 ---------------------------------------------------------------------

Outcome gradient_oracles() {
  constexpr int kInstances = 50;
  constexpr double kTol = 1e-4;
  CounterRng rng(2);

  double worst_energy = 0.0;
  {
    const FeatureEncoder enc(EncoderConfig{});
    EnergyConfig c;
    for (int i = 0; i < kInstances; ++i) {
      const PromptPair p{rng.normal_vector(32), rng.normal_vector(32)};
      const Vec y = 0.5 * rng.normal_vector(256);
      const Vec x = 0.5 * rng.normal_vector(256);
      auto f = [&](const Vec& v) { return energy_at(v, x, enc, p, c); };
      worst_energy = std::max(worst_energy, test::relative_error(energy_gradient(y, x, enc, p, c),
                                                                 test::central_difference(f, y)));
    }
  }

  double worst_dsm = 0.0;
  for (int i = 0; i < kInstances; ++i) {
    ScoreNetworkConfig a;
    a.input_dim = 2;
    a.hidden = {8};
    ScoreNetwork net(a, DiffusionSchedule());
    const auto params = net.parameters();
    for (double& v : params) v = 0.4 * rng.normal();
    const Mat ys = rng.normal_vector(2 * 8).reshaped(2, 8);
    Vec times(8);
    for (auto& t : times) t = 0.01 + 0.99 * rng.uniform();
    const Mat eps = rng.normal_vector(2 * 8).reshaped(2, 8);
    std::vector<double> g;
    net.dsm_loss(ys, times, eps, &g);
    const Vec theta = Eigen::Map<const Vec>(params.data(), static_cast<Eigen::Index>(params.size()));
    auto f = [&](const Vec& th) {
      std::copy(th.data(), th.data() + th.size(), params.begin());
      return net.dsm_loss(ys, times, eps, nullptr);
    };
    const Vec fd = test::central_difference(f, theta);
    worst_dsm = std::max(worst_dsm, test::relative_error(Eigen::Map<const Vec>(g.data(), fd.size()), fd));
  }

  double worst_prompt = 0.0;
  for (int i = 0; i < kInstances; ++i) {
    const Mat emb = rng.normal_vector(32 * 8).reshaped(32, 8);
    const std::vector<int> labels = {1, 1, 1, 1, 0, 0, 0, 0};
    const PromptPair p{rng.normal_vector(32), rng.normal_vector(32)};
    Vec gp, gn;
    prompt_loss(emb, labels, p, &gp, &gn);
    Vec both(64);
    both << gp, gn;
    Vec x(64);
    x << p.positive, p.negative;
    auto f = [&](const Vec& v) { return prompt_loss(emb, labels, PromptPair{v.tail(32), v.head(32)}); };
    worst_prompt = std::max(worst_prompt, test::relative_error(both, test::central_difference(f, x)));
  }

  const bool ok = worst_energy < kTol && worst_dsm < kTol && worst_prompt < kTol;
  return {ok, "worst relative error over 50 instances: energy " + fmt("%.2e", worst_energy) + ", dsm " +
                  fmt("%.2e", worst_dsm) + ", prompts " + fmt("%.2e", worst_prompt) + " (< 1e-4)"};
}

// ---- 3 ---------------------------------------------------------------------

Outcome probability_contracts() {
  const FeatureEncoder enc(EncoderConfig{});
  CounterRng rng(3);
  double sum_err = 0.0, scale_err = 0.0;
  bool s1_ok = true, cos_ok = true;
  for (int i = 0; i < 1000; ++i) {
    const Vec v = rng.normal_vector(256);
    const PromptPair p{rng.normal_vector(32), rng.normal_vector(32)};
    const double pos = clip_probability(enc, v, p, PromptRole::positive);
    sum_err = std::max(sum_err, std::abs(pos + clip_probability(enc, v, p, PromptRole::negative) - 1.0));
    const double v1 = s1(v, rng.normal_vector(256), enc, p);
    s1_ok &= v1 >= 0.0 && v1 <= 2.0;
    const double c = cosine(rng.normal_vector(32), rng.normal_vector(32));
    cos_ok &= c >= -1.0 && c <= 1.0;
    const double k = std::exp(6.0 * rng.uniform() - 3.0);
    const Vec e = enc.embed(v);
    scale_err = std::max({scale_err, std::abs(prompt_probability(k * e, p, PromptRole::positive) - pos),
                          std::abs(prompt_probability(e, PromptPair{k * p.negative, p.positive}, PromptRole::positive) - pos),
                          std::abs(prompt_probability(e, PromptPair{p.negative, k * p.positive}, PromptRole::positive) - pos)});
  }
  const bool ok = sum_err <= 1e-12 && scale_err <= 1e-10 && s1_ok && cos_ok;
  return {ok, "max|z_p+z_n-1| = " + fmt("%.1e", sum_err) + ", max scale drift = " + fmt("%.1e", scale_err) +
                  ", s1 in [0,2]: " + (s1_ok ? "yes" : "no") + ", cosine in [-1,1]: " + (cos_ok ? "yes" : "no")};
}

// ---- 4 ---------------------------------------------------------------------

Outcome gaussian_oracle() {
  const DiffusionSchedule sch;
  const Vec zero = Vec::Zero(2);
  const SamplerComponents comp{sch, [&](const Vec& y, double t) { return gaussian_oracle_score(y, t, zero, 1.0, sch); },
                               nullptr, nullptr};
  SamplerConfig c;
  c.ts_fraction = 1.0;
  c.steps = 500;
  c.energy.lambda1 = 0.0;
  c.energy.lambda2 = 0.0;
  CounterRng xrng(4);
  const int runs = 5000;
  Vec sum = Vec::Zero(2), sq = Vec::Zero(2);
  for (int i = 0; i < runs; ++i) {
    const Vec x0 = Vec::Constant(2, 2.0) + std::sqrt(0.05) * xrng.normal_vector(2);
    c.seed = static_cast<std::uint64_t>(i);
    const Vec y = sample(x0, comp, c).y0;
    sum += y;
    sq += y.cwiseProduct(y);
  }
  const Vec mean = sum / runs;
  const Vec var = sq / runs - mean.cwiseProduct(mean);
  const double mean_dev = mean.cwiseAbs().maxCoeff();
  const double var_dev = (var.array() - 1.0).abs().maxCoeff();
  return {mean_dev < 0.05 && var_dev < 0.1,
          "mean (" + fmt("%.4f", mean[0]) + ", " + fmt("%.4f", mean[1]) + "), variance (" + fmt("%.4f", var[0]) + ", " +
              fmt("%.4f", var[1]) + ") over 5000 runs, N=500, Ts=T"};
}

// ---- toy pipeline shared by 5-9 --------------------------------------------

struct Toy {
  fs::path root;
  fs::path data, test, score, prompts;
  TrainPromptsResult prompt_result;
  double prompt_seconds = 0.0;
  double score_seconds = 0.0;
  std::string failure;
};

constexpr std::size_t kTestImages = 200;

Toy build_toy(const fs::path& root) {
  Toy t;
  t.root = root;
  t.data = root / "data";
  t.test = root / "test";
  t.score = root / "score.ckpt";
  t.prompts = root / "prompts.ckpt";
  try {
    GenDataOptions g;  // defaults: 2000 per domain, 16x16, delta 0.8
    g.out = t.data;
    run_gen_data(g);
    g.n = kTestImages;
    g.seed = 1;
    g.out = t.test;
    run_gen_data(g);

    auto t0 = std::chrono::steady_clock::now();
    TrainPromptsOptions tp;
    tp.rainy = t.data / "rainy";
    tp.clean = t.data / "clean";
    tp.out = t.prompts;
    t.prompt_result = run_train_prompts(tp);
    t.prompt_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    t0 = std::chrono::steady_clock::now();
    TrainScoreOptions ts;
    ts.data = t.data;
    ts.out = t.score;
    run_train_score(ts);
    t.score_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  } catch (const std::exception& e) {
    t.failure = e.what();
  }
  return t;
}

struct Loaded {
  ScoreNetwork score;
  PromptModel prompts;
  Dataset test;
  SamplerComponents comp() const {
    return {score.schedule(), score_fn(score), &prompts.encoder, &prompts.prompts};
  }
};

Loaded load(const Toy& t) {
  return {load_score_network(Checkpoint::load(t.score)), load_prompt_model(Checkpoint::load(t.prompts)),
          load_dataset(t.test / "rainy")};
}

Outcome unguided_equivalence(const Toy& t) {
  const Loaded m = load(t);
  SamplerConfig c;
  c.energy.lambda1 = 0.0;
  c.energy.lambda2 = 0.0;
  c.seed = 5;
  int equal = 0;
  for (std::size_t i = 0; i < 20; ++i) {
    const Vec a = derain_one(m.test.samples[i], i, m.comp(), c).y0;
    const Vec b = sample_unguided(m.test.samples[i].values, m.score.schedule(), score_fn(m.score), c.ts_fraction,
                                  c.steps, c.stepper, derive_seed(c.seed, i));
    equal += a.size() == b.size() && std::memcmp(a.data(), b.data(), sizeof(double) * a.size()) == 0;
  }
  return {equal == 20, std::to_string(equal) + "/20 outputs bitwise identical"};
}

Outcome prompt_learning(const Toy& t) {
  const double acc = t.prompt_result.heldout_accuracy;
  return {acc >= 0.95, "held-out accuracy " + fmt("%.4f", acc) + " on " + std::to_string(t.prompt_result.heldout) +
                           " images (>= 0.95), 2000 iters, lr 5e-6, batch 8, training " +
                           fmt("%.1f s", t.prompt_seconds)};
}

double end_to_end_seconds = 0.0;

Outcome end_to_end(const Toy& t) {
  const auto t0 = std::chrono::steady_clock::now();
  DerainOptions d;
  d.input = t.test / "rainy";
  d.out = t.root / "pred";
  d.score = t.score;
  d.prompts = t.prompts;
  run_derain(d);
  const EvalReport pred = run_eval({d.out, t.test, t.test / "pairs.tsv", t.prompts, t.root / "eval.yaml"});
  const EvalReport rainy = run_eval({t.test / "rainy", t.test, t.test / "pairs.tsv", t.prompts, t.root / "eval_rainy.yaml"});
  end_to_end_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const double reduction = 1.0 - pred.mse.mean / rainy.mse.mean;
  return {reduction >= 0.6 && pred.clean_fraction >= 0.9,
          "mean mse " + fmt("%.5f", rainy.mse.mean) + " -> " + fmt("%.5f", pred.mse.mean) + " (reduction " +
              fmt("%.1f%%", 100 * reduction) + ", >= 60%), clean " + fmt("%.1f%%", 100 * pred.clean_fraction) +
              " (>= 90%) over " + std::to_string(pred.images.size()) + " held-out images"};
}

Outcome ablation_directions(const Toy& t) {
  AblateOptions a;
  a.input = t.test / "rainy";
  a.gt = t.test;
  a.pairs = t.test / "pairs.tsv";
  a.score = t.score;
  a.prompts = t.prompts;
  a.limit = 0;

  a.sweep = Sweep::lambda;
  a.report = t.root / "ablate_lambda.yaml";
  const AblationReport lam = run_ablate(a);
  a.sweep = Sweep::ts;
  a.grid = "0.4,0.8";
  a.report = t.root / "ablate_ts.yaml";
  const AblationReport ts = run_ablate(a);
  a.sweep = Sweep::energy_input;
  a.grid = "";
  a.report = t.root / "ablate_input.yaml";
  const AblationReport ei = run_ablate(a);

  // Rows follow the default grid order.
  const double none = lam.rows[0].mean_mse, only1 = lam.rows[1].mean_mse, only2 = lam.rows[2].mean_mse,
               full = lam.rows[3].mean_mse;
  const bool l_ok = full < none && full < only1 && full < only2;
  const bool t_ok = ts.rows[0].mean_mse < ts.rows[1].mean_mse;
  const bool e_ok = ei.rows[1].mean_mse < ei.rows[0].mean_mse;
  std::ostringstream s;
  s << "mse (73,0.72) " << fmt("%.5f", full) << " vs (0,0) " << fmt("%.5f", none) << ", (73,0) " << fmt("%.5f", only1)
    << ", (0,0.72) " << fmt("%.5f", only2) << (l_ok ? " ok" : " WRONG") << "; Ts 0.4 " << fmt("%.5f", ts.rows[0].mean_mse)
    << " vs 0.8 " << fmt("%.5f", ts.rows[1].mean_mse) << (t_ok ? " ok" : " WRONG") << "; (y_t,x_t) "
    << fmt("%.5f", ei.rows[1].mean_mse) << " vs (y_t,x_0) " << fmt("%.5f", ei.rows[0].mean_mse) << (e_ok ? " ok" : " WRONG")
    << "; " << kTestImages << " images";
  return {l_ok && t_ok && e_ok, s.str()};
}

Outcome stepper_consistency(const Toy& t) {
  const Loaded m = load(t);
  auto gap = [&](std::size_t steps) {
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < 20; ++i) {
      SamplerConfig c;
      c.steps = steps;
      c.seed = 900 + i;
      const Vec a = sample(m.test.samples[i].values, m.comp(), c).y0;
      c.stepper = Stepper::euler_maruyama;
      const Vec b = sample(m.test.samples[i].values, m.comp(), c).y0;
      sum += (a - b).squaredNorm();
      count += static_cast<std::size_t>(a.size());
    }
    return std::sqrt(sum / static_cast<double>(count));
  };
  const double g100 = gap(100);
  const double g200 = gap(200);
  return {g200 < 0.5 * g100, "RMS gap N=100 " + fmt("%.3e", g100) + ", N=200 " + fmt("%.3e", g200) + " (ratio " +
                                 fmt("%.3f", g200 / g100) + ", < 0.5)"};
}

}  // namespace

int main(int argc, char** argv) {
  std::unique_ptr<test::TempDir> temp;
  fs::path root;
  if (argc > 1) {
    root = argv[1];
    fs::create_directories(root);
  } else {
    temp = std::make_unique<test::TempDir>("acceptance");
    root = temp->path();
  }

  std::printf("preparing toy world in %s (gen-data, train-prompts, train-score)...\n", root.string().c_str());
  std::fflush(stdout);
  Toy toy;
  bool toy_built = false;
  auto need_toy = [&]() -> const Toy& {
    if (!toy_built) {
      toy = build_toy(root);
      toy_built = true;
      if (!toy.failure.empty()) throw std::runtime_error("toy world setup failed: " + toy.failure);
      std::printf("  prompts trained in %.1f s, score trained in %.1f s\n", toy.prompt_seconds, toy.score_seconds);
      std::fflush(stdout);
    }
    return toy;
  };

  const std::vector<Criterion> criteria = {
      {1, "kernel identity", 1.0, kernel_identity},
      {2, "gradient oracles", 30.0, gradient_oracles},
      {3, "probability contracts", 5.0, probability_contracts},
      {4, "gaussian sampling oracle", 120.0, gaussian_oracle},
      {5, "unguided equivalence", 0.0, [&] { return unguided_equivalence(need_toy()); }},
      {6, "prompt learning", 120.0, [&] { return prompt_learning(need_toy()); }},
      {7, "end-to-end toy deraining", 600.0, [&] { return end_to_end(need_toy()); }},
      {8, "ablation directions", 0.0, [&] { return ablation_directions(need_toy()); }},
      {9, "stepper consistency", 0.0, [&] { return stepper_consistency(need_toy()); }},
  };

  int failed = 0;
  for (const Criterion& c : criteria) {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    // Setup cost is billed to the criterion that measures it.
    if (c.id == 5) secs = 0.0;
    if (c.id == 6) secs = toy.prompt_seconds;
    if (c.id == 7) secs = toy.score_seconds + end_to_end_seconds;
    const bool in_time = c.time_limit == 0.0 || secs < c.time_limit;
    const bool pass = o.pass && in_time;
    failed += !pass;
    std::printf("[%s] %d %s: %s; %.1f s%s\n", pass ? "PASS" : "FAIL", c.id, c.title, o.detail.c_str(), secs,
                c.time_limit > 0.0 ? (in_time ? fmt(" (limit %.0f s)", c.time_limit).c_str()
                                              : fmt(" (OVER limit %.0f s)", c.time_limit).c_str())
                                   : "");
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
