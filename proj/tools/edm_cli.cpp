// Command-line front end: gen-data, train-score, train-prompts, derain, eval, ablate.

#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "edm/pipeline.hpp"

namespace {

using edm::fs::path;

void add_sampler_flags(CLI::App* cmd, edm::SamplerConfig& s, std::string& stepper) {
  cmd->add_option("--lambda1", s.energy.lambda1, "weight of the rain-removal term")->capture_default_str();
  cmd->add_option("--lambda2", s.energy.lambda2, "weight of the content-preservation term")
      ->capture_default_str();
  cmd->add_option("--ts", s.ts_fraction, "start time as a fraction of T")->capture_default_str();
  cmd->add_option("--steps", s.steps, "reverse steps N")->capture_default_str();
  cmd->add_option("--stepper", stepper, "update rule: vp or em")
      ->check(CLI::IsMember({"vp", "em"}))
      ->capture_default_str();
  cmd->add_option("--perturb-ref", s.energy.perturb_reference,
                  "compare against the noised reference x_t (false uses x_0)")
      ->capture_default_str();
  cmd->add_option("--seed", s.seed, "base seed; image i uses seed xor i")->capture_default_str();
  cmd->add_flag("--squared-distance", s.energy.squared_distance,
                "use squared layer distances in the preserving term");
  cmd->add_flag("--subtract-preserving", s.energy.subtract_preserving,
                "debug: total energy lambda1*s1 - lambda2*s2");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Energy-guided diffusion deraining on synthetic toy domains"};
  app.require_subcommand(1);

  // gen-data
  edm::GenDataOptions gen;
  std::string kind = "images";
  auto* gen_cmd = app.add_subcommand("gen-data", "write clean/rainy splits and pairs.tsv");
  gen_cmd->add_option("--kind", kind, "sample family")
      ->check(CLI::IsMember({"images", "streak_images", "gaussian2d"}))
      ->capture_default_str();
  gen_cmd->add_option("--out", gen.out, "output directory")->required();
  gen_cmd->add_option("--n", gen.n, "samples per domain")->capture_default_str();
  gen_cmd->add_option("--size", gen.spec.image_size, "image side length")->capture_default_str();
  gen_cmd->add_option("--seed", gen.seed)->capture_default_str();
  gen_cmd->add_option("--streaks", gen.spec.streaks, "rain streaks per image")->capture_default_str();
  gen_cmd->add_option("--delta", gen.spec.delta, "streak intensity")->capture_default_str();
  gen_cmd->add_option("--amplitude", gen.spec.texture_amplitude, "clean texture amplitude")
      ->capture_default_str();
  gen_cmd->add_option("--offset", gen.spec.texture_offset, "clean texture offset")
      ->capture_default_str();

  // train-score
  edm::TrainScoreOptions ts;
  auto* ts_cmd = app.add_subcommand("train-score", "fit the score network on clean samples");
  ts_cmd->add_option("--data", ts.data, "clean directory or a gen-data root")->required();
  ts_cmd->add_option("--out", ts.out, "checkpoint path")->required();
  ts_cmd->add_option("--steps", ts.train.steps)->capture_default_str();
  ts_cmd->add_option("--lr", ts.train.learning_rate)->capture_default_str();
  ts_cmd->add_option("--batch", ts.train.batch_size)->capture_default_str();
  ts_cmd->add_option("--seed", ts.train.seed)->capture_default_str();

  // train-prompts
  edm::TrainPromptsOptions tp;
  auto* tp_cmd = app.add_subcommand("train-prompts", "learn the clean/rainy prompt pair");
  tp_cmd->add_option("--rainy", tp.rainy)->required();
  tp_cmd->add_option("--clean", tp.clean)->required();
  tp_cmd->add_option("--encoder-seed", tp.encoder_seed)->capture_default_str();
  tp_cmd->add_option("--out", tp.out, "checkpoint path")->required();
  tp_cmd->add_option("--iters", tp.train.steps)->capture_default_str();
  tp_cmd->add_option("--lr", tp.train.learning_rate)->capture_default_str();
  tp_cmd->add_option("--batch", tp.train.batch_size)->capture_default_str();
  tp_cmd->add_option("--seed", tp.train.seed)->capture_default_str();
  tp_cmd->add_option("--holdout", tp.holdout, "fraction held out per domain")->capture_default_str();
  tp_cmd->add_option("--init-std", tp.init_std, "prompt initialization scale")->capture_default_str();

  // derain
  edm::DerainOptions dr;
  std::string dr_stepper = "vp";
  path dr_trace;
  auto* dr_cmd = app.add_subcommand("derain", "run the guided reverse sampler on each input");
  dr_cmd->add_option("--input", dr.input)->required();
  dr_cmd->add_option("--out", dr.out)->required();
  dr_cmd->add_option("--score", dr.score)->required();
  dr_cmd->add_option("--prompts", dr.prompts, "required unless both lambdas are 0");
  dr_cmd->add_option("--trace", dr_trace, "directory for per-input trace files");
  add_sampler_flags(dr_cmd, dr.sampler, dr_stepper);

  // eval
  edm::EvalOptions ev;
  path ev_report;
  auto* ev_cmd = app.add_subcommand("eval", "proxy metrics against the hidden ground truth");
  ev_cmd->add_option("--pred", ev.pred)->required();
  ev_cmd->add_option("--gt", ev.gt, "clean directory or a gen-data root")->required();
  ev_cmd->add_option("--pairs", ev.pairs)->required();
  ev_cmd->add_option("--prompts", ev.prompts)->required();
  ev_cmd->add_option("--report", ev_report);

  // ablate
  edm::AblateOptions ab;
  std::string sweep = "lambda";
  std::string ab_stepper = "vp";
  path ab_report;
  auto* ab_cmd = app.add_subcommand("ablate", "derain and eval over a parameter grid");
  ab_cmd->add_option("--sweep", sweep)
      ->check(CLI::IsMember({"lambda", "ts", "energy-input"}))
      ->capture_default_str();
  ab_cmd->add_option("--grid", ab.grid, "comma list; empty uses the sweep's default grid");
  ab_cmd->add_option("--report", ab_report);
  ab_cmd->add_option("--input", ab.input, "rainy inputs")->required();
  ab_cmd->add_option("--gt", ab.gt)->required();
  ab_cmd->add_option("--pairs", ab.pairs)->required();
  ab_cmd->add_option("--score", ab.score)->required();
  ab_cmd->add_option("--prompts", ab.prompts)->required();
  ab_cmd->add_option("--limit", ab.limit, "inputs used, 0 for all")->capture_default_str();
  add_sampler_flags(ab_cmd, ab.base, ab_stepper);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen_cmd) {
      gen.spec.kind = edm::parse_domain_kind(kind);
      edm::run_gen_data(gen, &std::cout);
    } else if (*ts_cmd) {
      ts.arch.init_seed = ts.train.seed;
      edm::run_train_score(ts, &std::cout);
    } else if (*tp_cmd) {
      edm::run_train_prompts(tp, &std::cout);
    } else if (*dr_cmd) {
      dr.sampler.stepper = edm::parse_stepper(dr_stepper);
      if (!dr_trace.empty()) dr.trace = dr_trace;
      edm::run_derain(dr, &std::cout);
    } else if (*ev_cmd) {
      if (!ev_report.empty()) ev.report = ev_report;
      const auto report = edm::run_eval(ev, &std::cout);
      if (!ev.report) std::cout << report.to_yaml();
    } else if (*ab_cmd) {
      ab.sweep = edm::parse_sweep(sweep);
      ab.base.stepper = edm::parse_stepper(ab_stepper);
      if (!ab_report.empty()) ab.report = ab_report;
      const auto report = edm::run_ablate(ab, &std::cout);
      if (!ab.report) std::cout << report.to_yaml();
    }
  } catch (const std::exception& e) {
    std::cerr << "edm: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
