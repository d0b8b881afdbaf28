#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "edm/report.hpp"
#include "edm/sampler.hpp"
#include "edm/score_net.hpp"
#include "edm/toyworld.hpp"
#include "edm/train_config.hpp"

namespace edm {

namespace fs = std::filesystem;

/// Samples loaded from a directory, with file names in sorted order.
struct Dataset {
  std::vector<std::string> names;
  std::vector<Sample> samples;

  std::size_t size() const { return samples.size(); }
};

Dataset load_dataset(const fs::path& dir);

// ---- gen-data --------------------------------------------------------------

struct GenDataOptions {
  DomainSpec spec;
  fs::path out;
  std::size_t n = 2000;
  std::uint64_t seed = 0;
};

/// Writes out/clean/, out/rainy/ (shuffled), out/pairs.tsv and out/config.yaml.
/// Images are .pgm files; gaussian2d points are one-line .tsv files.
void run_gen_data(const GenDataOptions& opt, std::ostream* log = nullptr);

// ---- train-score -----------------------------------------------------------

struct TrainScoreOptions {
  /// Directory of clean samples, or a data root holding clean/.
  fs::path data;
  fs::path out;
  TrainConfig train = TrainConfig::score_defaults();
  ScoreNetworkConfig arch;
};

struct TrainScoreResult {
  double final_loss = 0.0;
  std::size_t samples = 0;
};

TrainScoreResult run_train_score(const TrainScoreOptions& opt, std::ostream* log = nullptr);

// ---- train-prompts ---------------------------------------------------------

struct TrainPromptsOptions {
  fs::path rainy;
  fs::path clean;
  fs::path out;
  std::uint64_t encoder_seed = 0;
  TrainConfig train = TrainConfig::prompt_defaults();
  /// Fraction of each domain held out for the accuracy check.
  double holdout = 0.2;
  double init_std = kPromptInitStd;
};

struct TrainPromptsResult {
  double final_loss = 0.0;
  double heldout_accuracy = 0.0;
  std::size_t train_clean = 0;
  std::size_t train_rainy = 0;
  std::size_t heldout = 0;
};

TrainPromptsResult run_train_prompts(const TrainPromptsOptions& opt, std::ostream* log = nullptr);

/// Deterministic split: a seeded permutation, the last floor(fraction * n)
/// entries are held out. Returns {train indices, held-out indices}.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> holdout_split(std::size_t n,
                                                                              double fraction,
                                                                              std::uint64_t seed);

// ---- derain ----------------------------------------------------------------

struct DerainOptions {
  fs::path input;
  fs::path out;
  fs::path score;
  fs::path prompts;
  SamplerConfig sampler;
  std::optional<fs::path> trace;
};

/// Runs the guided sampler on one input with seed derive_seed(base, index).
SampleResult derain_one(const Sample& input, std::size_t index, const SamplerComponents& comp,
                        const SamplerConfig& base);

/// Derains every input in memory; outputs keep the input's image shape.
std::vector<Sample> derain_all(std::span<const Sample> inputs, const SamplerComponents& comp,
                               const SamplerConfig& base);

void run_derain(const DerainOptions& opt, std::ostream* log = nullptr);

std::string trace_tsv(const std::vector<TraceRow>& trace);

// ---- eval ------------------------------------------------------------------

struct EvalOptions {
  fs::path pred;
  fs::path gt;
  fs::path pairs;
  fs::path prompts;
  std::optional<fs::path> report;
};

/// rainy_file -> clean_file map from pairs.tsv.
std::vector<std::pair<std::string, std::string>> read_pairs(const fs::path& path);

EvalReport run_eval(const EvalOptions& opt, std::ostream* log = nullptr);

/// Metrics for in-memory predictions against ground truth.
std::vector<ImageMetrics> score_predictions(const std::vector<std::string>& names,
                                            std::span<const Sample> pred,
                                            std::span<const Sample> gt,
                                            const FeatureEncoder& encoder,
                                            const PromptPair& prompts);

// ---- ablate ----------------------------------------------------------------

enum class Sweep { lambda, ts, energy_input };

Sweep parse_sweep(const std::string& name);
std::string to_string(Sweep sweep);

/// One sampler variant in a sweep.
struct SweepSetting {
  std::string label;
  SamplerConfig config;
};

/// Expands a grid string into settings on top of base. Grids:
///   lambda:        "l1:l2,l1:l2,..."   default "0:0,73:0,0:0.72,73:0.72"
///   ts:            "0.2,0.4,..."       default "0.2,0.4,0.5,0.6,0.8"
///   energy-input:  "x0,xt"             default "x0,xt"
std::vector<SweepSetting> expand_sweep(Sweep sweep, const std::string& grid,
                                       const SamplerConfig& base);

struct AblateOptions {
  Sweep sweep = Sweep::lambda;
  std::string grid;
  /// Rainy inputs, ground truth and pairs, as for eval.
  fs::path input;
  fs::path gt;
  fs::path pairs;
  fs::path score;
  fs::path prompts;
  std::optional<fs::path> report;
  SamplerConfig base;
  /// Use at most this many inputs (sorted by name); 0 means all.
  std::size_t limit = 100;
};

AblationReport run_ablate(const AblateOptions& opt, std::ostream* log = nullptr);

/// Rounds values through the 8-bit image encoding, as writing and reading a
/// PGM would.
Sample quantize(const Sample& s);

std::string to_string(Stepper stepper);
Stepper parse_stepper(const std::string& name);

}  // namespace edm
