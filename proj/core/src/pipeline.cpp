#include "edm/pipeline.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include "edm/checkpoint.hpp"
#include "edm/rng.hpp"

namespace edm {

namespace {

std::string num(double x) { return format_number(x); }

std::string indexed_name(const char* prefix, std::size_t i, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%05zu%s", prefix, i, ext);
  return buf;
}

fs::path clean_dir_of(const fs::path& p) {
  return fs::is_directory(p / "clean") ? p / "clean" : p;
}

void require_dir(const fs::path& p, const char* what) {
  if (!fs::is_directory(p)) throw IoError(std::string(what) + " directory not found: " + p.string());
}

template <typename T>
std::vector<T> pick(const std::vector<T>& v, const std::vector<std::size_t>& idx) {
  std::vector<T> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(v[i]);
  return out;
}

ConfigEcho sampler_echo(const SamplerConfig& c) {
  return {{"lambda1", num(c.energy.lambda1)},
          {"lambda2", num(c.energy.lambda2)},
          {"layer_weights", [&] {
             std::string s;
             for (double w : c.energy.layer_weights) s += (s.empty() ? "" : ",") + num(w);
             return s;
           }()},
          {"perturb_ref", c.energy.perturb_reference ? "true" : "false"},
          {"squared_distance", c.energy.squared_distance ? "true" : "false"},
          {"subtract_preserving", c.energy.subtract_preserving ? "true" : "false"},
          {"ts", num(c.ts_fraction)},
          {"steps", std::to_string(c.steps)},
          {"stepper", to_string(c.stepper)},
          {"seed", std::to_string(c.seed)},
          {"per_image_seed", "seed xor file index"}};
}

struct LoadedModels {
  ScoreNetwork score;
  std::optional<PromptModel> prompts;
};

LoadedModels load_models(const fs::path& score_path, const fs::path& prompt_path, bool need_prompts,
                         std::size_t dim) {
  LoadedModels m{load_score_network(Checkpoint::load(score_path)), std::nullopt};
  if (m.score.input_dim() != dim) {
    throw DimensionError("score checkpoint expects dimension " + std::to_string(m.score.input_dim()) +
                         " but inputs have " + std::to_string(dim));
  }
  if (!prompt_path.empty()) {
    m.prompts = load_prompt_model(Checkpoint::load(prompt_path));
  } else if (need_prompts) {
    throw ConfigError("guided deraining needs a prompt checkpoint");
  }
  if (m.prompts && m.prompts->encoder.input_dim() != dim) {
    throw DimensionError("prompt checkpoint encoder expects dimension " +
                         std::to_string(m.prompts->encoder.input_dim()) + " but inputs have " +
                         std::to_string(dim));
  }
  return m;
}

}  // namespace

Dataset load_dataset(const fs::path& dir) {
  Dataset d;
  for (auto& [name, s] : load_image_dir(dir)) {
    d.names.push_back(name);
    d.samples.push_back(std::move(s));
  }
  if (d.samples.empty()) throw IoError("no .pgm or .tsv samples in " + dir.string());
  for (const Sample& s : d.samples) {
    if (s.dim() != d.samples.front().dim()) throw DimensionError("mixed sample sizes in " + dir.string());
  }
  return d;
}

Sample quantize(const Sample& s) {
  if (!s.is_image()) return s;
  Sample q = s;
  for (Eigen::Index i = 0; i < q.values.size(); ++i) {
    q.values[i] = pixel_to_value(value_to_pixel(q.values[i]));
  }
  return q;
}

std::string to_string(Stepper stepper) {
  return stepper == Stepper::vp_rule ? "vp" : "em";
}

Stepper parse_stepper(const std::string& name) {
  if (name == "vp" || name == "vp_rule") return Stepper::vp_rule;
  if (name == "em" || name == "euler_maruyama") return Stepper::euler_maruyama;
  throw ConfigError("unknown stepper '" + name + "' (expected vp or em)");
}

// ---- gen-data --------------------------------------------------------------

void run_gen_data(const GenDataOptions& opt, std::ostream* log) {
  opt.spec.validate();
  const bool images = opt.spec.kind == DomainKind::streak_images;
  const char* ext = images ? ".pgm" : ".tsv";
  const std::vector<Sample> clean = make_clean(opt.spec, opt.n, opt.seed);
  // The rain seed is decoupled from the content seed.
  const CorruptedSet rainy = corrupt(clean, opt.spec, mix64(opt.seed ^ 0x7261696EULL));

  fs::create_directories(opt.out / "clean");
  fs::create_directories(opt.out / "rainy");
  for (std::size_t i = 0; i < clean.size(); ++i) {
    save_sample(clean[i], opt.out / "clean" / indexed_name("clean", i, ext));
  }
  std::ostringstream pairs;
  for (std::size_t j = 0; j < rainy.rainy.size(); ++j) {
    const std::string rname = indexed_name("rainy", j, ext);
    save_sample(rainy.rainy[j], opt.out / "rainy" / rname);
    pairs << rname << '\t' << indexed_name("clean", rainy.pairing.clean_index(j), ext) << '\n';
  }
  write_text(opt.out / "pairs.tsv", pairs.str());

  const DomainSpec& s = opt.spec;
  ConfigEcho echo{{"kind", to_string(s.kind)}, {"n", std::to_string(opt.n)},
                  {"seed", std::to_string(opt.seed)}};
  if (images) {
    echo.insert(echo.end(), {{"size", std::to_string(s.image_size)},
                             {"streaks", std::to_string(s.streaks)},
                             {"delta", num(s.delta)},
                             {"texture_amplitude", num(s.texture_amplitude)},
                             {"texture_offset", num(s.texture_offset)}});
  } else {
    echo.insert(echo.end(), {{"clean_std", num(s.clean_std)},
                             {"rain_jitter_var", num(s.rain_jitter_var)}});
  }
  write_text(opt.out / "config.yaml", config_yaml("gen-data", echo));
  if (log) *log << "wrote " << clean.size() << " clean and " << rainy.rainy.size()
                << " rainy samples to " << opt.out.string() << "\n";
}

// ---- train-score -----------------------------------------------------------

TrainScoreResult run_train_score(const TrainScoreOptions& opt, std::ostream* log) {
  const fs::path dir = clean_dir_of(opt.data);
  require_dir(dir, "clean data");
  const Dataset data = load_dataset(dir);
  DsmResult r = train_dsm(data.samples, DiffusionSchedule(), opt.train, opt.arch);
  if (!opt.out.parent_path().empty()) fs::create_directories(opt.out.parent_path());
  score_checkpoint(r.network).save(opt.out);

  const std::size_t tail = std::max<std::size_t>(1, r.losses.size() / 10);
  double final_loss = 0.0;
  for (std::size_t i = r.losses.size() - tail; i < r.losses.size(); ++i) final_loss += r.losses[i];
  final_loss /= static_cast<double>(tail);

  const ConfigEcho echo{{"data", opt.data.string()},
                        {"out", opt.out.string()},
                        {"samples", std::to_string(data.size())},
                        {"steps", std::to_string(opt.train.steps)},
                        {"lr", num(opt.train.learning_rate)},
                        {"batch", std::to_string(opt.train.batch_size)},
                        {"adam_betas", num(opt.train.adam_beta1) + "," + num(opt.train.adam_beta2)},
                        {"t_min", num(opt.train.t_min)},
                        {"seed", std::to_string(opt.train.seed)},
                        {"final_loss", num(final_loss)}};
  write_text(fs::path(opt.out.string() + ".yaml"), config_yaml("train-score", echo));
  if (log) *log << "final loss (mean of last " << tail << " steps): " << num(final_loss) << "\n";
  return {final_loss, data.size()};
}

// ---- train-prompts ---------------------------------------------------------

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> holdout_split(std::size_t n,
                                                                              double fraction,
                                                                              std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction < 1.0)) throw ConfigError("holdout must lie in [0, 1)");
  CounterRng rng(seed, /*stream=*/0x401D);
  std::vector<std::size_t> perm = permutation(n, rng);
  const auto held = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n)));
  std::vector<std::size_t> train(perm.begin(), perm.end() - static_cast<std::ptrdiff_t>(held));
  std::vector<std::size_t> test(perm.end() - static_cast<std::ptrdiff_t>(held), perm.end());
  if (train.empty()) throw ConfigError("holdout leaves no training samples");
  return {train, test};
}

TrainPromptsResult run_train_prompts(const TrainPromptsOptions& opt, std::ostream* log) {
  require_dir(opt.rainy, "rainy");
  require_dir(opt.clean, "clean");
  const Dataset rainy = load_dataset(opt.rainy);
  const Dataset clean = load_dataset(opt.clean);
  if (rainy.samples.front().dim() != clean.samples.front().dim()) {
    throw DimensionError("rainy and clean samples differ in size");
  }
  EncoderConfig ec;
  ec.input_dim = clean.samples.front().dim();
  ec.seed = opt.encoder_seed;
  const FeatureEncoder encoder(ec);

  const auto [rtrain, rtest] = holdout_split(rainy.size(), opt.holdout, opt.train.seed ^ 0x52);
  const auto [ctrain, ctest] = holdout_split(clean.size(), opt.holdout, opt.train.seed ^ 0x43);
  const auto rain_train = pick(rainy.samples, rtrain);
  const auto clean_train = pick(clean.samples, ctrain);
  PromptTrainResult r = train_prompts(encoder, rain_train, clean_train, opt.train, opt.init_std);

  TrainPromptsResult out;
  out.train_rainy = rtrain.size();
  out.train_clean = ctrain.size();
  out.heldout = rtest.size() + ctest.size();
  const std::size_t tail = std::max<std::size_t>(1, r.losses.size() / 10);
  for (std::size_t i = r.losses.size() - tail; i < r.losses.size(); ++i) out.final_loss += r.losses[i];
  out.final_loss /= static_cast<double>(tail);
  out.heldout_accuracy = out.heldout == 0
                             ? prompt_accuracy(encoder, clean_train, rain_train, r.prompts)
                             : prompt_accuracy(encoder, pick(clean.samples, ctest),
                                               pick(rainy.samples, rtest), r.prompts);

  if (!opt.out.parent_path().empty()) fs::create_directories(opt.out.parent_path());
  prompt_checkpoint(encoder, r.prompts).save(opt.out);
  const ConfigEcho echo{{"rainy", opt.rainy.string()},
                        {"clean", opt.clean.string()},
                        {"out", opt.out.string()},
                        {"encoder_seed", std::to_string(opt.encoder_seed)},
                        {"iters", std::to_string(opt.train.steps)},
                        {"lr", num(opt.train.learning_rate)},
                        {"batch", std::to_string(opt.train.batch_size)},
                        {"adam_betas", num(opt.train.adam_beta1) + "," + num(opt.train.adam_beta2)},
                        {"init_std", num(opt.init_std)},
                        {"holdout", num(opt.holdout)},
                        {"seed", std::to_string(opt.train.seed)},
                        {"final_loss", num(out.final_loss)},
                        {"heldout_accuracy", num(out.heldout_accuracy)}};
  write_text(fs::path(opt.out.string() + ".yaml"), config_yaml("train-prompts", echo));
  if (log) {
    *log << "final loss (mean of last " << tail << " steps): " << num(out.final_loss) << "\n"
         << "held-out accuracy: " << num(out.heldout_accuracy) << " on " << out.heldout
         << " samples\n";
  }
  return out;
}

// ---- derain ----------------------------------------------------------------

SampleResult derain_one(const Sample& input, std::size_t index, const SamplerComponents& comp,
                        const SamplerConfig& base) {
  SamplerConfig cfg = base;
  cfg.seed = derive_seed(base.seed, index);
  SampleResult r = sample(input.values, comp, cfg);
  return r;
}

std::vector<Sample> derain_all(std::span<const Sample> inputs, const SamplerComponents& comp,
                               const SamplerConfig& base) {
  std::vector<Sample> out;
  out.reserve(inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    Sample s = inputs[i];
    s.values = derain_one(inputs[i], i, comp, base).y0;
    out.push_back(std::move(s));
  }
  return out;
}

std::string trace_tsv(const std::vector<TraceRow>& trace) {
  std::ostringstream ss;
  ss.precision(17);
  ss << "step\tn\tenergy\tgrad_norm\n";
  for (const TraceRow& r : trace) {
    ss << r.step << '\t' << r.n << '\t' << r.energy << '\t' << r.grad_norm << '\n';
  }
  return ss.str();
}

void run_derain(const DerainOptions& opt, std::ostream* log) {
  require_dir(opt.input, "input");
  const Dataset inputs = load_dataset(opt.input);
  opt.sampler.validate(DiffusionSchedule());
  const LoadedModels models =
      load_models(opt.score, opt.prompts, opt.sampler.energy.guided(), inputs.samples.front().dim());
  SamplerComponents comp{models.score.schedule(), score_fn(models.score),
                         models.prompts ? &models.prompts->encoder : nullptr,
                         models.prompts ? &models.prompts->prompts : nullptr};

  fs::create_directories(opt.out);
  if (opt.trace) fs::create_directories(*opt.trace);
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const SampleResult r = derain_one(inputs.samples[i], i, comp, opt.sampler);
    Sample s = inputs.samples[i];
    s.values = r.y0;
    save_sample(s, opt.out / inputs.names[i]);
    if (opt.trace) {
      write_text(*opt.trace / (fs::path(inputs.names[i]).stem().string() + ".tsv"), trace_tsv(r.trace));
    }
  }
  ConfigEcho echo{{"input", opt.input.string()},
                  {"out", opt.out.string()},
                  {"score", opt.score.string()},
                  {"prompts", opt.prompts.string()},
                  {"images", std::to_string(inputs.size())}};
  for (auto& kv : sampler_echo(opt.sampler)) echo.push_back(kv);
  echo.emplace_back("trace", opt.trace ? opt.trace->string() : "");
  write_text(opt.out / "derain.yaml", config_yaml("derain", echo));
  if (log) *log << "derained " << inputs.size() << " samples into " << opt.out.string() << "\n";
}

// ---- eval ------------------------------------------------------------------

std::vector<std::pair<std::string, std::string>> read_pairs(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) +
                        ": expected 'rainy_file<TAB>clean_file'");
    }
    out.emplace_back(line.substr(0, tab), line.substr(tab + 1));
  }
  return out;
}

std::vector<ImageMetrics> score_predictions(const std::vector<std::string>& names,
                                            std::span<const Sample> pred,
                                            std::span<const Sample> gt,
                                            const FeatureEncoder& encoder,
                                            const PromptPair& prompts) {
  if (names.size() != pred.size() || pred.size() != gt.size()) {
    throw DimensionError("score_predictions: names, predictions and ground truth differ in count");
  }
  std::vector<ImageMetrics> out;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    ImageMetrics m;
    m.name = names[i];
    m.mse = mse(pred[i].values, gt[i].values);
    m.psnr = psnr_from_mse(m.mse);
    m.clean_prob = clip_probability(encoder, pred[i].values, prompts, PromptRole::positive);
    out.push_back(std::move(m));
  }
  return out;
}

namespace {

struct PairedSet {
  std::vector<std::string> names;
  std::vector<Sample> pred;
  std::vector<Sample> gt;
};

PairedSet load_paired(const fs::path& pred_dir, const fs::path& gt_root, const fs::path& pairs_path,
                      std::size_t limit) {
  require_dir(pred_dir, "prediction");
  const fs::path gt_dir = clean_dir_of(gt_root);
  require_dir(gt_dir, "ground-truth");
  std::map<std::string, std::string> pairs;
  for (auto& [r, c] : read_pairs(pairs_path)) pairs[r] = c;
  Dataset pred = load_dataset(pred_dir);
  PairedSet out;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (limit != 0 && out.names.size() == limit) break;
    const auto it = pairs.find(pred.names[i]);
    if (it == pairs.end()) throw FormatError("no pairs.tsv entry for " + pred.names[i]);
    Sample gt = load_sample(gt_dir / it->second);
    if (gt.dim() != pred.samples[i].dim()) {
      throw DimensionError(pred.names[i] + ": ground truth has a different size");
    }
    out.names.push_back(pred.names[i]);
    out.pred.push_back(std::move(pred.samples[i]));
    out.gt.push_back(std::move(gt));
  }
  return out;
}

}  // namespace

EvalReport run_eval(const EvalOptions& opt, std::ostream* log) {
  const PairedSet set = load_paired(opt.pred, opt.gt, opt.pairs, 0);
  const PromptModel model = load_prompt_model(Checkpoint::load(opt.prompts));
  EvalReport report = EvalReport::build(
      {{"pred", opt.pred.string()},
       {"gt", opt.gt.string()},
       {"pairs", opt.pairs.string()},
       {"prompts", opt.prompts.string()}},
      score_predictions(set.names, set.pred, set.gt, model.encoder, model.prompts));
  if (opt.report) write_text(*opt.report, report.to_yaml());
  if (log) {
    *log << "images: " << report.images.size() << "  mean mse: " << num(report.mse.mean)
         << "  mean psnr: " << num(report.psnr.mean)
         << "  mean clean_prob: " << num(report.clean_prob.mean) << "\n";
  }
  return report;
}

// ---- ablate ----------------------------------------------------------------

Sweep parse_sweep(const std::string& name) {
  if (name == "lambda") return Sweep::lambda;
  if (name == "ts") return Sweep::ts;
  if (name == "energy-input" || name == "energy_input") return Sweep::energy_input;
  throw ConfigError("unknown sweep '" + name + "' (expected lambda, ts or energy-input)");
}

std::string to_string(Sweep sweep) {
  switch (sweep) {
    case Sweep::lambda: return "lambda";
    case Sweep::ts: return "ts";
    case Sweep::energy_input: return "energy-input";
  }
  return "?";
}

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream ss(s);
  while (std::getline(ss, cur, sep)) {
    if (!cur.empty()) out.push_back(cur);
  }
  return out;
}

double parse_double(const std::string& s) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("bad number '" + s + "' in grid");
  }
}

}  // namespace

std::vector<SweepSetting> expand_sweep(Sweep sweep, const std::string& grid,
                                       const SamplerConfig& base) {
  std::string g = grid;
  if (g.empty()) {
    g = sweep == Sweep::lambda ? "0:0,73:0,0:0.72,73:0.72"
        : sweep == Sweep::ts   ? "0.2,0.4,0.5,0.6,0.8"
                               : "x0,xt";
  }
  std::vector<SweepSetting> out;
  for (const std::string& item : split(g, ',')) {
    SweepSetting s{item, base};
    if (sweep == Sweep::lambda) {
      const auto parts = split(item, ':');
      if (parts.size() != 2) throw ConfigError("lambda grid items look like l1:l2, got '" + item + "'");
      s.config.energy.lambda1 = parse_double(parts[0]);
      s.config.energy.lambda2 = parse_double(parts[1]);
      s.label = "lambda1=" + num(s.config.energy.lambda1) + ",lambda2=" + num(s.config.energy.lambda2);
    } else if (sweep == Sweep::ts) {
      s.config.ts_fraction = parse_double(item);
      s.label = "ts=" + num(s.config.ts_fraction) + "T";
    } else {
      if (item != "x0" && item != "xt") throw ConfigError("energy-input grid items are x0 or xt");
      s.config.energy.perturb_reference = item == "xt";
      s.label = item == "xt" ? "(y_t,x_t)" : "(y_t,x_0)";
    }
    s.config.validate(DiffusionSchedule());
    out.push_back(std::move(s));
  }
  if (out.empty()) throw ConfigError("empty sweep grid");
  return out;
}

AblationReport run_ablate(const AblateOptions& opt, std::ostream* log) {
  const PairedSet set = load_paired(opt.input, opt.gt, opt.pairs, opt.limit);
  const auto settings = expand_sweep(opt.sweep, opt.grid, opt.base);
  const LoadedModels models =
      load_models(opt.score, opt.prompts, true, set.pred.front().dim());
  const FeatureEncoder& encoder = models.prompts->encoder;
  const PromptPair& prompts = models.prompts->prompts;
  SamplerComponents comp{models.score.schedule(), score_fn(models.score), &encoder, &prompts};

  AblationReport report;
  report.sweep = to_string(opt.sweep);
  report.config = {{"input", opt.input.string()}, {"gt", opt.gt.string()},
                   {"pairs", opt.pairs.string()}, {"score", opt.score.string()},
                   {"prompts", opt.prompts.string()}, {"images", std::to_string(set.names.size())},
                   {"grid", opt.grid.empty() ? "default" : opt.grid}};
  for (auto& kv : sampler_echo(opt.base)) report.config.push_back(kv);

  for (const SweepSetting& s : settings) {
    std::vector<Sample> out = derain_all(set.pred, comp, s.config);
    for (Sample& o : out) o = quantize(o);
    const EvalReport r = EvalReport::build({}, score_predictions(set.names, out, set.gt, encoder, prompts));
    report.rows.push_back({s.label, r.mse.mean, r.psnr.mean, r.clean_prob.mean, r.clean_fraction});
    if (log) {
      *log << s.label << "\tmse " << num(r.mse.mean) << "\tclean_prob " << num(r.clean_prob.mean)
           << "\n";
    }
  }
  if (opt.report) write_text(*opt.report, report.to_yaml());
  return report;
}

}  // namespace edm
