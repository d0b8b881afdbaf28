#include "edm/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <yaml-cpp/yaml.h>

namespace edm {

namespace {

constexpr const char* kMetricsNote =
    "proxy metrics: mse and psnr against ground truth on the [-1,1] range "
    "(psnr = 10*log10(4/mse), 'inf' when mse = 0); clean_prob = prompt probability of "
    "the clean domain, clean iff > 0.5";

void emit_config(YAML::Emitter& out, const ConfigEcho& config) {
  out << YAML::Key << "config" << YAML::Value << YAML::BeginMap;
  for (const auto& [k, v] : config) out << YAML::Key << k << YAML::Value << v;
  out << YAML::EndMap;
}

void emit_stat(YAML::Emitter& out, const char* name, const Stat& s) {
  out << YAML::Key << name << YAML::Value << YAML::Flow << YAML::BeginMap;
  out << YAML::Key << "mean" << YAML::Value << format_number(s.mean);
  out << YAML::Key << "median" << YAML::Value << format_number(s.median);
  out << YAML::EndMap;
}

}  // namespace

double mse(const Vec& a, const Vec& b) {
  require_same_dim(a, b, "mse");
  if (a.size() == 0) throw DimensionError("mse of empty vectors");
  return (a - b).squaredNorm() / static_cast<double>(a.size());
}

double psnr_from_mse(double m) {
  if (m < 0.0 || std::isnan(m)) throw DomainError("psnr: mse must be non-negative");
  if (m == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(4.0 / m);
}

std::string format_number(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  std::ostringstream ss;
  ss.precision(10);
  ss << x;
  return ss.str();
}

Stat summarize(std::vector<double> values) {
  Stat s;
  if (values.empty()) return s;
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(values.size());
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  s.median = n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
  return s;
}

EvalReport EvalReport::build(ConfigEcho config, std::vector<ImageMetrics> images) {
  EvalReport r;
  r.config = std::move(config);
  std::sort(images.begin(), images.end(),
            [](const ImageMetrics& a, const ImageMetrics& b) { return a.name < b.name; });
  std::vector<double> m;
  std::vector<double> p;
  std::vector<double> c;
  std::size_t clean = 0;
  for (const auto& im : images) {
    m.push_back(im.mse);
    p.push_back(im.psnr);
    c.push_back(im.clean_prob);
    clean += im.clean_prob > 0.5;
  }
  r.mse = summarize(m);
  r.psnr = summarize(p);
  r.clean_prob = summarize(c);
  r.clean_fraction = images.empty() ? 0.0 : static_cast<double>(clean) / static_cast<double>(images.size());
  r.images = std::move(images);
  return r;
}

std::string EvalReport::to_yaml() const {
  YAML::Emitter out;
  out << YAML::BeginMap;
  out << YAML::Key << "report" << YAML::Value << "eval";
  out << YAML::Key << "metrics_note" << YAML::Value << kMetricsNote;
  emit_config(out, config);
  out << YAML::Key << "aggregate" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "count" << YAML::Value << images.size();
  emit_stat(out, "mse", mse);
  emit_stat(out, "psnr", psnr);
  emit_stat(out, "clean_prob", clean_prob);
  out << YAML::Key << "clean_fraction" << YAML::Value << format_number(clean_fraction);
  out << YAML::EndMap;
  out << YAML::Key << "images" << YAML::Value << YAML::BeginSeq;
  for (const auto& im : images) {
    out << YAML::Flow << YAML::BeginMap;
    out << YAML::Key << "name" << YAML::Value << im.name;
    out << YAML::Key << "mse" << YAML::Value << format_number(im.mse);
    out << YAML::Key << "psnr" << YAML::Value << format_number(im.psnr);
    out << YAML::Key << "clean_prob" << YAML::Value << format_number(im.clean_prob);
    out << YAML::EndMap;
  }
  out << YAML::EndSeq;
  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

std::string AblationReport::to_yaml() const {
  YAML::Emitter out;
  out << YAML::BeginMap;
  out << YAML::Key << "report" << YAML::Value << "ablate";
  out << YAML::Key << "sweep" << YAML::Value << sweep;
  out << YAML::Key << "metrics_note" << YAML::Value << kMetricsNote;
  emit_config(out, config);
  out << YAML::Key << "columns" << YAML::Value << YAML::Flow << YAML::BeginSeq << "setting"
      << "mean_mse" << "mean_psnr" << "mean_clean_prob" << "clean_fraction" << YAML::EndSeq;
  out << YAML::Key << "rows" << YAML::Value << YAML::BeginSeq;
  for (const auto& r : rows) {
    out << YAML::Flow << YAML::BeginSeq << r.setting << format_number(r.mean_mse)
        << format_number(r.mean_psnr) << format_number(r.mean_clean_prob)
        << format_number(r.clean_fraction) << YAML::EndSeq;
  }
  out << YAML::EndSeq;
  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

std::string config_yaml(const std::string& command, const ConfigEcho& config) {
  YAML::Emitter out;
  out << YAML::BeginMap;
  out << YAML::Key << "command" << YAML::Value << command;
  emit_config(out, config);
  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace edm
