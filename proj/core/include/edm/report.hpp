#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "edm/types.hpp"

namespace edm {

/// Mean squared error per element.
double mse(const Vec& a, const Vec& b);

/// 10 log10(4 / mse) for values in [-1, 1]; +infinity when mse is 0.
double psnr_from_mse(double mse);

/// Numbers as YAML scalars; infinities become "inf".
std::string format_number(double x);

/// Ordered key/value pairs echoed into every report.
using ConfigEcho = std::vector<std::pair<std::string, std::string>>;

struct ImageMetrics {
  std::string name;
  double mse = 0.0;
  double psnr = 0.0;
  double clean_prob = 0.0;
};

struct Stat {
  double mean = 0.0;
  double median = 0.0;
};

Stat summarize(std::vector<double> values);

/// Per-image proxy metrics plus aggregates. Images are kept sorted by name
/// so aggregates and output do not depend on enumeration order.
struct EvalReport {
  ConfigEcho config;
  std::vector<ImageMetrics> images;
  Stat mse;
  Stat psnr;
  Stat clean_prob;
  double clean_fraction = 0.0;

  static EvalReport build(ConfigEcho config, std::vector<ImageMetrics> images);
  std::string to_yaml() const;
};

struct AblationRow {
  std::string setting;
  double mean_mse = 0.0;
  double mean_psnr = 0.0;
  double mean_clean_prob = 0.0;
  double clean_fraction = 0.0;
};

struct AblationReport {
  std::string sweep;
  ConfigEcho config;
  std::vector<AblationRow> rows;

  std::string to_yaml() const;
};

/// Standalone config echo document.
std::string config_yaml(const std::string& command, const ConfigEcho& config);

void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace edm
