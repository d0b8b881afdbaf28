#include "edm/toyworld.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>

#include "edm/rng.hpp"

namespace edm {

namespace fs = std::filesystem;

DomainKind parse_domain_kind(const std::string& name) {
  if (name == "gaussian2d") return DomainKind::gaussian2d;
  if (name == "streak_images" || name == "images") return DomainKind::streak_images;
  throw ConfigError("unknown data kind '" + name + "' (expected gaussian2d or streak_images)");
}

std::string to_string(DomainKind kind) {
  return kind == DomainKind::gaussian2d ? "gaussian2d" : "streak_images";
}

std::size_t DomainSpec::dim() const {
  return kind == DomainKind::gaussian2d ? clean_mean.size() : image_size * image_size;
}

void DomainSpec::validate() const {
  if (kind == DomainKind::streak_images) {
    if (image_size == 0) throw ConfigError("image_size must be positive");
    if (!(texture_amplitude >= 0.0)) throw ConfigError("texture_amplitude must be >= 0");
  } else {
    if (clean_mean.empty()) throw ConfigError("gaussian2d needs a non-empty mean");
    if (rain_offset.size() != clean_mean.size()) {
      throw ConfigError("rain_offset and clean_mean differ in dimension");
    }
    if (!(clean_std >= 0.0) || !(rain_jitter_var >= 0.0)) {
      throw ConfigError("spreads must be non-negative");
    }
  }
}

namespace {

constexpr std::uint64_t kCleanStream = 0xC1EA;
constexpr std::uint64_t kRainStream = 0x4A19;
constexpr std::uint64_t kShuffleStream = 0x5F1E;

Vec clip_unit(Vec v) { return v.cwiseMax(-1.0).cwiseMin(1.0); }

Vec texture(std::size_t k, double amplitude, double offset, CounterRng& rng) {
  // Lowest non-constant frequencies, one per +/- pair.
  static constexpr int kFreqs[4][2] = {{0, 1}, {1, -1}, {1, 0}, {1, 1}};
  const auto kk = static_cast<Eigen::Index>(k);
  Vec out = Vec::Zero(kk * kk);
  const double w = 2.0 * std::numbers::pi / static_cast<double>(k);
  for (const auto& f : kFreqs) {
    const double c = rng.normal();
    const double phase = 2.0 * std::numbers::pi * rng.uniform();
    for (Eigen::Index r = 0; r < kk; ++r) {
      for (Eigen::Index col = 0; col < kk; ++col) {
        out[r * kk + col] += c * std::cos(w * static_cast<double>(f[0] * r + f[1] * col) + phase);
      }
    }
  }
  // Unit per-pixel variance before scaling (each term has variance 1/2).
  out /= std::sqrt(2.0);
  return clip_unit(clip_unit(out) * amplitude + Vec::Constant(kk * kk, offset));
}

Vec to_vec(const std::vector<double>& v) {
  return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

std::vector<Sample> make_clean(const DomainSpec& spec, std::size_t n, std::uint64_t seed) {
  spec.validate();
  if (n == 0) throw ConfigError("make_clean: n must be positive");
  std::vector<Sample> out;
  out.reserve(n);
  const Vec mean = to_vec(spec.clean_mean);
  for (std::size_t i = 0; i < n; ++i) {
    CounterRng rng(derive_seed(seed, i), kCleanStream);
    if (spec.kind == DomainKind::gaussian2d) {
      out.push_back(Sample::point(mean + spec.clean_std * rng.normal_vector(mean.size())));
    } else {
      out.push_back(Sample::image(
          texture(spec.image_size, spec.texture_amplitude, spec.texture_offset, rng),
          spec.image_size, spec.image_size));
    }
  }
  return out;
}

Sample corrupt_one(const Sample& clean, const DomainSpec& spec, std::uint64_t rain_seed) {
  if (clean.dim() != spec.dim()) throw DimensionError("corrupt: sample does not match the spec");
  CounterRng rng(rain_seed, kRainStream);
  Sample out = clean;
  if (spec.kind == DomainKind::gaussian2d) {
    out.values += to_vec(spec.rain_offset) +
                  std::sqrt(spec.rain_jitter_var) * rng.normal_vector(clean.values.size());
    return out;
  }
  const std::size_t k = spec.image_size;
  for (std::size_t s = 0; s < spec.streaks; ++s) {
    const std::size_t off = rng.below(k);
    for (std::size_t r = 0; r < k; ++r) {
      out.values[static_cast<Eigen::Index>(r * k + (r + off) % k)] += spec.delta;
    }
  }
  out.values = clip_unit(std::move(out.values));
  return out;
}

CorruptedSet corrupt(std::span<const Sample> clean, const DomainSpec& spec, std::uint64_t seed) {
  spec.validate();
  if (clean.empty()) throw ConfigError("corrupt: empty collection");
  CounterRng rng(seed, kShuffleStream);
  std::vector<std::size_t> order = permutation(clean.size(), rng);
  CorruptedSet out;
  out.rainy.reserve(clean.size());
  for (std::size_t j = 0; j < order.size(); ++j) {
    out.rainy.push_back(corrupt_one(clean[order[j]], spec, derive_seed(seed, order[j])));
  }
  out.pairing = HiddenPairing(std::move(order));
  return out;
}

double pixel_to_value(unsigned p) { return static_cast<double>(p) / 127.5 - 1.0; }

unsigned value_to_pixel(double v) {
  const double p = std::floor((v + 1.0) * 127.5 + 0.5);
  return static_cast<unsigned>(std::clamp(p, 0.0, 255.0));
}

namespace {

// Reads the next header token, skipping whitespace and '#' comments.
std::string next_token(std::istream& in) {
  std::string tok;
  while (in) {
    const int c = in.peek();
    if (c == EOF) break;
    if (c == '#') {
      std::string skip;
      std::getline(in, skip);
    } else if (std::isspace(c)) {
      if (!tok.empty()) break;
      in.get();
    } else {
      tok.push_back(static_cast<char>(in.get()));
    }
  }
  return tok;
}

std::size_t header_number(std::istream& in, const fs::path& path) {
  const std::string tok = next_token(in);
  if (tok.empty() || !std::all_of(tok.begin(), tok.end(), ::isdigit)) {
    throw FormatError(path.string() + ": malformed PGM header");
  }
  return std::stoul(tok);
}

}  // namespace

Sample load_pgm(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  if (next_token(in) != "P5") throw FormatError(path.string() + ": not a binary PGM (P5)");
  const std::size_t width = header_number(in, path);
  const std::size_t height = header_number(in, path);
  const std::size_t maxval = header_number(in, path);
  if (width == 0 || height == 0) throw FormatError(path.string() + ": empty image");
  if (maxval != 255) throw FormatError(path.string() + ": only 8-bit PGM (maxval 255) supported");
  in.get();  // single whitespace after maxval
  std::vector<unsigned char> buf(width * height);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (in.gcount() != static_cast<std::streamsize>(buf.size())) {
    throw FormatError(path.string() + ": truncated pixel data");
  }
  Vec v(static_cast<Eigen::Index>(buf.size()));
  for (std::size_t i = 0; i < buf.size(); ++i) v[static_cast<Eigen::Index>(i)] = pixel_to_value(buf[i]);
  return Sample::image(std::move(v), height, width);
}

void save_pgm(const Sample& image, const fs::path& path) {
  if (!image.is_image()) throw DimensionError("save_pgm: sample is not an image");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "P5\n" << image.width << ' ' << image.height << "\n255\n";
  std::vector<unsigned char> buf(image.dim());
  for (std::size_t i = 0; i < buf.size(); ++i) {
    buf[i] = static_cast<unsigned char>(value_to_pixel(image.values[static_cast<Eigen::Index>(i)]));
  }
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

Sample load_point(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<double> vals;
  std::string line;
  std::getline(in, line);
  std::istringstream ss(line);
  std::string field;
  while (std::getline(ss, field, '\t')) {
    try {
      std::size_t used = 0;
      vals.push_back(std::stod(field, &used));
      if (used != field.size()) throw std::invalid_argument(field);
    } catch (const std::exception&) {
      throw FormatError(path.string() + ": bad coordinate '" + field + "'");
    }
  }
  if (vals.empty()) throw FormatError(path.string() + ": empty point file");
  return Sample::point(to_vec(vals));
}

void save_point(const Sample& point, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out.precision(17);
  for (Eigen::Index i = 0; i < point.values.size(); ++i) {
    if (i > 0) out << '\t';
    out << point.values[i];
  }
  out << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

Sample load_sample(const fs::path& path) {
  return path.extension() == ".tsv" ? load_point(path) : load_pgm(path);
}

void save_sample(const Sample& sample, const fs::path& path) {
  if (sample.is_image()) {
    save_pgm(sample, path);
  } else {
    save_point(sample, path);
  }
}

std::vector<std::pair<std::string, Sample>> load_image_dir(const fs::path& dir,
                                                           std::size_t expected_size) {
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const auto ext = entry.path().extension();
    if (entry.is_regular_file() && (ext == ".pgm" || ext == ".tsv")) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<std::pair<std::string, Sample>> out;
  out.reserve(files.size());
  for (const auto& f : files) {
    Sample s = load_sample(f);
    if (expected_size != 0 && s.is_image() &&
        (s.height != expected_size || s.width != expected_size)) {
      throw FormatError(f.string() + ": expected " + std::to_string(expected_size) + "x" +
                        std::to_string(expected_size) + " image");
    }
    out.emplace_back(f.filename().string(), std::move(s));
  }
  return out;
}

std::vector<std::size_t> cluster_filter_indices(std::span<const Sample> samples,
                                                const FeatureEncoder& encoder, std::size_t k,
                                                double quantile, std::uint64_t seed) {
  if (k == 0) throw ConfigError("cluster_filter: k must be at least 1");
  if (k > samples.size()) throw ConfigError("cluster_filter: more clusters than samples");
  if (!(quantile > 0.0 && quantile <= 1.0)) throw ConfigError("quantile must lie in (0, 1]");
  const std::size_t n = samples.size();
  const Mat e = encoder.embed_batch(stack_columns(samples));

  auto dist2 = [&](std::size_t i, const Vec& c) { return (e.col(static_cast<Eigen::Index>(i)) - c).squaredNorm(); };

  // k-means++ seeding.
  CounterRng rng(seed, /*stream=*/0x3EA5);
  std::vector<Vec> centers;
  centers.push_back(e.col(static_cast<Eigen::Index>(rng.below(n))));
  std::vector<double> best(n, std::numeric_limits<double>::infinity());
  while (centers.size() < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      best[i] = std::min(best[i], dist2(i, centers.back()));
      total += best[i];
    }
    std::size_t pick = 0;
    if (total > 0.0) {
      double u = rng.uniform() * total;
      for (pick = 0; pick + 1 < n; ++pick) {
        u -= best[pick];
        if (u <= 0.0) break;
      }
    } else {
      pick = rng.below(n);
    }
    centers.push_back(e.col(static_cast<Eigen::Index>(pick)));
  }

  std::vector<std::size_t> assign(n, 0);
  auto assign_all = [&] {
    for (std::size_t i = 0; i < n; ++i) {
      double bd = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < k; ++c) {
        const double d = dist2(i, centers[c]);
        if (d < bd) {
          bd = d;
          assign[i] = c;
        }
      }
    }
  };
  for (int iter = 0; iter < 50; ++iter) {
    assign_all();
    std::vector<Vec> sums(k, Vec::Zero(e.rows()));
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      sums[assign[i]] += e.col(static_cast<Eigen::Index>(i));
      ++counts[assign[i]];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] > 0) centers[c] = sums[c] / static_cast<double>(counts[c]);
    }
  }
  assign_all();

  std::vector<std::vector<std::size_t>> members(k);
  for (std::size_t i = 0; i < n; ++i) members[assign[i]].push_back(i);
  std::vector<char> keep(n, 0);
  for (std::size_t c = 0; c < k; ++c) {
    auto& m = members[c];
    std::stable_sort(m.begin(), m.end(), [&](std::size_t a, std::size_t b) {
      return dist2(a, centers[c]) < dist2(b, centers[c]);
    });
    const auto quota = static_cast<std::size_t>(
        std::ceil(quantile * static_cast<double>(m.size()) - 1e-12));
    for (std::size_t j = 0; j < std::min(quota, m.size()); ++j) keep[m[j]] = 1;
  }
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < n; ++i) {
    if (keep[i]) out.push_back(i);
  }
  return out;
}

std::vector<Sample> cluster_filter(std::span<const Sample> samples, const FeatureEncoder& encoder,
                                   std::size_t k, double quantile, std::uint64_t seed) {
  std::vector<Sample> out;
  for (std::size_t i : cluster_filter_indices(samples, encoder, k, quantile, seed)) {
    out.push_back(samples[i]);
  }
  return out;
}

}  // namespace edm
