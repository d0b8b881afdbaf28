#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "edm/feature_space.hpp"
#include "edm/types.hpp"

namespace edm {

enum class DomainKind { gaussian2d, streak_images };

DomainKind parse_domain_kind(const std::string& name);
std::string to_string(DomainKind kind);

/// Synthetic unpaired clean/rainy domains.
///
/// streak_images: clean images are faint low-frequency cosine textures
/// (no constant term) scaled by texture_amplitude and shifted by
/// texture_offset. Rain adds delta along `streaks` 45-degree lines of width
/// one pixel that wrap around the image edge, then clips to [-1, 1].
///
/// gaussian2d: clean ~ N(clean_mean, clean_std^2 I); rain adds rain_offset
/// plus N(0, rain_jitter_var I).
struct DomainSpec {
  DomainKind kind = DomainKind::streak_images;
  std::size_t image_size = 16;
  double texture_amplitude = 0.1;
  double texture_offset = -0.035;
  std::size_t streaks = 3;
  double delta = 0.8;

  std::vector<double> clean_mean = {0.0, 0.0};
  double clean_std = 1.0;
  std::vector<double> rain_offset = {2.0, 2.0};
  double rain_jitter_var = 0.05;

  std::size_t dim() const;
  void validate() const;
};

/// Index map from rainy outputs back to their clean sources. Only the
/// evaluation path reads it; trainers take plain sample spans.
class HiddenPairing {
 public:
  HiddenPairing() = default;
  explicit HiddenPairing(std::vector<std::size_t> rainy_to_clean)
      : rainy_to_clean_(std::move(rainy_to_clean)) {}

  std::size_t size() const { return rainy_to_clean_.size(); }
  std::size_t clean_index(std::size_t rainy_index) const { return rainy_to_clean_.at(rainy_index); }
  const std::vector<std::size_t>& table() const { return rainy_to_clean_; }

 private:
  std::vector<std::size_t> rainy_to_clean_;
};

struct CorruptedSet {
  std::vector<Sample> rainy;
  HiddenPairing pairing;
};

std::vector<Sample> make_clean(const DomainSpec& spec, std::size_t n, std::uint64_t seed);

/// Corrupts one sample; a pure function of (clean, spec, rain_seed).
Sample corrupt_one(const Sample& clean, const DomainSpec& spec, std::uint64_t rain_seed);

/// Corrupts item i with seed derive_seed(seed, i), then shuffles the output.
CorruptedSet corrupt(std::span<const Sample> clean, const DomainSpec& spec, std::uint64_t seed);

/// Pixel p in 0..255 maps to p / 127.5 - 1.
double pixel_to_value(unsigned p);
/// Inverse map with round-half-up and clipping to 0..255.
unsigned value_to_pixel(double v);

Sample load_pgm(const std::filesystem::path& path);
void save_pgm(const Sample& image, const std::filesystem::path& path);

/// Loads every *.pgm in a directory, sorted by file name. When expected_size
/// is non-zero, images of another size are rejected.
std::vector<std::pair<std::string, Sample>> load_image_dir(const std::filesystem::path& dir,
                                                           std::size_t expected_size = 0);

/// Point files: one sample per line, coordinates separated by tabs.
Sample load_point(const std::filesystem::path& path);
void save_point(const Sample& point, const std::filesystem::path& path);

/// Loads either a .pgm or a .tsv point file by extension.
Sample load_sample(const std::filesystem::path& path);
void save_sample(const Sample& sample, const std::filesystem::path& path);

/// Seeded k-means++ followed by 50 Lloyd iterations on encoder embeddings.
/// Within each cluster the ceil(quantile * size) members closest to the
/// centroid survive (ties by original index). Survivor indices are returned
/// in original order.
std::vector<std::size_t> cluster_filter_indices(std::span<const Sample> samples,
                                                const FeatureEncoder& encoder, std::size_t k,
                                                double quantile, std::uint64_t seed = 0);

std::vector<Sample> cluster_filter(std::span<const Sample> samples, const FeatureEncoder& encoder,
                                   std::size_t k, double quantile, std::uint64_t seed = 0);

}  // namespace edm
