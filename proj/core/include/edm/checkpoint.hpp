#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "edm/feature_space.hpp"
#include "edm/score_net.hpp"

namespace edm {

/// Binary container for named float arrays.
///
/// Layout (all integers little-endian):
///   "EDMCKPT1"                          8-byte magic
///   u16 version                          currently 1
///   u32 tensor count
///   per tensor: u16 name length, name bytes, u8 dtype (0 = f32),
///               u8 rank, rank x u64 dims, u64 byte offset into payload
///   u64 payload byte count
///   payload                              f32 arrays, back to back
///   u32 CRC-32 of the payload
class Checkpoint {
 public:
  static constexpr char kMagic[9] = "EDMCKPT1";
  static constexpr std::uint16_t kVersion = 1;

  struct Tensor {
    std::string name;
    std::vector<std::uint64_t> shape;
    std::vector<float> data;
  };

  /// Values are rounded to float.
  void add(const std::string& name, std::vector<std::uint64_t> shape, std::span<const double> values);
  void add_floats(const std::string& name, std::vector<std::uint64_t> shape, std::vector<float> values);
  /// Exact storage of a 64-bit integer as four 16-bit limbs.
  void add_u64(const std::string& name, std::uint64_t value);
  /// Exact storage of a double through its bit pattern.
  void add_f64(const std::string& name, double value);

  bool has(const std::string& name) const;
  const Tensor& get(const std::string& name) const;
  std::vector<double> get_values(const std::string& name) const;
  std::uint64_t get_u64(const std::string& name) const;
  double get_f64(const std::string& name) const;
  const std::vector<Tensor>& tensors() const { return tensors_; }

  std::vector<std::uint8_t> serialize() const;
  static Checkpoint deserialize(std::span<const std::uint8_t> bytes);

  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);

 private:
  std::vector<Tensor> tensors_;
};

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes);

Checkpoint score_checkpoint(const ScoreNetwork& net);
ScoreNetwork load_score_network(const Checkpoint& ckpt);

Checkpoint prompt_checkpoint(const FeatureEncoder& encoder, const PromptPair& prompts);

struct PromptModel {
  FeatureEncoder encoder;
  PromptPair prompts;
};
PromptModel load_prompt_model(const Checkpoint& ckpt);

}  // namespace edm
