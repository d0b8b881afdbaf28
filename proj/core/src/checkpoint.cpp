#include "edm/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numeric>

#include <zlib.h>

namespace edm {

namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

template <typename T>
void put(std::vector<std::uint8_t>& out, T value) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
  out.insert(out.end(), p, p + sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }

  std::span<const std::uint8_t> take(std::size_t n) {
    need(n);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw FormatError("checkpoint truncated");
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

std::uint64_t element_count(const std::vector<std::uint64_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::uint64_t{1}, std::multiplies<>());
}

}  // namespace

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes a uInt length; feed large buffers in chunks.
  std::size_t pos = 0;
  while (pos < bytes.size()) {
    const auto n = static_cast<uInt>(std::min<std::size_t>(bytes.size() - pos, 1u << 30));
    crc = crc32(crc, bytes.data() + pos, n);
    pos += n;
  }
  return static_cast<std::uint32_t>(crc);
}

void Checkpoint::add(const std::string& name, std::vector<std::uint64_t> shape,
                     std::span<const double> values) {
  std::vector<float> f(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) f[i] = static_cast<float>(values[i]);
  add_floats(name, std::move(shape), std::move(f));
}

void Checkpoint::add_floats(const std::string& name, std::vector<std::uint64_t> shape,
                            std::vector<float> values) {
  if (name.empty() || name.size() > 0xFFFF) throw FormatError("checkpoint tensor name length");
  if (has(name)) throw FormatError("duplicate checkpoint tensor '" + name + "'");
  if (shape.size() > 0xFF) throw FormatError("checkpoint tensor rank too large");
  if (element_count(shape) != values.size()) {
    throw DimensionError("checkpoint tensor '" + name + "': shape does not match data");
  }
  tensors_.push_back({name, std::move(shape), std::move(values)});
}

void Checkpoint::add_u64(const std::string& name, std::uint64_t value) {
  std::vector<float> limbs(4);
  for (int i = 0; i < 4; ++i) limbs[i] = static_cast<float>((value >> (16 * i)) & 0xFFFF);
  add_floats(name, {4}, std::move(limbs));
}

void Checkpoint::add_f64(const std::string& name, double value) {
  add_u64(name, std::bit_cast<std::uint64_t>(value));
}

bool Checkpoint::has(const std::string& name) const {
  for (const auto& t : tensors_) {
    if (t.name == name) return true;
  }
  return false;
}

const Checkpoint::Tensor& Checkpoint::get(const std::string& name) const {
  for (const auto& t : tensors_) {
    if (t.name == name) return t;
  }
  throw FormatError("checkpoint has no tensor '" + name + "'");
}

std::vector<double> Checkpoint::get_values(const std::string& name) const {
  const Tensor& t = get(name);
  return {t.data.begin(), t.data.end()};
}

std::uint64_t Checkpoint::get_u64(const std::string& name) const {
  const Tensor& t = get(name);
  if (t.data.size() != 4) throw FormatError("tensor '" + name + "' is not a 64-bit value");
  std::uint64_t v = 0;
  for (int i = 0; i < 4; ++i) {
    const float limb = t.data[static_cast<std::size_t>(i)];
    if (!(limb >= 0.0f && limb <= 65535.0f) || limb != static_cast<float>(static_cast<int>(limb))) {
      throw FormatError("tensor '" + name + "' has a malformed limb");
    }
    v |= static_cast<std::uint64_t>(limb) << (16 * i);
  }
  return v;
}

double Checkpoint::get_f64(const std::string& name) const {
  return std::bit_cast<double>(get_u64(name));
}

std::vector<std::uint8_t> Checkpoint::serialize() const {
  std::vector<std::uint8_t> out(kMagic, kMagic + 8);
  put<std::uint16_t>(out, kVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(tensors_.size()));
  std::uint64_t offset = 0;
  for (const auto& t : tensors_) {
    put<std::uint16_t>(out, static_cast<std::uint16_t>(t.name.size()));
    out.insert(out.end(), t.name.begin(), t.name.end());
    put<std::uint8_t>(out, 0);  // f32
    put<std::uint8_t>(out, static_cast<std::uint8_t>(t.shape.size()));
    for (std::uint64_t d : t.shape) put<std::uint64_t>(out, d);
    put<std::uint64_t>(out, offset);
    offset += t.data.size() * sizeof(float);
  }
  put<std::uint64_t>(out, offset);
  const std::size_t payload_start = out.size();
  for (const auto& t : tensors_) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(t.data.data());
    out.insert(out.end(), p, p + t.data.size() * sizeof(float));
  }
  put<std::uint32_t>(out, crc32_of(std::span(out).subspan(payload_start)));
  return out;
}

Checkpoint Checkpoint::deserialize(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  const auto magic = r.take(8);
  if (std::memcmp(magic.data(), kMagic, 8) != 0) throw FormatError("not an EDMCKPT1 checkpoint");
  const auto version = r.get<std::uint16_t>();
  if (version != kVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto count = r.get<std::uint32_t>();
  struct Entry {
    std::string name;
    std::vector<std::uint64_t> shape;
    std::uint64_t offset;
  };
  std::vector<Entry> entries;
  for (std::uint32_t i = 0; i < count; ++i) {
    Entry e;
    const auto len = r.get<std::uint16_t>();
    const auto name = r.take(len);
    e.name.assign(name.begin(), name.end());
    if (r.get<std::uint8_t>() != 0) throw FormatError("tensor '" + e.name + "': unknown dtype");
    const auto rank = r.get<std::uint8_t>();
    for (std::uint8_t d = 0; d < rank; ++d) e.shape.push_back(r.get<std::uint64_t>());
    e.offset = r.get<std::uint64_t>();
    entries.push_back(std::move(e));
  }
  const auto payload_size = r.get<std::uint64_t>();
  const auto payload = r.take(payload_size);
  const auto stored_crc = r.get<std::uint32_t>();
  if (!r.done()) throw FormatError("trailing bytes after checkpoint");
  if (crc32_of(payload) != stored_crc) throw FormatError("checkpoint checksum mismatch");

  Checkpoint ckpt;
  for (auto& e : entries) {
    const std::uint64_t n = element_count(e.shape);
    if (e.offset > payload_size || n * sizeof(float) > payload_size - e.offset) {
      throw FormatError("tensor '" + e.name + "' lies outside the payload");
    }
    std::vector<float> data(n);
    std::memcpy(data.data(), payload.data() + e.offset, n * sizeof(float));
    ckpt.add_floats(e.name, std::move(e.shape), std::move(data));
  }
  return ckpt;
}

void Checkpoint::save(const std::filesystem::path& path) const {
  const auto bytes = serialize();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

// ---------------------------------------------------------------------------

Checkpoint score_checkpoint(const ScoreNetwork& net) {
  const ScoreNetworkConfig& c = net.config();
  Checkpoint ckpt;
  ckpt.add_u64("meta.kind.score", 1);
  ckpt.add_u64("meta.input_dim", c.input_dim);
  ckpt.add_u64("meta.time_features", c.time_features);
  std::vector<double> hidden(c.hidden.begin(), c.hidden.end());
  ckpt.add("meta.hidden", {hidden.size()}, hidden);
  ckpt.add_u64("meta.linear_skip", c.linear_skip ? 1 : 0);
  ckpt.add_f64("meta.t_min", c.t_min);
  ckpt.add_f64("meta.beta_min", net.schedule().beta_min());
  ckpt.add_f64("meta.beta_max", net.schedule().beta_max());
  ckpt.add_f64("meta.horizon", net.schedule().horizon());
  const auto params = net.parameters();
  for (const TensorInfo& t : net.manifest()) {
    ckpt.add(t.name, {t.shape.begin(), t.shape.end()}, params.subspan(t.offset, t.size));
  }
  return ckpt;
}

ScoreNetwork load_score_network(const Checkpoint& ckpt) {
  if (!ckpt.has("meta.kind.score")) throw FormatError("checkpoint does not hold a score network");
  ScoreNetworkConfig c;
  c.input_dim = ckpt.get_u64("meta.input_dim");
  c.time_features = ckpt.get_u64("meta.time_features");
  c.hidden.clear();
  for (double h : ckpt.get_values("meta.hidden")) c.hidden.push_back(static_cast<std::size_t>(h));
  c.linear_skip = ckpt.get_u64("meta.linear_skip") != 0;
  c.t_min = ckpt.get_f64("meta.t_min");
  DiffusionSchedule schedule(ckpt.get_f64("meta.beta_min"), ckpt.get_f64("meta.beta_max"),
                             ckpt.get_f64("meta.horizon"));
  ScoreNetwork net(c, schedule);
  auto params = net.parameters();
  for (const TensorInfo& t : net.manifest()) {
    const auto& stored = ckpt.get(t.name);
    if (!std::equal(stored.shape.begin(), stored.shape.end(), t.shape.begin(), t.shape.end())) {
      throw DimensionError("checkpoint tensor '" + t.name + "' has the wrong shape");
    }
    for (std::size_t i = 0; i < t.size; ++i) params[t.offset + i] = stored.data[i];
  }
  return net;
}

Checkpoint prompt_checkpoint(const FeatureEncoder& encoder, const PromptPair& prompts) {
  Checkpoint ckpt;
  ckpt.add_u64("meta.kind.prompts", 1);
  ckpt.add_u64("encoder.seed", encoder.seed());
  ckpt.add_u64("encoder.activation", encoder.activation() == Activation::tanh ? 0 : 1);
  ckpt.add_u64("encoder.layers", encoder.layer_count());
  for (std::size_t l = 0; l < encoder.layer_count(); ++l) {
    const std::string p = "encoder.layer" + std::to_string(l + 1);
    // Row-major copy of the weight matrix.
    const Mat& w = encoder.weights()[l];
    std::vector<double> rm(static_cast<std::size_t>(w.size()));
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        rm.data(), w.rows(), w.cols()) = w;
    ckpt.add(p + ".weight", {static_cast<std::uint64_t>(w.rows()), static_cast<std::uint64_t>(w.cols())}, rm);
    const Vec& b = encoder.biases()[l];
    ckpt.add(p + ".bias", {static_cast<std::uint64_t>(b.size())}, std::span(b.data(), static_cast<std::size_t>(b.size())));
  }
  ckpt.add("prompts.negative", {static_cast<std::uint64_t>(prompts.negative.size())},
           std::span(prompts.negative.data(), static_cast<std::size_t>(prompts.negative.size())));
  ckpt.add("prompts.positive", {static_cast<std::uint64_t>(prompts.positive.size())},
           std::span(prompts.positive.data(), static_cast<std::size_t>(prompts.positive.size())));
  return ckpt;
}

PromptModel load_prompt_model(const Checkpoint& ckpt) {
  if (!ckpt.has("meta.kind.prompts")) throw FormatError("checkpoint does not hold prompts");
  const std::size_t layers = ckpt.get_u64("encoder.layers");
  std::vector<Mat> weights;
  std::vector<Vec> biases;
  for (std::size_t l = 0; l < layers; ++l) {
    const std::string p = "encoder.layer" + std::to_string(l + 1);
    const auto& w = ckpt.get(p + ".weight");
    if (w.shape.size() != 2) throw FormatError(p + ".weight is not a matrix");
    Mat m(static_cast<Eigen::Index>(w.shape[0]), static_cast<Eigen::Index>(w.shape[1]));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        m(r, c) = w.data[static_cast<std::size_t>(r * m.cols() + c)];
      }
    }
    weights.push_back(std::move(m));
    const auto bv = ckpt.get_values(p + ".bias");
    biases.push_back(Eigen::Map<const Vec>(bv.data(), static_cast<Eigen::Index>(bv.size())));
  }
  const Activation act = ckpt.get_u64("encoder.activation") == 0 ? Activation::tanh : Activation::identity;
  FeatureEncoder encoder(std::move(weights), std::move(biases), act, ckpt.get_u64("encoder.seed"));
  const auto neg = ckpt.get_values("prompts.negative");
  const auto pos = ckpt.get_values("prompts.positive");
  if (neg.size() != encoder.embed_dim() || pos.size() != encoder.embed_dim()) {
    throw DimensionError("prompt size does not match the encoder embedding");
  }
  PromptPair prompts{Eigen::Map<const Vec>(neg.data(), static_cast<Eigen::Index>(neg.size())),
                     Eigen::Map<const Vec>(pos.data(), static_cast<Eigen::Index>(pos.size()))};
  return {std::move(encoder), std::move(prompts)};
}

}  // namespace edm
