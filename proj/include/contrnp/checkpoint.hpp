#pragma once

#include <bit>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "contrnp/hash.hpp"
#include "contrnp/model.hpp"

namespace contrnp {

// Checkpoint layout, all integers and floats little-endian:
//   "CNPR1"
//   u64 record count
//   per record: u64 name length, UTF-8 name, u64 rank, rank x u64 dims,
//               numel x f64 values (row-major)
//   footer: u64 model-config hash, u64 rng seed
// Architecture scalars are stored as rank-0 records named "config.*" ahead
// of the parameters, so a checkpoint can rebuild its model on its own.

inline constexpr char kCheckpointMagic[] = "CNPR1";

inline std::string model_config_text(const ModelConfig& c) {
  std::ostringstream os;
  os.precision(17);
  os << "channels=" << c.channels << "\ngrid_size=" << c.grid_size
     << "\ngrid_margin=" << c.grid_margin << "\ncnn_layers=" << c.cnn_layers
     << "\ncnn_width=" << c.cnn_width << "\nkernel_width=" << c.kernel_width
     << "\nencoding_size=" << c.encoding_size << "\ndecoder_hidden=" << c.decoder_hidden
     << "\nsigma_min=" << c.sigma_min << "\ndensity_eps=" << c.density_eps << '\n';
  return os.str();
}

inline std::uint64_t model_config_hash(const ModelConfig& c) { return fnv1a(model_config_text(c)); }

/// Hash over every parameter's name, shape and bit pattern.
inline std::uint64_t parameter_hash(const ConvCnpModel& model) {
  Fnv1a h;
  for (const auto& p : model.parameters()) {
    h.update(p.name);
    h.update(shape_str(p.tensor->shape()));
    for (double v : p.tensor->data()) h.update(v);
  }
  return h.digest();
}

struct Checkpoint {
  ConvCnpModel model;
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;
  std::vector<std::string> warnings;
};

namespace detail {

inline std::vector<std::pair<std::string, double>> config_records(const ModelConfig& c) {
  return {{"config.channels", static_cast<double>(c.channels)},
          {"config.grid_size", static_cast<double>(c.grid_size)},
          {"config.grid_margin", c.grid_margin},
          {"config.cnn_layers", static_cast<double>(c.cnn_layers)},
          {"config.cnn_width", static_cast<double>(c.cnn_width)},
          {"config.kernel_width", static_cast<double>(c.kernel_width)},
          {"config.encoding_size", static_cast<double>(c.encoding_size)},
          {"config.decoder_hidden", static_cast<double>(c.decoder_hidden)},
          {"config.sigma_min", c.sigma_min},
          {"config.density_eps", c.density_eps}};
}

class Writer {
 public:
  explicit Writer(std::ostream& os) : os_(os) {}
  void u64(std::uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    os_.write(b, 8);
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void bytes(const std::string& s) { os_.write(s.data(), static_cast<std::streamsize>(s.size())); }
  void record(const std::string& name, const Shape& shape, std::span<const double> values) {
    u64(name.size());
    bytes(name);
    u64(shape.size());
    for (auto d : shape) u64(d);
    for (double v : values) f64(v);
  }

 private:
  std::ostream& os_;
};

class Reader {
 public:
  Reader(std::istream& is, std::string path) : is_(is), path_(std::move(path)) {}
  std::uint64_t u64(const char* what) {
    unsigned char b[8];
    is_.read(reinterpret_cast<char*>(b), 8);
    if (is_.gcount() != 8) truncated(what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
  }
  double f64(const char* what) { return std::bit_cast<double>(u64(what)); }
  std::string bytes(std::size_t n, const char* what) {
    std::string s(n, '\0');
    is_.read(s.data(), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(is_.gcount()) != n) truncated(what);
    return s;
  }
  [[noreturn]] void truncated(const char* what) const {
    throw DataError("truncated checkpoint " + path_ + " (while reading " + what + ")");
  }

 private:
  std::istream& is_;
  std::string path_;
};

struct RawRecord {
  Shape shape;
  std::vector<double> values;
};

struct RawCheckpoint {
  std::vector<std::string> order;
  std::map<std::string, RawRecord> records;
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;
};

inline RawCheckpoint read_raw(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path);
  Reader r(in, path);
  if (r.bytes(5, "magic") != std::string(kCheckpointMagic)) {
    throw DataError(path + " is not a checkpoint (bad magic)");
  }
  RawCheckpoint raw;
  const std::uint64_t count = r.u64("record count");
  if (count > (1u << 20)) throw DataError("corrupt checkpoint " + path + ": implausible record count");
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::uint64_t name_len = r.u64("name length");
    if (name_len > 4096) throw DataError("corrupt checkpoint " + path + ": implausible name length");
    std::string name = r.bytes(name_len, "record name");
    RawRecord rec;
    const std::uint64_t rank = r.u64("rank");
    if (rank > 8) throw DataError("corrupt checkpoint " + path + ": rank " + std::to_string(rank) + " for " + name);
    std::uint64_t numel = 1;
    for (std::uint64_t k = 0; k < rank; ++k) {
      rec.shape.push_back(r.u64("dims"));
      numel *= rec.shape.back();
      if (numel > (1ULL << 32)) throw DataError("corrupt checkpoint " + path + ": oversized record " + name);
    }
    rec.values.resize(numel);
    for (auto& v : rec.values) v = r.f64("values");
    if (raw.records.count(name)) throw DataError("corrupt checkpoint " + path + ": duplicate record " + name);
    raw.order.push_back(name);
    raw.records.emplace(std::move(name), std::move(rec));
  }
  raw.config_hash = r.u64("footer config hash");
  raw.seed = r.u64("footer seed");
  if (in.peek() != std::char_traits<char>::eof()) {
    throw DataError("corrupt checkpoint " + path + ": trailing bytes after footer");
  }
  return raw;
}

inline ModelConfig config_from_raw(const RawCheckpoint& raw, const std::string& path) {
  auto get = [&](const std::string& key) {
    auto it = raw.records.find(key);
    if (it == raw.records.end() || it->second.values.size() != 1) {
      throw DataError("checkpoint " + path + " lacks record " + key);
    }
    return it->second.values[0];
  };
  auto count = [&](const std::string& key) { return static_cast<std::size_t>(get(key)); };
  ModelConfig c;
  c.channels = count("config.channels");
  c.grid_size = count("config.grid_size");
  c.grid_margin = get("config.grid_margin");
  c.cnn_layers = count("config.cnn_layers");
  c.cnn_width = count("config.cnn_width");
  c.kernel_width = count("config.kernel_width");
  c.encoding_size = count("config.encoding_size");
  c.decoder_hidden = count("config.decoder_hidden");
  c.sigma_min = get("config.sigma_min");
  c.density_eps = get("config.density_eps");
  return c;
}

}  // namespace detail

inline void save_checkpoint(const ConvCnpModel& model, const std::string& path,
                            std::uint64_t seed) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write checkpoint " + path);
  detail::Writer w(out);
  out.write(kCheckpointMagic, 5);
  const auto config = detail::config_records(model.config);
  const auto params = model.parameters();
  w.u64(config.size() + params.size());
  for (const auto& [name, value] : config) w.record(name, {}, std::span<const double>(&value, 1));
  for (const auto& p : params) w.record(p.name, p.tensor->shape(), p.tensor->data());
  w.u64(model_config_hash(model.config));
  w.u64(seed);
  if (!out) throw DataError("error writing checkpoint " + path);
}

/// Loads into a model of the given architecture. A shape mismatch is an
/// error naming the parameter; a differing config hash only adds a warning.
inline Checkpoint load_checkpoint(const std::string& path, const ModelConfig& expected) {
  const auto raw = detail::read_raw(path);
  Checkpoint ck;
  ck.model = init_model(expected, 0);
  ck.config_hash = raw.config_hash;
  ck.seed = raw.seed;
  if (raw.config_hash != model_config_hash(expected)) {
    ck.warnings.push_back("checkpoint " + path + " was written with a different model config (hash " +
                          hex64(raw.config_hash) + ", expected " +
                          hex64(model_config_hash(expected)) + ")");
  }
  for (auto& p : ck.model.parameters()) {
    auto it = raw.records.find(p.name);
    if (it == raw.records.end()) {
      throw DataError("checkpoint " + path + " is missing parameter " + p.name);
    }
    if (it->second.shape != p.tensor->shape()) {
      throw ShapeError("checkpoint " + path + ": parameter " + p.name + " has shape " +
                       shape_str(it->second.shape) + ", model expects " +
                       shape_str(p.tensor->shape()));
    }
    *p.tensor = Tensor(it->second.shape, it->second.values);
  }
  return ck;
}

/// Loads using the architecture recorded in the checkpoint itself.
inline Checkpoint load_checkpoint(const std::string& path) {
  const auto raw = detail::read_raw(path);
  return load_checkpoint(path, detail::config_from_raw(raw, path));
}

}  // namespace contrnp
