#pragma once

// Named weight tensors with module-role metadata, bit-exact persistence as
// `manifest.json` + `weights.bin` (little-endian float32), and
// precision-aware size accounting.

#include <algorithm>
#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <concepts>
#include <functional>
#include <iomanip>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "wmq/error.hpp"
#include "wmq/rng.hpp"

namespace wmq {

enum class Role { encoder, predictor, other };
enum class TensorKind { linear_weight, linear_bias, non_linear_param };

inline std::string_view to_string(Role r) {
  switch (r) {
    case Role::encoder: return "encoder";
    case Role::predictor: return "predictor";
    case Role::other: return "other";
  }
  return "other";
}

inline std::string_view to_string(TensorKind k) {
  switch (k) {
    case TensorKind::linear_weight: return "linear_weight";
    case TensorKind::linear_bias: return "linear_bias";
    case TensorKind::non_linear_param: return "non_linear_param";
  }
  return "non_linear_param";
}

inline Role parse_role(std::string_view s) {
  if (s == "encoder") return Role::encoder;
  if (s == "predictor") return Role::predictor;
  if (s == "other") return Role::other;
  throw ValidationError("unknown tensor role '" + std::string(s) + "'");
}

inline TensorKind parse_kind(std::string_view s) {
  if (s == "linear_weight") return TensorKind::linear_weight;
  if (s == "linear_bias") return TensorKind::linear_bias;
  if (s == "non_linear_param") return TensorKind::non_linear_param;
  throw ValidationError("unknown tensor kind '" + std::string(s) + "'");
}

struct TensorRecord {
  std::string name;
  Role role = Role::other;
  int layer_index = 0;
  TensorKind kind = TensorKind::non_linear_param;
  std::vector<std::int64_t> shape;
  std::vector<float> data;

  [[nodiscard]] std::uint64_t numel() const {
    std::uint64_t n = 1;
    for (auto d : shape) n *= static_cast<std::uint64_t>(d);
    return n;
  }
  /// Rows of a linear weight ([out, in]).
  [[nodiscard]] std::int64_t out_channels() const { return shape.empty() ? 0 : shape.front(); }
  [[nodiscard]] std::int64_t in_channels() const { return shape.size() < 2 ? 1 : shape[1]; }
};

/// In-memory model: manifest-level metadata plus tensor payloads.
struct Model {
  int format_version = 1;
  int baseline_bits = 16;
  std::vector<TensorRecord> tensors;
  nlohmann::json extras = nlohmann::json::object();

  [[nodiscard]] const TensorRecord* find(std::string_view name) const {
    for (const auto& t : tensors)
      if (t.name == name) return &t;
    return nullptr;
  }
  [[nodiscard]] TensorRecord* find(std::string_view name) {
    for (auto& t : tensors)
      if (t.name == name) return &t;
    return nullptr;
  }
};

struct TensorDescriptor {
  std::string name;
  Role role = Role::other;
  int layer_index = 0;
  TensorKind kind = TensorKind::non_linear_param;
  std::vector<std::int64_t> shape;
  std::uint64_t offset = 0;  // bytes into weights.bin
  std::uint64_t length = 0;  // bytes
};

struct ModelManifest {
  int format_version = 1;
  int baseline_bits = 16;
  std::vector<TensorDescriptor> tensors;
  std::string checksum;  // FNV-1a 64 of weights.bin, hex
  nlohmann::json extras = nlohmann::json::object();
};

inline constexpr const char* kManifestFile = "manifest.json";
inline constexpr const char* kBlobFile = "weights.bin";

// ---------------------------------------------------------------------------
// validation

inline void validate_record(const TensorRecord& t) {
  if (t.name.empty()) throw ValidationError("tensor with empty name");
  if (t.shape.empty()) throw ValidationError("tensor '" + t.name + "' has empty shape");
  for (auto d : t.shape)
    if (d <= 0) throw ValidationError("tensor '" + t.name + "' has non-positive dimension");
  if (t.layer_index < 0) throw ValidationError("tensor '" + t.name + "' has negative layer_index");
  if (t.numel() != t.data.size())
    throw ValidationError("tensor '" + t.name + "': shape product " + std::to_string(t.numel()) +
                          " != data length " + std::to_string(t.data.size()));
  if (t.kind == TensorKind::linear_weight && t.shape.size() != 2)
    throw ValidationError("linear weight '" + t.name + "' must have exactly 2 dimensions");
}

inline void validate_model(const Model& m) {
  if (m.baseline_bits <= 0) throw ValidationError("baseline_bits must be positive");
  std::set<std::string> names;
  std::set<std::pair<Role, int>> weight_slots;
  for (const auto& t : m.tensors) {
    validate_record(t);
    if (!names.insert(t.name).second) throw ValidationError("duplicate tensor name '" + t.name + "'");
    if (t.kind == TensorKind::linear_weight && !weight_slots.insert({t.role, t.layer_index}).second)
      throw ValidationError("duplicate (role, layer_index) for linear weight '" + t.name + "'");
  }
}

/// Offsets must be ascending and non-overlapping; lengths must be 4 bytes per element.
inline void validate_manifest(const ModelManifest& man) {
  if (man.baseline_bits <= 0) throw ValidationError("baseline_bits must be positive");
  std::uint64_t end = 0;
  std::set<std::string> names;
  for (const auto& d : man.tensors) {
    if (!names.insert(d.name).second) throw ValidationError("duplicate tensor name '" + d.name + "'");
    if (d.shape.empty()) throw ValidationError("tensor '" + d.name + "' has empty shape");
    std::uint64_t n = 1;
    for (auto s : d.shape) {
      if (s <= 0) throw ValidationError("tensor '" + d.name + "' has non-positive dimension");
      n *= static_cast<std::uint64_t>(s);
    }
    if (d.length != 4 * n)
      throw ValidationError("tensor '" + d.name + "': length " + std::to_string(d.length) +
                            " != 4 x shape product " + std::to_string(n));
    if (d.offset < end)
      throw ValidationError("tensor '" + d.name + "': offset overlaps or is not ascending");
    if (d.kind == TensorKind::linear_weight && d.shape.size() != 2)
      throw ValidationError("linear weight '" + d.name + "' must have exactly 2 dimensions");
    end = d.offset + d.length;
  }
}

// ---------------------------------------------------------------------------
// blob encoding

inline std::vector<char> encode_f32_le(std::span<const float> values) {
  std::vector<char> out(values.size() * 4);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto u = std::bit_cast<std::uint32_t>(values[i]);
    for (int k = 0; k < 4; ++k) out[4 * i + k] = static_cast<char>((u >> (8 * k)) & 0xffu);
  }
  return out;
}

inline std::vector<float> decode_f32_le(std::span<const char> bytes) {
  std::vector<float> out(bytes.size() / 4);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint32_t u = 0;
    for (int k = 0; k < 4; ++k) u |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[4 * i + k])) << (8 * k);
    out[i] = std::bit_cast<float>(u);
  }
  return out;
}

inline std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

inline std::string blob_checksum(std::span<const char> bytes) {
  return hex64(fnv1a64(std::string_view(bytes.data(), bytes.size())));
}

// ---------------------------------------------------------------------------
// manifest <-> json

inline nlohmann::json manifest_to_json(const ModelManifest& man) {
  nlohmann::json j;
  j["format_version"] = man.format_version;
  j["baseline_bits"] = man.baseline_bits;
  j["checksum"] = man.checksum;
  auto arr = nlohmann::json::array();
  for (const auto& d : man.tensors) {
    arr.push_back({{"name", d.name},
                   {"role", to_string(d.role)},
                   {"layer_index", d.layer_index},
                   {"kind", to_string(d.kind)},
                   {"shape", d.shape},
                   {"offset", d.offset},
                   {"length", d.length}});
  }
  j["tensors"] = std::move(arr);
  j["extras"] = man.extras;
  return j;
}

inline ModelManifest manifest_from_json(const nlohmann::json& j) {
  ModelManifest man;
  try {
    man.format_version = j.at("format_version").get<int>();
    man.baseline_bits = j.at("baseline_bits").get<int>();
    man.checksum = j.value("checksum", std::string{});
    if (j.contains("extras")) man.extras = j.at("extras");
    for (const auto& t : j.at("tensors")) {
      TensorDescriptor d;
      d.name = t.at("name").get<std::string>();
      d.role = parse_role(t.at("role").get<std::string>());
      d.layer_index = t.at("layer_index").get<int>();
      d.kind = parse_kind(t.at("kind").get<std::string>());
      d.shape = t.at("shape").get<std::vector<std::int64_t>>();
      d.offset = t.at("offset").get<std::uint64_t>();
      d.length = t.at("length").get<std::uint64_t>();
      man.tensors.push_back(std::move(d));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed manifest: ") + e.what());
  }
  return man;
}

/// Descriptors for `m` laid out contiguously in tensor order.
inline ModelManifest make_manifest(const Model& m) {
  ModelManifest man;
  man.format_version = m.format_version;
  man.baseline_bits = m.baseline_bits;
  man.extras = m.extras;
  std::uint64_t off = 0;
  for (const auto& t : m.tensors) {
    TensorDescriptor d{t.name, t.role, t.layer_index, t.kind, t.shape, off, 4 * t.numel()};
    off += d.length;
    man.tensors.push_back(std::move(d));
  }
  return man;
}

// ---------------------------------------------------------------------------
// persistence

/// Distinguishes the ways a stored model can fail to load.
enum class LoadFailure { missing_file, malformed_manifest, length_mismatch, checksum_mismatch, invalid_record };

class ModelLoadError : public ValidationError {
 public:
  ModelLoadError(LoadFailure f, const std::string& msg) : ValidationError(msg), failure_(f) {}
  [[nodiscard]] LoadFailure failure() const noexcept { return failure_; }

 private:
  LoadFailure failure_;
};

inline void write_text_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream os(p, std::ios::binary | std::ios::trunc);
  if (!os) throw PersistenceError("cannot open '" + p.string() + "' for writing");
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!os) throw PersistenceError("write failed for '" + p.string() + "'");
}

inline std::string read_text_file(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw PersistenceError("cannot open '" + p.string() + "' for reading");
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

/// Low-level writer: `blob` holds the float payload in manifest order.
/// The manifest checksum is recomputed from the blob.
inline void persist_model(ModelManifest man, std::span<const float> blob, const std::filesystem::path& dir) {
  validate_manifest(man);
  std::uint64_t needed = 0;
  for (const auto& d : man.tensors) needed = std::max(needed, d.offset + d.length);
  if (needed > 4 * blob.size()) throw ValidationError("manifest references bytes beyond the blob");
  const auto bytes = encode_f32_le(blob);
  man.checksum = blob_checksum(bytes);

  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw PersistenceError("cannot create directory '" + dir.string() + "': " + ec.message());
  {
    std::ofstream os(dir / kBlobFile, std::ios::binary | std::ios::trunc);
    if (!os) throw PersistenceError("cannot open '" + (dir / kBlobFile).string() + "' for writing");
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw PersistenceError("write failed for '" + (dir / kBlobFile).string() + "'");
  }
  write_text_file(dir / kManifestFile, manifest_to_json(man).dump(2) + "\n");
}

inline void persist_model(const Model& m, const std::filesystem::path& dir) {
  validate_model(m);
  std::vector<float> blob;
  for (const auto& t : m.tensors) blob.insert(blob.end(), t.data.begin(), t.data.end());
  persist_model(make_manifest(m), blob, dir);
}

inline Model load_model(const std::filesystem::path& dir) {
  const auto mpath = dir / kManifestFile;
  const auto bpath = dir / kBlobFile;
  if (!std::filesystem::exists(mpath))
    throw ModelLoadError(LoadFailure::missing_file, "missing manifest '" + mpath.string() + "'");
  if (!std::filesystem::exists(bpath))
    throw ModelLoadError(LoadFailure::missing_file, "missing blob '" + bpath.string() + "'");

  ModelManifest man;
  try {
    man = manifest_from_json(nlohmann::json::parse(read_text_file(mpath)));
    validate_manifest(man);
  } catch (const nlohmann::json::exception& e) {
    throw ModelLoadError(LoadFailure::malformed_manifest, std::string("malformed manifest: ") + e.what());
  } catch (const ValidationError& e) {
    throw ModelLoadError(LoadFailure::malformed_manifest, e.what());
  }

  const std::string raw = read_text_file(bpath);
  std::uint64_t expected = 0;
  for (const auto& d : man.tensors) expected = std::max(expected, d.offset + d.length);
  if (raw.size() != expected)
    throw ModelLoadError(LoadFailure::length_mismatch, "blob '" + bpath.string() + "' has " +
                                                           std::to_string(raw.size()) + " bytes, manifest expects " +
                                                           std::to_string(expected));
  if (!man.checksum.empty() && blob_checksum(raw) != man.checksum)
    throw ModelLoadError(LoadFailure::checksum_mismatch, "blob checksum mismatch for '" + bpath.string() + "'");

  Model m;
  m.format_version = man.format_version;
  m.baseline_bits = man.baseline_bits;
  m.extras = man.extras;
  for (const auto& d : man.tensors) {
    TensorRecord t{d.name, d.role, d.layer_index, d.kind, d.shape, {}};
    t.data = decode_f32_le(std::span<const char>(raw.data() + d.offset, d.length));
    m.tensors.push_back(std::move(t));
  }
  try {
    validate_model(m);
  } catch (const ValidationError& e) {
    throw ModelLoadError(LoadFailure::invalid_record, e.what());
  }
  return m;
}

// ---------------------------------------------------------------------------
// size accounting

/// Bitwidth for a quantized linear weight; std::nullopt keeps baseline precision.
using BitDecision = std::optional<int>;

inline constexpr std::uint64_t kScaleBytesPerChannel = 4;

/// Storage bytes of one tensor under `decision`.
inline std::uint64_t tensor_size_bytes(const TensorRecord& t, BitDecision decision, int baseline_bits) {
  if (!decision) return t.numel() * static_cast<std::uint64_t>(baseline_bits) / 8;
  if (t.kind != TensorKind::linear_weight)
    throw ValidationError("bitwidth decision given for non-weight tensor '" + t.name + "'");
  const auto bits = static_cast<std::uint64_t>(*decision);
  return (t.numel() * bits + 7) / 8 + kScaleBytesPerChannel * static_cast<std::uint64_t>(t.out_channels());
}

/// `decide(record) -> BitDecision` resolves each tensor's precision.
template <class Decide>
  requires std::invocable<Decide&, const TensorRecord&>
std::uint64_t model_size_bytes(const Model& m, Decide&& decide) {
  std::uint64_t total = 0;
  for (const auto& t : m.tensors) total += tensor_size_bytes(t, std::invoke(decide, t), m.baseline_bits);
  return total;
}

inline double bytes_to_mb(std::uint64_t bytes) { return static_cast<double>(bytes) / 1048576.0; }

}  // namespace wmq
