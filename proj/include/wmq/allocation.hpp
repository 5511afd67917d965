#pragma once

// Bit-allocation policies: which linear weights get quantized, and to how
// many bits. Every evaluated variant is one AllocationPolicy.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <regex>
#include <span>
#include <string>
#include <type_traits>
#include <utility>
#include <variant>
#include <vector>

#include "wmq/error.hpp"
#include "wmq/model_store.hpp"
#include "wmq/quantizer.hpp"

namespace wmq {

struct FullPrecision {
  friend bool operator==(const FullPrecision&, const FullPrecision&) = default;
};
/// Every linear weight at `bits`.
struct Uniform {
  int bits;
  friend bool operator==(const Uniform&, const Uniform&) = default;
};
/// Encoder at baseline precision, every other linear weight at `bits`.
struct Mixed {
  int bits;
  friend bool operator==(const Mixed&, const Mixed&) = default;
};
/// Encoder at `encoder_bits`; predictor and other roles at `predictor_bits`.
struct Asymmetric {
  int encoder_bits;
  int predictor_bits;
  friend bool operator==(const Asymmetric&, const Asymmetric&) = default;
};
/// The first ceil(percent/100 * n) encoder layers (ascending layer_index)
/// stay at baseline; the rest of the encoder, the predictor and other roles
/// are at `bits`.
struct LayerwiseRetention {
  int retained_percent;  // one of 0, 25, 50, 75, 100
  int bits = 4;
  friend bool operator==(const LayerwiseRetention&, const LayerwiseRetention&) = default;
};

using AllocationPolicy = std::variant<FullPrecision, Uniform, Mixed, Asymmetric, LayerwiseRetention>;

inline constexpr int kRetentionSweep[] = {0, 25, 50, 75, 100};

inline void validate_policy(const AllocationPolicy& p) {
  std::visit(
      [](const auto& v) {
        using V = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<V, Uniform> || std::is_same_v<V, Mixed>) {
          check_bits(v.bits);
        } else if constexpr (std::is_same_v<V, Asymmetric>) {
          check_bits(v.encoder_bits);
          check_bits(v.predictor_bits);
        } else if constexpr (std::is_same_v<V, LayerwiseRetention>) {
          check_bits(v.bits);
          if (std::ranges::find(kRetentionSweep, v.retained_percent) == std::end(kRetentionSweep))
            throw ValidationError("retained fraction must be one of 0, 25, 50, 75, 100 percent");
        }
      },
      p);
}

/// Canonical variant name. Retention endpoints alias the uniform and mixed
/// variants they are identical to.
inline std::string variant_name(const AllocationPolicy& p) {
  return std::visit(
      [](const auto& v) -> std::string {
        using V = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<V, FullPrecision>) {
          return "fp16";
        } else if constexpr (std::is_same_v<V, Uniform>) {
          return "uniform_int" + std::to_string(v.bits);
        } else if constexpr (std::is_same_v<V, Mixed>) {
          return "mixed_int" + std::to_string(v.bits);
        } else if constexpr (std::is_same_v<V, Asymmetric>) {
          return "enc" + std::to_string(v.encoder_bits) + "_pred" + std::to_string(v.predictor_bits);
        } else {
          if (v.retained_percent == 0) return "uniform_int" + std::to_string(v.bits);
          if (v.retained_percent == 100) return "mixed_int" + std::to_string(v.bits);
          return "layerwise_int" + std::to_string(v.bits) + "_" + std::to_string(v.retained_percent);
        }
      },
      p);
}

/// Inverse of variant_name. Accepts any bitwidth in [2, 8].
inline AllocationPolicy parse_variant(const std::string& name) {
  static const std::regex uniform_re(R"(uniform_int(\d))");
  static const std::regex mixed_re(R"(mixed_int(\d))");
  static const std::regex asym_re(R"(enc(\d)_pred(\d))");
  static const std::regex layer_re(R"(layerwise_int(\d)_(\d+))");
  std::smatch m;
  AllocationPolicy p;
  if (name == "fp16") {
    p = FullPrecision{};
  } else if (std::regex_match(name, m, uniform_re)) {
    p = Uniform{std::stoi(m[1])};
  } else if (std::regex_match(name, m, mixed_re)) {
    p = Mixed{std::stoi(m[1])};
  } else if (std::regex_match(name, m, asym_re)) {
    p = Asymmetric{std::stoi(m[1]), std::stoi(m[2])};
  } else if (std::regex_match(name, m, layer_re)) {
    p = LayerwiseRetention{std::stoi(m[2]), std::stoi(m[1])};
  } else {
    throw ValidationError("unknown variant name '" + name + "'");
  }
  validate_policy(p);
  return p;
}

/// Encoder linear-weight layer indices, ascending.
inline std::vector<int> encoder_layers(const Model& m) {
  std::vector<int> idx;
  for (const auto& t : m.tensors)
    if (t.kind == TensorKind::linear_weight && t.role == Role::encoder) idx.push_back(t.layer_index);
  std::ranges::sort(idx);
  return idx;
}

inline std::size_t retained_layer_count(int retained_percent, std::size_t n_layers) {
  // Exact ceil(percent * n / 100) on integers.
  return (static_cast<std::size_t>(retained_percent) * n_layers + 99) / 100;
}

/// Precision decision for one tensor. `encoder_layer_indices` must be the
/// ascending encoder layer indices of the model the record belongs to.
inline BitDecision bits_for_tensor(const AllocationPolicy& policy, const TensorRecord& record,
                                   std::span<const int> encoder_layer_indices) {
  if (record.kind != TensorKind::linear_weight) return std::nullopt;
  return std::visit(
      [&](const auto& v) -> BitDecision {
        using V = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<V, FullPrecision>) {
          return std::nullopt;
        } else if constexpr (std::is_same_v<V, Uniform>) {
          return v.bits;
        } else if constexpr (std::is_same_v<V, Mixed>) {
          if (record.role == Role::encoder) return std::nullopt;
          return v.bits;
        } else if constexpr (std::is_same_v<V, Asymmetric>) {
          return record.role == Role::encoder ? v.encoder_bits : v.predictor_bits;
        } else {
          if (record.role != Role::encoder) return v.bits;
          const auto keep = retained_layer_count(v.retained_percent, encoder_layer_indices.size());
          for (std::size_t i = 0; i < keep && i < encoder_layer_indices.size(); ++i)
            if (encoder_layer_indices[i] == record.layer_index) return std::nullopt;
          return v.bits;
        }
      },
      policy);
}

inline std::uint64_t model_size_bytes(const Model& m, const AllocationPolicy& policy) {
  const auto enc = encoder_layers(m);
  return model_size_bytes(m, [&](const TensorRecord& t) { return bits_for_tensor(policy, t, enc); });
}

struct VariantModel {
  std::string variant_name;
  Model model;
  std::uint64_t size_bytes = 0;
  AllocationPolicy policy;
};

/// Materializes the fake-quantized variant. Baseline tensors are copied
/// unchanged; the input model is not modified.
inline VariantModel apply_policy(const Model& model, const AllocationPolicy& policy) {
  validate_policy(policy);
  validate_model(model);
  const auto enc = encoder_layers(model);
  VariantModel out{variant_name(policy), model, model_size_bytes(model, policy), policy};
  for (auto& t : out.model.tensors) {
    const auto bits = bits_for_tensor(policy, t, enc);
    if (!bits) continue;
    t.data = fake_quantize_tensor<float>(t.data, t.out_channels(), t.in_channels(), *bits);
  }
  out.model.extras["variant"] = out.variant_name;
  return out;
}

/// The sixteen evaluated variants in canonical order.
inline std::vector<std::pair<std::string, AllocationPolicy>> enumerate_study_variants() {
  std::vector<AllocationPolicy> ps = {FullPrecision{}};
  for (int b : {8, 6, 4, 3}) ps.emplace_back(Uniform{b});
  for (int b : {8, 6, 4, 3}) ps.emplace_back(Mixed{b});
  ps.emplace_back(Asymmetric{8, 4});
  ps.emplace_back(Asymmetric{6, 4});
  ps.emplace_back(Asymmetric{4, 8});
  ps.emplace_back(Asymmetric{4, 6});
  for (int pct : {25, 50, 75}) ps.emplace_back(LayerwiseRetention{pct, 4});
  std::vector<std::pair<std::string, AllocationPolicy>> out;
  for (auto& p : ps) out.emplace_back(variant_name(p), p);
  return out;
}

/// The thirteen core variants (everything but the interior retention points).
inline std::vector<std::pair<std::string, AllocationPolicy>> core_study_variants() {
  auto all = enumerate_study_variants();
  std::erase_if(all, [](const auto& v) { return std::holds_alternative<LayerwiseRetention>(v.second); });
  return all;
}

}  // namespace wmq
