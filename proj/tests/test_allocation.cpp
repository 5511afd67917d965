#include <gtest/gtest.h>

#include <bit>
#include <set>

#include "test_support.hpp"
#include "wmq/allocation.hpp"
#include "wmq/worldmodel.hpp"

using namespace wmq;

namespace {

const Model& base_model() {
  static const Model m = to_model(wmq_test::random_world_model(3));
  return m;
}

bool byte_identical(const Model& a, const Model& b) {
  if (a.tensors.size() != b.tensors.size()) return false;
  for (std::size_t i = 0; i < a.tensors.size(); ++i) {
    const auto& x = a.tensors[i].data;
    const auto& y = b.tensors[i].data;
    if (x.size() != y.size()) return false;
    for (std::size_t k = 0; k < x.size(); ++k)
      if (std::bit_cast<std::uint32_t>(x[k]) != std::bit_cast<std::uint32_t>(y[k])) return false;
  }
  return true;
}

}  // namespace

TEST(Allocation, CanonicalNamesInOrder) {
  const std::vector<std::string> expected = {
      "fp16",         "uniform_int8", "uniform_int6", "uniform_int4",      "uniform_int3",      "mixed_int8",
      "mixed_int6",   "mixed_int4",   "mixed_int3",   "enc8_pred4",        "enc6_pred4",        "enc4_pred8",
      "enc4_pred6",   "layerwise_int4_25", "layerwise_int4_50", "layerwise_int4_75"};
  std::vector<std::string> names;
  for (const auto& [n, p] : enumerate_study_variants()) names.push_back(n);
  EXPECT_EQ(names, expected);
  EXPECT_EQ(core_study_variants().size(), 13u);
}

TEST(Allocation, ParseRoundTrip) {
  for (const auto& [n, p] : enumerate_study_variants()) {
    EXPECT_EQ(parse_variant(n), p);
    EXPECT_EQ(variant_name(parse_variant(n)), n);
  }
  EXPECT_EQ(variant_name(parse_variant("uniform_int2")), "uniform_int2");
  EXPECT_THROW(parse_variant("uniform_int9"), ValidationError);
  EXPECT_THROW(parse_variant("int4"), ValidationError);
  EXPECT_THROW(parse_variant("layerwise_int4_40"), ValidationError);
}

TEST(Allocation, RetentionEndpointsAlias) {
  EXPECT_EQ(variant_name(LayerwiseRetention{0, 4}), "uniform_int4");
  EXPECT_EQ(variant_name(LayerwiseRetention{100, 4}), "mixed_int4");
  const auto& m = base_model();
  EXPECT_TRUE(byte_identical(apply_policy(m, LayerwiseRetention{100, 4}).model, apply_policy(m, Mixed{4}).model));
  EXPECT_TRUE(byte_identical(apply_policy(m, LayerwiseRetention{0, 4}).model, apply_policy(m, Uniform{4}).model));
}

TEST(Allocation, BitDecisionsPerRole) {
  const auto& m = base_model();
  const auto enc = encoder_layers(m);
  ASSERT_EQ(enc, (std::vector<int>{0, 1, 2, 3}));
  auto decide = [&](const AllocationPolicy& p, const std::string& name) {
    return bits_for_tensor(p, *m.find(name), enc);
  };
  EXPECT_EQ(decide(FullPrecision{}, "encoder.0.weight"), std::nullopt);
  EXPECT_EQ(decide(Uniform{6}, "encoder.0.weight"), 6);
  EXPECT_EQ(decide(Uniform{6}, "encoder.0.bias"), std::nullopt);
  EXPECT_EQ(decide(Mixed{4}, "encoder.2.weight"), std::nullopt);
  EXPECT_EQ(decide(Mixed{4}, "predictor.1.weight"), 4);
  EXPECT_EQ(decide(Mixed{4}, "probe.weight"), 4);  // "other" follows the predictor
  EXPECT_EQ(decide(Asymmetric{8, 4}, "encoder.3.weight"), 8);
  EXPECT_EQ(decide(Asymmetric{8, 4}, "predictor.0.weight"), 4);
  EXPECT_EQ(decide(Asymmetric{8, 4}, "probe.weight"), 4);
  // 4 encoder layers: 25% keeps layer 0, 50% keeps 0-1, 75% keeps 0-2.
  EXPECT_EQ(decide(LayerwiseRetention{25, 4}, "encoder.0.weight"), std::nullopt);
  EXPECT_EQ(decide(LayerwiseRetention{25, 4}, "encoder.1.weight"), 4);
  EXPECT_EQ(decide(LayerwiseRetention{50, 4}, "encoder.1.weight"), std::nullopt);
  EXPECT_EQ(decide(LayerwiseRetention{75, 4}, "encoder.2.weight"), std::nullopt);
  EXPECT_EQ(decide(LayerwiseRetention{75, 4}, "encoder.3.weight"), 4);
}

TEST(Allocation, RetainedCountRoundsUp) {
  EXPECT_EQ(retained_layer_count(25, 4), 1u);
  EXPECT_EQ(retained_layer_count(25, 5), 2u);  // ceil(1.25)
  EXPECT_EQ(retained_layer_count(50, 5), 3u);
  EXPECT_EQ(retained_layer_count(0, 5), 0u);
  EXPECT_EQ(retained_layer_count(100, 5), 5u);
}

TEST(Allocation, ApplyLeavesBaselineTensorsUntouched) {
  const auto& m = base_model();
  const auto v = apply_policy(m, Mixed{3});
  EXPECT_EQ(v.variant_name, "mixed_int3");
  EXPECT_EQ(v.model.extras["variant"], "mixed_int3");
  for (std::size_t i = 0; i < m.tensors.size(); ++i) {
    const auto& a = m.tensors[i];
    const auto& b = v.model.tensors[i];
    EXPECT_EQ(a.role, b.role);
    EXPECT_EQ(a.layer_index, b.layer_index);
    const bool quantized = a.kind == TensorKind::linear_weight && a.role != Role::encoder;
    EXPECT_EQ(a.data == b.data, !quantized) << a.name;
  }
}

TEST(Allocation, SizeOrderings) {
  const auto& m = base_model();
  auto size = [&](const AllocationPolicy& p) { return model_size_bytes(m, p); };
  EXPECT_LT(size(Uniform{3}), size(Uniform{4}));
  EXPECT_LT(size(Uniform{4}), size(Uniform{6}));
  EXPECT_LT(size(Uniform{6}), size(Uniform{8}));
  EXPECT_LT(size(Uniform{8}), size(FullPrecision{}));
  for (int b : {3, 4, 6, 8}) EXPECT_LT(size(Uniform{b}), size(Mixed{b}));
  EXPECT_LT(size(Mixed{8}), size(FullPrecision{}));
  for (int e : {6, 8}) {
    EXPECT_GT(size(Asymmetric{e, 4}), size(Uniform{4}));
    EXPECT_LT(size(Asymmetric{e, 4}), size(Mixed{4}));
  }
  EXPECT_EQ(apply_policy(m, Uniform{4}).size_bytes, size(Uniform{4}));
}

TEST(Allocation, InvalidPoliciesRejected) {
  EXPECT_THROW(validate_policy(Uniform{1}), ValidationError);
  EXPECT_THROW(validate_policy(Asymmetric{4, 9}), ValidationError);
  EXPECT_THROW(validate_policy(LayerwiseRetention{30, 4}), ValidationError);
  EXPECT_THROW(apply_policy(base_model(), Mixed{12}), ValidationError);
}

TEST(Allocation, FullPrecisionIsIdentity) {
  const auto& m = base_model();
  const auto v = apply_policy(m, FullPrecision{});
  EXPECT_TRUE(byte_identical(v.model, m));
  EXPECT_EQ(v.size_bytes, model_size_bytes(m, [](const TensorRecord&) -> BitDecision { return std::nullopt; }));
}

TEST(Allocation, HigherBitsNeverWorseOnAnyRow) {
  const auto& m = base_model();
  const auto v3 = apply_policy(m, Uniform{3});
  const auto v8 = apply_policy(m, Uniform{8});
  for (std::size_t i = 0; i < m.tensors.size(); ++i) {
    const auto& t = m.tensors[i];
    if (t.kind != TensorKind::linear_weight) continue;
    for (std::int64_t j = 0; j < t.out_channels(); ++j) {
      double e3 = 0, e8 = 0;
      for (std::int64_t k = 0; k < t.in_channels(); ++k) {
        const auto x = static_cast<std::size_t>(j * t.in_channels() + k);
        e3 = std::max(e3, std::fabs(static_cast<double>(t.data[x] - v3.model.tensors[i].data[x])));
        e8 = std::max(e8, std::fabs(static_cast<double>(t.data[x] - v8.model.tensors[i].data[x])));
      }
      EXPECT_LE(e8, e3) << t.name << " row " << j;
    }
  }
}

TEST(Allocation, MixedPredictorOnGrid) {
  const auto v = apply_policy(base_model(), Mixed{4});
  for (const auto& t : v.model.tensors) {
    if (t.kind != TensorKind::linear_weight || t.role == Role::encoder) continue;
    EXPECT_EQ(fake_quantize_tensor<float>(t.data, t.out_channels(), t.in_channels(), 4), t.data) << t.name;
  }
}

TEST(Allocation, NoDuplicateNames) {
  std::set<std::string> names;
  for (const auto& [n, p] : enumerate_study_variants()) EXPECT_TRUE(names.insert(n).second) << n;
}
