#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "test_support.hpp"
#include "wmq/allocation.hpp"
#include "wmq/worldmodel.hpp"

using namespace wmq;

namespace {

ModelDims tiny_dims() {
  ModelDims d;
  d.obs_dim = 16;
  d.hidden = 8;
  d.latent = 4;
  d.encoder_layers = 2;
  d.predictor_hidden = 8;
  d.predictor_layers = 2;
  return d;
}

double l2(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

struct Trained {
  Dataset data;
  TrainResult result;
};

const Trained& trained() {
  static const Trained t = [] {
    Trained out;
    out.data = gen_dataset(200, 10, 7, WallEnvConfig{});
    TrainConfig cfg;
    cfg.epochs = 20;
    cfg.seed = 3;
    out.result = train_world_model(out.data, cfg, ModelDims{});
    fit_state_probe(out.result.model, out.data);
    return out;
  }();
  return t;
}

WorldModel with_policy(const WorldModel& wm, const AllocationPolicy& p) {
  return from_model(apply_policy(to_model(wm), p).model);
}

}  // namespace

TEST(WorldModel, GradientMatchesCentralDifferences) {
  WallEnvConfig env;
  env.image_side = 4;
  const auto data = gen_dataset(3, 4, 1, env);
  std::vector<const Transition*> batch;
  for (const auto& tr : data) batch.push_back(&tr);

  Network<double> net = init_network(tiny_dims(), 5);
  Rng rng("test-bias", {});
  net.for_each_layer([&](Linear<double>& l) {
    for (auto& b : l.b) b = rng.uniform(-0.3, 0.3);
  });
  const LossWeights w{1.0, 0.7};
  Network<double> grad(tiny_dims());
  loss_and_gradient(net, batch, w, &grad);

  auto params = parameter_pointers(net);
  auto grads = parameter_pointers(grad);
  ASSERT_EQ(params.size(), grads.size());
  Rng pick("test-grad-coords", {});
  const double h = 1e-6;
  int checked = 0;
  for (int n = 0; n < 100; ++n) {
    const auto k = static_cast<std::size_t>(pick.below(params.size()));
    const double orig = *params[k];
    *params[k] = orig + h;
    const double up = loss_and_gradient(net, batch, w, nullptr);
    *params[k] = orig - h;
    const double down = loss_and_gradient(net, batch, w, nullptr);
    *params[k] = orig;
    const double fd = (up - down) / (2 * h);
    const double an = *grads[k];
    const double denom = std::max({std::fabs(an), std::fabs(fd), 1e-6});
    EXPECT_LT(std::fabs(an - fd) / denom, 1e-4) << "param " << k << " analytic " << an << " fd " << fd;
    ++checked;
  }
  EXPECT_EQ(checked, 100);
}

TEST(WorldModel, EncodeDeterministicAndShapeChecked) {
  const auto wm = wmq_test::random_world_model(1);
  const auto obs = render(EnvState{{0.3, 0.7}}, WallEnvConfig{});
  const auto z = encode(wm.net, obs);
  EXPECT_EQ(z.size(), 16u);
  EXPECT_EQ(z, encode(wm.net, obs));
  for (double v : z) EXPECT_TRUE(std::isfinite(v));
  EXPECT_THROW(encode(wm.net, std::vector<double>(255, 0.0)), ValidationError);
}

TEST(WorldModel, ZeroWeightEncoderReturnsFinalBias) {
  auto wm = wmq_test::random_world_model(2);
  for (auto& l : wm.net.encoder) {
    std::ranges::fill(l.w, 0.0f);
    for (std::size_t i = 0; i < l.b.size(); ++i) l.b[i] = 0.1f * static_cast<float>(i + 1);
  }
  const auto z = encode(wm.net, render(EnvState{{0.6, 0.2}}, WallEnvConfig{}));
  const auto& last = wm.net.encoder.back().b;
  for (std::size_t i = 0; i < z.size(); ++i) EXPECT_EQ(z[i], static_cast<double>(last[i]));
}

TEST(WorldModel, QuantizedEncoderErrorWithinPropagatedBound) {
  const auto wm = wmq_test::random_world_model(4);
  const auto q = with_policy(wm, Uniform{8});
  const auto obs = render(EnvState{{0.8, 0.1}}, WallEnvConfig{});

  // |dy| <= |dW|_F |x| + |W~|_F |dx| per layer; tanh is 1-Lipschitz.
  std::vector<double> x(obs), xq(obs);
  double bound = 0;
  const auto n = wm.net.encoder.size();
  for (std::size_t li = 0; li < n; ++li) {
    const auto& a = wm.net.encoder[li];
    const auto& b = q.net.encoder[li];
    double dw = 0, wq = 0, xn = 0;
    for (std::size_t k = 0; k < a.w.size(); ++k) {
      dw += std::pow(static_cast<double>(a.w[k]) - b.w[k], 2);
      wq += std::pow(static_cast<double>(b.w[k]), 2);
    }
    for (double v : x) xn += v * v;
    bound = std::sqrt(dw) * std::sqrt(xn) + std::sqrt(wq) * bound;
    std::vector<double> y(static_cast<std::size_t>(a.out)), yq(y.size());
    a.apply(x, y);
    b.apply(xq, yq);
    if (li + 1 < n) {
      for (auto& v : y) v = std::tanh(v);
      for (auto& v : yq) v = std::tanh(v);
    }
    x = std::move(y);
    xq = std::move(yq);
  }
  const double err = l2(encode(wm.net, obs), encode(q.net, obs));
  EXPECT_GT(err, 0.0);
  EXPECT_LE(err, bound * (1 + 1e-9));
}

TEST(WorldModel, PredictAndRollout) {
  const auto wm = wmq_test::random_world_model(5);
  const auto z = encode(wm.net, render(EnvState{{0.2, 0.2}}, WallEnvConfig{}));
  const std::vector<double> a{0.05, -0.1};
  EXPECT_EQ(predict_next(wm.net, z, a), predict_next(wm.net, z, a));
  EXPECT_THROW(predict_next(wm.net, z, std::vector<double>{0.1, 0.1, 0.1}), ValidationError);
  EXPECT_THROW(predict_next(wm.net, std::vector<double>(3, 0.0), a), ValidationError);

  EXPECT_TRUE(rollout(wm.net, z, std::span<const Vec2>{}).empty());
  const std::vector<Vec2> one{{0.05, -0.1}};
  const auto r1 = rollout(wm.net, z, one);
  ASSERT_EQ(r1.size(), 1u);
  EXPECT_EQ(r1[0], predict_next(wm.net, z, a));

  const std::vector<Vec2> first{{0.1, 0.0}, {0.0, 0.1}, {-0.05, 0.02}};
  const std::vector<Vec2> second{{0.03, 0.03}, {0.1, -0.1}};
  std::vector<Vec2> all = first;
  all.insert(all.end(), second.begin(), second.end());
  const auto full = rollout(wm.net, z, all);
  const auto head = rollout(wm.net, z, first);
  const auto tail = rollout(wm.net, head.back(), second);
  ASSERT_EQ(full.size(), 5u);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(full[i], head[i]);
  for (std::size_t i = 0; i < 2; ++i) EXPECT_EQ(full[3 + i], tail[i]);
}

TEST(WorldModel, LowBitRolloutDivergesFaster) {
  const auto& wm = trained().result.model;
  const auto u3 = with_policy(wm, Uniform{3});
  const auto u8 = with_policy(wm, Uniform{8});
  const WallEnvConfig env;
  Rng rng("test-rollout", {});
  double d3 = 0, d8 = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const auto obs = render(EnvState{{rng.uniform(), rng.uniform()}}, env);
    std::vector<Vec2> acts(5);
    for (auto& a : acts) a = {rng.uniform(-0.125, 0.125), rng.uniform(-0.125, 0.125)};
    const auto ref = rollout(wm.net, encode(wm.net, obs), acts).back();
    d3 += l2(rollout(u3.net, encode(u3.net, obs), acts).back(), ref);
    d8 += l2(rollout(u8.net, encode(u8.net, obs), acts).back(), ref);
  }
  EXPECT_GT(d3, d8);
}

TEST(Training, LossDropsAndProbeIsAccurate) {
  const auto& t = trained();
  ASSERT_EQ(t.data.size(), 2000u);
  EXPECT_LT(t.result.final_loss, 0.5 * t.result.initial_loss);
  EXPECT_LT(t.result.validation_probe_error, 0.15);
  EXPECT_EQ(t.result.model.metadata.at("train_size"), 1800);
  EXPECT_TRUE(t.result.model.metadata.contains("final_loss"));
}

TEST(Training, SameSeedGivesIdenticalWeights) {
  const auto data = gen_dataset(30, 5, 2, WallEnvConfig{});
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.seed = 9;
  const auto a = to_model(train_world_model(data, cfg, ModelDims{}).model);
  const auto b = to_model(train_world_model(data, cfg, ModelDims{}).model);
  ASSERT_EQ(a.tensors.size(), b.tensors.size());
  for (std::size_t i = 0; i < a.tensors.size(); ++i) EXPECT_EQ(a.tensors[i].data, b.tensors[i].data);
  cfg.seed = 10;
  const auto c = to_model(train_world_model(data, cfg, ModelDims{}).model);
  EXPECT_NE(a.tensors[0].data, c.tensors[0].data);
}

TEST(Training, RejectsBadInput) {
  TrainConfig cfg;
  EXPECT_THROW(train_world_model({}, cfg, ModelDims{}), ValidationError);
  const auto data = gen_dataset(2, 2, 0, WallEnvConfig{});
  cfg.learning_rate = 0;
  EXPECT_THROW(train_world_model(data, cfg, ModelDims{}), ValidationError);
  cfg = {};
  cfg.learning_rate = 1e200;
  cfg.epochs = 3;
  EXPECT_THROW(train_world_model(gen_dataset(20, 5, 0, WallEnvConfig{}), cfg, ModelDims{}), TrainingDivergenceError);
}

TEST(Probe, ExactLinearRelationship) {
  Rng rng("test-probe", {});
  std::vector<Latent> zs;
  std::vector<Vec2> ss;
  for (int i = 0; i < 60; ++i) {
    Latent z(6);
    for (auto& v : z) v = rng.uniform(-1, 1);
    zs.push_back(z);
    ss.push_back({0.5 * z[0] - z[3] + 0.2, 2.0 * z[5] + z[1] - 0.1});
  }
  const auto fit = fit_linear_probe(zs, ss);
  EXPECT_LT(fit.residual_rms, 1e-6);
  EXPECT_FALSE(fit.rank_deficient);
  EXPECT_NEAR(fit.probe.w[0], 0.5, 1e-9);
  EXPECT_NEAR(fit.probe.w[3], -1.0, 1e-9);
  EXPECT_NEAR(fit.probe.b[1], -0.1, 1e-9);

  auto zz = zs;
  auto sz = ss;
  zz.insert(zz.end(), zs.begin(), zs.end());
  sz.insert(sz.end(), ss.begin(), ss.end());
  const auto twice = fit_linear_probe(zz, sz);
  for (std::size_t i = 0; i < fit.probe.w.size(); ++i) EXPECT_NEAR(twice.probe.w[i], fit.probe.w[i], 1e-10);
  for (std::size_t i = 0; i < 2; ++i) EXPECT_NEAR(twice.probe.b[i], fit.probe.b[i], 1e-10);
}

TEST(Probe, DuplicatedDatasetLeavesProbeUnchanged) {
  auto a = trained().result.model;
  auto b = a;
  const auto part = Dataset(trained().data.begin(), trained().data.begin() + 300);
  auto doubled = part;
  doubled.insert(doubled.end(), part.begin(), part.end());
  fit_state_probe(a, part);
  fit_state_probe(b, doubled);
  for (std::size_t i = 0; i < a.net.probe.w.size(); ++i) EXPECT_NEAR(a.net.probe.w[i], b.net.probe.w[i], 1e-5);
}

TEST(Probe, RankDeficientFitIsRecordedNotRaised) {
  auto wm = wmq_test::random_world_model(6);
  for (auto& l : wm.net.encoder) std::ranges::fill(l.w, 0.0f);
  const auto data = gen_dataset(10, 3, 0, WallEnvConfig{});
  ProbeFit fit;
  EXPECT_NO_THROW(fit = fit_state_probe(wm, data));
  EXPECT_TRUE(fit.rank_deficient);
  EXPECT_TRUE(wm.metadata.at("probe_fit").at("rank_deficient").get<bool>());
}

TEST(Probe, ErrorGrowsUnderThreeBitEncoder) {
  const auto& wm = trained().result.model;
  const auto u3 = with_policy(wm, Uniform{3});
  const WallEnvConfig env;
  Rng rng("test-probe-eval", {});
  double e_fp = 0, e_q = 0;
  for (int i = 0; i < 200; ++i) {
    const EnvState s{{rng.uniform(), rng.uniform()}};
    const auto obs = render(s, env);
    // Full-precision probe on both encoders, as in the planner diagnostics.
    const auto p_fp = probe_state(wm.net, encode(wm.net, obs));
    const auto p_q = probe_state(wm.net, encode(u3.net, obs));
    e_fp += distance(p_fp, s.pos);
    e_q += distance(p_q, s.pos);
  }
  EXPECT_GT(e_q, e_fp);
}

TEST(Persistence, RolesSurviveQuantizationAndReload) {
  const auto wm = wmq_test::random_world_model(8);
  const auto dir = wmq_test::scratch_dir("wm_roles");
  const auto v = apply_policy(to_model(wm), Mixed{4});
  persist_model(v.model, dir);
  const auto back = load_model(dir);
  ASSERT_EQ(back.tensors.size(), 14u);
  for (const auto& t : back.tensors) {
    const Role want = t.name.starts_with("encoder.")     ? Role::encoder
                      : t.name.starts_with("predictor.") ? Role::predictor
                                                          : Role::other;
    EXPECT_EQ(t.role, want) << t.name;
  }
  const auto re = from_model(back);
  EXPECT_EQ(re.net.dims, ModelDims{});
  EXPECT_EQ(re.net.encoder[0].w, wm.net.encoder[0].w);  // encoder kept at baseline under mixed
  EXPECT_EQ(re.net.predictor[1].w, from_model(v.model).net.predictor[1].w);
  EXPECT_EQ(back.extras.at("variant"), "mixed_int4");
}

TEST(Persistence, FromModelRejectsForeignModels) {
  Model m;
  EXPECT_THROW(from_model(m), ValidationError);
  auto good = to_model(wmq_test::random_world_model(1));
  good.tensors.pop_back();
  EXPECT_THROW(from_model(good), ValidationError);
}
