#include <gtest/gtest.h>

#include <regex>
#include <sstream>

#include "test_support.hpp"
#include "wmq/pipeline.hpp"

using namespace wmq;
using nlohmann::json;

namespace {

ExperimentConfig tiny_config(const std::string& out) {
  auto c = load_config(std::string(WMQ_TEST_DATA_DIR) + "/tiny.json");
  c.output_dir = out;
  return c;
}

json read_json(const fs::path& p) { return json::parse(wmq_test::slurp(p)); }

std::string error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const std::exception& e) {
    return e.what();
  }
  return {};
}

// One full tiny run shared by the read-only tests.
const fs::path& tiny_run() {
  static const fs::path dir = [] {
    const auto d = wmq_test::scratch_dir("pipeline_shared");
    std::ostringstream log;
    Pipeline(tiny_config(d.string()), 1, &log).run(Stage::all);
    return d;
  }();
  return dir;
}

}  // namespace

TEST(Config, DefaultsMatchProtocol) {
  const ExperimentConfig c = config_from_json(json::object());
  ASSERT_EQ(c.budgets.size(), 2u);
  EXPECT_EQ(c.budgets[0].budget.name, "bA");
  EXPECT_EQ(c.budgets[0].seeds, (std::vector<std::uint64_t>{0, 1, 2}));
  EXPECT_EQ(c.budgets[1].budget.goal_h, 12);
  EXPECT_EQ(c.budgets[1].seeds, (std::vector<std::uint64_t>{0, 1}));
  EXPECT_EQ(c.episodes_per_run, 10);
  EXPECT_EQ(expand_variants(c.variants).size(), 13u);
  EXPECT_EQ(expand_variants("paper-all").size(), 16u);
  EXPECT_EQ(c.model.obs_dim, 256);
}

TEST(Config, ShippedDefaultFileEqualsBuiltInDefaults) {
  const auto file = load_config(std::string(WMQ_TEST_DATA_DIR) + "/../../configs/default.json");
  EXPECT_EQ(config_hash(file), config_hash(config_from_json(json::object())));
}

TEST(Config, ErrorsNameTheFieldPath) {
  auto msg = [](const char* text) { return error_of([&] { config_from_json(json::parse(text)); }); };
  EXPECT_NE(msg(R"({"cem": {"popsize": 3}})").find("cem.popsize: unknown field"), std::string::npos);
  EXPECT_NE(msg(R"({"cem": {"population": "big"}})").find("cem.population: expected an integer"), std::string::npos);
  EXPECT_NE(msg(R"({"cem": {"population": 2}})").find("cem.population"), std::string::npos);
  EXPECT_NE(msg(R"({"budgets": {"bA": {"goal_h": 0, "seeds": [0]}}})").find("budgets.bA"), std::string::npos);
  EXPECT_NE(msg(R"({"budgets": {"bA": {"seeds": [0, -1]}}})").find("budgets.bA.seeds[1]"), std::string::npos);
  EXPECT_NE(msg(R"({"variants": ["mixed_int4", "int5"]})").find("variants[1]"), std::string::npos);
  EXPECT_NE(msg(R"({"variants": "layerwise_int4_0"})").find("alias"), std::string::npos);
  EXPECT_NE(msg(R"({"env": {"max_step": -1}})").find("env.max_step"), std::string::npos);
  EXPECT_NE(msg(R"({"model": {"encoder_layers": 3}})").find("model.encoder_layers"), std::string::npos);
  EXPECT_NE(msg(R"({"train": {"seed": -4}})").find("train.seed"), std::string::npos);
  EXPECT_NE(msg(R"([1, 2])").find("root"), std::string::npos);
  EXPECT_THROW(load_config("/nonexistent/config.json"), ValidationError);
}

TEST(Config, HashIgnoresOutputDirOnly) {
  auto a = tiny_config("x");
  auto b = tiny_config("y");
  EXPECT_EQ(config_hash(a), config_hash(b));
  b.cem.population = 9;
  EXPECT_NE(config_hash(a), config_hash(b));
  // A group name and its expansion are the same experiment.
  auto c = tiny_config("x");
  c.variants = expand_variants("paper-all");
  EXPECT_EQ(config_hash(a), config_hash(c));
  EXPECT_EQ(config_hash(config_from_json(config_to_json(a))), config_hash(a));
}

TEST(Stages, ParseNames) {
  EXPECT_EQ(parse_stage("gen-data"), Stage::gen_data);
  EXPECT_EQ(parse_stage("all"), Stage::all);
  EXPECT_THROW(parse_stage("evaluate"), ValidationError);
}

TEST(Stages, MissingPrerequisitesNameTheStage) {
  const auto d = wmq_test::scratch_dir("pipeline_missing");
  std::ostringstream log;
  Pipeline p(tiny_config(d.string()), 1, &log);
  EXPECT_NE(error_of([&] { p.run(Stage::stats); }).find("run eval first"), std::string::npos);
  EXPECT_NE(error_of([&] { p.run(Stage::report); }).find("run eval first"), std::string::npos);
  EXPECT_NE(error_of([&] { p.run(Stage::train); }).find("run gen-data first"), std::string::npos);
  EXPECT_NE(error_of([&] { p.run(Stage::variants); }).find("run train first"), std::string::npos);
  EXPECT_NE(error_of([&] { p.run(Stage::eval); }).find("run train first"), std::string::npos);
  EXPECT_THROW(p.run(Stage::stats), StageError);
}

TEST(Stages, StaleArtifactsFromAnotherConfigRejected) {
  const auto d = wmq_test::scratch_dir("pipeline_stale");
  std::ostringstream log;
  Pipeline(tiny_config(d.string()), 1, &log).run(Stage::gen_data);
  auto other = tiny_config(d.string());
  other.master_seed = 5;
  const auto msg = error_of([&] { Pipeline(other, 1, &log).run(Stage::train); });
  EXPECT_NE(msg.find("different config"), std::string::npos) << msg;
  EXPECT_NE(msg.find("rerun gen-data"), std::string::npos) << msg;
}

TEST(Artifacts, EveryFileCarriesTheConfigHash) {
  const auto& d = tiny_run();
  const auto hash = config_hash(tiny_config(d.string()));
  for (const char* f : {"sizes.json", "episodes.meta.json", "comparisons.json", "matchups.json", "bins.json",
                        "frontier.json", "correlations.json", "main_table.meta.json"})
    EXPECT_EQ(read_json(d / f).at("config_hash"), hash) << f;
  for (const char* m : {"dataset", "base_model", "variants/mixed_int4"})
    EXPECT_EQ(read_json(d / m / "manifest.json").at("extras").at("config_hash"), hash) << m;
  for (const char* s : {"frontier.svg", "forest.svg", "retention_curve.svg", "difficulty.svg", "divergence_scatter.svg"})
    EXPECT_NE(wmq_test::slurp(d / s).find("data-config-hash=\"" + hash + "\""), std::string::npos) << s;
}

TEST(Artifacts, EpisodesCsvShape) {
  const auto& d = tiny_run();
  const auto text = wmq_test::slurp(d / "episodes.csv");
  EXPECT_EQ(text.substr(0, text.find('\n')), kEpisodesHeader);
  const auto recs = episodes_from_csv(text);
  EXPECT_EQ(recs.size(), 16u * (2 + 1) * 3);
  for (const auto& r : recs) EXPECT_EQ(r.runtime_seconds, 0.0);
  const auto sizes = read_json(d / "sizes.json").at("variants");
  EXPECT_EQ(sizes.size(), 16u);
}

TEST(Artifacts, MainTableHasOneRowPerVariant) {
  const auto& d = tiny_run();
  std::istringstream is(wmq_test::slurp(d / "main_table.csv"));
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line, "variant,size_bytes,size_mb,success_bA,success_bB");
  int rows = 0;
  while (std::getline(is, line))
    if (!line.empty()) ++rows;
  EXPECT_EQ(rows, 16);
}

TEST(Artifacts, FrontierStarsMatchFrontierJson) {
  const auto& d = tiny_run();
  const auto fj = read_json(d / "frontier.json").at("frontiers");
  const auto svg = wmq_test::slurp(d / "frontier.svg");
  for (const auto& [budget, pts] : fj.items()) {
    std::size_t n = 0;
    for (const auto& p : pts)
      if (p.at("non_dominated").get<bool>()) {
        ++n;
        const std::string tag = "class=\"star\" data-variant=\"" + p.at("variant").get<std::string>() +
                                "\" data-budget=\"" + budget + "\"";
        EXPECT_NE(svg.find(tag), std::string::npos) << tag;
      }
    const std::regex star("class=\"star\" data-variant=\"[^\"]*\" data-budget=\"" + budget + "\"");
    EXPECT_EQ(static_cast<std::size_t>(std::distance(std::sregex_iterator(svg.begin(), svg.end(), star),
                                                     std::sregex_iterator())),
              n);
  }
}

TEST(Artifacts, ForestWhiskersMatchComparisonsJson) {
  const auto& d = tiny_run();
  const auto comps = read_json(d / "comparisons.json").at("comparisons");
  ASSERT_EQ(comps.size(), 2u * key_comparisons().size());
  const auto svg = wmq_test::slurp(d / "forest.svg");
  const std::regex re(R"re(data-ci-low="([^"]*)" data-ci-high="([^"]*)")re");
  std::vector<std::pair<std::string, std::string>> found;
  for (auto it = std::sregex_iterator(svg.begin(), svg.end(), re); it != std::sregex_iterator(); ++it)
    found.emplace_back((*it)[1], (*it)[2]);
  ASSERT_EQ(found.size(), comps.size());
  for (std::size_t i = 0; i < comps.size(); ++i) {
    EXPECT_EQ(found[i].first, fixed(comps[i].at("ci_low").get<double>(), 3));
    EXPECT_EQ(found[i].second, fixed(comps[i].at("ci_high").get<double>(), 3));
  }
}

TEST(Artifacts, StatsFilesHaveExpectedShape) {
  const auto& d = tiny_run();
  const auto m = read_json(d / "matchups.json").at("matchups");
  ASSERT_EQ(m.size(), 3u);
  EXPECT_EQ(m[2].at("scope"), "pooled");
  int pooled = 0;
  for (const char* k : {"a_only_wins", "b_only_wins", "both_win", "both_fail"}) pooled += m[2].at(k).get<int>();
  EXPECT_EQ(pooled, 9);
  const auto bins = read_json(d / "bins.json").at("bins");
  for (const auto& e : bins) EXPECT_EQ(e.at("bins").size(), e.at("budget") == "bA" ? 3u : 2u);
  const auto corr = read_json(d / "correlations.json");
  EXPECT_EQ(corr.at("n_points"), 16 * 3);
}

TEST(Determinism, TwoRunsAreByteIdentical) {
  const auto a = wmq_test::scratch_dir("pipeline_det_a");
  const auto b = wmq_test::scratch_dir("pipeline_det_b");
  std::ostringstream log;
  Pipeline(tiny_config(a.string()), 1, &log).run(Stage::all);
  Pipeline(tiny_config(b.string()), 2, &log).run(Stage::all);
  for (const char* f : {"episodes.csv", "comparisons.json", "matchups.json", "bins.json", "frontier.json",
                        "correlations.json", "main_table.csv", "sizes.json", "forest.svg", "frontier.svg",
                        "dataset/weights.bin", "base_model/weights.bin", "base_model/manifest.json"})
    EXPECT_EQ(wmq_test::slurp(a / f), wmq_test::slurp(b / f)) << f;
}

TEST(Determinism, StagesRunSeparatelyMatchAll) {
  const auto d = wmq_test::scratch_dir("pipeline_staged");
  std::ostringstream log;
  Pipeline p(tiny_config(d.string()), 1, &log);
  for (auto s : {Stage::gen_data, Stage::train, Stage::variants, Stage::eval, Stage::stats, Stage::report}) p.run(s);
  for (const char* f : {"episodes.csv", "comparisons.json", "main_table.csv"})
    EXPECT_EQ(wmq_test::slurp(d / f), wmq_test::slurp(tiny_run() / f)) << f;
}
