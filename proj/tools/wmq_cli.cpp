// wmq: run the quantization study pipeline, or one stage of it.

#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "wmq/pipeline.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Mixed-bit quantization study for a toy latent world model"};
  std::string config_path;
  std::string stage = "all";
  std::string output;
  int jobs = 0;
  app.add_option("--config", config_path, "experiment config (JSON); defaults apply when omitted");
  app.add_option("--stage", stage, "gen-data, train, variants, eval, stats, report or all")->capture_default_str();
  app.add_option("--output", output, "output directory (overrides output_dir in the config)");
  app.add_option("--jobs", jobs, "worker threads for eval; 0 uses every core")->capture_default_str();
  CLI11_PARSE(app, argc, argv);

  try {
    wmq::ExperimentConfig cfg = config_path.empty() ? wmq::config_from_json(nlohmann::json::object())
                                                    : wmq::load_config(config_path);
    if (!output.empty()) cfg.output_dir = output;
    if (jobs < 0) throw wmq::ValidationError("--jobs must be >= 0");
    wmq::Pipeline p(cfg, jobs);
    std::cerr << "config hash " << p.hash() << ", output " << p.output_dir().string() << "\n";
    p.run(wmq::parse_stage(stage));
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
