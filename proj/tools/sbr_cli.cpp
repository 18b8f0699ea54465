#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "sbr/pipeline.hpp"
#include "sbr/synthetic.hpp"

namespace {

struct Verb {
  const char* name;
  const char* help;
  sbr::Stage last;
  bool force_validation;
};

constexpr Verb kVerbs[] = {
    {"adjust", "ingest, compute variances and fit the definitional adjustments", sbr::Stage::Adjust, false},
    {"screen", "run through the SBR:NMR ratio screen", sbr::Stage::Screen, false},
    {"fit", "run through the horseshoe fit and the subsetted refit", sbr::Stage::SubsetFit, false},
    {"estimate", "run through estimates.csv", sbr::Stage::Estimates, false},
    {"validate", "run through the validation exercises", sbr::Stage::Validation, true},
    {"plot", "run through the country plots", sbr::Stage::Plots, false},
    {"all", "run every stage (validation if enabled in the config)", sbr::Stage::Plots, false},
};

int run(const Verb& verb, const std::string& config_path, std::optional<std::uint64_t> seed,
        const std::string& stage, const std::string& out) {
  auto config = sbr::load_pipeline_config(config_path);
  if (seed) config.seed = *seed;
  if (!out.empty()) config.output_dir = out;

  sbr::RunOptions options;
  options.last = verb.last;
  if (!stage.empty()) options.force_from = sbr::parse_stage(stage);
  if (verb.force_validation) options.run_validation = true;

  try {
    const auto report = sbr::run_pipeline(config, options);
    for (std::size_t i = 0; i < sbr::kStageCount; ++i) {
      const auto s = static_cast<sbr::Stage>(i);
      if (std::ranges::find(report.executed, s) != report.executed.end()) std::cout << "ran      " << sbr::to_string(s) << '\n';
      if (std::ranges::find(report.reused, s) != report.reused.end()) std::cout << "reused   " << sbr::to_string(s) << '\n';
    }
    std::cout << "artifacts in " << report.output_dir.string() << '\n';
    return 0;
  } catch (const sbr::StageError& e) {
    std::cerr << e.what() << '\n';
    if (!e.diagnostics().empty()) std::cerr << e.diagnostics() << '\n';
    std::filesystem::create_directories(config.output_dir);
    std::ofstream log(config.output_dir / "failure.txt");
    log << e.what() << '\n' << e.diagnostics() << '\n';
    return 2;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stillbirth rate estimation pipeline"};
  app.require_subcommand(1);

  std::string config_path, stage, out;
  std::optional<std::uint64_t> seed;
  const Verb* chosen = nullptr;
  for (const auto& verb : kVerbs) {
    auto* sub = app.add_subcommand(verb.name, verb.help);
    sub->add_option("--config", config_path, "pipeline configuration (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "root seed, overrides the config");
    sub->add_option("--stage", stage, "recompute from this stage on, ignoring cached manifests");
    sub->add_option("--out", out, "output directory, overrides the config");
    sub->callback([&chosen, &verb] { chosen = &verb; });
  }

  std::string fixture_dir;
  std::uint64_t fixture_seed = 1;
  auto* fixture = app.add_subcommand("fixture", "write the synthetic input set (8 countries, 2000-2019)");
  fixture->add_option("dir", fixture_dir, "target directory")->required();
  fixture->add_option("--seed", fixture_seed, "simulation seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (fixture->parsed()) {
      sbr::write_synthetic_fixture(fixture_dir, fixture_seed);
      std::cout << "fixture written to " << fixture_dir << '\n';
      return 0;
    }
    return run(*chosen, config_path, seed, stage, out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
