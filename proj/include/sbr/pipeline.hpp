#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "sbr/def_adjust.hpp"
#include "sbr/ingest.hpp"
#include "sbr/model.hpp"
#include "sbr/ratio_screen.hpp"
#include "sbr/sampler.hpp"

namespace sbr {

/// Pipeline stages in execution order.
enum class Stage { Ingest, Variance, DefAdjust, Adjust, Screen, Fit, Subset, SubsetFit, Estimates, Validation, Plots };
inline constexpr std::size_t kStageCount = 11;

std::string_view to_string(Stage s);
Stage parse_stage(std::string_view name);

/// Seed for one stage: derive_seed(root, stage position).
std::uint64_t stage_seed(std::uint64_t root, Stage s);

/// A stage failed; `stage()` names it and `diagnostics()` carries any dump.
class StageError : public std::runtime_error {
 public:
  StageError(Stage stage, const std::string& what, std::string diagnostics = {})
      : std::runtime_error("stage " + std::string(to_string(stage)) + " failed: " + what),
        stage_(stage),
        diagnostics_(std::move(diagnostics)) {}
  Stage stage() const { return stage_; }
  const std::string& diagnostics() const { return diagnostics_; }

 private:
  Stage stage_;
  std::string diagnostics_;
};

struct ValidationSettings {
  bool enabled = false;
  bool recent = true;
  bool random = true;
  bool in_sample = true;
  int random_replicates = 20;
  int max_concurrency = 1;
  SamplerConfig sampler;
};

struct PipelineConfig {
  std::filesystem::path observations, covariates_file, regions, income_groups, paired_counts, hq_ratios;
  std::optional<std::filesystem::path> national_nmr;  ///< country, year, nmr
  std::optional<std::filesystem::path> breakdowns;    ///< id, category, count
  ObservationSchema schema;
  std::vector<CovariateSpec> covariates;
  PriorConfig prior;
  /// When set, tau0 comes from (p0, sigma) with D = #covariates and n = #observations.
  std::optional<std::pair<double, double>> sparsity_guess;
  SamplerConfig sampler;         ///< horseshoe and subsetted fits
  SamplerConfig adjust_sampler;  ///< definitional adjustment fits
  std::vector<AdjustmentRowSpec> adjustment_rows = default_adjustment_rows();
  SamplerConfig screen_sampler;
  RatioPriors ratio_priors;
  double exclusion_threshold = 0.05;
  std::size_t mc_samples = 100000;
  double subset_cutoff = 0.025;
  double max_unknown_fraction = 0.5;
  ValidationSettings validation;
  std::filesystem::path output_dir;
  std::uint64_t seed = 0;
  std::string raw_json;  ///< the parsed document, re-serialized; source of the per-stage settings hashes

  /// Throws StageError(Ingest) naming the first referenced input file that does not
  /// exist, std::invalid_argument for an empty window or bad sampler settings.
  void validate() const;
};

/// Parses the JSON configuration; relative paths resolve against the file's directory.
PipelineConfig load_pipeline_config(const std::filesystem::path& path);

struct RunOptions {
  Stage last = Stage::Plots;            ///< stop after this stage
  std::optional<Stage> force_from;      ///< recompute this stage and everything after it
  std::optional<bool> run_validation;   ///< overrides the config switch
};

struct RunReport {
  std::vector<Stage> executed;  ///< computed in this run
  std::vector<Stage> reused;    ///< manifest matched, outputs loaded from disk
  std::filesystem::path output_dir;
};

/// Runs ingest through `options.last`. Every stage writes its artifacts and a
/// manifest under output_dir/manifests. Expensive stages (def-adjust, screen,
/// fit, subset-fit, validation) are skipped when their manifest is current.
RunReport run_pipeline(const PipelineConfig& config, const RunOptions& options = {});

}  // namespace sbr
