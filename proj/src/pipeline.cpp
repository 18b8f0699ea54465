#include "sbr/pipeline.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"
#include "sbr/csv.hpp"
#include "sbr/diagnostics.hpp"
#include "sbr/draws_io.hpp"
#include "sbr/errors.hpp"
#include "sbr/estimates.hpp"
#include "sbr/manifest.hpp"
#include "sbr/plot.hpp"
#include "sbr/preprocess.hpp"
#include "sbr/spline.hpp"
#include "sbr/stats.hpp"
#include "sbr/validation.hpp"
#include "sbr/variance.hpp"

namespace sbr {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

namespace {

constexpr std::array<std::string_view, kStageCount> kStageNames = {
    "ingest", "variance", "def-adjust", "adjust", "screen", "fit", "subset", "subset-fit", "estimates", "validation",
    "plots"};

std::size_t position(Stage s) { return static_cast<std::size_t>(s); }

// ---- configuration ------------------------------------------------------------

SamplerConfig parse_sampler(const Json& j, SamplerConfig s) {
  static const std::set<std::string> known = {"n_chains",      "n_iter",   "n_warmup", "target_accept", "max_treedepth",
                                              "max_divergent_fraction", "parallel", "init_radius"};
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) throw std::invalid_argument("unknown sampler setting '" + key + "'");
  }
  s.n_chains = j.value("n_chains", s.n_chains);
  s.n_iter = j.value("n_iter", s.n_iter);
  s.n_warmup = j.value("n_warmup", s.n_warmup);
  s.target_accept = j.value("target_accept", s.target_accept);
  s.max_treedepth = j.value("max_treedepth", s.max_treedepth);
  s.max_divergent_fraction = j.value("max_divergent_fraction", s.max_divergent_fraction);
  s.parallel = j.value("parallel", s.parallel);
  s.init_radius = j.value("init_radius", s.init_radius);
  s.validate();
  return s;
}

void reject_unknown_keys(const Json& j, const std::set<std::string>& known, const std::string& where) {
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) throw std::invalid_argument("unknown key '" + key + "' in " + where);
  }
}

Json section(const Json& root, const char* key) { return root.contains(key) ? root.at(key) : Json::object(); }

// ---- artifacts ------------------------------------------------------------------

std::string relative_to(const fs::path& p, const fs::path& root) {
  const auto rel = fs::relative(p, root);
  if (!rel.empty() && *rel.begin() != "..") return rel.generic_string();
  return fs::absolute(p).lexically_normal().generic_string();
}

std::ofstream open_out(const fs::path& p) {
  fs::create_directories(p.parent_path());
  std::ofstream out(p);
  if (!out) throw IoError("cannot write " + p.string());
  return out;
}

struct AdjustedObservation {
  Observation obs;
  IncomeGroup income_group = IncomeGroup::High;
  AdjustmentLookup lookup;
};

std::map<std::pair<std::string, int>, double> read_national_nmr(const fs::path& path) {
  const auto t = CsvTable::read(path);
  const auto c = t.require_column("country"), y = t.require_column("year"), n = t.require_column("nmr");
  std::map<std::pair<std::string, int>, double> out;
  for (const auto& r : t.rows()) out[{r[c], static_cast<int>(parse_integer(r[y]))}] = parse_double(r[n]);
  return out;
}

/// hq_ratios.csv carries either (id, r, v2) or raw counts (id, z, t, m, q).
std::vector<RatioDatum> read_hq_ratios(const fs::path& path, std::size_t mc_samples, std::uint64_t seed) {
  const auto t = CsvTable::read(path);
  const auto ci = t.require_column("id");
  std::vector<RatioDatum> out;
  if (t.column("r")) {
    const auto cr = t.require_column("r"), cv = t.require_column("v2");
    for (const auto& row : t.rows()) out.push_back({parse_integer(row[ci]), parse_double(row[cr]), parse_double(row[cv])});
    return out;
  }
  const auto cz = t.require_column("z"), ct = t.require_column("t"), cm = t.require_column("m"),
             cq = t.require_column("q");
  for (std::size_t i = 0; i < t.size(); ++i) {
    const auto& row = t.rows()[i];
    RatioVarianceInput in;
    in.stillbirths = parse_double(row[cz]);
    in.total_births = parse_double(row[ct]);
    in.neonatal_deaths = parse_double(row[cm]);
    in.live_births = parse_double(row[cq]);
    in.n_samples = mc_samples;
    in.seed = derive_seed(seed, i);
    const double r = (in.stillbirths / in.total_births) / (in.neonatal_deaths / in.live_births);
    out.push_back({parse_integer(row[ci]), r, mc_log_ratio_variance(in).variance});
  }
  return out;
}

std::set<long long> read_excluded_ids(const fs::path& path) {
  const auto t = CsvTable::read(path);
  const auto ci = t.require_column("id"), cd = t.require_column("decision");
  std::set<long long> out;
  for (const auto& r : t.rows()) {
    if (r[cd] == to_string(ScreenDecision::Excluded)) out.insert(parse_integer(r[ci]));
  }
  return out;
}

void write_standardized_covariates(const fs::path& path, const CovariateMatrix& x, const CountryIndex& countries,
                                   int year_start) {
  auto out = open_out(path);
  CsvWriter w(out);
  w.row({"covariate", "country", "year", "value", "raw_mean", "raw_sd"});
  for (std::size_t k = 0; k < x.n_covariates(); ++k) {
    for (int c = 0; c < x.n_countries; ++c) {
      for (int t = 0; t < x.n_years; ++t) {
        w.row({x.names[k], countries.countries[c], std::to_string(year_start + t), format_number(x.at(k, c, t)),
               format_number(x.transformed_mean(static_cast<Eigen::Index>(k))),
               format_number(x.raw_sd(static_cast<Eigen::Index>(k)))});
      }
    }
  }
}

void write_model_input(const fs::path& path, const ModelSpec& spec) {
  auto out = open_out(path);
  CsvWriter w(out);
  w.row({"id", "country", "year", "source_type", "definition", "log_y", "s2", "gamma", "phi2"});
  for (const auto& o : spec.observations) {
    w.row({std::to_string(o.id), spec.countries.countries[o.country], std::to_string(spec.basis.year_start + o.year_index),
           std::string(to_string(o.source)), std::string(to_string(o.definition)), format_number(o.log_y),
           format_number(o.s2), format_number(o.gamma), format_number(o.phi2)});
  }
}

double pooled_median(const PosteriorDraws& d, const std::string& name) {
  const auto v = d.pooled(d.index_of(name));
  return median(v);
}

// ---- runner -------------------------------------------------------------------------

class Runner {
 public:
  Runner(const PipelineConfig& config, const RunOptions& options)
      : cfg_(config), opt_(options), out_(config.output_dir), raw_(Json::parse(config.raw_json)) {}

  RunReport run() {
    fs::create_directories(out_ / "manifests");
    report_.output_dir = out_;
    const bool validate = opt_.run_validation.value_or(cfg_.validation.enabled);
    for (std::size_t i = 0; i <= position(opt_.last); ++i) {
      const auto stage = static_cast<Stage>(i);
      if (stage == Stage::Validation && !validate) continue;
      run_stage(stage);
    }
    return report_;
  }

 private:
  void run_stage(Stage s) {
    try {
      switch (s) {
        case Stage::Ingest: return ingest();
        case Stage::Variance: return variance();
        case Stage::DefAdjust: return def_adjust();
        case Stage::Adjust: return adjust();
        case Stage::Screen: return screen();
        case Stage::Fit: return fit();
        case Stage::Subset: return subset();
        case Stage::SubsetFit: return subset_fit();
        case Stage::Estimates: return estimates();
        case Stage::Validation: return validation();
        case Stage::Plots: return plots();
      }
    } catch (const StageError&) {
      throw;
    } catch (const SamplerError& e) {
      throw StageError(s, e.what(), e.diagnostics());
    } catch (const NonFiniteError& e) {
      throw StageError(s, e.what(), "non-finite block: " + e.block());
    } catch (const std::exception& e) {
      throw StageError(s, e.what());
    }
  }

  // manifest plumbing

  StageManifest expected(Stage s, const std::vector<fs::path>& inputs, const std::vector<const char*>& settings_keys) {
    StageManifest m;
    m.stage = std::string(to_string(s));
    m.seed = stage_seed(cfg_.seed, s);
    Json settings = Json::object();
    for (const char* key : settings_keys) settings[key] = section(raw_, key);
    m.settings_sha256 = sha256_text(settings.dump());
    for (const auto& p : inputs) m.inputs.push_back({relative_to(p, out_), sha256_file(p)});
    return m;
  }

  fs::path manifest_path(Stage s) const { return out_ / "manifests" / (std::string(to_string(s)) + ".json"); }

  bool forced(Stage s) const { return opt_.force_from && position(s) >= position(*opt_.force_from); }

  bool reusable(Stage s, const StageManifest& want) {
    if (forced(s)) return false;
    const auto have = read_manifest(manifest_path(s));
    if (!have || !manifest_current(*have, want, out_)) return false;
    report_.reused.push_back(s);
    return true;
  }

  void record(Stage s, StageManifest m, const std::vector<fs::path>& outputs) {
    for (const auto& p : outputs) m.outputs.push_back({relative_to(p, out_), sha256_file(p)});
    write_manifest(manifest_path(s), m);
    report_.executed.push_back(s);
  }

  std::vector<fs::path> user_inputs(std::initializer_list<fs::path> base, std::initializer_list<std::optional<fs::path>> extra = {}) {
    std::vector<fs::path> v(base);
    for (const auto& e : extra) {
      if (e) v.push_back(*e);
    }
    return v;
  }

  // stages

  void ingest() {
    const auto m = expected(Stage::Ingest,
                            user_inputs({cfg_.observations, cfg_.covariates_file, cfg_.regions, cfg_.income_groups},
                                        {cfg_.breakdowns}),
                            {"columns", "consistency_tolerance", "window", "covariates", "max_unknown_fraction"});
    countries_ = read_country_index(cfg_.regions, cfg_.income_groups);
    auto result = ingest_observations(cfg_.observations, cfg_.schema);

    // data row of every accepted observation, for follow-up rejections
    std::set<std::size_t> rejected_rows;
    for (const auto& r : result.rejections) rejected_rows.insert(r.row);
    std::vector<std::size_t> rows;
    for (std::size_t r = 1; r <= result.input_rows; ++r) {
      if (!rejected_rows.count(r)) rows.push_back(r);
    }

    std::map<long long, RawStillbirthBreakdown> breakdowns;
    if (cfg_.breakdowns) breakdowns = read_breakdowns(*cfg_.breakdowns);
    std::set<long long> seen;
    for (std::size_t i = 0; i < result.observations.size(); ++i) {
      auto obs = result.observations[i];
      if (!countries_.find(obs.country)) {
        result.rejections.push_back({rows[i], cfg_.schema.column_for("country"), "unknown country " + obs.country});
        continue;
      }
      if (!seen.insert(obs.id).second) {
        result.rejections.push_back({rows[i], cfg_.schema.column_for("id"), "duplicate id " + std::to_string(obs.id)});
        continue;
      }
      if (auto it = breakdowns.find(obs.id); it != breakdowns.end()) {
        const auto red = redistribute_unknowns(it->second, cfg_.max_unknown_fraction);
        if (red.excluded) {
          std::ostringstream msg;
          msg << "unknown gestational age / birthweight share " << red.unknown_fraction << " above "
              << cfg_.max_unknown_fraction;
          result.rejections.push_back({rows[i], "breakdown", msg.str()});
          continue;
        }
        obs.sbr *= red.inflation;
        if (obs.stillbirth_count) *obs.stillbirth_count *= red.inflation;
      }
      observations_.push_back(std::move(obs));
    }
    std::sort(result.rejections.begin(), result.rejections.end(),
              [](const Rejection& a, const Rejection& b) { return a.row < b.row; });

    const auto raw = read_covariates(cfg_.covariates_file, cfg_.covariates, countries_, cfg_.schema.window);
    covariates_ = standardize_covariates(raw, countries_.countries, cfg_.schema.window.year_start);

    const auto obs_path = out_ / "ingest" / "observations.csv";
    const auto rej_path = out_ / "ingest" / "rejections.csv";
    fs::create_directories(obs_path.parent_path());
    write_observations(obs_path, observations_);
    write_rejections(rej_path, result.rejections);
    write_standardized_covariates(out_ / "ingest" / "covariates.csv", covariates_, countries_,
                                  cfg_.schema.window.year_start);
    record(Stage::Ingest, m, {obs_path, rej_path, out_ / "ingest" / "covariates.csv"});
  }

  void variance() {
    const auto in = out_ / "ingest" / "observations.csv";
    const auto m = expected(Stage::Variance, {in}, {});
    observations_ = impute_max_error(attach_poisson_errors(observations_));
    const auto path = out_ / "variance" / "observations.csv";
    fs::create_directories(path.parent_path());
    write_observations(path, observations_);
    record(Stage::Variance, m, {path});
  }

  void def_adjust() {
    const auto path = out_ / "adjustment_table.csv";
    const auto m = expected(Stage::DefAdjust, {cfg_.paired_counts}, {"adjustment"});
    if (reusable(Stage::DefAdjust, m)) {
      table_ = read_adjustment_table(path);
      return;
    }
    const auto pairs = read_paired_counts(cfg_.paired_counts);
    table_ = fit_adjustment_table(pairs, cfg_.adjustment_rows, cfg_.adjust_sampler, m.seed);
    write_adjustment_table(path, table_);
    record(Stage::DefAdjust, m, {path});
  }

  void adjust() {
    const auto m = expected(Stage::Adjust, {out_ / "variance" / "observations.csv", out_ / "adjustment_table.csv",
                                            cfg_.income_groups}, {});
    adjusted_.clear();
    const auto path = out_ / "adjust" / "adjusted_observations.csv";
    auto out = open_out(path);
    CsvWriter w(out);
    w.row({"id", "country", "definition", "income_group", "status", "row_definition", "gamma", "phi2"});
    for (const auto& o : observations_) {
      AdjustedObservation a;
      a.obs = o;
      a.income_group = countries_.income_group_of[countries_.index_of(o.country)];
      a.lookup = apply_equivalences(o.definition, a.income_group, table_);
      const char* status = a.lookup.status == AdjustmentStatus::Reference  ? "reference"
                           : a.lookup.status == AdjustmentStatus::Adjusted ? "adjusted"
                                                                           : "unadjustable";
      w.row({std::to_string(o.id), o.country, std::string(to_string(o.definition)),
             std::string(to_string(a.income_group)), status,
             a.lookup.row_definition ? std::string(to_string(*a.lookup.row_definition)) : std::string(),
             format_number(a.lookup.gamma), format_number(a.lookup.phi2)});
      adjusted_.push_back(std::move(a));
    }
    out.close();
    record(Stage::Adjust, m, {path});
  }

  void screen() {
    const auto path = out_ / "exclusions.csv";
    const auto fit_path = out_ / "screen" / "ratio_fit.csv";
    auto inputs = user_inputs({out_ / "adjust" / "adjusted_observations.csv", out_ / "variance" / "observations.csv",
                               cfg_.hq_ratios},
                              {cfg_.national_nmr});
    const auto m = expected(Stage::Screen, inputs, {"screen"});
    if (reusable(Stage::Screen, m)) {
      excluded_ = read_excluded_ids(path);
      return;
    }
    const auto data = read_hq_ratios(cfg_.hq_ratios, cfg_.mc_samples, derive_seed(m.seed, 0));
    auto sampler = cfg_.screen_sampler;
    sampler.seed = derive_seed(m.seed, 1);
    const auto fit = fit_ratio_model(data, sampler, cfg_.ratio_priors);

    NmrPolicy policy;
    if (cfg_.national_nmr) policy.national_nmr = read_national_nmr(*cfg_.national_nmr);
    policy.mc_samples = cfg_.mc_samples;
    policy.seed = derive_seed(m.seed, 2);
    std::vector<ScreenInput> inputs_to_screen;
    for (const auto& a : adjusted_) {
      if (a.lookup.status == AdjustmentStatus::Unadjustable) continue;
      inputs_to_screen.push_back({a.obs, a.lookup.gamma, a.lookup.phi2});
    }
    const auto results = apply_exclusion(inputs_to_screen, fit, policy, cfg_.exclusion_threshold);
    write_exclusions(path, results);
    excluded_.clear();
    for (const auto& r : results) {
      if (r.decision == ScreenDecision::Excluded) excluded_.insert(r.id);
    }
    {
      auto out = open_out(fit_path);
      CsvWriter w(out);
      w.row({"mu_median", "mu_lower", "mu_upper", "sigma2_median", "boundary_v0", "n_ratios"});
      w.row({format_number(fit.mu_median), format_number(fit.mu_lower), format_number(fit.mu_upper),
             format_number(fit.sigma2_median),
             format_number(exclusion_boundary(fit.mu_median, fit.sigma2_median, cfg_.exclusion_threshold)),
             std::to_string(data.size())});
    }
    record(Stage::Screen, m, {path, fit_path});
  }

  ModelSpec build_spec() const {
    ModelSpec spec;
    spec.countries = countries_;
    spec.covariates = covariates_;
    for (std::size_t k = 0; k < covariates_.n_covariates(); ++k) spec.included.push_back(k);
    spec.basis = build_basis(cfg_.schema.window.year_start, cfg_.schema.window.year_end);
    spec.prior = cfg_.prior;
    for (const auto& a : adjusted_) {
      if (a.lookup.status == AdjustmentStatus::Unadjustable || excluded_.count(a.obs.id)) continue;
      ModelObservation o;
      o.id = a.obs.id;
      o.country = countries_.index_of(a.obs.country);
      o.year_index = a.obs.year - cfg_.schema.window.year_start;
      o.source = a.obs.source_type;
      o.definition = a.obs.definition;
      o.log_y = std::log(a.obs.sbr);
      o.s2 = *a.obs.log_se * *a.obs.log_se;
      o.gamma = a.lookup.gamma;
      o.phi2 = a.lookup.phi2;
      spec.observations.push_back(o);
    }
    if (cfg_.sparsity_guess) {
      spec.prior.tau0 = tau0_from_sparsity_guess(cfg_.sparsity_guess->first,
                                                 static_cast<double>(covariates_.n_covariates()),
                                                 cfg_.sparsity_guess->second,
                                                 static_cast<double>(spec.observations.size()));
    }
    spec.prior.mode = PriorMode::RegularizedHorseshoe;
    spec.validate();
    return spec;
  }

  void fit() {
    full_spec_ = build_spec();
    const auto input = out_ / "fit" / "model_input.csv";
    write_model_input(input, full_spec_);
    const auto draws_path = out_ / "fit" / "draws.bin";
    const auto summary_path = out_ / "fit" / "summary.csv";
    const auto m = expected(Stage::Fit, {input, out_ / "ingest" / "covariates.csv", cfg_.regions, cfg_.income_groups},
                            {"prior", "sampler", "window"});
    if (reusable(Stage::Fit, m)) {
      full_draws_ = read_draws(draws_path);
      return;
    }
    auto sampler = cfg_.sampler;
    sampler.seed = m.seed;
    full_draws_ = sample(SbrModel(full_spec_).target(), sampler);
    write_draws(draws_path, full_draws_);
    write_summary_csv(summary_path, summarize(full_draws_));
    record(Stage::Fit, m, {draws_path, summary_path});
  }

  void subset() {
    const auto m = expected(Stage::Subset, {out_ / "fit" / "draws.bin"}, {"subset_cutoff"});
    const auto included = subset_covariates(full_draws_, full_spec_, cfg_.subset_cutoff);
    subset_spec_ = make_subsetted_spec(full_spec_, included);
    const auto path = out_ / "subset.csv";
    auto out = open_out(path);
    CsvWriter w(out);
    w.row({"covariate", "beta_median", "included"});
    for (int k = 0; k < full_spec_.n_covariates(); ++k) {
      const auto& name = full_spec_.covariates.names[k];
      const bool in = std::find(included.begin(), included.end(), static_cast<std::size_t>(k)) != included.end();
      w.row({name, format_number(pooled_median(full_draws_, "beta[" + name + "]")), in ? "1" : "0"});
    }
    out.close();
    record(Stage::Subset, m, {path});
  }

  void subset_fit() {
    const auto draws_path = out_ / "subset_fit" / "draws.bin";
    const auto summary_path = out_ / "summary.csv";
    const auto m = expected(Stage::SubsetFit, {out_ / "subset.csv", out_ / "fit" / "model_input.csv",
                                               out_ / "ingest" / "covariates.csv", cfg_.regions, cfg_.income_groups},
                            {"prior", "sampler", "window"});
    if (reusable(Stage::SubsetFit, m)) {
      subset_draws_ = read_draws(draws_path);
      return;
    }
    auto sampler = cfg_.sampler;
    sampler.seed = m.seed;
    subset_draws_ = sample(SbrModel(subset_spec_).target(), sampler);
    fs::create_directories(draws_path.parent_path());
    write_draws(draws_path, subset_draws_);
    write_summary_csv(summary_path, summarize(subset_draws_));
    record(Stage::SubsetFit, m, {draws_path, summary_path});
  }

  void estimates() {
    const auto m = expected(Stage::Estimates, {out_ / "subset_fit" / "draws.bin"}, {});
    estimates_ = estimate_table(subset_draws_, subset_spec_);
    for (const auto& r : estimates_) {
      if (!(r.sbr.lower <= r.sbr.median && r.sbr.median <= r.sbr.upper && r.sbr.lower > 0)) {
        throw std::logic_error("estimate quantiles out of order for " + r.country + " " + std::to_string(r.year));
      }
    }
    const auto path = out_ / "estimates.csv";
    write_estimates(path, estimates_);
    record(Stage::Estimates, m, {path});
  }

  void validation() {
    const auto report_path = out_ / "validation_report.csv";
    const auto loo_path = out_ / "loo_report.csv";
    const auto m = expected(Stage::Validation, {out_ / "subset_fit" / "draws.bin", out_ / "fit" / "model_input.csv",
                                                out_ / "subset.csv"},
                            {"validation"});
    validation_ran_ = true;
    if (reusable(Stage::Validation, m)) return;
    ValidationConfig vc;
    vc.recent = cfg_.validation.recent;
    vc.random = cfg_.validation.random;
    vc.in_sample = cfg_.validation.in_sample;
    vc.random_replicates = cfg_.validation.random_replicates;
    vc.max_concurrency = cfg_.validation.max_concurrency;
    vc.sampler = cfg_.validation.sampler;
    vc.seed = m.seed;
    const auto outcome = run_validation(subset_spec_, subset_draws_, vc);
    write_validation_report(report_path, outcome.reports);
    std::vector<fs::path> outputs = {report_path};
    if (vc.in_sample) {
      write_loo_report(loo_path, outcome.loo_ids, outcome.loo);
      outputs.push_back(loo_path);
    }
    record(Stage::Validation, m, outputs);
  }

  void plots() {
    const auto dir = out_ / "plots";
    std::vector<fs::path> inputs = {out_ / "estimates.csv", out_ / "fit" / "model_input.csv",
                                    out_ / "subset_fit" / "draws.bin"};
    const auto loo_path = out_ / "loo_report.csv";
    const bool pareto = validation_ran_ && fs::exists(loo_path);
    if (pareto) inputs.push_back(loo_path);
    const auto m = expected(Stage::Plots, inputs, {});
    fs::create_directories(dir);

    const double psi = pooled_median(subset_draws_, "psi_survey");
    std::array<double, kSourceTypeCount> sigma{};
    for (const auto j : kAllSourceTypes) {
      sigma[static_cast<std::size_t>(j)] = pooled_median(subset_draws_, "sigma_source[" + std::string(to_string(j)) + "]");
    }
    std::map<long long, double> raw_sbr;
    for (const auto& a : adjusted_) raw_sbr[a.obs.id] = a.obs.sbr;

    std::vector<fs::path> outputs;
    for (int c = 0; c < subset_spec_.n_countries(); ++c) {
      std::vector<PlotPoint> points;
      for (const auto& o : subset_spec_.observations) {
        if (o.country != c) continue;
        const double bias = o.gamma + (o.source == SourceType::Survey ? psi : 0.0);
        const double sd = std::sqrt(o.s2 + o.phi2 + sigma[static_cast<std::size_t>(o.source)] *
                                                    sigma[static_cast<std::size_t>(o.source)]);
        const double adj = o.log_y - bias;
        PlotPoint p;
        p.year = subset_spec_.basis.year_start + o.year_index;
        p.raw = raw_sbr.at(o.id);
        p.adjusted = std::exp(adj);
        p.lower = std::exp(adj - 1.959963984540054 * sd);
        p.upper = std::exp(adj + 1.959963984540054 * sd);
        p.definition = o.definition;
        points.push_back(p);
      }
      const auto& name = subset_spec_.countries.countries[c];
      const auto path = dir / (name + ".svg");
      emit_country_plot(name, estimates_, points, path);
      outputs.push_back(path);
    }
    if (pareto) {
      const auto t = CsvTable::read(loo_path);
      const auto ci = t.require_column("id"), ck = t.require_column("pareto_k");
      std::vector<long long> ids;
      std::vector<double> k;
      for (const auto& r : t.rows()) {
        ids.push_back(parse_integer(r[ci]));
        k.push_back(parse_optional_double(r[ck]).value_or(std::nan("")));
      }
      emit_pareto_k_plot(ids, k, dir / "pareto_k.svg");
      outputs.push_back(dir / "pareto_k.svg");
    }
    write_plot_index(subset_spec_.countries.countries, pareto, dir / "index.html");
    outputs.push_back(dir / "index.html");
    record(Stage::Plots, m, outputs);
  }

  const PipelineConfig& cfg_;
  RunOptions opt_;
  fs::path out_;
  Json raw_;
  RunReport report_;

  CountryIndex countries_;
  CovariateMatrix covariates_;
  std::vector<Observation> observations_;
  AdjustmentTable table_;
  std::vector<AdjustedObservation> adjusted_;
  std::set<long long> excluded_;
  ModelSpec full_spec_, subset_spec_;
  PosteriorDraws full_draws_, subset_draws_;
  std::vector<EstimateRow> estimates_;
  bool validation_ran_ = false;
};

}  // namespace

std::string_view to_string(Stage s) { return kStageNames[position(s)]; }

Stage parse_stage(std::string_view name) {
  for (std::size_t i = 0; i < kStageCount; ++i) {
    if (kStageNames[i] == name) return static_cast<Stage>(i);
  }
  throw std::invalid_argument("unknown stage '" + std::string(name) + "'");
}

std::uint64_t stage_seed(std::uint64_t root, Stage s) { return derive_seed(root, position(s)); }

void PipelineConfig::validate() const {
  if (schema.window.year_end < schema.window.year_start) throw std::invalid_argument("estimation window is empty");
  std::vector<fs::path> files = {observations, covariates_file, regions, income_groups, paired_counts, hq_ratios};
  if (national_nmr) files.push_back(*national_nmr);
  if (breakdowns) files.push_back(*breakdowns);
  for (const auto& f : files) {
    if (!fs::exists(f)) throw StageError(Stage::Ingest, "missing input file " + f.string());
  }
  if (covariates.empty()) throw std::invalid_argument("no covariates configured");
  sampler.validate();
  adjust_sampler.validate();
  screen_sampler.validate();
  if (validation.enabled) validation.sampler.validate();
}

PipelineConfig load_pipeline_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  Json j;
  try {
    j = Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("config " + path.string() + ": " + e.what());
  }
  reject_unknown_keys(j, {"inputs", "columns", "consistency_tolerance", "window", "covariates", "prior", "sampler",
                          "adjustment", "screen", "subset_cutoff", "max_unknown_fraction", "validation",
                          "output_dir", "seed"},
                      "config");
  const fs::path base = path.has_parent_path() ? path.parent_path() : fs::path(".");
  auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : base / p; };

  PipelineConfig c;
  try {
    const auto& inputs = j.at("inputs");
    reject_unknown_keys(inputs, {"observations", "covariates", "regions", "income_groups", "paired_counts",
                                 "hq_ratios", "national_nmr", "breakdowns"},
                        "inputs");
    c.observations = resolve(inputs.at("observations").get<std::string>());
    c.covariates_file = resolve(inputs.at("covariates").get<std::string>());
    c.regions = resolve(inputs.at("regions").get<std::string>());
    c.income_groups = resolve(inputs.at("income_groups").get<std::string>());
    c.paired_counts = resolve(inputs.at("paired_counts").get<std::string>());
    c.hq_ratios = resolve(inputs.at("hq_ratios").get<std::string>());
    if (inputs.contains("national_nmr") && !inputs["national_nmr"].is_null()) {
      c.national_nmr = resolve(inputs["national_nmr"].get<std::string>());
    }
    if (inputs.contains("breakdowns") && !inputs["breakdowns"].is_null()) {
      c.breakdowns = resolve(inputs["breakdowns"].get<std::string>());
    }

    const auto columns = section(j, "columns");
    for (const auto& [field, column] : columns.items()) c.schema.columns[field] = column.get<std::string>();
    c.schema.consistency_tolerance = j.value("consistency_tolerance", c.schema.consistency_tolerance);
    const auto window = section(j, "window");
    c.schema.window.year_start = window.value("start", c.schema.window.year_start);
    c.schema.window.year_end = window.value("end", c.schema.window.year_end);

    for (const auto& cov : j.at("covariates")) {
      c.covariates.push_back({cov.at("name").get<std::string>(), cov.value("log", false)});
    }

    const auto prior = section(j, "prior");
    reject_unknown_keys(prior, {"tau0", "sparsity_guess", "q", "g", "rho_convention"}, "prior");
    c.prior.tau0 = prior.value("tau0", c.prior.tau0);
    c.prior.q = prior.value("q", c.prior.q);
    c.prior.g = prior.value("g", c.prior.g);
    const auto conv = prior.value("rho_convention", std::string("scale"));
    if (conv == "scale") {
      c.prior.rho_convention = RhoConvention::Scale;
    } else if (conv == "rate") {
      c.prior.rho_convention = RhoConvention::Rate;
    } else {
      throw std::invalid_argument("rho_convention must be 'scale' or 'rate'");
    }
    if (prior.contains("sparsity_guess")) {
      const auto& g = prior["sparsity_guess"];
      c.sparsity_guess = std::make_pair(g.at("p0").get<double>(), g.at("sigma").get<double>());
    }

    c.sampler = parse_sampler(section(j, "sampler"), SamplerConfig{});

    const auto adj = section(j, "adjustment");
    reject_unknown_keys(adj, {"rows", "sampler"}, "adjustment");
    c.adjust_sampler = parse_sampler(section(adj, "sampler"), SamplerConfig{});
    if (adj.contains("rows")) {
      c.adjustment_rows.clear();
      for (const auto& r : adj["rows"]) {
        c.adjustment_rows.push_back({parse_definition(r.at("definition").get<std::string>()),
                                     parse_income_group(r.at("income_group").get<std::string>())});
      }
    }

    const auto scr = section(j, "screen");
    reject_unknown_keys(scr, {"threshold", "mc_samples", "sampler", "mu_sd", "sigma_sd"}, "screen");
    c.exclusion_threshold = scr.value("threshold", c.exclusion_threshold);
    c.mc_samples = scr.value("mc_samples", c.mc_samples);
    c.screen_sampler = parse_sampler(section(scr, "sampler"), SamplerConfig{});
    c.ratio_priors.mu_sd = scr.value("mu_sd", c.ratio_priors.mu_sd);
    c.ratio_priors.sigma_sd = scr.value("sigma_sd", c.ratio_priors.sigma_sd);

    c.subset_cutoff = j.value("subset_cutoff", c.subset_cutoff);
    c.max_unknown_fraction = j.value("max_unknown_fraction", c.max_unknown_fraction);

    const auto val = section(j, "validation");
    reject_unknown_keys(val, {"enabled", "recent", "random", "in_sample", "random_replicates", "max_concurrency",
                              "sampler"},
                        "validation");
    c.validation.enabled = val.value("enabled", c.validation.enabled);
    c.validation.recent = val.value("recent", c.validation.recent);
    c.validation.random = val.value("random", c.validation.random);
    c.validation.in_sample = val.value("in_sample", c.validation.in_sample);
    c.validation.random_replicates = val.value("random_replicates", c.validation.random_replicates);
    c.validation.max_concurrency = val.value("max_concurrency", c.validation.max_concurrency);
    c.validation.sampler = parse_sampler(section(val, "sampler"), c.sampler);

    c.output_dir = resolve(j.value("output_dir", std::string("out")));
    c.seed = j.value("seed", std::uint64_t{0});
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("config " + path.string() + ": " + e.what());
  }
  c.raw_json = j.dump();
  return c;
}

RunReport run_pipeline(const PipelineConfig& config, const RunOptions& options) {
  config.validate();
  return Runner(config, options).run();
}

}  // namespace sbr
