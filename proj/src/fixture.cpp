#include <cmath>
#include <fstream>
#include <random>

#include "json.hpp"
#include "sbr/csv.hpp"
#include "sbr/errors.hpp"
#include "sbr/ingest.hpp"
#include "sbr/stats.hpp"
#include "sbr/synthetic.hpp"

namespace sbr {

namespace {

namespace fs = std::filesystem;

constexpr double kLogRatioMean = -0.18;
constexpr double kLogRatioVar = 0.083;

std::ofstream open_file(const fs::path& p) {
  std::ofstream out(p);
  if (!out) throw IoError("cannot write " + p.string());
  return out;
}

void set_rate(Observation& o, double sbr) {
  o.sbr = sbr;
  if (o.total_births) o.stillbirth_count = sbr * *o.total_births / 1000.0;
}

}  // namespace

void write_synthetic_fixture(const fs::path& dir, std::uint64_t seed) {
  fs::create_directories(dir);
  SyntheticConfig cfg;
  cfg.seed = seed;
  const auto data = generate_synthetic(cfg);
  const auto& countries = data.countries;
  const int C = static_cast<int>(countries.size());
  const int T = cfg.year_end - cfg.year_start + 1;

  std::mt19937_64 rng(derive_seed(seed, 1000));
  std::normal_distribution<double> normal(0.0, 1.0);
  auto draw_log_ratio = [&] { return kLogRatioMean + std::sqrt(kLogRatioVar) * normal(rng); };
  auto national_nmr = [&](int c, int t) { return std::exp(data.theta(c, t) - kLogRatioMean); };

  auto observations = data.observations;
  int n22_high = 0, n24_low = 0, n1000_high = 0, n_imputed = 0;
  for (auto& o : observations) {
    const int c = countries.index_of(o.country);
    const bool high = countries.income_group_of[c] == IncomeGroup::High;
    const bool counted = o.source_type == SourceType::Administrative || o.source_type == SourceType::HMIS;
    if (o.id > C && counted && high && n22_high < 8) {
      // recorded under 22 weeks: log y_alt = log y_28 - log(0.8)
      o.definition = Definition::Ge22Weeks;
      set_rate(o, o.sbr / 0.8);
      ++n22_high;
    } else if (o.id > C && counted && !high && n24_low < 6) {
      o.definition = Definition::Ge24Weeks;
      set_rate(o, o.sbr / 0.88);
      ++n24_low;
    } else if (o.id > C && o.source_type == SourceType::PopulationStudy && high && n1000_high < 4) {
      o.definition = Definition::Ge1000g;
      set_rate(o, o.sbr * std::exp(-0.1));
      ++n1000_high;
    }
    if (o.source_type == SourceType::Survey) {
      o.nmr = std::exp(std::log(o.sbr) - draw_log_ratio());
    } else if (o.source_type == SourceType::Administrative) {
      o.nmr = std::exp(std::log(o.sbr) - draw_log_ratio());
      o.live_births = std::round(*o.total_births - *o.stillbirth_count);
      o.log_se.reset();  // recomputed from births by the variance stage
    } else if (o.source_type == SourceType::HMIS && n_imputed < 2 && o.id > C) {
      o.total_births.reset();
      o.stillbirth_count.reset();
      o.log_se.reset();  // imputed from the largest HMIS error
      ++n_imputed;
    } else if (o.total_births) {
      o.log_se.reset();
    }
  }

  // underreported administrative points, far below the expected SBR:NMR ratio
  long long next_id = 1001;
  for (int k = 0; k < 3; ++k) {
    const int c = (2 * k + 1) % C;
    const int t = 3 + 5 * k;
    Observation o;
    o.id = next_id++;
    o.country = countries.countries[c];
    o.year = cfg.year_start + t;
    o.source_type = SourceType::Administrative;
    o.total_births = 20000;
    set_rate(o, 0.25 * std::exp(data.theta(c, t)));
    o.nmr = national_nmr(c, t);
    o.live_births = std::round(*o.total_births - *o.stillbirth_count);
    observations.push_back(o);
  }

  // breakdowns: one point with 5% unknown category, one with 60% (excluded)
  std::ofstream breakdowns = open_file(dir / "breakdowns.csv");
  CsvWriter bw(breakdowns);
  bw.row({"id", "category", "count"});
  for (auto& o : observations) {
    if (o.source_type == SourceType::Administrative && o.definition == Definition::Ge28Weeks && o.id > C &&
        o.id < 1000) {
      set_rate(o, o.sbr * 0.95);
      bw.row({std::to_string(o.id), "28+ weeks", format_number(*o.stillbirth_count)});
      bw.row({std::to_string(o.id), "Unknown", format_number(*o.stillbirth_count / 0.95 * 0.05)});
      break;
    }
  }
  {
    const int c = 0, t = T - 1;
    Observation o;
    o.id = next_id++;
    o.country = countries.countries[c];
    o.year = cfg.year_start + t;
    o.source_type = SourceType::Administrative;
    o.total_births = 10000;
    set_rate(o, 0.4 * std::exp(data.theta(c, t)));
    observations.push_back(o);
    bw.row({std::to_string(o.id), "28+ weeks", format_number(*o.stillbirth_count)});
    bw.row({std::to_string(o.id), "Unknown", format_number(*o.stillbirth_count * 1.5)});
  }
  breakdowns.close();
  write_observations(dir / "observations.csv", observations);

  {
    auto out = open_file(dir / "regions.csv");
    CsvWriter w(out);
    w.row({"country", "region"});
    for (int c = 0; c < C; ++c) w.row({countries.countries[c], countries.regions[countries.region_of[c]]});
  }
  {
    auto out = open_file(dir / "income_groups.csv");
    CsvWriter w(out);
    w.row({"country", "income_group"});
    for (int c = 0; c < C; ++c) w.row({countries.countries[c], std::string(to_string(countries.income_group_of[c]))});
  }
  {
    auto out = open_file(dir / "covariates.csv");
    CsvWriter w(out);
    w.row({"covariate", "country", "year", "value"});
    const auto& raw = data.raw_covariates;
    for (std::size_t k = 0; k < raw.specs.size(); ++k) {
      for (int c = 0; c < C; ++c) {
        for (int t = 0; t < T; ++t) {
          w.row({raw.specs[k].name, countries.countries[c], std::to_string(cfg.year_start + t),
                 format_number(raw.values(c * T + t, static_cast<Eigen::Index>(k)))});
        }
      }
    }
  }
  {
    auto out = open_file(dir / "national_nmr.csv");
    CsvWriter w(out);
    w.row({"country", "year", "nmr"});
    for (int c = 0; c < C; ++c) {
      for (int t = 0; t < T; ++t) {
        w.row({countries.countries[c], std::to_string(cfg.year_start + t), format_number(national_nmr(c, t))});
      }
    }
  }
  {
    // high-quality LMIC settings as raw counts (z of t total births, m of q live births)
    auto out = open_file(dir / "hq_ratios.csv");
    CsvWriter w(out);
    w.row({"id", "z", "t", "m", "q"});
    std::uniform_real_distribution<double> p_sb(0.01, 0.03);
    for (int i = 0; i < 25; ++i) {
      const double t = 20000, q = 19700;
      const double sb = p_sb(rng);
      const double nd = sb / std::exp(draw_log_ratio());
      const double z = std::binomial_distribution<long long>(static_cast<long long>(t), sb)(rng);
      const double m = std::binomial_distribution<long long>(static_cast<long long>(q), nd)(rng);
      w.row({std::to_string(i + 1), format_number(z), format_number(t), format_number(m), format_number(q)});
    }
  }
  {
    std::vector<PairedCounts> pairs;
    auto add = [&](std::vector<PairedCounts> more) {
      for (auto& p : more) {
        p.id = static_cast<long long>(pairs.size()) + 1;
        pairs.push_back(p);
      }
    };
    add(simulate_containing_pairs(Definition::Ge22Weeks, IncomeGroup::High, 12, 0.8, 0.1, 150, rng));
    add(simulate_containing_pairs(Definition::Ge22Weeks, IncomeGroup::LowMiddle, 12, 0.78, 0.12, 150, rng));
    add(simulate_containing_pairs(Definition::Ge24Weeks, IncomeGroup::LowMiddle, 12, 0.88, 0.08, 150, rng));
    add(simulate_overlapping_pairs(Definition::Ge1000g, IncomeGroup::High, 12, -0.1, 0.1, 150, rng));
    add(simulate_overlapping_pairs(Definition::Ge500g, IncomeGroup::High, 12, 0.15, 0.1, 150, rng));
    write_paired_counts(dir / "paired_counts.csv", pairs);
  }

  nlohmann::ordered_json config = {
      {"inputs",
       {{"observations", "observations.csv"},
        {"covariates", "covariates.csv"},
        {"regions", "regions.csv"},
        {"income_groups", "income_groups.csv"},
        {"paired_counts", "paired_counts.csv"},
        {"hq_ratios", "hq_ratios.csv"},
        {"national_nmr", "national_nmr.csv"},
        {"breakdowns", "breakdowns.csv"}}},
      {"window", {{"start", cfg.year_start}, {"end", cfg.year_end}}},
      {"covariates", nlohmann::ordered_json::array()},
      {"prior", {{"sparsity_guess", {{"p0", 2}, {"sigma", 1.0}}}, {"q", 2}, {"g", 8}, {"rho_convention", "scale"}}},
      {"sampler", {{"n_chains", 4}, {"n_iter", 800}, {"n_warmup", 400}, {"target_accept", 0.9}}},
      {"adjustment", {{"sampler", {{"n_chains", 2}, {"n_iter", 1000}, {"n_warmup", 500}, {"target_accept", 0.9}}}}},
      {"screen",
       {{"threshold", 0.05}, {"mc_samples", 20000}, {"sampler", {{"n_chains", 2}, {"n_iter", 1000}, {"n_warmup", 500}}}}},
      {"subset_cutoff", 0.025},
      {"validation",
       {{"enabled", true},
        {"recent", true},
        {"random", true},
        {"in_sample", true},
        {"random_replicates", 2},
        {"max_concurrency", 1}}},
      {"output_dir", "out"},
      {"seed", seed}};
  for (const auto& spec : data.raw_covariates.specs) {
    config["covariates"].push_back({{"name", spec.name}, {"log", spec.log_transform}});
  }
  auto out = open_file(dir / "config.json");
  out << config.dump(2) << '\n';
}

}  // namespace sbr
