#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "sbr/draws_io.hpp"
#include "sbr/estimates.hpp"
#include "sbr/manifest.hpp"
#include "sbr/pipeline.hpp"
#include "sbr/plot.hpp"
#include "sbr/stats.hpp"
#include "sbr/synthetic.hpp"

using namespace sbr;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("sbr_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

PipelineConfig quick_config(const fs::path& dir) {
  auto cfg = load_pipeline_config(dir / "config.json");
  SamplerConfig s;
  s.n_chains = 2;
  s.n_iter = 300;
  s.n_warmup = 150;
  s.target_accept = 0.9;
  cfg.sampler = s;
  cfg.adjust_sampler = s;
  cfg.screen_sampler = s;
  cfg.validation.enabled = false;
  return cfg;
}

PosteriorDraws random_draws(const std::vector<std::string>& names, int chains, int kept, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  PosteriorDraws d;
  d.names = names;
  for (int c = 0; c < chains; ++c) {
    Eigen::MatrixXd m(kept, static_cast<Eigen::Index>(names.size()));
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = z(rng);
    d.chains.push_back(m);
    std::vector<IterationStats> st(kept);
    for (int i = 0; i < kept; ++i) {
      st[i].step_size = 0.1 + c;
      st[i].tree_depth = i % 5;
      st[i].n_leapfrog = 3 * i;
      st[i].divergent = i % 7 == 0;
      st[i].accept_stat = 0.5;
      st[i].log_density = -i;
      st[i].energy = i;
    }
    d.stats.push_back(st);
    d.step_size.push_back(0.1 + c);
    d.inverse_metric.push_back(Eigen::VectorXd::Constant(3, 1.5 + c));
  }
  return d;
}

/// Draws for a synthetic spec built from explicit parameter sets.
PosteriorDraws draws_from(const ModelSpec& spec, const std::vector<ModelParameters>& params) {
  const ParameterLayout layout(spec);
  PosteriorDraws d;
  d.names = layout.names();
  Eigen::MatrixXd m(static_cast<Eigen::Index>(params.size()), layout.constrained_dim());
  for (std::size_t s = 0; s < params.size(); ++s) m.row(static_cast<Eigen::Index>(s)) = layout.pack(params[s]);
  d.chains.push_back(m);
  d.stats.assign(1, std::vector<IterationStats>(params.size()));
  return d;
}

}  // namespace

TEST_CASE("sha256 of known vectors") {
  CHECK(sha256_text("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(sha256_text("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  const auto dir = scratch("sha");
  std::ofstream(dir / "f.txt") << "abc";
  CHECK(sha256_file(dir / "f.txt") == sha256_text("abc"));
}

TEST_CASE("manifest round trip and staleness") {
  const auto dir = scratch("manifest");
  std::ofstream(dir / "out.csv") << "a,b\n1,2\n";
  StageManifest m;
  m.stage = "fit";
  m.seed = 42;
  m.settings_sha256 = sha256_text("{}");
  m.inputs.push_back({"in.csv", sha256_text("x")});
  m.outputs.push_back({"out.csv", sha256_file(dir / "out.csv")});
  write_manifest(dir / "manifests" / "fit.json", m);
  const auto back = read_manifest(dir / "manifests" / "fit.json");
  REQUIRE(back);
  CHECK(back->fingerprint() == m.fingerprint());
  CHECK(manifest_current(*back, m, dir));

  auto other_seed = m;
  other_seed.seed = 43;
  CHECK_FALSE(manifest_current(*back, other_seed, dir));
  auto other_input = m;
  other_input.inputs[0].sha256 = sha256_text("y");
  CHECK_FALSE(manifest_current(*back, other_input, dir));

  std::ofstream(dir / "out.csv") << "tampered\n";
  CHECK_FALSE(manifest_current(*back, m, dir));
  CHECK_FALSE(read_manifest(dir / "missing.json"));
}

TEST_CASE("draws file round trip is exact") {
  const auto dir = scratch("draws");
  const auto d = random_draws({"a", "b[x]", "sigma_source[Survey]"}, 3, 17, 5);
  write_draws(dir / "d.bin", d);
  const auto r = read_draws(dir / "d.bin");
  CHECK(r.names == d.names);
  REQUIRE(r.n_chains() == 3);
  for (int c = 0; c < 3; ++c) {
    CHECK(r.chains[c] == d.chains[c]);
    CHECK(r.step_size[c] == d.step_size[c]);
    CHECK(r.inverse_metric[c] == d.inverse_metric[c]);
    for (int i = 0; i < 17; ++i) {
      CHECK(r.stats[c][i].divergent == d.stats[c][i].divergent);
      CHECK(r.stats[c][i].n_leapfrog == d.stats[c][i].n_leapfrog);
      CHECK(r.stats[c][i].log_density == d.stats[c][i].log_density);
    }
  }
  CHECK(r.divergent_count() == d.divergent_count());
  // the file is itself deterministic
  write_draws(dir / "e.bin", r);
  CHECK(slurp(dir / "d.bin") == slurp(dir / "e.bin"));

  std::ofstream(dir / "junk.bin") << "not a draws file at all";
  CHECK_THROWS(read_draws(dir / "junk.bin"));
}

TEST_CASE("covariate-only estimate") {
  auto data = generate_synthetic(SyntheticConfig{});
  const auto& spec = data.spec;
  std::mt19937_64 rng(11);
  std::normal_distribution<double> z(0.0, 1.0);

  auto jitter = [&](ModelParameters p, bool smoother, bool regression) {
    p.lambda = Eigen::VectorXd::Ones(p.beta.size());
    p.tau = p.rho2 = 1.0;
    p.varsigma.array() += 0.1 * z(rng);
    if (regression) {
      for (int k = 0; k < p.beta.size(); ++k) p.beta(k) += 0.05 * z(rng);
    } else {
      p.beta.setZero();
    }
    if (smoother) {
      for (int c = 0; c < p.alpha.rows(); ++c) {
        for (int h = 0; h < p.alpha.cols(); ++h) p.alpha(c, h) += 0.05 * z(rng);
        p.alpha.row(c).array() -= p.alpha.row(c).mean();
      }
    } else {
      p.alpha.setZero();
    }
    return p;
  };

  SUBCASE("no smoother: identical to the full estimate") {
    std::vector<ModelParameters> ps;
    for (int s = 0; s < 200; ++s) ps.push_back(jitter(data.truth, false, true));
    const auto d = draws_from(spec, ps);
    const auto table = estimate_table(d, spec);
    for (const auto& row : table) {
      CHECK(row.sbr.median == doctest::Approx(row.covariate_only.median).epsilon(1e-12));
      CHECK(row.sbr.lower == doctest::Approx(row.covariate_only.lower).epsilon(1e-12));
      CHECK(row.sbr.upper == doctest::Approx(row.covariate_only.upper).epsilon(1e-12));
    }
  }

  SUBCASE("zero coefficients: summaries of exp(varsigma)") {
    std::vector<ModelParameters> ps;
    for (int s = 0; s < 200; ++s) ps.push_back(jitter(data.truth, true, false));
    const auto d = draws_from(spec, ps);
    for (int c = 0; c < spec.n_countries(); ++c) {
      std::vector<double> v;
      for (const auto& p : ps) v.push_back(std::exp(p.varsigma(c)));
      const auto est = covariate_only_estimate(d, spec, c, 7);
      CHECK(est.median == doctest::Approx(median(v)).epsilon(1e-12));
      CHECK(est.lower == doctest::Approx(quantile(v, 0.05)).epsilon(1e-12));
      CHECK(est.upper == doctest::Approx(quantile(v, 0.95)).epsilon(1e-12));
    }
  }

  SUBCASE("full minus covariate-only median is the smoother median on the log scale") {
    // symmetric, independent level and smoother draws make medians additive up to MC error
    std::vector<ModelParameters> ps;
    for (int s = 0; s < 4000; ++s) ps.push_back(jitter(data.truth, true, true));
    const auto d = draws_from(spec, ps);
    const auto table = estimate_table(d, spec);
    const int T = spec.n_years();
    for (int c = 0; c < spec.n_countries(); c += 3) {
      for (int t = 0; t < T; t += 6) {
        std::vector<double> delta;
        for (const auto& p : ps) {
          std::vector<double> a(p.alpha.cols());
          for (int h = 0; h < p.alpha.cols(); ++h) a[h] = p.alpha(c, h);
          delta.push_back(smoother_value(a, spec.basis, spec.basis.year_start + t));
        }
        const auto& row = table[static_cast<std::size_t>(c * T + t)];
        const double diff = std::log(row.sbr.median) - std::log(row.covariate_only.median);
        // each sample median has MC sd <= 1.25 * 0.16 / sqrt(4000) ~ 0.003; three of them enter
        CHECK(std::abs(diff - median(delta)) < 0.015);
      }
    }
  }
}

TEST_CASE("country plots") {
  const auto dir = scratch("plot");
  std::vector<EstimateRow> rows;
  for (int y = 2000; y <= 2019; ++y) rows.push_back({"AAA", y, {10, 8, 12}, {11, 7, 15}});
  std::vector<PlotPoint> points = {{2005, 9.0, 9.5, 7.0, 12.0, Definition::Ge22Weeks},
                                   {2010, 11.0, 11.0, 9.0, 13.5, Definition::Ge28Weeks}};

  emit_country_plot("AAA", rows, points, dir / "a.svg");
  emit_country_plot("AAA", rows, points, dir / "b.svg");
  const auto svg = slurp(dir / "a.svg");
  CHECK(svg == slurp(dir / "b.svg"));
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(svg.find("stroke-dasharray=\"6 4\"") != std::string::npos);  // covariate-only line
  CHECK(svg.find("fill=\"none\" stroke=\"#ff7f0e\"") != std::string::npos);  // hollow 22-week marker

  emit_country_plot("AAA", rows, {}, dir / "empty.svg");  // bands only
  const auto empty = slurp(dir / "empty.svg");
  CHECK(empty.find("fill-opacity") != std::string::npos);
  CHECK(empty.find("<circle cx=\"", 0) != std::string::npos);  // legend markers only
  CHECK(empty.find("r=\"4\" fill=\"none\" stroke=\"#1f77b4\"") == std::string::npos);

  CHECK_THROWS_AS(emit_country_plot("ZZZ", rows, points, dir / "z.svg"), std::invalid_argument);
}

TEST_CASE("country with dense precise data: posterior band hugs the data") {
  SyntheticConfig cfg;
  cfg.n_observations = 160;
  cfg.source_weights = {1.0, 0.0, 0.0, 0.0};  // administrative only
  cfg.min_births = 200000;
  cfg.max_births = 400000;
  const auto data = generate_synthetic(cfg);
  SamplerConfig s;
  s.n_chains = 2;
  s.n_iter = 600;
  s.n_warmup = 300;
  s.seed = 3;
  s.target_accept = 0.9;
  const auto draws = sample(SbrModel(data.spec).target(), s);
  const auto table = estimate_table(draws, data.spec);
  int inside = 0, n = 0;
  double width = 0;
  for (const auto& row : table) {
    const int c = data.spec.countries.index_of(row.country);
    const double truth = std::exp(data.theta(c, row.year - cfg.year_start));
    inside += row.sbr.lower <= truth && truth <= row.sbr.upper;
    width += (row.sbr.upper - row.sbr.lower) / row.sbr.median;
    ++n;
  }
  CHECK(width / n < 0.1);
  CHECK(inside >= 0.75 * n);
}

TEST_CASE("pipeline on the synthetic fixture") {
  const auto dir = scratch("pipeline");
  write_synthetic_fixture(dir, 1);
  auto cfg = quick_config(dir);
  cfg.output_dir = dir / "run1";
  const auto first = run_pipeline(cfg);
  CHECK(first.executed.size() == kStageCount - 1);  // validation disabled
  for (auto s : {Stage::Ingest, Stage::Variance, Stage::DefAdjust, Stage::Adjust, Stage::Screen, Stage::Fit,
                 Stage::Subset, Stage::SubsetFit, Stage::Estimates, Stage::Plots}) {
    CHECK(fs::exists(cfg.output_dir / "manifests" / (std::string(to_string(s)) + ".json")));
  }
  for (const char* f : {"estimates.csv", "adjustment_table.csv", "exclusions.csv", "summary.csv", "subset.csv",
                        "plots/index.html", "plots/C01.svg", "ingest/rejections.csv"}) {
    CHECK_MESSAGE(fs::exists(cfg.output_dir / f), f);
  }
  const auto estimates = read_estimates(cfg.output_dir / "estimates.csv");
  CHECK(estimates.size() == 8u * 20u);
  for (const auto& r : estimates) {
    CHECK(r.sbr.lower > 0);
    CHECK(r.sbr.lower <= r.sbr.median);
    CHECK(r.sbr.median <= r.sbr.upper);
  }

  SUBCASE("rerun reuses every expensive stage and rewrites identical bytes") {
    const auto before = slurp(cfg.output_dir / "estimates.csv");
    const auto again = run_pipeline(cfg);
    CHECK(again.reused == std::vector<Stage>{Stage::DefAdjust, Stage::Screen, Stage::Fit, Stage::SubsetFit});
    CHECK(slurp(cfg.output_dir / "estimates.csv") == before);
  }
  SUBCASE("fresh directory, same seed: byte-identical estimates") {
    auto cfg2 = cfg;
    cfg2.output_dir = dir / "run2";
    run_pipeline(cfg2);
    CHECK(slurp(cfg2.output_dir / "estimates.csv") == slurp(cfg.output_dir / "estimates.csv"));
    CHECK(slurp(cfg2.output_dir / "fit" / "draws.bin") == slurp(cfg.output_dir / "fit" / "draws.bin"));
  }
  SUBCASE("forcing a stage recomputes it and everything downstream") {
    RunOptions opt;
    opt.force_from = Stage::SubsetFit;
    const auto r = run_pipeline(cfg, opt);
    CHECK(r.reused == std::vector<Stage>{Stage::DefAdjust, Stage::Screen, Stage::Fit});
  }
  SUBCASE("stopping early") {
    auto cfg3 = cfg;
    cfg3.output_dir = dir / "run3";
    RunOptions opt;
    opt.last = Stage::Screen;
    const auto r = run_pipeline(cfg3, opt);
    CHECK(r.executed.back() == Stage::Screen);
    CHECK_FALSE(fs::exists(cfg3.output_dir / "estimates.csv"));
  }
}

TEST_CASE("missing covariate file fails at ingest naming the path") {
  const auto dir = scratch("missing");
  write_synthetic_fixture(dir, 2);
  auto cfg = quick_config(dir);
  fs::remove(dir / "covariates.csv");
  try {
    run_pipeline(cfg);
    FAIL("expected a stage error");
  } catch (const StageError& e) {
    CHECK(e.stage() == Stage::Ingest);
    CHECK(std::string(e.what()).find("covariates.csv") != std::string::npos);
  }
}

TEST_CASE("config parsing") {
  const auto dir = scratch("config");
  write_synthetic_fixture(dir, 3);
  const auto cfg = load_pipeline_config(dir / "config.json");
  CHECK(cfg.seed == 3);
  CHECK(cfg.output_dir == dir / "out");
  CHECK(cfg.covariates.size() == 4);
  CHECK(cfg.sparsity_guess.has_value());
  CHECK(cfg.validation.enabled);
  CHECK(cfg.validation.random_replicates == 2);

  std::ofstream(dir / "bad.json") << R"({"inputs": {}, "covariates": [], "typo_key": 1})";
  CHECK_THROWS(load_pipeline_config(dir / "bad.json"));
  CHECK(parse_stage("subset-fit") == Stage::SubsetFit);
  CHECK_THROWS(parse_stage("nope"));
  CHECK(stage_seed(7, Stage::Fit) != stage_seed(7, Stage::SubsetFit));
}
