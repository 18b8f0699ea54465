#include "sbr/def_adjust.hpp"

#include <cmath>
#include <exception>
#include <fstream>
#include <random>
#include <thread>

#include "sbr/csv.hpp"
#include "sbr/errors.hpp"
#include "sbr/stats.hpp"

namespace sbr {

PairKind pair_kind(Definition d) {
  switch (d) {
    case Definition::Ge22Weeks:
    case Definition::Ge24Weeks: return PairKind::Containing;
    case Definition::Ge500g:
    case Definition::Ge1000g: return PairKind::Overlapping;
    case Definition::Ge28Weeks: break;
  }
  throw std::invalid_argument("the 28-week definition is the reference and has no pairs");
}

void PairedCounts::validate() const {
  const std::string where = "paired counts " + std::to_string(id) + ": ";
  if (kind() == PairKind::Containing) {
    if (z < 0 || z_alt < 0) throw DataError(where + "negative count");
    if (z > z_alt) throw DataError(where + "28-week count exceeds the containing definition's count");
  } else {
    if (a < 0 || b < 0 || c < 0) throw DataError(where + "negative component count");
    if (n() <= 0) throw DataError(where + "no stillbirths in any component");
  }
}

namespace {

constexpr double kMuVariance = 20.0;

double log_choose(double n, double k) { return std::lgamma(n + 1) - std::lgamma(k + 1) - std::lgamma(n - k + 1); }

double half_normal_on_log(double u, double& grad) {
  const double x2 = std::exp(2.0 * u);
  grad = 1.0 - x2;
  return kLogTwo - kLogSqrtTwoPi - 0.5 * x2 + u;
}

void require_pairs(const std::vector<PairedCounts>& pairs, PairKind kind) {
  if (pairs.size() < 2) throw std::invalid_argument("definition adjustment needs at least 2 pairs");
  for (const auto& p : pairs) {
    if (p.kind() != kind) throw std::invalid_argument("pair " + std::to_string(p.id) + " has the wrong kind");
    p.validate();
  }
}

/// Derivatives of (wa, wb, wc) with respect to Gamma and s.
struct SimplexJacobian {
  OverlapSimplex w, d_gamma, d_s;
};

SimplexJacobian simplex_with_jacobian(double gamma, double s) {
  const double e = std::exp(gamma);
  const double q = e / ((1 + e) * (1 + e));
  SimplexJacobian j;
  j.w = overlap_simplex(gamma, s);
  if (gamma >= 0) {
    j.d_gamma = {-s / e, (1 - s) * q + s / e, -(1 - s) * q};
    j.d_s = {1 / e, 1 - 1 / e - e / (1 + e), -1 / (1 + e)};
  } else {
    j.d_gamma = {e * s, (1 - s) * q, -(1 - s) * q - e * s};
    j.d_s = {e, -e / (1 + e), 1 - e - 1 / (1 + e)};
  }
  return j;
}

}  // namespace

std::pair<double, double> overlap_interval(double gamma) {
  const double e = std::exp(gamma);
  return {1.0 / (1.0 + e), std::min(1.0, 1.0 / e)};
}

OverlapSimplex overlap_simplex(double gamma, double s) {
  const double e = std::exp(gamma);
  const double a = std::exp(-std::abs(gamma)) * s;
  const double b = e / (1 + e) * (1 - s) + std::max(0.0, 1 - 1 / e) * s;
  const double c = (1 - s) / (1 + e) + std::max(0.0, 1 - e) * s;
  return {a, b, c};
}

Target containing_target(std::vector<PairedCounts> pairs) {
  require_pairs(pairs, PairKind::Containing);
  const int n = static_cast<int>(pairs.size());
  double constant = 0.0;
  for (const auto& p : pairs) constant += log_choose(p.z_alt, p.z);

  Target t;
  t.dimension = 2 + n;
  t.names = {"mu", "sigma"};
  for (const auto& p : pairs) t.names.push_back("omega[" + std::to_string(p.id) + "]");
  t.log_density = [pairs, n, constant](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    g = Eigen::VectorXd::Zero(x.size());
    const double mu = x(0);
    const double sigma = std::exp(x(1));
    const double sm = logistic(mu);
    double lp = -log1p_exp(-mu) - log1p_exp(mu);  // expit(mu) ~ U(0,1)
    g(0) = 1 - 2 * sm;
    double gh;
    lp += half_normal_on_log(x(1), gh);
    g(1) = gh;
    lp += constant;
    for (int i = 0; i < n; ++i) {
      const double u = x(2 + i);
      const double logit = mu + sigma * u;
      const auto& p = pairs[static_cast<std::size_t>(i)];
      lp += -kLogSqrtTwoPi - 0.5 * u * u;
      lp += -p.z * log1p_exp(-logit) - (p.z_alt - p.z) * log1p_exp(logit);
      const double gx = p.z - p.z_alt * logistic(logit);
      g(0) += gx;
      g(1) += gx * sigma * u;
      g(2 + i) = gx * sigma - u;
    }
    return lp;
  };
  t.constrain = [n](const Eigen::VectorXd& x) {
    Eigen::VectorXd c(2 + n);
    c(0) = x(0);
    c(1) = std::exp(x(1));
    for (int i = 0; i < n; ++i) c(2 + i) = logistic(x(0) + c(1) * x(2 + i));
    return c;
  };
  double pooled_z = 0, pooled_alt = 0;
  for (const auto& p : pairs) {
    pooled_z += p.z;
    pooled_alt += p.z_alt;
  }
  const double w = std::clamp((pooled_z + 0.5) / (pooled_alt + 1.0), 0.01, 0.99);
  const double centre = std::log(w / (1 - w));
  t.initialize = [centre, n](std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Eigen::VectorXd x(2 + n);
    for (int i = 0; i < x.size(); ++i) x(i) = u(rng);
    x(0) = centre + 0.2 * x(0);
    x(1) = -1.0 + x(1);
    return x;
  };
  return t;
}

DefinitionFit fit_containing(const std::vector<PairedCounts>& pairs, const SamplerConfig& sampler) {
  const auto t = containing_target(pairs);
  const int n = static_cast<int>(pairs.size());
  DefinitionFit fit;
  fit.kind = PairKind::Containing;
  fit.draws = sample(t, sampler);
  fit.mu = fit.draws.pooled(0);
  fit.sigma = fit.draws.pooled(1);
  const auto S = fit.draws.n_pooled();
  fit.unit.resize(static_cast<Eigen::Index>(S), n);
  for (std::size_t s = 0; s < S; ++s) fit.unit.row(static_cast<Eigen::Index>(s)) = fit.draws.pooled_row(s).tail(n);
  return fit;
}

Target overlapping_target(std::vector<PairedCounts> pairs) {
  require_pairs(pairs, PairKind::Overlapping);
  const int n = static_cast<int>(pairs.size());
  double constant = 0.0;
  for (const auto& p : pairs) {
    constant += std::lgamma(p.n() + 1) - std::lgamma(p.a + 1) - std::lgamma(p.b + 1) - std::lgamma(p.c + 1);
  }

  // state: mu, log sigma, u[n] (Gamma_i = mu + sigma u_i), v[n] (s_i = logistic(v_i))
  Target t;
  t.dimension = 2 + 2 * n;
  t.names = {"mu", "sigma"};
  for (const char* block : {"Gamma", "omega_a", "omega_b", "omega_c"}) {
    for (const auto& p : pairs) t.names.push_back(std::string(block) + "[" + std::to_string(p.id) + "]");
  }
  t.log_density = [pairs, n, constant](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    g = Eigen::VectorXd::Zero(x.size());
    const double mu = x(0);
    const double sigma = std::exp(x(1));
    double lp = normal_log_density(mu, 0.0, kMuVariance);
    g(0) = -mu / kMuVariance;
    double gh;
    lp += half_normal_on_log(x(1), gh);
    g(1) = gh;
    lp += constant;
    for (int i = 0; i < n; ++i) {
      const auto& p = pairs[static_cast<std::size_t>(i)];
      const double u = x(2 + i);
      const double v = x(2 + n + i);
      const double gamma = mu + sigma * u;
      const double s = logistic(v);
      lp += -kLogSqrtTwoPi - 0.5 * u * u;
      lp += -log1p_exp(-v) - log1p_exp(v);  // uniform position on the feasible interval
      const auto j = simplex_with_jacobian(gamma, s);
      double g_gamma = 0.0, g_s = 0.0;
      const std::array<double, 3> counts = {p.a, p.b, p.c};
      const std::array<double, 3> w = {j.w.a, j.w.b, j.w.c};
      const std::array<double, 3> dg = {j.d_gamma.a, j.d_gamma.b, j.d_gamma.c};
      const std::array<double, 3> ds = {j.d_s.a, j.d_s.b, j.d_s.c};
      for (int k = 0; k < 3; ++k) {
        if (counts[k] == 0) continue;
        lp += counts[k] * std::log(w[k]);
        g_gamma += counts[k] * dg[k] / w[k];
        g_s += counts[k] * ds[k] / w[k];
      }
      g(0) += g_gamma;
      g(1) += g_gamma * sigma * u;
      g(2 + i) = g_gamma * sigma - u;
      g(2 + n + i) = g_s * s * (1 - s) + 1 - 2 * s;
    }
    return lp;
  };
  t.constrain = [n](const Eigen::VectorXd& x) {
    Eigen::VectorXd c(2 + 4 * n);
    c(0) = x(0);
    c(1) = std::exp(x(1));
    for (int i = 0; i < n; ++i) {
      const double gamma = x(0) + c(1) * x(2 + i);
      const auto w = overlap_simplex(gamma, logistic(x(2 + n + i)));
      c(2 + i) = gamma;
      c(2 + n + i) = w.a;
      c(2 + 2 * n + i) = w.b;
      c(2 + 3 * n + i) = w.c;
    }
    return c;
  };
  double alt = 0, ref = 0;
  for (const auto& p : pairs) {
    alt += p.a + p.b;
    ref += p.a + p.c;
  }
  const double centre = std::log((alt + 0.5) / (ref + 0.5));
  t.initialize = [centre, n](std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Eigen::VectorXd x(2 + 2 * n);
    for (int i = 0; i < x.size(); ++i) x(i) = u(rng);
    x(0) = centre + 0.1 * x(0);
    x(1) = -2.0 + x(1);
    return x;
  };
  return t;
}

DefinitionFit fit_overlapping(const std::vector<PairedCounts>& pairs, const SamplerConfig& sampler) {
  const auto t = overlapping_target(pairs);
  const int n = static_cast<int>(pairs.size());
  DefinitionFit fit;
  fit.kind = PairKind::Overlapping;
  fit.draws = sample(t, sampler);
  fit.mu = fit.draws.pooled(0);
  fit.sigma = fit.draws.pooled(1);
  const auto S = static_cast<Eigen::Index>(fit.draws.n_pooled());
  fit.unit.resize(S, n);
  fit.omega_a.resize(S, n);
  fit.omega_b.resize(S, n);
  fit.omega_c.resize(S, n);
  for (Eigen::Index s = 0; s < S; ++s) {
    const auto row = fit.draws.pooled_row(static_cast<std::size_t>(s));
    fit.unit.row(s) = row.segment(2, n);
    fit.omega_a.row(s) = row.segment(2 + n, n);
    fit.omega_b.row(s) = row.segment(2 + 2 * n, n);
    fit.omega_c.row(s) = row.segment(2 + 3 * n, n);
  }
  return fit;
}

Adjustment predictive_adjustment(const DefinitionFit& fit, std::uint64_t seed) {
  if (fit.mu.empty() || fit.mu.size() != fit.sigma.size()) throw std::invalid_argument("no posterior draws");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  Adjustment out;
  out.kappa.reserve(fit.mu.size());
  for (std::size_t s = 0; s < fit.mu.size(); ++s) {
    const double x = fit.mu[s] + fit.sigma[s] * z(rng);
    // -log(expit(x)) for a new containing unit; Gamma itself otherwise
    out.kappa.push_back(fit.kind == PairKind::Containing ? log1p_exp(-x) : x);
  }
  out.gamma = median(out.kappa);
  out.phi2 = out.kappa.size() > 1 ? variance(out.kappa) : 0.0;
  return out;
}

const AdjustmentRow* AdjustmentTable::find(Definition d, IncomeGroup g) const {
  for (const auto& r : rows) {
    if (r.definition == d && r.income_group == g) return &r;
  }
  return nullptr;
}

std::vector<AdjustmentRowSpec> default_adjustment_rows() {
  return {{Definition::Ge22Weeks, IncomeGroup::High},
          {Definition::Ge22Weeks, IncomeGroup::LowMiddle},
          {Definition::Ge24Weeks, IncomeGroup::LowMiddle},
          {Definition::Ge1000g, IncomeGroup::High},
          {Definition::Ge500g, IncomeGroup::High}};
}

AdjustmentTable fit_adjustment_table(const std::vector<PairedCounts>& pairs, const std::vector<AdjustmentRowSpec>& rows,
                                     SamplerConfig sampler, std::uint64_t seed) {
  AdjustmentTable table;
  table.rows.resize(rows.size());
  std::vector<std::exception_ptr> errors(rows.size());
  sampler.parallel = false;
  {
    std::vector<std::jthread> workers;
    for (std::size_t k = 0; k < rows.size(); ++k) {
      workers.emplace_back([&, k] {
        try {
          const auto& spec = rows[k];
          std::vector<PairedCounts> subset;
          for (const auto& p : pairs) {
            if (p.definition == spec.definition && p.income_group == spec.income_group) subset.push_back(p);
          }
          const std::string label = std::string(to_string(spec.definition)) + "/" +
                                    std::string(to_string(spec.income_group));
          if (subset.size() < 2) throw DataError("adjustment row " + label + " has fewer than 2 paired counts");
          auto cfg = sampler;
          cfg.seed = derive_seed(seed, 2 * k);
          const auto fit = pair_kind(spec.definition) == PairKind::Containing ? fit_containing(subset, cfg)
                                                                              : fit_overlapping(subset, cfg);
          auto adj = predictive_adjustment(fit, derive_seed(seed, 2 * k + 1));
          auto& row = table.rows[k];
          row.definition = spec.definition;
          row.income_group = spec.income_group;
          row.gamma = adj.gamma;
          row.phi2 = adj.phi2;
          row.n_pairs = subset.size();
          row.kappa = std::move(adj.kappa);
        } catch (...) {
          errors[k] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return table;
}

std::optional<Definition> effective_definition(Definition d, IncomeGroup g) {
  if (d == Definition::Ge28Weeks) return std::nullopt;
  if (g == IncomeGroup::LowMiddle) {
    if (d == Definition::Ge1000g) return std::nullopt;
    if (d == Definition::Ge500g) return Definition::Ge22Weeks;
  }
  return d;
}

AdjustmentLookup apply_equivalences(Definition d, IncomeGroup g, const AdjustmentTable& table) {
  AdjustmentLookup out;
  const auto eff = effective_definition(d, g);
  if (!eff) return out;
  out.row_definition = eff;
  if (const auto* row = table.find(*eff, g)) {
    out.status = AdjustmentStatus::Adjusted;
    out.gamma = row->gamma;
    out.phi2 = row->phi2;
  } else {
    out.status = AdjustmentStatus::Unadjustable;
  }
  return out;
}

std::vector<PairedCounts> read_paired_counts(const std::filesystem::path& path) {
  const auto table = CsvTable::read(path);
  const auto id = table.require_column("id");
  const auto def = table.require_column("definition");
  const auto inc = table.require_column("income_group");
  const auto cz = table.column("z"), cz_alt = table.column("z_alt");
  const auto ca = table.column("a"), cb = table.column("b"), cc = table.column("c");
  std::vector<PairedCounts> out;
  std::size_t line = 1;
  for (const auto& row : table.rows()) {
    ++line;
    auto cell = [&](std::optional<std::size_t> col) {
      return col ? parse_optional_double(row[*col]) : std::optional<double>{};
    };
    PairedCounts p;
    try {
      p.id = parse_integer(row[id]);
      p.definition = parse_definition(row[def]);
      p.income_group = parse_income_group(row[inc]);
    } catch (const std::exception& e) {
      throw ParseError(path.string() + " line " + std::to_string(line) + ": " + e.what());
    }
    const auto a = cell(ca), b = cell(cb), c = cell(cc);
    const auto z = cell(cz), z_alt = cell(cz_alt);
    if (p.kind() == PairKind::Overlapping) {
      if (!a || !b || !c) {
        throw SchemaError(path.string() + " line " + std::to_string(line) + ": overlapping pair needs a, b and c");
      }
      p.a = *a;
      p.b = *b;
      p.c = *c;
      p.z = p.a + p.c;
      p.z_alt = p.a + p.b;
    } else {
      if (!z || !z_alt) {
        throw SchemaError(path.string() + " line " + std::to_string(line) + ": containing pair needs z and z_alt");
      }
      p.z = *z;
      p.z_alt = *z_alt;
    }
    p.validate();
    out.push_back(p);
  }
  return out;
}

void write_paired_counts(const std::filesystem::path& path, const std::vector<PairedCounts>& pairs) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  CsvWriter w(out);
  w.row({"id", "definition", "income_group", "z", "z_alt", "a", "b", "c"});
  for (const auto& p : pairs) {
    const bool overlap = p.kind() == PairKind::Overlapping;
    w.row({std::to_string(p.id), std::string(to_string(p.definition)), std::string(to_string(p.income_group)),
           format_number(p.z), format_number(p.z_alt), overlap ? format_number(p.a) : "",
           overlap ? format_number(p.b) : "", overlap ? format_number(p.c) : ""});
  }
}

void write_adjustment_table(const std::filesystem::path& path, const AdjustmentTable& table) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  CsvWriter w(out);
  w.row({"definition", "income_group", "gamma", "phi", "phi2", "n_pairs"});
  for (const auto& r : table.rows) {
    w.row({std::string(to_string(r.definition)), std::string(to_string(r.income_group)), format_number(r.gamma),
           format_number(std::sqrt(r.phi2)), format_number(r.phi2), std::to_string(r.n_pairs)});
  }
}

AdjustmentTable read_adjustment_table(const std::filesystem::path& path) {
  const auto csv = CsvTable::read(path);
  const auto def = csv.require_column("definition");
  const auto inc = csv.require_column("income_group");
  const auto gamma = csv.require_column("gamma");
  const auto phi2 = csv.column("phi2");
  const auto phi = csv.column("phi");
  const auto n = csv.column("n_pairs");
  if (!phi2 && !phi) throw SchemaError(path.string() + ": needs a phi or phi2 column");
  AdjustmentTable table;
  for (const auto& row : csv.rows()) {
    AdjustmentRow r;
    r.definition = parse_definition(row[def]);
    r.income_group = parse_income_group(row[inc]);
    r.gamma = parse_double(row[gamma]);
    if (phi2) {
      r.phi2 = parse_double(row[*phi2]);
    } else {
      const double p = parse_double(row[*phi]);
      r.phi2 = p * p;
    }
    if (n) r.n_pairs = static_cast<std::size_t>(parse_integer(row[*n]));
    table.rows.push_back(r);
  }
  return table;
}

}  // namespace sbr
