#include "mvtlab/cli_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <boost/math/distributions/students_t.hpp>

#include "json_util.hpp"
#include "mvtlab/errors.hpp"
#include "mvtlab/longitudinal.hpp"
#include "mvtlab/parallel.hpp"
#include "mvtlab/psychometrics.hpp"
#include "mvtlab/random.hpp"

namespace mvtlab {

namespace {

using detail::find;

const std::vector<std::pair<ExperimentKind, std::string_view>> kKindNames{
    {ExperimentKind::verify_identity, "verify_identity"},
    {ExperimentKind::derivation_chain, "derivation_chain"},
    {ExperimentKind::factor_study, "factor_study"},
    {ExperimentKind::proportionality_test, "proportionality_test"},
    {ExperimentKind::item_analysis, "item_analysis"},
    {ExperimentKind::longitudinal_strategies, "longitudinal_strategies"},
    {ExperimentKind::scenario_battery, "scenario_battery"},
};

const std::vector<std::string> kConfigFields{
    "kind",       "scenario",  "compare_scenario", "seed",        "n",
    "replicates", "tolerance", "mode",             "contrast",    "augmentation",
    "bootstrap",  "nodes",     "data",             "outcome",     "covariates",
    "item_mode",  "causal_indicators", "min_fraction", "rmsr_threshold", "level",
    "expect",     "target",    "summary",          "battery",     "output",
    "jobs"};

std::string_view to_string(Expectation e) {
  switch (e) {
    case Expectation::none: return "none";
    case Expectation::size: return "size";
    case Expectation::power: return "power";
  }
  return "?";
}

[[noreturn]] void field_error(std::string_view field, std::string_view message) {
  throw ParseError("config field '" + std::string(field) + "': " + std::string(message));
}

std::size_t count_field(const Json& config, const char* key, std::size_t fallback, std::size_t minimum) {
  const Json* v = find(config, key);
  if (!v) return fallback;
  if (!v->is_number_integer() || v->get<std::int64_t>() < static_cast<std::int64_t>(minimum))
    field_error(key, "expected an integer >= " + std::to_string(minimum));
  return static_cast<std::size_t>(v->get<std::int64_t>());
}

double number_field(const Json& config, const char* key, double fallback) {
  const Json* v = find(config, key);
  if (!v) return fallback;
  if (!v->is_number() || !std::isfinite(v->get<double>())) field_error(key, "expected a finite number");
  return v->get<double>();
}

std::string string_field(const Json& config, const char* key, const std::string& fallback) {
  const Json* v = find(config, key);
  if (!v) return fallback;
  if (!v->is_string()) field_error(key, "expected a string");
  return v->get<std::string>();
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& path) {
  const std::filesystem::path p(path);
  return p.is_absolute() ? p : base / p;
}

std::string read_file(const std::filesystem::path& path, std::string_view what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(std::string(what) + " '" + path.string() + "' cannot be read");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

std::pair<std::size_t, std::size_t> line_column(std::string_view text, std::size_t byte) {
  std::size_t line = 1, column = 1;
  for (std::size_t i = 0; i < std::min(byte, text.size()); ++i) {
    if (text[i] == '\n') {
      ++line;
      column = 1;
    } else {
      ++column;
    }
  }
  return {line, column};
}

Json parse_json(std::string_view text, std::string_view what) {
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    const auto [line, column] = line_column(text, e.byte == 0 ? 0 : e.byte - 1);
    throw ParseError(std::string(what) + ": syntax error at line " + std::to_string(line) + ", column " +
                     std::to_string(column));
  }
}

// Scenario reference: fixture name, {fixture, params}, {file}, or {kind, params}.
Scenario load_scenario(const Json& spec, const std::filesystem::path& base, std::string& source,
                       const char* field) {
  if (spec.is_string()) {
    source = spec.get<std::string>();
    return fixture_by_name(source);
  }
  if (!spec.is_object()) field_error(field, "expected a fixture name or an object");
  if (const Json* name = find(spec, "fixture")) {
    if (!name->is_string()) field_error(field, "'fixture' must be a string");
    source = name->get<std::string>();
    const Scenario fixture = fixture_by_name(source);
    const Json* overrides = find(spec, "params");
    if (!overrides) return fixture;
    if (!overrides->is_object()) field_error(field, "'params' must be an object");
    Json params = scenario_params(fixture);
    params.merge_patch(*overrides);
    return build_scenario(fixture.kind, params);
  }
  if (const Json* file = find(spec, "file")) {
    if (!file->is_string()) field_error(field, "'file' must be a string");
    source = file->get<std::string>();
    const auto path = resolve(base, source);
    return scenario_from_json(parse_json(read_file(path, "scenario file"), path.string()));
  }
  if (!find(spec, "kind")) field_error(field, "expected 'fixture', 'file' or 'kind' + 'params'");
  source = "inline";
  return scenario_from_json(spec);
}

double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double variance_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return ss / static_cast<double>(v.size() - 1);
}

struct Welch {
  double t = 0.0, df = 0.0, p = 1.0;
};

Welch welch_test(const std::vector<double>& x, const std::vector<double>& y) {
  Welch out;
  const double vx = variance_of(x) / static_cast<double>(x.size());
  const double vy = variance_of(y) / static_cast<double>(y.size());
  const double se2 = vx + vy;
  if (se2 <= 0.0) return out;
  out.t = (mean_of(x) - mean_of(y)) / std::sqrt(se2);
  out.df = se2 * se2 /
           (vx * vx / static_cast<double>(x.size() - 1) + vy * vy / static_cast<double>(y.size() - 1));
  const boost::math::students_t dist(out.df);
  out.p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(out.t)));
  return out;
}

std::string fmt(double x) { return format_number(x); }
std::string fmt(std::size_t x) { return std::to_string(x); }
std::string verdict(bool pass) { return pass ? "pass" : "fail"; }

std::uint64_t seed_of(const ExperimentConfig& c) { return c.seed.value_or(0); }

Contrast contrast_of(const ExperimentConfig& c) {
  if (c.contrast) return *c.contrast;
  if (c.scenario && c.scenario->contrast) return *c.scenario->contrast;
  return {};
}

const Scenario& need_scenario(const ExperimentConfig& c) {
  if (!c.scenario)
    throw InvalidParameter(std::string(to_string(c.kind)) + " needs a scenario");
  return *c.scenario;
}

// Replicate datasets: the CSV input when given, otherwise simulated from the
// scenario under replicate seeds.
template <class Body>
void for_each_dataset(const ExperimentConfig& c, const Scenario* scenario, std::uint64_t seed, Body body) {
  if (c.data) {
    body(0, load_csv(*c.data), c.jobs);
    return;
  }
  if (!scenario) throw InvalidParameter(std::string(to_string(c.kind)) + " needs a scenario or data file");
  const std::size_t reps = c.replicates;
  const auto one = [&](std::size_t r, int inner) {
    body(r, sample_dataset(*scenario, c.n, derive_seed(seed, StreamFamily::replicate, r), inner), inner);
  };
  if (reps == 1) {
    one(0, c.jobs);
  } else {
    parallel_for(reps, c.jobs, [&](std::size_t r) { one(r, 1); });
  }
}

std::size_t replicate_count(const ExperimentConfig& c) { return c.data ? 1 : c.replicates; }

// ---------------------------------------------------------------------------

ExperimentResult run_verify(const ExperimentConfig& c) {
  Scenario s = need_scenario(c);
  if (c.augmentation) s = redefine_versions(s, *c.augmentation);
  VerifyOptions o;
  o.mode = c.mode;
  o.contrast = c.contrast;
  o.tolerance = c.tolerance;
  o.n = c.n;
  o.replicates = c.replicates;
  o.seed = seed_of(c);
  o.bootstrap = c.bootstrap ? c.bootstrap : 200;
  o.nodes = c.nodes;
  o.jobs = c.jobs;
  const IdentityReport r = verify_identity(s, o);
  std::optional<ChainReport> chain;
  if (s.mode == ScenarioMode::discrete && c.mode == VerifyMode::exact)
    chain = verify_derivation_chain(enumerate_population(s), r.a, r.a_star, r.tolerance);

  ExperimentResult out;
  out.kind = c.kind;
  out.table.header = {"scenario", "augmentation", "mode",      "a",          "a_star",
                      "lhs",      "rhs",          "abs_diff",  "tolerance",  "standard_error",
                      "discretisation", "size",   "replicates", "first_break", "verdict"};
  out.table.rows.push_back({c.scenario_source, c.augmentation ? std::string(to_string(*c.augmentation)) : "none",
                            std::string(to_string(r.mode)), fmt(r.a), fmt(r.a_star), fmt(r.lhs), fmt(r.rhs),
                            fmt(r.abs_diff), fmt(r.tolerance), fmt(r.standard_error), fmt(r.discretisation),
                            fmt(r.size), fmt(r.replicates),
                            chain ? std::string(to_string(chain->first_break)) : "n/a", verdict(r.pass)});
  out.summary = describe(r, chain);
  out.pass = r.pass;
  return out;
}

ExperimentResult run_chain(const ExperimentConfig& c) {
  const Scenario& s = need_scenario(c);
  if (s.mode != ScenarioMode::discrete)
    throw InvalidParameter("derivation_chain needs a discrete scenario");
  const Contrast k = contrast_of(c);
  const double tol = c.tolerance.value_or(1e-10);
  const ChainReport chain = verify_derivation_chain(enumerate_population(s), k.a, k.a_star, tol);
  static constexpr std::array<ChainStep, 4> kSteps{ChainStep::arithmetic, ChainStep::independence,
                                                   ChainStep::consistency, ChainStep::unconfoundedness};
  ExperimentResult out;
  out.kind = c.kind;
  out.table.header = {"step", "assumption", "value_from", "value_to", "gap", "broken"};
  std::ostringstream text;
  text << "derivation chain for contrast a = " << fmt(k.a) << " vs a* = " << fmt(k.a_star) << "\n";
  for (std::size_t i = 0; i < 5; ++i) text << "  expression " << i + 1 << ": " << fmt(chain.values[i]) << "\n";
  for (std::size_t i = 0; i < 4; ++i) {
    const bool broken = chain.gaps[i] > tol;
    out.table.rows.push_back({std::to_string(i + 1) + "->" + std::to_string(i + 2),
                              std::string(to_string(kSteps[i])), fmt(chain.values[i]), fmt(chain.values[i + 1]),
                              fmt(chain.gaps[i]), broken ? "yes" : "no"});
  }
  if (const auto step = chain.break_index())
    text << "first broken step: " << *step << " -> " << *step + 1 << " (" << to_string(chain.first_break)
         << ")\n";
  else
    text << "every step holds within " << fmt(tol) << "\n";
  out.summary = text.str();
  out.pass = chain.first_break == ChainStep::none;
  return out;
}

ExperimentResult run_factor(const ExperimentConfig& c) {
  struct Row {
    FactorFit fit;
  };
  std::vector<std::pair<std::string, const Scenario*>> sources;
  if (c.data) {
    sources.emplace_back("data", nullptr);
  } else {
    sources.emplace_back("scenario", &need_scenario(c));
    if (c.compare_scenario) sources.emplace_back("compare_scenario", &*c.compare_scenario);
  }
  ExperimentResult out;
  out.kind = c.kind;
  std::vector<std::vector<double>> rmsr(sources.size());
  std::size_t width = 0;
  std::vector<std::vector<FactorFit>> fits(sources.size());
  for (std::size_t s = 0; s < sources.size(); ++s) {
    const std::uint64_t seed = s == 0 ? seed_of(c) : derive_seed(seed_of(c), StreamFamily::study, s);
    fits[s].resize(replicate_count(c));
    for_each_dataset(c, sources[s].second, seed, [&](std::size_t r, const Dataset& data, int) {
      fits[s][r] = fit_one_factor(sample_covariance(data, data.indicator_names()));
    });
    for (const auto& f : fits[s]) {
      rmsr[s].push_back(f.rmsr);
      width = std::max(width, static_cast<std::size_t>(f.loadings.size()));
    }
  }
  out.table.header = {"source", "replicate", "rmsr", "iterations", "converged", "heywood"};
  for (std::size_t i = 0; i < width; ++i) out.table.header.push_back("loading_" + std::to_string(i + 1));
  bool all_small = true;
  for (std::size_t s = 0; s < sources.size(); ++s) {
    for (std::size_t r = 0; r < fits[s].size(); ++r) {
      const FactorFit& f = fits[s][r];
      all_small = all_small && f.rmsr < c.rmsr_threshold;
      std::vector<std::string> row{sources[s].first, fmt(r), fmt(f.rmsr), fmt(f.iterations),
                                   f.converged ? "yes" : "no", f.heywood ? "yes" : "no"};
      for (Eigen::Index i = 0; i < f.loadings.size(); ++i) row.push_back(fmt(f.loadings(i)));
      out.table.rows.push_back(std::move(row));
    }
  }
  std::ostringstream text;
  for (std::size_t s = 0; s < sources.size(); ++s)
    text << sources[s].first << ": " << rmsr[s].size() << " fits, mean RMSR " << fmt(mean_of(rmsr[s]))
         << ", max RMSR " << fmt(*std::max_element(rmsr[s].begin(), rmsr[s].end())) << "\n";
  text << "every RMSR below " << fmt(c.rmsr_threshold) << ": " << (all_small ? "yes" : "no") << "\n";
  out.pass = all_small;
  if (sources.size() == 2 && rmsr[0].size() >= 2) {
    const Welch w = welch_test(rmsr[0], rmsr[1]);
    text << "Welch t = " << fmt(w.t) << ", df = " << fmt(w.df) << ", p = " << fmt(w.p)
         << " (difference " << (w.p > c.level ? "not " : "") << "significant at " << fmt(c.level) << ")\n";
    out.pass = out.pass && w.p > c.level;
  }
  out.summary = text.str();
  return out;
}

ExperimentResult run_proportionality(const ExperimentConfig& c) {
  const std::size_t reps = replicate_count(c);
  std::vector<ProportionalityReport> reports(reps);
  ProportionalityOptions o;
  o.mode = c.item_mode;
  o.bootstrap = c.bootstrap ? c.bootstrap : 500;
  for_each_dataset(c, c.scenario ? &*c.scenario : nullptr, seed_of(c),
                   [&](std::size_t r, const Dataset& data, int inner) {
                     ProportionalityOptions local = o;
                     local.jobs = inner;
                     reports[r] = structural_proportionality_test(
                         data, c.outcome, c.covariates.value_or(data.covariate_names()),
                         derive_seed(seed_of(c), StreamFamily::study, r), local);
                   });
  ExperimentResult out;
  out.kind = c.kind;
  out.table.header = {"replicate", "kappa", "statistic", "df", "p_value", "rejected"};
  std::size_t rejected = 0;
  for (std::size_t r = 0; r < reps; ++r) {
    const auto& p = reports[r];
    rejected += p.rejected(c.level);
    out.table.rows.push_back({fmt(r), fmt(p.kappa), fmt(p.statistic), fmt(p.df), fmt(p.p_value),
                              p.rejected(c.level) ? "yes" : "no"});
  }
  const double rate = static_cast<double>(rejected) / static_cast<double>(reps);
  std::ostringstream text;
  text << "proportionality test (" << to_string(o.mode) << " associations, B = " << o.bootstrap << ")\n";
  if (reps == 1) {
    const auto& p = reports[0];
    text << "indicator  loading  association  slope\n";
    for (std::size_t i = 0; i < p.indicators.size(); ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      text << p.indicators[i] << "  " << fmt(p.loadings(ii)) << "  " << fmt(p.associations(ii)) << "  "
           << fmt(p.slopes(ii)) << "\n";
    }
    text << "kappa = " << fmt(p.kappa) << ", statistic = " << fmt(p.statistic) << " on " << p.df
         << " df, p = " << fmt(p.p_value) << "\n";
  }
  text << "rejections at " << fmt(c.level) << ": " << rejected << " / " << reps << " (rate " << fmt(rate) << ")\n";
  switch (c.expect) {
    case Expectation::none: out.pass = true; break;
    case Expectation::size: {
      const double lo = 0.6 * c.level, hi = 1.4 * c.level;
      out.pass = rate >= lo && rate <= hi;
      char band[64];
      std::snprintf(band, sizeof band, "[%.6g, %.6g]", lo, hi);
      text << "size check: rate in " << band << ": " << verdict(out.pass) << "\n";
      break;
    }
    case Expectation::power:
      out.pass = rate >= 0.8;
      text << "power check: rate >= 0.8: " << verdict(out.pass) << "\n";
      break;
  }
  out.summary = text.str();
  return out;
}

ExperimentResult run_items(const ExperimentConfig& c) {
  const std::size_t reps = replicate_count(c);
  std::vector<std::vector<ItemAssociation>> items(reps);
  for_each_dataset(c, c.scenario ? &*c.scenario : nullptr, seed_of(c),
                   [&](std::size_t r, const Dataset& data, int) {
                     items[r] = item_by_item(data, c.outcome, c.covariates.value_or(data.covariate_names()),
                                             c.item_mode);
                   });
  ExperimentResult out;
  out.kind = c.kind;
  out.table.header = {"replicate", "indicator", "mode", "coefficient", "standard_error", "z"};
  std::size_t matching = 0;
  for (std::size_t r = 0; r < reps; ++r) {
    bool pattern = true;
    for (std::size_t i = 0; i < items[r].size(); ++i) {
      const auto& item = items[r][i];
      const double z = item.coefficient / item.standard_error;
      const bool causal = std::find(c.causal_indicators.begin(), c.causal_indicators.end(), i) !=
                          c.causal_indicators.end();
      pattern = pattern && (causal ? std::abs(z) > 3.0 : std::abs(z) <= 3.0);
      out.table.rows.push_back({fmt(r), item.indicator, std::string(to_string(item.mode)),
                                fmt(item.coefficient), fmt(item.standard_error), fmt(z)});
    }
    matching += pattern;
  }
  std::ostringstream text;
  text << "item-by-item associations (" << to_string(c.item_mode) << "), " << reps << " replicate(s)\n";
  if (c.causal_indicators.empty()) {
    out.pass = true;
  } else {
    const double fraction = static_cast<double>(matching) / static_cast<double>(reps);
    text << "expected pattern (causal items beyond 3 SE, others within): " << matching << " / " << reps
         << ", required fraction " << fmt(c.min_fraction) << "\n";
    out.pass = fraction >= c.min_fraction;
  }
  out.summary = text.str();
  return out;
}

ExperimentResult run_longitudinal(const ExperimentConfig& c) {
  const TwoWaveParams* params = nullptr;
  if (c.scenario) {
    if (c.scenario->mode != ScenarioMode::two_wave)
      throw InvalidParameter("longitudinal_strategies needs a two-wave scenario");
    params = &c.scenario->two_wave;
  }
  const std::size_t reps = replicate_count(c);
  std::vector<StrategyReport> reports(reps);
  for_each_dataset(c, c.scenario ? &*c.scenario : nullptr, seed_of(c),
                   [&](std::size_t r, const Dataset& data, int) {
                     reports[r] = analyze_strategies(data, c.target, c.summary, params);
                   });
  ExperimentResult out;
  out.kind = c.kind;
  out.table.header = {"replicate", "strategy", "estimate", "standard_error", "analytic", "true_effect",
                      "bias", "within_3se"};
  std::ostringstream text;
  text << "adjustment strategies for X_" << c.target + 1 << "_t1, n = " << reports[0].n << "\n";
  bool pass = true;
  for (std::size_t r = 0; r < reps; ++r) {
    for (const auto& s : reports[r].results) {
      std::string within = "n/a";
      if (s.analytic) {
        const bool ok = std::abs(s.estimate - *s.analytic) <= 3.0 * s.standard_error;
        pass = pass && ok;
        within = ok ? "yes" : "no";
      }
      const auto opt = [](const std::optional<double>& v) { return v ? fmt(*v) : std::string("NA"); };
      out.table.rows.push_back({fmt(r), std::string(to_string(s.strategy)), fmt(s.estimate),
                                fmt(s.standard_error), opt(s.analytic), opt(s.true_effect), opt(s.bias), within});
      if (r == 0)
        text << "  " << to_string(s.strategy) << ": estimate " << fmt(s.estimate) << " (SE "
             << fmt(s.standard_error) << "), population slope " << opt(s.analytic) << "\n";
    }
  }
  text << "estimates within 3 SE of the population slopes: " << (pass ? "yes" : "no") << "\n";
  out.summary = text.str();
  out.pass = pass;
  return out;
}

ExperimentResult run_battery_experiment(const ExperimentConfig& c) {
  const std::vector<IdentityReport> reports = run_battery(c.battery_count, seed_of(c), c.battery, c.jobs);
  const double tol = c.tolerance.value_or(1e-10);
  ExperimentResult out;
  out.kind = c.kind;
  out.table.header = {"index", "scenario_seed", "strata", "versions", "indicators", "cells",
                      "lhs",   "rhs",           "abs_diff", "verdict"};
  std::size_t passed = 0;
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const std::uint64_t seed = derive_seed(seed_of(c), StreamFamily::battery, i);
    const Scenario s = random_discrete_scenario(seed, c.battery);
    const bool ok = reports[i].abs_diff <= tol;
    passed += ok;
    out.table.rows.push_back({fmt(i), std::to_string(seed), fmt(s.strata()), fmt(s.discrete.versions()),
                              fmt(s.indicators()), fmt(reports[i].size), fmt(reports[i].lhs),
                              fmt(reports[i].rhs), fmt(reports[i].abs_diff), verdict(ok)});
  }
  std::ostringstream text;
  text << "scenario battery: " << passed << " / " << reports.size() << " identities hold within " << fmt(tol)
       << "\n";
  out.summary = text.str();
  out.pass = passed == reports.size();
  return out;
}

std::string csv_cell(const std::string& cell) {
  if (cell.find_first_of(",\"\n") == std::string::npos) return cell;
  std::string out = "\"";
  for (char ch : cell) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cell += '"';
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        cell += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      out.push_back(trim(cell));
      cell.clear();
    } else {
      cell += ch;
    }
  }
  out.push_back(trim(cell));
  return out;
}

}  // namespace

std::string_view to_string(ExperimentKind kind) {
  for (const auto& [k, name] : kKindNames)
    if (k == kind) return name;
  return "?";
}

ExperimentKind parse_experiment_kind(std::string_view text) {
  for (const auto& [k, name] : kKindNames)
    if (name == text) return k;
  std::string known;
  for (const auto& [k, name] : kKindNames) known += (known.empty() ? "" : ", ") + std::string(name);
  throw UnknownExperimentKind("unknown experiment kind '" + std::string(text) + "' (known: " + known + ")");
}

const std::vector<ExperimentKind>& experiment_kinds() {
  static const std::vector<ExperimentKind> kinds = [] {
    std::vector<ExperimentKind> out;
    for (const auto& [k, name] : kKindNames) out.push_back(k);
    return out;
  }();
  return kinds;
}

bool ExperimentConfig::sampling() const {
  switch (kind) {
    case ExperimentKind::verify_identity: return mode == VerifyMode::empirical;
    case ExperimentKind::derivation_chain: return false;
    case ExperimentKind::factor_study:
    case ExperimentKind::item_analysis:
    case ExperimentKind::longitudinal_strategies: return !data;
    case ExperimentKind::proportionality_test:
    case ExperimentKind::scenario_battery: return true;
  }
  return true;
}

ExperimentConfig parse_config_text(std::string_view text, const std::filesystem::path& base_dir,
                                   std::optional<std::uint64_t> seed_override) {
  const Json doc = parse_json(text, "config");
  if (!doc.is_object()) throw ParseError("config: top level must be a JSON object");
  for (const auto& [key, value] : doc.items())
    if (std::find(kConfigFields.begin(), kConfigFields.end(), key) == kConfigFields.end())
      throw ParseError("config: unknown field '" + key + "'");

  ExperimentConfig c;
  const Json* kind = find(doc, "kind");
  if (!kind) throw ParseError("config: missing field 'kind'");
  if (!kind->is_string()) field_error("kind", "expected a string");
  c.kind = parse_experiment_kind(kind->get<std::string>());

  if (const Json* s = find(doc, "scenario")) c.scenario = load_scenario(*s, base_dir, c.scenario_source, "scenario");
  if (const Json* s = find(doc, "compare_scenario")) {
    std::string ignored;
    c.compare_scenario = load_scenario(*s, base_dir, ignored, "compare_scenario");
  }
  if (const Json* s = find(doc, "seed")) {
    if (!s->is_number_unsigned()) field_error("seed", "expected a non-negative integer");
    c.seed = s->get<std::uint64_t>();
  }
  if (seed_override) c.seed = seed_override;

  c.n = count_field(doc, "n", c.n, 2);
  c.replicates = count_field(doc, "replicates", c.replicates, 1);
  if (const Json* t = find(doc, "tolerance")) {
    if (!t->is_number() || t->get<double>() < 0.0) field_error("tolerance", "expected a non-negative number");
    c.tolerance = t->get<double>();
  }
  const bool continuous = c.scenario && c.scenario->mode == ScenarioMode::continuous;
  c.mode = continuous ? VerifyMode::empirical : VerifyMode::exact;
  if (find(doc, "mode")) {
    try {
      c.mode = parse_verify_mode(string_field(doc, "mode", ""));
    } catch (const InvalidParameter& e) {
      field_error("mode", e.what());
    }
  }
  if (const Json* k = find(doc, "contrast")) {
    if (!k->is_object() || !find(*k, "a") || !find(*k, "a_star"))
      field_error("contrast", "expected {\"a\": number, \"a_star\": number}");
    c.contrast = Contrast{number_field(*k, "a", 1.0), number_field(*k, "a_star", 0.0)};
  }
  if (find(doc, "augmentation")) {
    try {
      c.augmentation = parse_augmentation(string_field(doc, "augmentation", ""));
    } catch (const InvalidParameter& e) {
      field_error("augmentation", e.what());
    }
  }
  c.bootstrap = count_field(doc, "bootstrap", 0, 0);
  c.nodes = count_field(doc, "nodes", c.nodes, 2);
  if (find(doc, "data")) {
    c.data = resolve(base_dir, string_field(doc, "data", ""));
    if (!std::filesystem::exists(*c.data)) field_error("data", "file '" + c.data->string() + "' does not exist");
  }
  c.outcome = string_field(doc, "outcome", c.outcome);
  if (const Json* cov = find(doc, "covariates")) {
    if (!cov->is_array()) field_error("covariates", "expected an array of column names");
    std::vector<std::string> names;
    for (const Json& v : *cov) {
      if (!v.is_string()) field_error("covariates", "expected an array of column names");
      names.push_back(v.get<std::string>());
    }
    c.covariates = std::move(names);
  }
  if (find(doc, "item_mode")) {
    const std::string m = string_field(doc, "item_mode", "");
    if (m == "marginal") c.item_mode = ItemMode::marginal;
    else if (m == "joint") c.item_mode = ItemMode::joint;
    else field_error("item_mode", "expected 'marginal' or 'joint'");
  }
  if (const Json* ci = find(doc, "causal_indicators")) {
    if (!ci->is_array()) field_error("causal_indicators", "expected an array of 1-based indices");
    for (const Json& v : *ci) {
      if (!v.is_number_integer() || v.get<std::int64_t>() < 1)
        field_error("causal_indicators", "expected an array of 1-based indices");
      c.causal_indicators.push_back(static_cast<std::size_t>(v.get<std::int64_t>() - 1));
    }
  }
  c.min_fraction = number_field(doc, "min_fraction", c.min_fraction);
  c.rmsr_threshold = number_field(doc, "rmsr_threshold", c.rmsr_threshold);
  c.level = number_field(doc, "level", c.level);
  if (!(c.level > 0.0 && c.level < 1.0)) field_error("level", "expected a value in (0, 1)");
  if (find(doc, "expect")) {
    const std::string e = string_field(doc, "expect", "");
    if (e == "none") c.expect = Expectation::none;
    else if (e == "size") c.expect = Expectation::size;
    else if (e == "power") c.expect = Expectation::power;
    else field_error("expect", "expected 'none', 'size' or 'power'");
  }
  c.target = count_field(doc, "target", 1, 1) - 1;
  if (const Json* s = find(doc, "summary")) {
    try {
      c.summary = measure_from_json(*s);
    } catch (const Error& e) {
      field_error("summary", e.what());
    }
  }
  if (const Json* b = find(doc, "battery")) {
    if (!b->is_object()) field_error("battery", "expected an object");
    c.battery_count = count_field(*b, "count", c.battery_count, 1);
    c.battery.max_strata = count_field(*b, "max_strata", c.battery.max_strata, 1);
    c.battery.max_versions = count_field(*b, "max_versions", c.battery.max_versions, 2);
    c.battery.max_indicators = count_field(*b, "max_indicators", c.battery.max_indicators, 1);
    c.battery.max_levels = count_field(*b, "max_levels", c.battery.max_levels, 2);
    if (find(*b, "violation")) {
      try {
        c.battery.violation = parse_violation_kind(string_field(*b, "violation", ""));
      } catch (const Error& e) {
        field_error("battery.violation", e.what());
      }
    }
  }
  if (const Json* o = find(doc, "output")) {
    if (!o->is_object()) field_error("output", "expected an object");
    if (find(*o, "dir")) c.out_dir = resolve(base_dir, string_field(*o, "dir", "."));
    c.prefix = string_field(*o, "prefix", "");
  }
  c.jobs = static_cast<int>(count_field(doc, "jobs", 1, 1));

  const bool needs_scenario = c.kind == ExperimentKind::verify_identity || c.kind == ExperimentKind::derivation_chain ||
                              (c.kind != ExperimentKind::scenario_battery && !c.data);
  if (needs_scenario && !c.scenario) throw ParseError("config: missing field 'scenario'");
  if (c.sampling() && !c.seed)
    throw MissingSeed("config: experiment '" + std::string(to_string(c.kind)) +
                      "' draws random numbers and needs a 'seed'");
  return c;
}

ExperimentConfig parse_config(const std::filesystem::path& path, std::optional<std::uint64_t> seed_override) {
  const std::string text = read_file(path, "config file");
  return parse_config_text(text, path.parent_path().empty() ? std::filesystem::path(".") : path.parent_path(),
                           seed_override);
}

Json resolved_config(const ExperimentConfig& c) {
  Json out;
  out["kind"] = to_string(c.kind);
  if (c.scenario) {
    out["scenario_source"] = c.scenario_source;
    out["scenario"] = to_json(*c.scenario);
  }
  if (c.compare_scenario) out["compare_scenario"] = to_json(*c.compare_scenario);
  out["seed"] = c.seed ? Json(*c.seed) : Json(nullptr);
  out["n"] = c.n;
  out["replicates"] = c.replicates;
  out["tolerance"] = c.tolerance ? Json(*c.tolerance) : Json("default");
  out["mode"] = to_string(c.mode);
  const Contrast k = contrast_of(c);
  out["contrast"] = {{"a", k.a}, {"a_star", k.a_star}};
  out["augmentation"] = c.augmentation ? Json(to_string(*c.augmentation)) : Json(nullptr);
  out["bootstrap"] = c.bootstrap ? c.bootstrap
                     : c.kind == ExperimentKind::proportionality_test ? std::size_t{500}
                                                                       : std::size_t{200};
  out["nodes"] = c.nodes;
  out["data"] = c.data ? Json(c.data->filename().string()) : Json(nullptr);
  out["outcome"] = c.outcome;
  out["covariates"] = c.covariates ? Json(*c.covariates) : Json("all C_* columns");
  out["item_mode"] = to_string(c.item_mode);
  Json causal = Json::array();
  for (std::size_t i : c.causal_indicators) causal.push_back(i + 1);
  out["causal_indicators"] = causal;
  out["min_fraction"] = c.min_fraction;
  out["rmsr_threshold"] = c.rmsr_threshold;
  out["level"] = c.level;
  out["expect"] = to_string(c.expect);
  out["target"] = c.target + 1;
  out["summary"] = to_json(c.summary);
  out["battery"] = {{"count", c.battery_count},
                    {"max_strata", c.battery.max_strata},
                    {"max_versions", c.battery.max_versions},
                    {"max_indicators", c.battery.max_indicators},
                    {"max_levels", c.battery.max_levels},
                    {"violation", c.battery.violation ? Json(to_string(*c.battery.violation)) : Json(nullptr)}};
  return out;
}

std::string config_hash(const ExperimentConfig& config) {
  const std::string text = resolved_config(config).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---------------------------------------------------------------------------

std::string format_number(double value) {
  if (std::isnan(value)) return "NA";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, res.ptr);
}

void write_csv(const Dataset& data, std::ostream& out) {
  const auto& cols = data.columns();
  for (std::size_t j = 0; j < cols.size(); ++j) out << (j ? "," : "") << csv_cell(cols[j].name);
  out << "\n";
  for (std::size_t r = 0; r < data.rows(); ++r) {
    for (std::size_t j = 0; j < cols.size(); ++j) out << (j ? "," : "") << format_number(cols[j].values[r]);
    out << "\n";
  }
}

void save_csv(const Dataset& data, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidParameter("cannot write '" + path.string() + "'");
  write_csv(data, out);
}

Dataset read_csv(std::istream& in, const std::vector<std::string>& required) {
  std::string line;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    if (!trim(line).empty()) {
      header = split_line(line);
      break;
    }
  }
  if (header.empty()) throw EmptyFile("CSV input is empty (no header row)");
  for (std::size_t j = 0; j < header.size(); ++j) {
    if (header[j].empty()) throw ParseError("CSV header: column " + std::to_string(j + 1) + " has no name");
    for (std::size_t i = 0; i < j; ++i)
      if (header[i] == header[j]) throw ParseError("CSV header: duplicate column '" + header[j] + "'");
  }
  for (const auto& name : required)
    if (std::find(header.begin(), header.end(), name) == header.end())
      throw MissingColumn("missing column '" + name + "'");

  std::vector<std::vector<double>> cols(header.size());
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const std::vector<std::string> cells = split_line(line);
    if (cells.size() != header.size())
      throw ParseError("CSV line " + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                       " cells, found " + std::to_string(cells.size()));
    for (std::size_t j = 0; j < cells.size(); ++j) {
      double v = 0.0;
      const char* first = cells[j].data();
      const char* last = first + cells[j].size();
      if (!cells[j].empty() && *first == '+') ++first;
      const auto res = std::from_chars(first, last, v);
      if (cells[j].empty() || res.ec != std::errc() || res.ptr != last || !std::isfinite(v))
        throw NonNumericCell("non-numeric cell '" + cells[j] + "' at row " + std::to_string(line_no) +
                             ", column " + std::to_string(j + 1) + " (" + header[j] + ")");
      cols[j].push_back(v);
    }
  }
  if (cols.front().empty()) throw EmptyFile("CSV input has a header but no data rows");

  Dataset data;
  for (std::size_t j = 0; j < header.size(); ++j) {
    const std::string& name = header[j];
    if (name.starts_with("Y_k_") || name == "EY_K") continue;  // real-data mode
    const bool integral = std::all_of(cols[j].begin(), cols[j].end(), [](double v) { return v == std::floor(v); });
    const bool categorical = integral && (name.starts_with("C_") || name == "K");
    data.add_column(name, std::move(cols[j]), categorical);
  }
  return data;
}

Dataset load_csv(const std::filesystem::path& path, const std::vector<std::string>& required) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw EmptyFile("cannot read CSV file '" + path.string() + "'");
  return read_csv(in, required);
}

// ---------------------------------------------------------------------------

ExperimentResult run_experiment(const ExperimentConfig& config) {
  switch (config.kind) {
    case ExperimentKind::verify_identity: return run_verify(config);
    case ExperimentKind::derivation_chain: return run_chain(config);
    case ExperimentKind::factor_study: return run_factor(config);
    case ExperimentKind::proportionality_test: return run_proportionality(config);
    case ExperimentKind::item_analysis: return run_items(config);
    case ExperimentKind::longitudinal_strategies: return run_longitudinal(config);
    case ExperimentKind::scenario_battery: return run_battery_experiment(config);
  }
  throw UnknownExperimentKind("unhandled experiment kind");
}

std::vector<std::filesystem::path> write_reports(const ExperimentConfig& config, const ExperimentResult& result) {
  std::filesystem::create_directories(config.out_dir);
  const std::string stem = config.prefix.empty() ? std::string(to_string(config.kind)) : config.prefix;
  const std::string hash = config_hash(config);
  const auto csv_path = config.out_dir / (stem + ".csv");
  const auto txt_path = config.out_dir / (stem + ".txt");
  {
    std::ofstream out(csv_path, std::ios::binary);
    if (!out) throw InvalidParameter("cannot write '" + csv_path.string() + "'");
    for (const auto& h : result.table.header) out << csv_cell(h) << ",";
    out << "config_hash\n";
    for (const auto& row : result.table.rows) {
      for (const auto& cell : row) out << csv_cell(cell) << ",";
      out << hash << "\n";
    }
  }
  {
    std::ofstream out(txt_path, std::ios::binary);
    if (!out) throw InvalidParameter("cannot write '" + txt_path.string() + "'");
    out << "experiment: " << to_string(config.kind) << "\n"
        << "config_hash: " << hash << "\n"
        << "verdict: " << verdict(result.pass) << "\n\n"
        << result.summary << "\nresolved config:\n"
        << resolved_config(config).dump(2) << "\n";
  }
  return {csv_path, txt_path};
}

std::string describe(const IdentityReport& r, const std::optional<ChainReport>& chain) {
  std::ostringstream out;
  out << "identity check (" << to_string(r.mode) << "), contrast a = " << format_number(r.a)
      << " vs a* = " << format_number(r.a_star) << "\n"
      << "  observational side:    " << format_number(r.lhs) << "\n"
      << "  hypothetical-trial side: " << format_number(r.rhs) << "\n"
      << "  |difference|: " << format_number(r.abs_diff) << ", tolerance " << format_number(r.tolerance);
  if (r.mode == VerifyMode::empirical)
    out << " (3 x MC SE " << format_number(r.standard_error) << ", " << r.replicates << " replicate(s) of n = "
        << r.size << ")";
  if (r.mode == VerifyMode::quadrature) out << " (grid refinement bound " << format_number(r.discretisation) << ")";
  out << "\n  verdict: " << verdict(r.pass) << "\n";
  if (chain) {
    if (const auto step = chain->break_index())
      out << "  first broken derivation step: " << *step << " -> " << *step + 1 << " ("
          << to_string(chain->first_break) << ")\n";
    else
      out << "  derivation chain: every step holds\n";
  }
  return out.str();
}

}  // namespace mvtlab
