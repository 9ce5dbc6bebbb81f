#include "mvtlab/scenario.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <span>
#include <sstream>

#include <Eigen/Dense>

#include "json_util.hpp"
#include "mvtlab/dgp_engine.hpp"
#include "mvtlab/errors.hpp"
#include "mvtlab/random.hpp"

namespace mvtlab {

using namespace detail;

namespace {

constexpr std::array kKindNames{
    "coarsened_versions",          "structural_reflective",
    "structural_formative",        "indicator_causal_reflective",
    "indicator_causal_formative",  "multidim_latent",
    "two_wave_indicators",         "two_wave_latents",
};

constexpr std::array kViolationNames{
    "direct_indicator_effect",
    "common_cause_u",
    "unmeasured_confounder",
    "consistency_breach",
};

constexpr std::array kMeasureNames{"mean", "sum", "weighted_sum", "custom_table"};

std::string show(double x) {
  std::ostringstream out;
  out.precision(17);
  out << x;
  return out.str();
}

void check_probability_vector(std::span<const double> p, const std::string& what) {
  if (p.empty()) throw InvalidProbability(what + ": empty probability vector");
  double sum = 0.0;
  for (double v : p) {
    if (!std::isfinite(v) || v < 0.0)
      throw InvalidProbability(what + ": negative or non-finite probability");
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-12)
    throw InvalidProbability(what + ": probabilities sum to " + show(sum));
}

void check_finite(std::span<const double> v, const std::string& what) {
  for (double x : v)
    if (!std::isfinite(x)) throw InvalidParameter(what + ": non-finite value");
}

void check_size(std::size_t got, std::size_t want, const std::string& what) {
  if (got != want)
    throw InvalidParameter(what + ": expected " + std::to_string(want) +
                           " entries, got " + std::to_string(got));
}

bool is_formative(ScenarioKind kind) {
  return kind == ScenarioKind::structural_formative ||
         kind == ScenarioKind::indicator_causal_formative;
}

bool is_two_wave(ScenarioKind kind) {
  return kind == ScenarioKind::two_wave_indicators ||
         kind == ScenarioKind::two_wave_latents;
}

bool is_indicator_causal(ScenarioKind kind) {
  return kind == ScenarioKind::indicator_causal_reflective ||
         kind == ScenarioKind::indicator_causal_formative;
}

Matrix broadcast_rows(const Json& value, std::size_t rows, const std::string& field) {
  const int d = depth(value);
  if (d <= 1) return Matrix(rows, as_vector(value, field));
  Matrix m = as_matrix(value, field);
  check_size(m.size(), rows, field);
  return m;
}

// ---------------------------------------------------------------------------
// measure

MeasureSpec parse_measure(const Json* value, MeasureForm fallback) {
  MeasureSpec spec;
  spec.form = fallback;
  if (!value) return spec;
  if (value->is_string()) {
    spec.form = parse_measure_form(value->get<std::string>());
    return spec;
  }
  spec.form = parse_measure_form(string_or(*value, "form", std::string(to_string(fallback))));
  if (const Json* w = find(*value, "weights")) spec.weights = as_vector(*w, "measure.weights");
  if (const Json* c = find(*value, "cutpoints")) spec.cutpoints = as_vector(*c, "measure.cutpoints");
  if (const Json* t = find(*value, "table")) {
    if (!t->is_array()) throw InvalidParameter("field 'measure.table': expected an array");
    for (const Json& entry : *t) {
      spec.table.push_back({as_vector(require(entry, "x"), "measure.table.x"),
                            as_number(require(entry, "a"), "measure.table.a")});
    }
  }
  return spec;
}

Json measure_json(const MeasureSpec& spec) {
  Json out{{"form", to_string(spec.form)}};
  if (!spec.weights.empty()) out["weights"] = spec.weights;
  if (!spec.cutpoints.empty()) out["cutpoints"] = spec.cutpoints;
  if (!spec.table.empty()) {
    Json table = Json::array();
    for (const auto& e : spec.table) table.push_back({{"x", e.indicators}, {"a", e.value}});
    out["table"] = table;
  }
  return out;
}

// ---------------------------------------------------------------------------
// violations

Violation parse_violation(const Json& value) {
  Violation v;
  v.kind = parse_violation_kind(string_or(value, "kind", ""));
  if (const Json* t = find(value, "targets")) {
    for (double x : as_vector(*t, "violation.targets")) {
      if (x < 1.0 || x != std::floor(x))
        throw IndexOutOfRange("violation target " + show(x) + " is not a 1-based index");
      v.targets.push_back(static_cast<std::size_t>(x) - 1);
    }
  }
  v.magnitude = as_number(require(value, "magnitude"), "violation.magnitude");
  v.source_effect = number_or(value, "source_effect", 1.0);
  return v;
}

Json violation_json(const Violation& v) {
  std::vector<std::size_t> targets;
  for (std::size_t t : v.targets) targets.push_back(t + 1);
  return {{"kind", to_string(v.kind)},
          {"targets", targets},
          {"magnitude", v.magnitude},
          {"source_effect", v.source_effect}};
}

// ---------------------------------------------------------------------------
// discrete

std::vector<Matrix> parse_version_probs(const Json& value, std::size_t hidden,
                                        std::size_t strata) {
  const std::string field = "versions.probs";
  switch (depth(value)) {
    case 1:
      return std::vector<Matrix>(hidden, Matrix(strata, as_vector(value, field)));
    case 2: {
      Matrix m = as_matrix(value, field);
      check_size(m.size(), strata, field);
      return std::vector<Matrix>(hidden, m);
    }
    case 3: {
      std::vector<Matrix> out;
      for (std::size_t u = 0; u < value.size(); ++u)
        out.push_back(as_matrix(value[u], field));
      check_size(out.size(), hidden, field);
      for (const Matrix& m : out) check_size(m.size(), strata, field);
      return out;
    }
    default:
      throw InvalidParameter("field 'versions.probs': expected [k], [c][k] or [u][c][k]");
  }
}

std::vector<Matrix> parse_indicator_probs(const Json& value, std::size_t hidden,
                                          const std::string& field) {
  switch (depth(value)) {
    case 2:
      return std::vector<Matrix>(hidden, as_matrix(value, field));
    case 3: {
      std::vector<Matrix> out;
      for (std::size_t u = 0; u < value.size(); ++u)
        out.push_back(as_matrix(value[u], field));
      check_size(out.size(), hidden, field);
      return out;
    }
    default:
      throw InvalidParameter("field '" + field + "': expected [k][level] or [u][k][level]");
  }
}

void parse_discrete(ScenarioKind kind, const Json& p, Scenario& s) {
  DiscreteLaw& law = s.discrete;
  if (const Json* h = find(p, "hidden_probs")) law.hidden_probs = as_vector(*h, "hidden_probs");
  const std::size_t hidden = law.hidden_probs.size();
  const std::size_t strata = s.strata();

  const Json& versions = require(p, "versions");
  law.version_probs = parse_version_probs(require(versions, "probs"), hidden, strata);
  const std::size_t k = law.version_probs.front().front().size();
  if (const Json* v = find(versions, "values")) {
    law.version_values = as_vector(*v, "versions.values");
  } else {
    law.version_values.resize(k);
    std::iota(law.version_values.begin(), law.version_values.end(), 1.0);
  }

  law.indicator_levels.clear();
  law.indicator_probs.clear();
  if (const Json* map = kind == ScenarioKind::coarsened_versions
                            ? find(p, "version_to_exposure") : nullptr) {
    const std::vector<double> a = as_vector(*map, "version_to_exposure");
    check_size(a.size(), k, "version_to_exposure");
    std::vector<double> levels = a;
    std::sort(levels.begin(), levels.end());
    levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
    Matrix table(k, std::vector<double>(levels.size(), 0.0));
    for (std::size_t v = 0; v < k; ++v) {
      const auto pos = std::lower_bound(levels.begin(), levels.end(), a[v]) - levels.begin();
      table[v][static_cast<std::size_t>(pos)] = 1.0;
    }
    law.indicator_levels.push_back(levels);
    law.indicator_probs.push_back(std::vector<Matrix>(hidden, table));
  } else if (const Json* stoch = kind == ScenarioKind::coarsened_versions
                                     ? find(p, "exposure_given_version") : nullptr) {
    law.indicator_levels.push_back(as_vector(require(*stoch, "levels"), "exposure_given_version.levels"));
    law.indicator_probs.push_back(
        parse_indicator_probs(require(*stoch, "probs"), hidden, "exposure_given_version.probs"));
  } else {
    const Json* list = find(p, "indicators");
    if (!list) {
      throw MissingParameter(kind == ScenarioKind::coarsened_versions
                                 ? "missing parameter 'version_to_exposure'"
                                 : "missing parameter 'indicators'");
    }
    if (!list->is_array() || list->empty())
      throw InvalidParameter("field 'indicators': expected a non-empty array");
    for (std::size_t i = 0; i < list->size(); ++i) {
      const std::string field = "indicators[" + std::to_string(i) + "]";
      law.indicator_levels.push_back(as_vector(require((*list)[i], "levels"), field + ".levels"));
      law.indicator_probs.push_back(
          parse_indicator_probs(require((*list)[i], "probs"), hidden, field + ".probs"));
    }
  }
  const std::size_t n = law.indicator_levels.size();

  law.outcome_means = broadcast_rows(require(p, "outcome_means"), strata, "outcome_means");
  law.indicator_effects = find(p, "indicator_effects")
                              ? as_vector(p["indicator_effects"], "indicator_effects")
                              : std::vector<double>(n, 0.0);
  law.hidden_outcome_effects =
      find(p, "hidden_outcome_effects")
          ? as_vector(p["hidden_outcome_effects"], "hidden_outcome_effects")
          : std::vector<double>(hidden, 0.0);
  law.version_breach = find(p, "version_breach")
                           ? as_vector(p["version_breach"], "version_breach")
                           : std::vector<double>(k, 0.0);
}

Json discrete_json(const DiscreteLaw& law) {
  Json indicators = Json::array();
  for (std::size_t i = 0; i < law.indicators(); ++i)
    indicators.push_back({{"levels", law.indicator_levels[i]}, {"probs", law.indicator_probs[i]}});
  return {{"hidden_probs", law.hidden_probs},
          {"versions", {{"values", law.version_values}, {"probs", law.version_probs}}},
          {"indicators", indicators},
          {"outcome_means", law.outcome_means},
          {"indicator_effects", law.indicator_effects},
          {"hidden_outcome_effects", law.hidden_outcome_effects},
          {"version_breach", law.version_breach}};
}

void validate_discrete(const Scenario& s) {
  const DiscreteLaw& law = s.discrete;
  const std::size_t hidden = law.hidden();
  const std::size_t strata = s.strata();
  const std::size_t k = law.versions();
  const std::size_t n = law.indicators();
  check_probability_vector(law.hidden_probs, "hidden_probs");
  if (k == 0) throw InvalidParameter("versions: at least one version is required");
  check_finite(law.version_values, "versions.values");
  check_size(law.version_probs.size(), hidden, "versions.probs (hidden)");
  for (std::size_t u = 0; u < hidden; ++u) {
    check_size(law.version_probs[u].size(), strata, "versions.probs (strata)");
    for (std::size_t c = 0; c < strata; ++c) {
      check_size(law.version_probs[u][c].size(), k, "versions.probs (versions)");
      check_probability_vector(law.version_probs[u][c],
                               "P(k | c=" + std::to_string(c) + ")");
    }
  }
  if (n == 0) throw InvalidParameter("indicators: at least one indicator is required");
  check_size(law.indicator_probs.size(), n, "indicator tables");
  for (std::size_t i = 0; i < n; ++i) {
    const std::string name = "X_" + std::to_string(i + 1);
    const auto& levels = law.indicator_levels[i];
    if (levels.empty()) throw InvalidParameter(name + ": no levels");
    check_finite(levels, name + " levels");
    check_size(law.indicator_probs[i].size(), hidden, name + " probs (hidden)");
    for (std::size_t u = 0; u < hidden; ++u) {
      check_size(law.indicator_probs[i][u].size(), k, name + " probs (versions)");
      for (std::size_t v = 0; v < k; ++v) {
        check_size(law.indicator_probs[i][u][v].size(), levels.size(), name + " probs (levels)");
        check_probability_vector(law.indicator_probs[i][u][v],
                                 "P(" + name + " | k=" + std::to_string(v) + ")");
      }
    }
  }
  check_size(law.outcome_means.size(), strata, "outcome_means (strata)");
  for (const auto& row : law.outcome_means) {
    check_size(row.size(), k, "outcome_means (versions)");
    check_finite(row, "outcome_means");
  }
  check_size(law.indicator_effects.size(), n, "indicator_effects");
  check_finite(law.indicator_effects, "indicator_effects");
  check_size(law.hidden_outcome_effects.size(), hidden, "hidden_outcome_effects");
  check_finite(law.hidden_outcome_effects, "hidden_outcome_effects");
  check_size(law.version_breach.size(), k, "version_breach");
  check_finite(law.version_breach, "version_breach");

  if (s.kind == ScenarioKind::structural_reflective) {
    // an indicator whose law does not move with the latent level is not an
    // indicator of it
    for (std::size_t i = 0; i < n; ++i) {
      bool varies = false;
      for (std::size_t u = 0; u < hidden && !varies; ++u)
        for (std::size_t v = 1; v < k && !varies; ++v)
          varies = law.indicator_probs[i][u][v] != law.indicator_probs[i][u][0];
      if (!varies)
        throw ZeroLoadingInStructuralReflective(
            "X_" + std::to_string(i + 1) + " does not depend on the latent level");
    }
  }
}

// ---------------------------------------------------------------------------
// continuous

VersionComponents default_version(ScenarioKind kind) {
  VersionComponents v;
  if (is_indicator_causal(kind)) {
    v.latent = false;
    v.indicators = true;
  }
  return v;
}

void parse_continuous(ScenarioKind kind, const Json& p, Scenario& s) {
  ContinuousModel& m = s.continuous;
  m.direction = is_formative(kind) ? LatentDirection::formative : LatentDirection::reflective;
  const Json& lj = require(p, "loadings");
  if (depth(lj) <= 1) {
    for (double x : as_vector(lj, "loadings")) m.loadings.push_back({x});
  } else {
    m.loadings = as_matrix(lj, "loadings");
  }
  const std::size_t n = m.loadings.size();
  if (n == 0) throw InvalidParameter("field 'loadings': no indicators");
  m.latent_dim = m.loadings.front().size();
  const std::size_t dim = m.latent_dim;
  const std::size_t strata = s.strata();

  if (const Json* e = find(p, "error_sds")) {
    m.error_sds = as_vector(*e, "error_sds");
    if (m.error_sds.size() == 1 && n > 1) m.error_sds.assign(n, m.error_sds.front());
  } else if (m.direction == LatentDirection::reflective) {
    for (const auto& row : m.loadings) {
      double communality = 0.0;
      for (double x : row) communality += x * x;
      if (communality >= 1.0)
        throw MissingParameter(
            "missing parameter 'error_sds' (loadings do not define standardized indicators)");
      m.error_sds.push_back(std::sqrt(1.0 - communality));
    }
  } else {
    m.error_sds.assign(n, 1.0);
  }
  if (const Json* r = find(p, "error_correlation")) m.error_correlation = as_matrix(*r, "error_correlation");

  if (const Json* lm = find(p, "latent_means")) {
    if (lm->is_number()) {
      m.latent_means.assign(strata, std::vector<double>(dim, lm->get<double>()));
    } else if (depth(*lm) == 1) {
      const auto v = as_vector(*lm, "latent_means");
      if (dim == 1 && v.size() == strata) {
        for (double x : v) m.latent_means.push_back({x});
      } else {
        m.latent_means.assign(strata, v);
      }
    } else {
      m.latent_means = as_matrix(*lm, "latent_means");
    }
  } else {
    m.latent_means.assign(strata, std::vector<double>(dim, 0.0));
  }
  if (const Json* im = find(p, "indicator_means")) {
    m.indicator_means = broadcast_rows(*im, strata, "indicator_means");
    for (auto& row : m.indicator_means)
      if (row.size() == 1 && n > 1) row.assign(n, row.front());
  } else {
    m.indicator_means.assign(strata, std::vector<double>(n, 0.0));
  }
  if (const Json* oc = find(p, "ordinal_cutpoints")) {
    if (depth(*oc) <= 1)
      m.ordinal_cutpoints.assign(n, as_vector(*oc, "ordinal_cutpoints"));
    else
      m.ordinal_cutpoints = as_matrix(*oc, "ordinal_cutpoints");
  }
  m.latent_error_sd = number_or(p, "latent_error_sd", 0.0);
  m.latent_effects = find(p, "latent_effects") ? as_vector(p["latent_effects"], "latent_effects")
                                               : std::vector<double>(dim, 0.0);
  m.indicator_effects = find(p, "indicator_effects")
                            ? as_vector(p["indicator_effects"], "indicator_effects")
                            : std::vector<double>(n, 0.0);
  m.covariate_effects = find(p, "covariate_effects")
                            ? as_vector(p["covariate_effects"], "covariate_effects")
                            : std::vector<double>(strata, 0.0);
  m.version = default_version(kind);
  if (const Json* v = find(p, "version")) {
    m.version.latent = bool_or(*v, "latent", m.version.latent);
    m.version.indicators = bool_or(*v, "indicators", m.version.indicators);
    m.version.hidden = bool_or(*v, "hidden", m.version.hidden);
  }
}

Json continuous_json(const ContinuousModel& m) {
  Json out{{"loadings", m.loadings},
           {"error_sds", m.error_sds},
           {"latent_means", m.latent_means},
           {"indicator_means", m.indicator_means},
           {"latent_error_sd", m.latent_error_sd},
           {"latent_effects", m.latent_effects},
           {"indicator_effects", m.indicator_effects},
           {"covariate_effects", m.covariate_effects},
           {"version",
            {{"latent", m.version.latent},
             {"indicators", m.version.indicators},
             {"hidden", m.version.hidden}}}};
  if (!m.error_correlation.empty()) out["error_correlation"] = m.error_correlation;
  if (!m.ordinal_cutpoints.empty()) out["ordinal_cutpoints"] = m.ordinal_cutpoints;
  return out;
}

void validate_continuous(const Scenario& s) {
  const ContinuousModel& m = s.continuous;
  const std::size_t n = m.indicators();
  const std::size_t dim = m.latent_dim;
  const std::size_t strata = s.strata();
  if (n == 0) throw InvalidParameter("continuous scenario without indicators");
  if (dim == 0) throw InvalidParameter("loadings: latent dimension is zero");
  check_size(m.loadings.size(), n, "loadings (indicators)");
  for (const auto& row : m.loadings) {
    check_size(row.size(), dim, "loadings (latent dimension)");
    check_finite(row, "loadings");
  }
  for (double sd : m.error_sds)
    if (!std::isfinite(sd) || sd < 0.0) throw InvalidParameter("error_sds: must be finite and >= 0");
  if (!m.error_correlation.empty()) {
    check_size(m.error_correlation.size(), n, "error_correlation");
    Eigen::MatrixXd r(n, n);
    for (std::size_t i = 0; i < n; ++i) {
      check_size(m.error_correlation[i].size(), n, "error_correlation");
      for (std::size_t j = 0; j < n; ++j) r(i, j) = m.error_correlation[i][j];
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (std::abs(r(i, i) - 1.0) > 1e-12)
        throw InvalidParameter("error_correlation: diagonal must be 1");
      for (std::size_t j = 0; j < n; ++j)
        if (std::abs(r(i, j) - r(j, i)) > 1e-12)
          throw InvalidParameter("error_correlation: not symmetric");
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(r);
    if (eig.eigenvalues().minCoeff() < -1e-10)
      throw InvalidParameter("error_correlation: not positive semidefinite");
  }
  check_size(m.latent_means.size(), strata, "latent_means (strata)");
  for (const auto& row : m.latent_means) {
    check_size(row.size(), dim, "latent_means (latent dimension)");
    check_finite(row, "latent_means");
  }
  check_size(m.indicator_means.size(), strata, "indicator_means (strata)");
  for (const auto& row : m.indicator_means) {
    check_size(row.size(), n, "indicator_means (indicators)");
    check_finite(row, "indicator_means");
  }
  if (!m.ordinal_cutpoints.empty()) {
    check_size(m.ordinal_cutpoints.size(), n, "ordinal_cutpoints");
    for (const auto& row : m.ordinal_cutpoints) {
      check_finite(row, "ordinal_cutpoints");
      for (std::size_t j = 1; j < row.size(); ++j)
        if (!(row[j] > row[j - 1]))
          throw InvalidParameter("ordinal_cutpoints: must be strictly increasing");
    }
  }
  if (!std::isfinite(m.latent_error_sd) || m.latent_error_sd < 0.0)
    throw InvalidParameter("latent_error_sd: must be finite and >= 0");
  check_size(m.latent_effects.size(), dim, "latent_effects");
  check_finite(m.latent_effects, "latent_effects");
  check_size(m.indicator_effects.size(), n, "indicator_effects");
  check_finite(m.indicator_effects, "indicator_effects");
  check_size(m.covariate_effects.size(), strata, "covariate_effects");
  check_finite(m.covariate_effects, "covariate_effects");
  if (!m.version.latent && !m.version.indicators && !m.version.hidden)
    throw InvalidParameter("version: at least one component is required");

  const bool formative = m.direction == LatentDirection::formative;
  if (formative != is_formative(s.kind))
    throw InvalidParameter("latent direction does not match the scenario kind");
  if (formative && dim != 1)
    throw InvalidParameter("formative scenarios have a single latent");
  const auto nonzero = [](const std::vector<double>& v) {
    return std::any_of(v.begin(), v.end(), [](double x) { return x != 0.0; });
  };
  switch (s.kind) {
    case ScenarioKind::structural_reflective:
      if (dim != 1) throw InvalidParameter("structural_reflective has a single latent");
      for (std::size_t i = 0; i < n; ++i)
        if (m.loadings[i][0] == 0.0)
          throw ZeroLoadingInStructuralReflective(
              "loading of X_" + std::to_string(i + 1) +
              " is zero: it would not indicate the latent at all");
      [[fallthrough]];
    case ScenarioKind::structural_formative:
      if (nonzero(m.indicator_effects))
        throw InvalidParameter("structural kinds route every effect on Y through the latent; "
                               "use indicator_causal kinds or a violation for X -> Y");
      break;
    case ScenarioKind::indicator_causal_reflective:
    case ScenarioKind::indicator_causal_formative:
      if (nonzero(m.latent_effects))
        throw InvalidParameter("indicator-causal kinds have no latent -> Y effect");
      break;
    case ScenarioKind::multidim_latent:
      if (dim < 2) throw InvalidParameter("multidim_latent needs a latent dimension >= 2");
      if (nonzero(m.indicator_effects))
        throw InvalidParameter("multidim_latent routes effects on Y through the latents");
      break;
    default:
      throw InvalidParameter("kind " + std::string(to_string(s.kind)) + " is not a continuous kind");
  }
}

// ---------------------------------------------------------------------------
// two-wave

void parse_two_wave(ScenarioKind kind, const Json& p, Scenario& s) {
  TwoWaveParams& t = s.two_wave;
  t.lag = as_matrix(require(p, "lag"), "lag");
  const std::size_t n = t.lag.size();
  t.outcome_current = find(p, "outcome_current") ? as_vector(p["outcome_current"], "outcome_current")
                                                 : std::vector<double>(n, 0.0);
  t.outcome_prior = find(p, "outcome_prior") ? as_vector(p["outcome_prior"], "outcome_prior")
                                             : std::vector<double>(n, 0.0);
  t.error_sd_prior = find(p, "error_sd_prior") ? as_vector(p["error_sd_prior"], "error_sd_prior")
                                               : std::vector<double>(n, 1.0);
  t.error_sd_current = find(p, "error_sd_current")
                           ? as_vector(p["error_sd_current"], "error_sd_current")
                           : std::vector<double>(n, 1.0);
  t.outcome_noise_sd = number_or(p, "outcome_noise_sd", 1.0);
  if (const Json* c = find(p, "covariate")) {
    t.has_covariate = true;
    t.covariate_to_prior = find(*c, "to_prior") ? as_vector((*c)["to_prior"], "covariate.to_prior")
                                                : std::vector<double>(n, 0.0);
    t.covariate_to_outcome = number_or(*c, "to_outcome", 0.0);
  }
  t.latent = kind == ScenarioKind::two_wave_latents;
  if (t.latent) {
    t.loadings_prior = find(p, "loadings_prior") ? as_vector(p["loadings_prior"], "loadings_prior")
                                                 : std::vector<double>(n, 1.0);
    t.loadings_current = find(p, "loadings_current")
                             ? as_vector(p["loadings_current"], "loadings_current")
                             : std::vector<double>(n, 1.0);
    t.indicator_noise_sd = find(p, "indicator_noise_sd")
                               ? as_vector(p["indicator_noise_sd"], "indicator_noise_sd")
                               : std::vector<double>(n, 0.0);
  }
  if (const Json* oc = find(p, "ordinal_cutpoints")) {
    if (depth(*oc) <= 1)
      t.ordinal_cutpoints.assign(n, as_vector(*oc, "ordinal_cutpoints"));
    else
      t.ordinal_cutpoints = as_matrix(*oc, "ordinal_cutpoints");
  }
}

Json two_wave_json(const TwoWaveParams& t) {
  Json out{{"lag", t.lag},
           {"outcome_current", t.outcome_current},
           {"outcome_prior", t.outcome_prior},
           {"error_sd_prior", t.error_sd_prior},
           {"error_sd_current", t.error_sd_current},
           {"outcome_noise_sd", t.outcome_noise_sd}};
  if (t.has_covariate)
    out["covariate"] = {{"to_prior", t.covariate_to_prior}, {"to_outcome", t.covariate_to_outcome}};
  if (t.latent) {
    out["loadings_prior"] = t.loadings_prior;
    out["loadings_current"] = t.loadings_current;
    out["indicator_noise_sd"] = t.indicator_noise_sd;
  }
  if (!t.ordinal_cutpoints.empty()) out["ordinal_cutpoints"] = t.ordinal_cutpoints;
  return out;
}

std::size_t indicator_count(const Scenario& s) {
  switch (s.mode) {
    case ScenarioMode::discrete: return s.discrete.indicators();
    case ScenarioMode::continuous: return s.continuous.indicators();
    case ScenarioMode::two_wave: return s.two_wave.indicators();
  }
  return 0;
}

}  // namespace

MeasureSpec measure_from_json(const Json& value, MeasureForm fallback) {
  return parse_measure(&value, fallback);
}

Json to_json(const MeasureSpec& spec) { return measure_json(spec); }

// ---------------------------------------------------------------------------
// names

std::string_view to_string(ScenarioKind kind) {
  return kKindNames[static_cast<std::size_t>(kind)];
}

ScenarioKind parse_scenario_kind(std::string_view text) {
  for (std::size_t i = 0; i < kKindNames.size(); ++i)
    if (text == kKindNames[i]) return static_cast<ScenarioKind>(i);
  throw InvalidParameter("unknown scenario kind '" + std::string(text) + "'");
}

std::string_view to_string(ScenarioMode mode) {
  switch (mode) {
    case ScenarioMode::discrete: return "discrete";
    case ScenarioMode::continuous: return "continuous";
    case ScenarioMode::two_wave: return "two_wave";
  }
  return "?";
}

std::string_view to_string(MeasureForm form) {
  return kMeasureNames[static_cast<std::size_t>(form)];
}

MeasureForm parse_measure_form(std::string_view text) {
  for (std::size_t i = 0; i < kMeasureNames.size(); ++i)
    if (text == kMeasureNames[i]) return static_cast<MeasureForm>(i);
  throw InvalidParameter("unknown measure form '" + std::string(text) + "'");
}

std::string_view to_string(ViolationKind kind) {
  return kViolationNames[static_cast<std::size_t>(kind)];
}

ViolationKind parse_violation_kind(std::string_view text) {
  for (std::size_t i = 0; i < kViolationNames.size(); ++i)
    if (text == kViolationNames[i]) return static_cast<ViolationKind>(i);
  throw InvalidParameter("unknown violation kind '" + std::string(text) + "'");
}

// ---------------------------------------------------------------------------

void MeasureSpec::validate(std::size_t indicator_count) const {
  if (form == MeasureForm::weighted_sum) {
    if (weights.size() != indicator_count)
      throw WeightLengthMismatch("measure weights: expected " + std::to_string(indicator_count) +
                                 " weights, got " + std::to_string(weights.size()));
    check_finite(weights, "measure weights");
  } else if (!weights.empty()) {
    throw InvalidParameter("measure weights are only allowed for form weighted_sum");
  }
  if (form == MeasureForm::custom_table) {
    if (table.empty()) throw InvalidParameter("custom_table measure without entries");
    for (const auto& e : table)
      if (e.indicators.size() != indicator_count)
        throw WeightLengthMismatch("custom_table entry has the wrong indicator count");
  } else if (!table.empty()) {
    throw InvalidParameter("measure table is only allowed for form custom_table");
  }
  check_finite(cutpoints, "measure cutpoints");
  for (std::size_t i = 1; i < cutpoints.size(); ++i)
    if (!(cutpoints[i] > cutpoints[i - 1]))
      throw InvalidParameter("measure cutpoints must be strictly increasing");
}

std::vector<double> MeasureSpec::linear_weights(std::size_t indicator_count) const {
  switch (form) {
    case MeasureForm::mean:
      return std::vector<double>(indicator_count, 1.0 / static_cast<double>(indicator_count));
    case MeasureForm::sum:
      return std::vector<double>(indicator_count, 1.0);
    case MeasureForm::weighted_sum:
      return weights;
    case MeasureForm::custom_table:
      break;
  }
  throw InvalidParameter("custom_table measures have no linear weights");
}

bool ContinuousModel::ordinal() const noexcept {
  return std::any_of(ordinal_cutpoints.begin(), ordinal_cutpoints.end(),
                     [](const auto& row) { return !row.empty(); });
}

bool TwoWaveParams::linear_gaussian() const noexcept {
  return std::all_of(ordinal_cutpoints.begin(), ordinal_cutpoints.end(),
                     [](const auto& row) { return row.empty(); });
}

void TwoWaveParams::validate() const {
  const std::size_t n = lag.size();
  if (n == 0) throw InvalidParameter("two-wave lag matrix is empty");
  for (const auto& row : lag) {
    check_size(row.size(), n, "lag");
    check_finite(row, "lag");
  }
  check_size(outcome_current.size(), n, "outcome_current");
  check_size(outcome_prior.size(), n, "outcome_prior");
  check_size(error_sd_prior.size(), n, "error_sd_prior");
  check_size(error_sd_current.size(), n, "error_sd_current");
  check_finite(outcome_current, "outcome_current");
  check_finite(outcome_prior, "outcome_prior");
  for (const auto* v : {&error_sd_prior, &error_sd_current})
    for (double x : *v)
      if (!std::isfinite(x) || x < 0.0) throw InvalidParameter("two-wave error scales must be >= 0");
  if (!std::isfinite(outcome_noise_sd) || outcome_noise_sd < 0.0)
    throw InvalidParameter("outcome_noise_sd must be finite and >= 0");
  if (has_covariate) {
    check_size(covariate_to_prior.size(), n, "covariate.to_prior");
    check_finite(covariate_to_prior, "covariate.to_prior");
    if (!std::isfinite(covariate_to_outcome)) throw InvalidParameter("covariate.to_outcome");
  }
  if (latent) {
    check_size(loadings_prior.size(), n, "loadings_prior");
    check_size(loadings_current.size(), n, "loadings_current");
    check_size(indicator_noise_sd.size(), n, "indicator_noise_sd");
    check_finite(loadings_prior, "loadings_prior");
    check_finite(loadings_current, "loadings_current");
    for (double x : indicator_noise_sd)
      if (!std::isfinite(x) || x < 0.0) throw InvalidParameter("indicator_noise_sd must be >= 0");
  }
  if (!ordinal_cutpoints.empty()) {
    check_size(ordinal_cutpoints.size(), n, "ordinal_cutpoints");
    for (const auto& row : ordinal_cutpoints)
      for (std::size_t j = 1; j < row.size(); ++j)
        if (!(row[j] > row[j - 1]))
          throw InvalidParameter("ordinal_cutpoints: must be strictly increasing");
  }
}

std::size_t Scenario::indicators() const noexcept { return indicator_count(*this); }

bool Scenario::violation_free() const noexcept {
  if (!violations.empty()) return false;
  if (mode == ScenarioMode::discrete) {
    const auto zero = [](const std::vector<double>& v) {
      return std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; });
    };
    return zero(discrete.indicator_effects) && zero(discrete.hidden_outcome_effects) &&
           zero(discrete.version_breach);
  }
  return true;
}

// ---------------------------------------------------------------------------

void validate_scenario(const Scenario& s) {
  check_probability_vector(s.covariate_probs, "covariate_probs");
  if (!std::isfinite(s.outcome_noise_sd) || s.outcome_noise_sd < 0.0)
    throw InvalidParameter("outcome_noise_sd must be finite and >= 0");

  switch (s.mode) {
    case ScenarioMode::discrete:
      if (s.kind != ScenarioKind::coarsened_versions &&
          s.kind != ScenarioKind::structural_reflective)
        throw InvalidParameter("discrete mode supports coarsened_versions and "
                               "structural_reflective only");
      validate_discrete(s);
      break;
    case ScenarioMode::continuous:
      validate_continuous(s);
      break;
    case ScenarioMode::two_wave:
      if (!is_two_wave(s.kind)) throw InvalidParameter("two-wave mode requires a two_wave kind");
      s.two_wave.validate();
      break;
  }
  if (s.mode != ScenarioMode::discrete && s.kind == ScenarioKind::coarsened_versions)
    throw InvalidParameter("coarsened_versions scenarios are discrete");

  const std::size_t n = s.indicators();
  s.measure.validate(n);

  if (!std::is_sorted(s.violations.begin(), s.violations.end()))
    throw InvalidParameter("violations are not in canonical order");
  for (const Violation& v : s.violations) {
    if (!std::isfinite(v.magnitude) || !std::isfinite(v.source_effect))
      throw InvalidParameter("violation magnitude must be finite");
    if (s.mode == ScenarioMode::two_wave)
      throw InvalidParameter("violations are not defined for two-wave scenarios");
    std::size_t bound = n;
    std::string what = "indicator";
    if (v.kind == ViolationKind::consistency_breach) {
      if (s.mode != ScenarioMode::discrete)
        throw InvalidParameter("consistency_breach is only defined for discrete scenarios");
      bound = s.discrete.versions();
      what = "version";
    } else if (v.kind == ViolationKind::unmeasured_confounder &&
               s.mode == ScenarioMode::continuous && s.continuous.version.latent) {
      bound = s.continuous.latent_dim;
      what = "latent";
    }
    const bool needs_targets = v.kind != ViolationKind::unmeasured_confounder ||
                               (s.mode == ScenarioMode::continuous && !s.continuous.version.latent);
    if (needs_targets && v.targets.empty())
      throw IndexOutOfRange(std::string(to_string(v.kind)) + " needs at least one target");
    for (std::size_t t : v.targets)
      if (t >= bound)
        throw IndexOutOfRange(what + " target " + std::to_string(t + 1) + " out of range 1.." +
                              std::to_string(bound));
  }

  if (s.contrast && s.mode == ScenarioMode::discrete) {
    const ExposureLaw law = exposure_law(s);
    for (std::size_t c = 0; c < s.strata(); ++c) {
      if (s.covariate_probs[c] <= 0.0) continue;
      for (double a : {s.contrast->a, s.contrast->a_star}) {
        const auto level = law.level_index(a);
        if (!level || law.probs[c][*level] <= 0.0)
          throw PositivityViolation("exposure value " + show(a) + " has zero probability in stratum " +
                                    std::to_string(c));
      }
    }
  }
}

Scenario build_scenario(ScenarioKind kind, const Json& params) {
  if (!params.is_object()) throw InvalidParameter("scenario params must be an object");
  Scenario s;
  s.kind = kind;
  if (const Json* c = find(params, "covariate_probs"))
    s.covariate_probs = as_vector(*c, "covariate_probs");
  s.outcome_noise_sd = number_or(params, "outcome_noise_sd", 1.0);

  std::string mode = string_or(params, "mode", "");
  if (mode.empty())
    mode = kind == ScenarioKind::coarsened_versions ? "discrete"
           : is_two_wave(kind)                      ? "two_wave"
                                                    : "continuous";
  MeasureForm default_form = MeasureForm::mean;
  if (mode == "discrete") {
    s.mode = ScenarioMode::discrete;
    parse_discrete(kind, params, s);
  } else if (mode == "continuous") {
    s.mode = ScenarioMode::continuous;
    parse_continuous(kind, params, s);
    if (s.continuous.ordinal()) default_form = MeasureForm::sum;
  } else if (mode == "two_wave") {
    s.mode = ScenarioMode::two_wave;
    parse_two_wave(kind, params, s);
  } else {
    throw InvalidParameter("unknown mode '" + mode + "'");
  }
  s.measure = parse_measure(find(params, "measure"), default_form);

  if (const Json* vs = find(params, "violations")) {
    if (!vs->is_array()) throw InvalidParameter("field 'violations': expected an array");
    for (const Json& v : *vs) s.violations.push_back(parse_violation(v));
    std::sort(s.violations.begin(), s.violations.end());
  }
  if (const Json* c = find(params, "contrast")) {
    s.contrast = Contrast{as_number(require(*c, "a"), "contrast.a"),
                          as_number(require(*c, "a_star"), "contrast.a_star")};
  }
  validate_scenario(s);
  return s;
}

Scenario inject_violation(const Scenario& scenario, const Violation& violation) {
  Scenario out = scenario;
  auto pos = std::upper_bound(out.violations.begin(), out.violations.end(), violation);
  out.violations.insert(pos, violation);
  validate_scenario(out);
  return out;
}

Json scenario_params(const Scenario& s) {
  Json out;
  switch (s.mode) {
    case ScenarioMode::discrete: out = discrete_json(s.discrete); break;
    case ScenarioMode::continuous: out = continuous_json(s.continuous); break;
    case ScenarioMode::two_wave: out = two_wave_json(s.two_wave); break;
  }
  out["mode"] = to_string(s.mode);
  out["covariate_probs"] = s.covariate_probs;
  out["outcome_noise_sd"] = s.outcome_noise_sd;
  out["measure"] = measure_json(s.measure);
  Json violations = Json::array();
  for (const auto& v : s.violations) violations.push_back(violation_json(v));
  out["violations"] = violations;
  if (s.contrast) out["contrast"] = {{"a", s.contrast->a}, {"a_star", s.contrast->a_star}};
  return out;
}

Json to_json(const Scenario& scenario) {
  return {{"kind", to_string(scenario.kind)}, {"params", scenario_params(scenario)}};
}

Scenario scenario_from_json(const Json& document) {
  const Json& kind = require(document, "kind");
  if (!kind.is_string()) throw InvalidParameter("field 'kind': expected a string");
  const Json* params = find(document, "params");
  return build_scenario(parse_scenario_kind(kind.get<std::string>()),
                        params ? *params : Json::object());
}

std::uint64_t scenario_hash(const Scenario& scenario) {
  const std::string text = to_json(scenario).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// ---------------------------------------------------------------------------
// fixtures

Scenario fixture_three_version() {
  return build_scenario(ScenarioKind::coarsened_versions,
                        Json{{"versions", {{"values", {1, 2, 3}}, {"probs", {0.2, 0.3, 0.5}}}},
                             {"version_to_exposure", {1, 1, 0}},
                             {"outcome_means", {1, 2, 3}},
                             {"contrast", {{"a", 1}, {"a_star", 0}}}});
}

Scenario fixture_discrete_reflective() {
  const Json binary = {0, 1};
  const auto indicator = [&](double p0, double p1, double p2) {
    return Json{{"levels", binary}, {"probs", {{1 - p0, p0}, {1 - p1, p1}, {1 - p2, p2}}}};
  };
  return build_scenario(
      ScenarioKind::structural_reflective,
      Json{{"mode", "discrete"},
           {"covariate_probs", {0.4, 0.6}},
           {"versions", {{"values", {0, 1, 2}}, {"probs", {{0.5, 0.3, 0.2}, {0.2, 0.3, 0.5}}}}},
           {"indicators",
            {indicator(0.2, 0.5, 0.8), indicator(0.3, 0.5, 0.7), indicator(0.1, 0.4, 0.9)}},
           {"outcome_means", {{0.0, 1.0, 2.0}, {0.5, 1.5, 2.5}}},
           {"measure", "sum"},
           {"contrast", {{"a", 2}, {"a_star", 1}}}});
}

namespace {
Json standardized_reflective_params() {
  return Json{{"loadings", {0.9, 0.8, 0.7, 0.6}},
              {"contrast", {{"a", 1}, {"a_star", 0}}}};
}
}  // namespace

Scenario fixture_structural_reflective() {
  Json p = standardized_reflective_params();
  p["latent_effects"] = {0.4};
  return build_scenario(ScenarioKind::structural_reflective, p);
}

Scenario fixture_indicator_causal_reflective() {
  Json p = standardized_reflective_params();
  p["indicator_effects"] = {0.5, 0.0, 0.0, 0.0};
  return build_scenario(ScenarioKind::indicator_causal_reflective, p);
}

Scenario fixture_social_integration_like() {
  return build_scenario(
      ScenarioKind::indicator_causal_reflective,
      Json{{"covariate_probs", {0.5, 0.5}},
           {"loadings", {0.7, 0.6, 0.6, 0.5}},
           {"latent_means", {-0.25, 0.25}},
           {"ordinal_cutpoints", {-0.8, 0.0, 0.8}},
           {"indicator_effects", {0.2, 0.0, 0.0, 0.0}},
           {"covariate_effects", {0.0, 0.3}},
           {"measure", "sum"},
           {"contrast", {{"a", 1}, {"a_star", 0}}}});
}

Scenario fixture_linear_versions() {
  // two versions nested in each exposure level; the within-level deviations
  // average to zero under P(k | a, c) so E[Y | a, c] = gamma_c + 0.8 a
  const std::vector<double> exposure{0, 0, 1, 1, 2, 2};
  const Matrix probs{{0.10, 0.20, 0.15, 0.15, 0.25, 0.15},
                     {0.05, 0.15, 0.20, 0.20, 0.10, 0.30}};
  const std::vector<double> gamma{0.0, 0.7};
  const double slope = 0.8;
  const double spread = 1.0;
  Matrix means(2, std::vector<double>(6));
  for (std::size_t c = 0; c < 2; ++c) {
    for (std::size_t pair = 0; pair < 3; ++pair) {
      const std::size_t k1 = 2 * pair;
      const std::size_t k2 = k1 + 1;
      const double q1 = probs[c][k1];
      const double q2 = probs[c][k2];
      const double base = gamma[c] + slope * exposure[k1];
      means[c][k1] = base + spread * q2 / (q1 + q2);
      means[c][k2] = base - spread * q1 / (q1 + q2);
    }
  }
  return build_scenario(ScenarioKind::coarsened_versions,
                        Json{{"covariate_probs", {0.5, 0.5}},
                             {"versions", {{"probs", probs}}},
                             {"version_to_exposure", exposure},
                             {"outcome_means", means},
                             {"contrast", {{"a", 1}, {"a_star", 0}}}});
}

Scenario fixture_two_wave_confounding() {
  return build_scenario(ScenarioKind::two_wave_indicators,
                        Json{{"lag", {{0.0, 0.5}, {0.0, 0.5}}},
                             {"outcome_current", {0.0, 0.5}}});
}

std::vector<std::string_view> fixture_names() {
  return {"three_version",          "discrete_reflective",     "structural_reflective",
          "indicator_causal_reflective", "social_integration_like", "linear_versions",
          "two_wave_confounding"};
}

Scenario fixture_by_name(std::string_view name) {
  if (name == "three_version") return fixture_three_version();
  if (name == "discrete_reflective") return fixture_discrete_reflective();
  if (name == "structural_reflective") return fixture_structural_reflective();
  if (name == "indicator_causal_reflective") return fixture_indicator_causal_reflective();
  if (name == "social_integration_like") return fixture_social_integration_like();
  if (name == "linear_versions") return fixture_linear_versions();
  if (name == "two_wave_confounding") return fixture_two_wave_confounding();
  throw InvalidParameter("unknown fixture '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------

Scenario random_discrete_scenario(std::uint64_t seed, const RandomScenarioOptions& options) {
  Stream rng(seed, StreamFamily::battery, 0);
  const auto draw_probs = [&](std::size_t size) {
    std::vector<double> p(size);
    double total = 0.0;
    for (double& x : p) {
      x = 0.05 - std::log1p(-rng.uniform());  // exponential(1) + floor
      total += x;
    }
    for (double& x : p) x /= total;
    return p;
  };
  const std::size_t strata = 1 + rng.below(std::max<std::size_t>(options.max_strata, 1));
  const std::size_t versions = 2 + rng.below(std::max<std::size_t>(options.max_versions, 2) - 1);
  const std::size_t n = 1 + rng.below(std::max<std::size_t>(options.max_indicators, 1));

  Json covariates = draw_probs(strata);
  Json version_probs = Json::array();
  for (std::size_t c = 0; c < strata; ++c) version_probs.push_back(draw_probs(versions));
  Json indicators = Json::array();
  std::size_t top = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t levels = 2 + rng.below(std::max<std::size_t>(options.max_levels, 2) - 1);
    top += levels - 1;
    std::vector<double> values(levels);
    std::iota(values.begin(), values.end(), 0.0);
    Json table = Json::array();
    for (std::size_t k = 0; k < versions; ++k) table.push_back(draw_probs(levels));
    indicators.push_back({{"levels", values}, {"probs", table}});
  }
  Json means = Json::array();
  for (std::size_t c = 0; c < strata; ++c) {
    std::vector<double> row(versions);
    for (double& m : row) m = 2.0 * rng.normal() + 0.5 * static_cast<double>(c);
    means.push_back(row);
  }
  const std::size_t a_star = rng.below(top + 1);
  std::size_t a = rng.below(top);
  if (a >= a_star) ++a;

  Json params{{"covariate_probs", covariates},
              {"versions", {{"probs", version_probs}}},
              {"indicators", indicators},
              {"outcome_means", means},
              {"measure", "sum"},
              {"contrast", {{"a", a}, {"a_star", a_star}}}};
  Scenario s = build_scenario(ScenarioKind::coarsened_versions, params);
  if (options.violation) {
    Violation v;
    v.kind = *options.violation;
    v.magnitude = 0.5 + rng.uniform();
    if (v.kind == ViolationKind::consistency_breach)
      v.targets = {rng.below(versions)};
    else if (v.kind != ViolationKind::unmeasured_confounder)
      v.targets = {rng.below(n)};
    s = inject_violation(s, v);
  }
  return s;
}

}  // namespace mvtlab
