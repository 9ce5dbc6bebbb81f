#include "mvtlab/dgp_engine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mvtlab/compiled_law.hpp"
#include "mvtlab/errors.hpp"
#include "mvtlab/longitudinal.hpp"
#include "mvtlab/parallel.hpp"
#include "mvtlab/random.hpp"

namespace mvtlab {

namespace {

bool same_level(double a, double b) {
  return std::abs(a - b) <= 1e-9 * std::max(1.0, std::max(std::abs(a), std::abs(b)));
}

std::optional<std::size_t> find_level(const std::vector<double>& levels, double a) {
  auto it = std::lower_bound(levels.begin(), levels.end(), a);
  if (it != levels.end() && same_level(*it, a)) return static_cast<std::size_t>(it - levels.begin());
  if (it != levels.begin() && same_level(*(it - 1), a))
    return static_cast<std::size_t>(it - levels.begin() - 1);
  return std::nullopt;
}

std::vector<double> distinct_levels(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  std::vector<double> out;
  for (double v : values)
    if (out.empty() || !same_level(out.back(), v)) out.push_back(v);
  return out;
}

// Every combination of indicator levels, first indicator varying slowest.
struct IndicatorGrid {
  std::vector<std::vector<std::size_t>> cells;  // level index per indicator
  std::vector<std::vector<double>> values;
};

IndicatorGrid indicator_grid(const DiscreteLaw& law) {
  IndicatorGrid grid;
  const std::size_t n = law.indicators();
  std::vector<std::size_t> idx(n, 0);
  while (true) {
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = law.indicator_levels[i][idx[i]];
    grid.cells.push_back(idx);
    grid.values.push_back(std::move(x));
    std::size_t i = n;
    while (i > 0) {
      --i;
      if (++idx[i] < law.indicator_levels[i].size()) break;
      idx[i] = 0;
      if (i == 0) return grid;
    }
    if (n == 0) return grid;
  }
}

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

}  // namespace

// ---------------------------------------------------------------------------

std::optional<std::size_t> PopulationTable::exposure_index(double a) const {
  return find_level(exposure_levels, a);
}

Matrix PopulationTable::exposure_given_stratum() const {
  Matrix out(strata(), std::vector<double>(exposure_levels.size(), 0.0));
  for (const auto& cell : cells) out[cell.stratum][cell.exposure] += cell.prob;
  for (std::size_t c = 0; c < strata(); ++c) {
    double total = 0.0;
    for (double p : out[c]) total += p;
    if (total > 0.0)
      for (double& p : out[c]) p /= total;
  }
  return out;
}

double PopulationTable::total_probability() const {
  double total = 0.0;
  for (const auto& cell : cells) total += cell.prob;
  return total;
}

std::optional<std::size_t> ExposureLaw::level_index(double a) const { return find_level(levels, a); }

PopulationTable enumerate_population(const Scenario& scenario) {
  if (scenario.mode != ScenarioMode::discrete)
    throw ContinuousScenarioNotEnumerable(
        "scenario kind " + std::string(to_string(scenario.kind)) +
        " is not in discrete mode and has no finite population table");
  const DiscreteLaw law = compile_discrete(scenario);
  const std::size_t strata = scenario.strata();
  const std::size_t versions = law.versions();
  const std::size_t hidden = law.hidden();
  const std::size_t n = law.indicators();
  const IndicatorGrid grid = indicator_grid(law);
  const std::size_t cells = grid.cells.size();

  std::vector<double> exposure(cells);
  for (std::size_t g = 0; g < cells; ++g) exposure[g] = exposure_value(grid.values[g], scenario.measure);

  PopulationTable table;
  table.covariate_probs = scenario.covariate_probs;
  table.version_values = law.version_values;
  table.exposure_levels = distinct_levels(exposure);
  const std::size_t levels = table.exposure_levels.size();
  std::vector<std::size_t> exposure_of(cells);
  for (std::size_t g = 0; g < cells; ++g) exposure_of[g] = *table.exposure_index(exposure[g]);

  std::vector<double> mass(strata * versions * levels, 0.0);
  std::vector<double> weighted(strata * versions * levels, 0.0);
  Matrix potential(strata, std::vector<double>(versions, 0.0));
  Matrix given_num(strata, std::vector<double>(versions, 0.0));
  Matrix observed_num(strata, std::vector<double>(versions, 0.0));
  Matrix version_mass(strata, std::vector<double>(versions, 0.0));
  std::vector<double> cell_prob(cells);

  for (std::size_t c = 0; c < strata; ++c) {
    for (std::size_t u = 0; u < hidden; ++u) {
      const double pu = law.hidden_probs[u];
      for (std::size_t k = 0; k < versions; ++k) {
        double expected_x_effect = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          if (law.indicator_effects[i] == 0.0) continue;
          const auto& p = law.indicator_probs[i][u][k];
          double mean = 0.0;
          for (std::size_t l = 0; l < p.size(); ++l) mean += p[l] * law.indicator_levels[i][l];
          expected_x_effect += law.indicator_effects[i] * mean;
        }
        const double base = law.outcome_means[c][k] + law.hidden_outcome_effects[u];
        const double potential_cu = base + expected_x_effect;
        potential[c][k] += pu * potential_cu;

        const double pk = law.version_probs[u][c][k];
        if (pk == 0.0) continue;
        const double puk = pu * pk;
        given_num[c][k] += puk * potential_cu;
        version_mass[c][k] += puk;

        for (std::size_t g = 0; g < cells; ++g) {
          double px = 1.0;
          for (std::size_t i = 0; i < n && px > 0.0; ++i)
            px *= law.indicator_probs[i][u][k][grid.cells[g][i]];
          cell_prob[g] = px;
        }
        for (std::size_t g = 0; g < cells; ++g) {
          const double px = cell_prob[g];
          if (px == 0.0) continue;
          double y = base + law.version_breach[k];
          for (std::size_t i = 0; i < n; ++i) y += law.indicator_effects[i] * grid.values[g][i];
          const double p = scenario.covariate_probs[c] * puk * px;
          const std::size_t slot = (c * versions + k) * levels + exposure_of[g];
          mass[slot] += p;
          weighted[slot] += p * y;
          observed_num[c][k] += puk * px * y;
        }
      }
    }
  }

  table.potential_means = potential;
  table.potential_given_version.assign(strata, std::vector<double>(versions, kNaN));
  table.observed_given_version.assign(strata, std::vector<double>(versions, kNaN));
  for (std::size_t c = 0; c < strata; ++c) {
    for (std::size_t k = 0; k < versions; ++k) {
      if (version_mass[c][k] <= 0.0) continue;
      table.potential_given_version[c][k] = given_num[c][k] / version_mass[c][k];
      table.observed_given_version[c][k] = observed_num[c][k] / version_mass[c][k];
    }
    for (std::size_t k = 0; k < versions; ++k) {
      for (std::size_t a = 0; a < levels; ++a) {
        const std::size_t slot = (c * versions + k) * levels + a;
        if (mass[slot] <= 0.0) continue;
        table.cells.push_back({c, k, a, mass[slot], weighted[slot] / mass[slot]});
      }
    }
  }
  return table;
}

ExposureLaw exposure_law(const Scenario& scenario) {
  const PopulationTable table = enumerate_population(scenario);
  return {table.exposure_levels, table.exposure_given_stratum()};
}

// ---------------------------------------------------------------------------

void Dataset::add_column(std::string name, std::vector<double> values, bool categorical) {
  if (has(name)) throw InvalidParameter("duplicate column '" + name + "'");
  if (!columns_.empty() && values.size() != rows())
    throw InvalidParameter("column '" + name + "' has " + std::to_string(values.size()) +
                           " rows, dataset has " + std::to_string(rows()));
  rows_ = values.size();
  columns_.push_back({std::move(name), std::move(values), categorical});
}

bool Dataset::has(std::string_view name) const noexcept {
  return std::any_of(columns_.begin(), columns_.end(),
                     [&](const Column& c) { return c.name == name; });
}

const Column& Dataset::column(std::string_view name) const {
  for (const Column& c : columns_)
    if (c.name == name) return c;
  throw MissingColumn("missing column '" + std::string(name) + "'");
}

std::vector<std::string> Dataset::numbered(std::string_view prefix) const {
  std::vector<std::string> out;
  for (std::size_t i = 1;; ++i) {
    std::string name = std::string(prefix) + std::to_string(i);
    if (!has(name)) return out;
    out.push_back(std::move(name));
  }
}

Dataset Dataset::take(std::span<const std::size_t> rows) const {
  Dataset out;
  out.provenance = provenance;
  out.rows_ = rows.size();
  for (const Column& c : columns_) {
    std::vector<double> values(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) values[r] = c.values[rows[r]];
    out.columns_.push_back({c.name, std::move(values), c.categorical});
  }
  return out;
}

// ---------------------------------------------------------------------------

double measure_value(std::span<const double> x, const MeasureSpec& spec) {
  switch (spec.form) {
    case MeasureForm::mean: {
      double total = 0.0;
      for (double v : x) total += v;
      return total / static_cast<double>(x.size());
    }
    case MeasureForm::sum: {
      double total = 0.0;
      for (double v : x) total += v;
      return total;
    }
    case MeasureForm::weighted_sum: {
      if (spec.weights.size() != x.size())
        throw WeightLengthMismatch("measure has " + std::to_string(spec.weights.size()) +
                                   " weights for " + std::to_string(x.size()) + " indicators");
      double total = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) total += spec.weights[i] * x[i];
      return total;
    }
    case MeasureForm::custom_table:
      for (const auto& entry : spec.table)
        if (std::equal(entry.indicators.begin(), entry.indicators.end(), x.begin(), x.end()))
          return entry.value;
      throw InvalidParameter("custom measure table has no row for this indicator pattern");
  }
  return 0.0;
}

std::vector<double> apply_measure(const Eigen::MatrixXd& indicators, const MeasureSpec& spec) {
  std::vector<double> out(static_cast<std::size_t>(indicators.rows()));
  std::vector<double> row(static_cast<std::size_t>(indicators.cols()));
  for (Eigen::Index r = 0; r < indicators.rows(); ++r) {
    for (Eigen::Index i = 0; i < indicators.cols(); ++i) row[static_cast<std::size_t>(i)] = indicators(r, i);
    out[static_cast<std::size_t>(r)] = measure_value(row, spec);
  }
  return out;
}

std::size_t coarsen_value(double value, std::span<const double> cutpoints) noexcept {
  return static_cast<std::size_t>(std::upper_bound(cutpoints.begin(), cutpoints.end(), value) -
                                  cutpoints.begin());
}

std::vector<double> coarsen_exposure(std::span<const double> values,
                                     std::span<const double> cutpoints,
                                     std::span<const std::size_t> required) {
  for (std::size_t i = 1; i < cutpoints.size(); ++i)
    if (!(cutpoints[i] > cutpoints[i - 1]))
      throw InvalidParameter("cutpoints must be strictly increasing");
  std::vector<std::size_t> counts(cutpoints.size() + 1, 0);
  std::vector<double> out(values.size());
  for (std::size_t r = 0; r < values.size(); ++r) {
    const std::size_t cat = coarsen_value(values[r], cutpoints);
    ++counts[cat];
    out[r] = static_cast<double>(cat);
  }
  const auto check = [&](std::size_t cat) {
    if (cat >= counts.size())
      throw IndexOutOfRange("category " + std::to_string(cat) + " does not exist");
    if (counts[cat] == 0)
      throw EmptyCategory("category " + std::to_string(cat) + " receives no units");
  };
  if (required.empty())
    for (std::size_t cat = 0; cat < counts.size(); ++cat) check(cat);
  for (std::size_t cat : required) check(cat);
  return out;
}

double exposure_value(std::span<const double> indicators, const MeasureSpec& spec) {
  const double a = measure_value(indicators, spec);
  return spec.coarsened() ? static_cast<double>(coarsen_value(a, spec.cutpoints)) : a;
}

// ---------------------------------------------------------------------------

namespace {

Dataset sample_discrete(const Scenario& scenario, std::size_t n, std::uint64_t seed, int jobs) {
  const DiscreteLaw law = compile_discrete(scenario);
  const std::size_t versions = law.versions();
  const std::size_t m = law.indicators();
  const bool stratified = scenario.strata() > 1;
  std::vector<std::size_t> causal;
  for (std::size_t i = 0; i < m; ++i)
    if (law.indicator_effects[i] != 0.0) causal.push_back(i);

  std::vector<double> stratum(n), version(n), exposure(n), outcome(n);
  std::vector<std::vector<double>> x(m, std::vector<double>(n));
  std::vector<std::vector<double>> potential(versions, std::vector<double>(n));

  parallel_for(n, jobs, [&](std::size_t row) {
    Stream rng(seed, StreamFamily::rows, row);
    const std::size_t c = rng.categorical(scenario.covariate_probs);
    const std::size_t u = rng.categorical(law.hidden_probs);
    const std::size_t k = rng.categorical(law.version_probs[u][c]);
    std::vector<double> xs(m);
    for (std::size_t i = 0; i < m; ++i)
      xs[i] = law.indicator_levels[i][rng.categorical(law.indicator_probs[i][u][k])];
    const double noise = scenario.outcome_noise_sd * rng.normal();
    for (std::size_t v = 0; v < versions; ++v) {
      double y = law.outcome_means[c][v] + law.hidden_outcome_effects[u] + noise;
      for (std::size_t i : causal) {
        const double xi = v == k ? xs[i]
                                 : law.indicator_levels[i][rng.categorical(law.indicator_probs[i][u][v])];
        y += law.indicator_effects[i] * xi;
      }
      potential[v][row] = y;
    }
    stratum[row] = static_cast<double>(c);
    version[row] = static_cast<double>(k + 1);
    for (std::size_t i = 0; i < m; ++i) x[i][row] = xs[i];
    exposure[row] = exposure_value(xs, scenario.measure);
    outcome[row] = potential[k][row] + law.version_breach[k];
  });

  Dataset data;
  if (stratified) data.add_column("C_1", std::move(stratum), true);
  data.add_column("K", std::move(version), true);
  for (std::size_t i = 0; i < m; ++i) data.add_column("X_" + std::to_string(i + 1), std::move(x[i]));
  data.add_column("A", std::move(exposure));
  data.add_column("Y", std::move(outcome));
  for (std::size_t v = 0; v < versions; ++v)
    data.add_column("Y_k_" + std::to_string(v + 1), std::move(potential[v]));
  return data;
}

Dataset sample_continuous(const Scenario& scenario, std::size_t n, std::uint64_t seed, int jobs) {
  const ContinuousLaw law = compile_continuous(scenario);
  const ContinuousModel& model = law.model;
  const std::size_t dim = model.latent_dim;
  const std::size_t m = model.indicators();
  const std::size_t r = law.hidden();
  const bool stratified = scenario.strata() > 1;
  const bool reflective = model.direction == LatentDirection::reflective;
  const Eigen::MatrixXd errors = error_loading(model);
  const auto ordinal = [&](std::size_t i) {
    return i < model.ordinal_cutpoints.size() && !model.ordinal_cutpoints[i].empty();
  };

  std::vector<double> stratum(n), exposure(n), outcome(n), expected(n);
  std::vector<std::vector<double>> eta(dim, std::vector<double>(n));
  std::vector<std::vector<double>> hidden(r, std::vector<double>(n));
  std::vector<std::vector<double>> x(m, std::vector<double>(n));

  parallel_for(n, jobs, [&](std::size_t row) {
    Stream rng(seed, StreamFamily::rows, row);
    const std::size_t c = rng.categorical(scenario.covariate_probs);
    std::vector<double> us(r), etas(dim), xs(m), z(m);
    for (double& u : us) u = rng.normal();
    const auto hidden_shift_latent = [&](std::size_t j) {
      double s = 0.0;
      for (std::size_t h = 0; h < r; ++h) s += law.hidden_to_latent[h][j] * us[h];
      return s;
    };
    const auto indicator_star = [&](std::size_t i) {
      double s = model.indicator_means[c][i];
      for (std::size_t j = 0; j < m; ++j) s += errors(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) * z[j];
      for (std::size_t h = 0; h < r; ++h) s += law.hidden_to_indicator[h][i] * us[h];
      return s;
    };
    if (reflective) {
      for (std::size_t j = 0; j < dim; ++j)
        etas[j] = model.latent_means[c][j] + hidden_shift_latent(j) + rng.normal();
      for (double& e : z) e = rng.normal();
      for (std::size_t i = 0; i < m; ++i) {
        double s = indicator_star(i);
        for (std::size_t j = 0; j < dim; ++j) s += model.loadings[i][j] * etas[j];
        xs[i] = ordinal(i) ? ordinal_level(model.ordinal_cutpoints[i], s) : s;
      }
    } else {
      for (double& e : z) e = rng.normal();
      for (std::size_t i = 0; i < m; ++i) {
        const double s = indicator_star(i);
        xs[i] = ordinal(i) ? ordinal_level(model.ordinal_cutpoints[i], s) : s;
      }
      double s = model.latent_means[c][0] + hidden_shift_latent(0);
      for (std::size_t i = 0; i < m; ++i) s += model.loadings[i][0] * xs[i];
      etas[0] = s + model.latent_error_sd * rng.normal();
    }
    double y = model.covariate_effects[c] + law.outcome_noise_sd * rng.normal();
    for (std::size_t j = 0; j < dim; ++j) y += model.latent_effects[j] * etas[j];
    for (std::size_t i = 0; i < m; ++i) y += model.indicator_effects[i] * xs[i];
    for (std::size_t h = 0; h < r; ++h) y += law.hidden_to_outcome[h] * us[h];

    std::vector<double> k;
    if (model.version.latent) k.insert(k.end(), etas.begin(), etas.end());
    if (model.version.indicators) k.insert(k.end(), xs.begin(), xs.end());
    if (model.version.hidden) k.insert(k.end(), us.begin(), us.end());

    stratum[row] = static_cast<double>(c);
    for (std::size_t j = 0; j < dim; ++j) eta[j][row] = etas[j];
    for (std::size_t h = 0; h < r; ++h) hidden[h][row] = us[h];
    for (std::size_t i = 0; i < m; ++i) x[i][row] = xs[i];
    exposure[row] = exposure_value(xs, scenario.measure);
    outcome[row] = y;
    expected[row] = potential_outcome_mean(law, c, k);
  });

  Dataset data;
  if (stratified) data.add_column("C_1", std::move(stratum), true);
  for (std::size_t j = 0; j < dim; ++j) data.add_column("ETA_" + std::to_string(j + 1), std::move(eta[j]));
  for (std::size_t h = 0; h < r; ++h) data.add_column("U_" + std::to_string(h + 1), std::move(hidden[h]));
  for (std::size_t i = 0; i < m; ++i) data.add_column("X_" + std::to_string(i + 1), std::move(x[i]));
  data.add_column("A", std::move(exposure));
  data.add_column("Y", std::move(outcome));
  data.add_column("EY_K", std::move(expected));
  return data;
}

}  // namespace

Dataset sample_dataset(const Scenario& scenario, std::size_t n, std::uint64_t seed, int jobs) {
  if (n < 1) throw InvalidParameter("sample size must be at least 1");
  Dataset data;
  switch (scenario.mode) {
    case ScenarioMode::discrete: data = sample_discrete(scenario, n, seed, jobs); break;
    case ScenarioMode::continuous: data = sample_continuous(scenario, n, seed, jobs); break;
    case ScenarioMode::two_wave: data = simulate_two_wave(scenario.two_wave, n, seed, jobs); break;
  }
  data.provenance = {seed, scenario_hash(scenario), true};
  return data;
}

}  // namespace mvtlab
