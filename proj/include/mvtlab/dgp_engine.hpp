#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "mvtlab/scenario.hpp"

namespace mvtlab {

// ---------------------------------------------------------------------------
// Exact population law (discrete mode)

struct PopulationCell {
  std::size_t stratum = 0;
  std::size_t version = 0;
  std::size_t exposure = 0;  // index into PopulationTable::exposure_levels
  double prob = 0.0;         // P(c, k, a)
  double mean_outcome = 0.0; // E[Y | c, k, a]
};

struct PopulationTable {
  std::vector<double> covariate_probs;   // P(c)
  std::vector<double> version_values;    // label of each version
  std::vector<double> exposure_levels;   // sorted distinct values of A
  std::vector<PopulationCell> cells;     // positive-probability cells, ordered (c, k, a)
  Matrix potential_means;                // [c][k] E[Y_k | c]
  Matrix potential_given_version;        // [c][k] E[Y_k | K = k, c]; NaN if P(k | c) = 0
  Matrix observed_given_version;         // [c][k] E[Y | K = k, c];   NaN if P(k | c) = 0

  std::size_t strata() const noexcept { return covariate_probs.size(); }
  std::size_t versions() const noexcept { return version_values.size(); }
  std::optional<std::size_t> exposure_index(double a) const;
  /// P(A = a | c) for every stratum and exposure level.
  Matrix exposure_given_stratum() const;
  double total_probability() const;
};

/// Exact joint law of (C, K, A) with potential-outcome means. Throws
/// ContinuousScenarioNotEnumerable for non-discrete scenarios.
PopulationTable enumerate_population(const Scenario& scenario);

/// P(A = a | c) of a discrete scenario (violations included).
struct ExposureLaw {
  std::vector<double> levels;
  Matrix probs;  // [c][level]
  std::optional<std::size_t> level_index(double a) const;
};
ExposureLaw exposure_law(const Scenario& scenario);

// ---------------------------------------------------------------------------
// Datasets

struct Column {
  std::string name;
  std::vector<double> values;
  bool categorical = false;
  friend bool operator==(const Column&, const Column&) = default;
};

struct Provenance {
  std::uint64_t seed = 0;
  std::uint64_t scenario_hash = 0;
  bool simulated = false;
  friend bool operator==(const Provenance&, const Provenance&) = default;
};

/// Rectangular named-column store.
class Dataset {
 public:
  std::size_t rows() const noexcept { return rows_; }
  std::size_t width() const noexcept { return columns_.size(); }

  /// Appends a column; throws InvalidParameter on length mismatch or a
  /// duplicate name.
  void add_column(std::string name, std::vector<double> values, bool categorical = false);
  bool has(std::string_view name) const noexcept;
  /// Throws MissingColumn.
  const Column& column(std::string_view name) const;
  const std::vector<double>& values(std::string_view name) const { return column(name).values; }
  const std::vector<Column>& columns() const noexcept { return columns_; }

  /// Names `prefix1`, `prefix2`, ... for as long as they exist.
  std::vector<std::string> numbered(std::string_view prefix) const;
  std::vector<std::string> indicator_names() const { return numbered("X_"); }
  std::vector<std::string> covariate_names() const { return numbered("C_"); }
  std::vector<std::string> potential_names() const { return numbered("Y_k_"); }

  /// Rows selected by index (bootstrap resamples, subsets).
  Dataset take(std::span<const std::size_t> rows) const;

  Provenance provenance;

  friend bool operator==(const Dataset&, const Dataset&) = default;

 private:
  std::vector<Column> columns_;
  std::size_t rows_ = 0;
};

/// Draws n units. Discrete scenarios carry K as the 1-based version index
/// and every potential outcome Y_k_j;
/// continuous scenarios carry EY_K = E[Y_k | c] at the realised version.
/// Each row uses its own random substream, so the result does not depend on
/// `jobs`.
Dataset sample_dataset(const Scenario& scenario, std::size_t n, std::uint64_t seed, int jobs = 1);

// ---------------------------------------------------------------------------
// Measures

/// f(x) without coarsening. Throws WeightLengthMismatch, InvalidParameter
/// (custom table without a matching row).
double measure_value(std::span<const double> indicators, const MeasureSpec& spec);

/// A = f(X) per row of a rows x n matrix (coarsening not applied).
std::vector<double> apply_measure(const Eigen::MatrixXd& indicators, const MeasureSpec& spec);

/// Category of a value: number of cutpoints <= value (half-open intervals).
std::size_t coarsen_value(double value, std::span<const double> cutpoints) noexcept;

/// Maps every value to its category. Throws InvalidParameter for
/// non-increasing cutpoints and EmptyCategory when a required category (all
/// categories if `required` is empty) receives no unit.
std::vector<double> coarsen_exposure(std::span<const double> values,
                                     std::span<const double> cutpoints,
                                     std::span<const std::size_t> required = {});

/// Full measure including its coarsening step.
double exposure_value(std::span<const double> indicators, const MeasureSpec& spec);

}  // namespace mvtlab
