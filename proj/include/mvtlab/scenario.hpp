#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

namespace mvtlab {

using Json = nlohmann::json;
using Matrix = std::vector<std::vector<double>>;

enum class ScenarioKind {
  coarsened_versions,
  structural_reflective,
  structural_formative,
  indicator_causal_reflective,
  indicator_causal_formative,
  multidim_latent,
  two_wave_indicators,
  two_wave_latents,
};

enum class ScenarioMode { discrete, continuous, two_wave };

std::string_view to_string(ScenarioKind kind);
ScenarioKind parse_scenario_kind(std::string_view text);
std::string_view to_string(ScenarioMode mode);

// ---------------------------------------------------------------------------
// Measure A = f(X_1, ..., X_n)

enum class MeasureForm { mean, sum, weighted_sum, custom_table };

std::string_view to_string(MeasureForm form);
MeasureForm parse_measure_form(std::string_view text);

struct MeasureEntry {
  std::vector<double> indicators;
  double value = 0.0;
  friend bool operator==(const MeasureEntry&, const MeasureEntry&) = default;
};

struct MeasureSpec {
  MeasureForm form = MeasureForm::mean;
  std::vector<double> weights;       // weighted_sum only
  std::vector<double> cutpoints;     // optional coarsening, strictly increasing
  std::vector<MeasureEntry> table;   // custom_table only

  /// Throws WeightLengthMismatch / InvalidParameter.
  void validate(std::size_t indicator_count) const;
  bool coarsened() const noexcept { return !cutpoints.empty(); }
  bool linear() const noexcept {
    return !coarsened() && form != MeasureForm::custom_table;
  }
  /// Coefficients of a linear measure (mean, sum, weighted_sum).
  std::vector<double> linear_weights(std::size_t indicator_count) const;

  friend bool operator==(const MeasureSpec&, const MeasureSpec&) = default;
};

/// Accepts a form name or {form, weights, cutpoints, table: [{x, a}]}.
MeasureSpec measure_from_json(const Json& value, MeasureForm fallback = MeasureForm::mean);
Json to_json(const MeasureSpec& spec);

// ---------------------------------------------------------------------------
// Violations of the identity's assumptions

enum class ViolationKind {
  direct_indicator_effect,  // X_i -> Y
  common_cause_u,           // U -> X_i and U -> Y
  unmeasured_confounder,    // U -> K and U -> Y
  consistency_breach,       // observed Y != Y_k at K = k (discrete only)
};

std::string_view to_string(ViolationKind kind);
ViolationKind parse_violation_kind(std::string_view text);

struct Violation {
  ViolationKind kind = ViolationKind::direct_indicator_effect;
  /// 0-based indicator indices; version indices for consistency_breach;
  /// latent indices (empty = all) for a continuous unmeasured_confounder.
  std::vector<std::size_t> targets;
  double magnitude = 0.0;      // delta, outcome units per unit of source
  double source_effect = 1.0;  // strength of U on its non-outcome targets

  friend auto operator<=>(const Violation&, const Violation&) = default;
};

// ---------------------------------------------------------------------------
// Discrete mode: explicit finite tables (exactly enumerable).
//
// Hidden configurations u index unobserved factors baked into the tables;
// they appear after redefining the version variable of a scenario carrying
// a common cause. A freshly built scenario has a single hidden
// configuration.

struct DiscreteLaw {
  std::vector<double> hidden_probs{1.0};       // P(u)
  std::vector<double> version_values;          // label of each version
  std::vector<Matrix> version_probs;           // [u][c][k] P(k | c, u)
  Matrix indicator_levels;                     // [i][level]
  std::vector<std::vector<Matrix>> indicator_probs;  // [i][u][k][level]
  Matrix outcome_means;                        // [c][k] structural E[Y_k | c]
  std::vector<double> indicator_effects;       // [i] additive effect of X_i on Y
  std::vector<double> hidden_outcome_effects;  // [u] additive effect on Y
  std::vector<double> version_breach;          // [k] observed minus potential

  std::size_t versions() const noexcept { return version_values.size(); }
  std::size_t indicators() const noexcept { return indicator_levels.size(); }
  std::size_t hidden() const noexcept { return hidden_probs.size(); }

  friend bool operator==(const DiscreteLaw&, const DiscreteLaw&) = default;
};

// ---------------------------------------------------------------------------
// Continuous mode: linear-Gaussian structural model, optionally with
// ordinal discretisation of the indicators.

enum class LatentDirection { reflective, formative };

/// Which variables make up the version variable K of the identity.
struct VersionComponents {
  bool latent = true;
  bool indicators = false;
  bool hidden = false;
  friend bool operator==(const VersionComponents&, const VersionComponents&) = default;
};

struct ContinuousModel {
  LatentDirection direction = LatentDirection::reflective;
  std::size_t latent_dim = 1;
  Matrix latent_means;          // [c][j]; reflective latents have unit variance
  Matrix loadings;              // [i][j]: X_i on eta_j (reflective) or
                                //         eta on X_i weights (formative, j = 0)
  std::vector<double> error_sds;  // per indicator
  Matrix error_correlation;     // n x n, empty = independent errors
  Matrix indicator_means;       // [c][i]
  Matrix ordinal_cutpoints;     // [i], empty row = continuous indicator
  double latent_error_sd = 0.0; // formative eta error scale
  std::vector<double> latent_effects;     // [j] eta_j -> Y
  std::vector<double> indicator_effects;  // [i] X_i -> Y
  std::vector<double> covariate_effects;  // [c] additive stratum effect
  VersionComponents version;

  std::size_t indicators() const noexcept { return error_sds.size(); }
  bool ordinal() const noexcept;

  friend bool operator==(const ContinuousModel&, const ContinuousModel&) = default;
};

// ---------------------------------------------------------------------------
// Two-wave indicator dynamics

struct TwoWaveParams {
  Matrix lag;                          // [i][j]: wave t-1 variable j -> wave t variable i
  std::vector<double> outcome_current; // X_i^t (or eta_i^t) -> Y
  std::vector<double> outcome_prior;   // X_i^{t-1} (or eta_i^{t-1}) -> Y
  std::vector<double> error_sd_prior;  // wave t-1 scale
  std::vector<double> error_sd_current;  // wave t innovation scale
  double outcome_noise_sd = 1.0;

  bool has_covariate = false;          // standard-normal confounder C_1
  std::vector<double> covariate_to_prior;
  double covariate_to_outcome = 0.0;

  bool latent = false;                 // latent layer between waves and indicators
  std::vector<double> loadings_prior;
  std::vector<double> loadings_current;
  std::vector<double> indicator_noise_sd;

  Matrix ordinal_cutpoints;            // optional discretisation of X

  std::size_t indicators() const noexcept { return outcome_current.size(); }
  bool linear_gaussian() const noexcept;
  /// Throws InvalidParameter / MissingParameter.
  void validate() const;

  friend bool operator==(const TwoWaveParams&, const TwoWaveParams&) = default;
};

struct Contrast {
  double a = 1.0;
  double a_star = 0.0;
  friend bool operator==(const Contrast&, const Contrast&) = default;
};

// ---------------------------------------------------------------------------

struct Scenario {
  ScenarioKind kind = ScenarioKind::coarsened_versions;
  ScenarioMode mode = ScenarioMode::discrete;
  std::vector<double> covariate_probs{1.0};  // P(c)
  DiscreteLaw discrete;
  ContinuousModel continuous;
  TwoWaveParams two_wave;
  MeasureSpec measure;
  double outcome_noise_sd = 1.0;
  std::vector<Violation> violations;  // kept in canonical (sorted) order
  std::optional<Contrast> contrast;

  std::size_t strata() const noexcept { return covariate_probs.size(); }
  std::size_t indicators() const noexcept;
  /// True when the scenario carries no injected violation and no absorbed
  /// indicator / hidden / breach terms.
  bool violation_free() const noexcept;

  friend bool operator==(const Scenario&, const Scenario&) = default;
};

/// Builds and validates a scenario from a JSON parameter object.
/// Deterministic. Throws MissingParameter, InvalidProbability,
/// ZeroLoadingInStructuralReflective, InvalidParameter, PositivityViolation.
Scenario build_scenario(ScenarioKind kind, const Json& params);

/// Re-runs every validation rule on an existing scenario.
void validate_scenario(const Scenario& scenario);

/// Returns a copy with the violation added. Throws IndexOutOfRange.
Scenario inject_violation(const Scenario& scenario, const Violation& violation);

/// Full parameter object accepted by build_scenario (round-trips exactly).
Json scenario_params(const Scenario& scenario);
/// {"kind": ..., "params": {...}}
Json to_json(const Scenario& scenario);
Scenario scenario_from_json(const Json& document);

/// FNV-1a hash of the canonical JSON serialisation.
std::uint64_t scenario_hash(const Scenario& scenario);

// ---------------------------------------------------------------------------
// Fixtures

/// K in {1,2,3}, P = (0.2, 0.3, 0.5), A = 1{K <= 2}, E[Y_k] = k.
Scenario fixture_three_version();
/// Discrete latent levels driving three binary indicators, two strata.
Scenario fixture_discrete_reflective();
/// lambda = (0.9, 0.8, 0.7, 0.6), unit-variance eta, eta -> Y = 0.4.
Scenario fixture_structural_reflective();
/// Same measurement model, only X_1 affects Y.
Scenario fixture_indicator_causal_reflective();
/// Four 0-3 indicators summed into a 0-12 index; only indicator 1 is causal.
Scenario fixture_social_integration_like();
/// Versions nested in exposure levels with E[Y | a, c] linear in a and no
/// A x C interaction.
Scenario fixture_linear_versions();
/// X_n^{t-1} -> X_1^t, X_n^{t-1} -> X_n^t, X_n^t -> Y, all 0.5.
Scenario fixture_two_wave_confounding();

/// Looks a fixture up by name; throws InvalidParameter for unknown names.
Scenario fixture_by_name(std::string_view name);
std::vector<std::string_view> fixture_names();

struct RandomScenarioOptions {
  std::size_t max_strata = 4;
  std::size_t max_versions = 16;
  std::size_t max_indicators = 3;
  std::size_t max_levels = 3;
  std::optional<ViolationKind> violation;
};

/// Random discrete scenario with strictly positive tables and a contrast
/// set; optionally carrying one violation of the requested kind.
Scenario random_discrete_scenario(std::uint64_t seed,
                                  const RandomScenarioOptions& options = {});

}  // namespace mvtlab
