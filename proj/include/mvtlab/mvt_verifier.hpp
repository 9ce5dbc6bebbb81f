#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "mvtlab/dgp_engine.hpp"
#include "mvtlab/estimation.hpp"
#include "mvtlab/scenario.hpp"

namespace mvtlab {

enum class VerifyMode { exact, empirical, quadrature };
std::string_view to_string(VerifyMode mode);
VerifyMode parse_verify_mode(std::string_view text);

struct IdentityReport {
  double lhs = 0.0;
  double rhs = 0.0;
  double abs_diff = 0.0;
  VerifyMode mode = VerifyMode::exact;
  double a = 1.0;
  double a_star = 0.0;
  std::size_t size = 0;        // table cells, rows per replicate, or quadrature nodes
  std::size_t replicates = 1;
  double standard_error = 0.0; // empirical: MC standard error of the difference
  double discretisation = 0.0; // quadrature: refinement bound
  double tolerance = 0.0;
  bool pass = false;
};

/// Standardized observational contrast sum_c {E[Y|a,c] - E[Y|a*,c]} P(c).
/// Throws PositivityViolation.
double mvt_lhs(const PopulationTable& table, double a, double a_star);
double mvt_lhs(const Dataset& data, double a, double a_star);

/// Hypothetical-trial contrast sum_{k,c} E[Y_k|c] {P(k|a,c) - P(k|a*,c)} P(c).
/// The dataset form needs K and Y_k_* columns (discrete) or EY_K
/// (continuous); throws MissingPotentialOutcomes otherwise.
double mvt_rhs(const PopulationTable& table, double a, double a_star);
double mvt_rhs(const Dataset& data, double a, double a_star);

struct VerifyOptions {
  VerifyMode mode = VerifyMode::exact;
  std::optional<Contrast> contrast;   // defaults to the scenario's, else (1, 0)
  std::optional<double> tolerance;    // exact 1e-10, empirical 3 SE
  std::size_t n = 10000;
  std::size_t replicates = 1;
  std::uint64_t seed = 0;
  std::size_t bootstrap = 200;        // SE resamples when replicates == 1
  std::size_t nodes = 41;             // quadrature grid
  int jobs = 1;
};

IdentityReport verify_identity(const Scenario& scenario, const VerifyOptions& options = {});

/// One empirical replicate: lhs and rhs on a single dataset. Uses the
/// standardized contrast when A takes few values, otherwise covariate-adjusted
/// slopes of Y and EY_K on A scaled by (a - a*).
std::pair<double, double> empirical_sides(const Dataset& data, double a, double a_star);

// ---------------------------------------------------------------------------

enum class ChainStep { none = 0, arithmetic = 1, independence = 2, consistency = 3, unconfoundedness = 4 };
std::string_view to_string(ChainStep step);

struct ChainReport {
  std::array<double, 5> values{};
  std::array<double, 4> gaps{};  // |value[i+1] - value[i]|
  double tolerance = 1e-10;
  ChainStep first_break = ChainStep::none;
  /// Step (1-based expression pair i -> i+1) where the chain first breaks.
  std::optional<std::size_t> break_index() const;
};

/// Evaluates the five chained expressions of the identity's derivation and
/// attributes the first broken equality.
ChainReport verify_derivation_chain(const PopulationTable& table, double a, double a_star,
                                    double tolerance = 1e-10);

enum class Augmentation { include_indicators, include_common_cause };
std::string_view to_string(Augmentation augmentation);
Augmentation parse_augmentation(std::string_view text);

/// Enlarges the version variable so that it absorbs the indicators or the
/// hidden common causes. Discrete scenarios are rebuilt on the product
/// version space with every violation folded into the tables; continuous
/// scenarios switch on the matching version components. Throws
/// InapplicableAugmentation.
Scenario redefine_versions(const Scenario& scenario, Augmentation augmentation);

/// Weighted least squares of E[Y | a, c] on (1, a, stratum indicators) with
/// weights P(a, c), computed on the exact population table.
RegressionFit population_regression(const PopulationTable& table);

/// Identity check on randomly generated discrete scenarios; report i uses
/// battery seed derive_seed(seed, battery, i).
std::vector<IdentityReport> run_battery(std::size_t count, std::uint64_t seed,
                                        const RandomScenarioOptions& options = {}, int jobs = 1);

}  // namespace mvtlab
