#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "mvtlab/dgp_engine.hpp"
#include "mvtlab/scenario.hpp"

namespace mvtlab {

enum class Strategy { naive, current_all, current_plus_prior, prior_summary };

inline constexpr std::array<Strategy, 4> kStrategies{
    Strategy::naive, Strategy::current_all, Strategy::current_plus_prior, Strategy::prior_summary};

std::string_view to_string(Strategy strategy);

/// Columns X_i_t0, X_i_t1 (i = 1..n), ETA_i_t0 / ETA_i_t1 for the latent
/// layer, C_1 when a covariate is present, Y. Reproducible by seed and
/// independent of `jobs`.
Dataset simulate_two_wave(const TwoWaveParams& params, std::size_t n, std::uint64_t seed,
                          int jobs = 1);

/// Exact population slopes on the target current indicator under each
/// strategy, plus the structural effect being targeted.
struct StrategySlopes {
  std::array<double, 4> slope{};  // indexed like kStrategies
  double true_effect = 0.0;
  double operator[](Strategy s) const { return slope[static_cast<std::size_t>(s)]; }
};

/// Path-tracing oracle for linear-Gaussian params; `target` is 0-based.
/// The summary measure must be linear. Throws NonlinearParams,
/// IndexOutOfRange.
StrategySlopes analytic_bias(const TwoWaveParams& params, std::size_t target,
                             const MeasureSpec& summary = {});

struct StrategyResult {
  Strategy strategy = Strategy::naive;
  double estimate = 0.0;
  double standard_error = 0.0;
  std::optional<double> analytic;     // population slope
  std::optional<double> true_effect;  // structural effect of the target
  std::optional<double> bias;         // estimate - true effect
};

struct StrategyReport {
  std::size_t target = 0;
  std::size_t n = 0;
  std::vector<StrategyResult> results;  // ordered like kStrategies
  const StrategyResult& operator[](Strategy s) const {
    return results[static_cast<std::size_t>(s)];
  }
};

/// Runs the four adjustment regressions on a two-wave dataset. Analytic
/// targets are attached when `params` is given and linear-Gaussian.
StrategyReport analyze_strategies(const Dataset& data, std::size_t target,
                                  const MeasureSpec& summary,
                                  const TwoWaveParams* params = nullptr);

}  // namespace mvtlab
