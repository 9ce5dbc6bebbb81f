#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mvtlab/dgp_engine.hpp"
#include "mvtlab/estimation.hpp"
#include "mvtlab/mvt_verifier.hpp"
#include "mvtlab/scenario.hpp"

namespace mvtlab {

enum class ExperimentKind {
  verify_identity,
  derivation_chain,
  factor_study,
  proportionality_test,
  item_analysis,
  longitudinal_strategies,
  scenario_battery,
};

std::string_view to_string(ExperimentKind kind);
/// Throws UnknownExperimentKind.
ExperimentKind parse_experiment_kind(std::string_view text);
const std::vector<ExperimentKind>& experiment_kinds();

/// Verdict a Monte Carlo rejection study is checked against.
enum class Expectation { none, size, power };

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::verify_identity;
  std::optional<Scenario> scenario;
  std::optional<Scenario> compare_scenario;   // factor_study only
  std::string scenario_source;                // fixture name, file path or "inline"
  std::optional<std::uint64_t> seed;
  std::size_t n = 10000;
  std::size_t replicates = 1;
  std::optional<double> tolerance;
  VerifyMode mode = VerifyMode::exact;
  std::optional<Contrast> contrast;
  std::optional<Augmentation> augmentation;   // verify the redefined scenario
  std::size_t bootstrap = 0;                  // 0 = kind default (200 / 500)
  std::size_t nodes = 41;

  std::optional<std::filesystem::path> data;  // CSV input instead of simulation
  std::string outcome = "Y";
  std::optional<std::vector<std::string>> covariates;  // default: every C_* column
  ItemMode item_mode = ItemMode::marginal;
  std::vector<std::size_t> causal_indicators;  // 0-based, item_analysis verdict
  double min_fraction = 0.95;
  double rmsr_threshold = 0.02;
  double level = 0.05;
  Expectation expect = Expectation::none;
  std::size_t target = 0;                      // 0-based, longitudinal
  MeasureSpec summary;                         // prior-wave summary

  std::size_t battery_count = 20;
  RandomScenarioOptions battery;

  std::filesystem::path out_dir = ".";
  std::string prefix;                          // report file stem; default kind name
  int jobs = 1;

  /// Whether the experiment draws random numbers (and so needs a seed).
  bool sampling() const;
};

/// Parses and validates a JSON config. Relative paths resolve against
/// `base_dir`. Throws ParseError (with line and column or field),
/// UnknownExperimentKind, MissingSeed.
/// `seed_override` replaces the file's seed before validation.
ExperimentConfig parse_config_text(std::string_view text, const std::filesystem::path& base_dir = ".",
                                   std::optional<std::uint64_t> seed_override = {});
ExperimentConfig parse_config(const std::filesystem::path& path,
                              std::optional<std::uint64_t> seed_override = {});

/// Fully materialised config, every default filled in.
Json resolved_config(const ExperimentConfig& config);
/// FNV-1a of the resolved config, as 16 hex digits.
std::string config_hash(const ExperimentConfig& config);

// ---------------------------------------------------------------------------
// CSV

/// Shortest text that reads back to the same double.
std::string format_number(double value);

/// Header row plus one line per dataset row; numbers round-trip exactly.
void write_csv(const Dataset& data, std::ostream& out);
void save_csv(const Dataset& data, const std::filesystem::path& path);

/// Reads a comma-separated file with a header row. `required` names must
/// be present. C_* and K columns are marked categorical. Throws EmptyFile,
/// MissingColumn, NonNumericCell (with row and column), ParseError.
Dataset read_csv(std::istream& in, const std::vector<std::string>& required = {});
Dataset load_csv(const std::filesystem::path& path, const std::vector<std::string>& required = {});

// ---------------------------------------------------------------------------
// Experiments and reports

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

struct ExperimentResult {
  ExperimentKind kind = ExperimentKind::verify_identity;
  Table table;
  std::string summary;  // human-readable block
  bool pass = true;
};

/// Runs the configured experiment. All randomness derives from the config
/// seed; output order follows config order.
ExperimentResult run_experiment(const ExperimentConfig& config);

/// Writes `<prefix>.csv` and `<prefix>.txt` into the output directory and
/// returns their paths. Both embed the config hash.
std::vector<std::filesystem::path> write_reports(const ExperimentConfig& config,
                                                 const ExperimentResult& result);

/// Text rendering of an identity report, naming the first broken step of
/// the derivation chain when one is given.
std::string describe(const IdentityReport& report, const std::optional<ChainReport>& chain = {});

}  // namespace mvtlab
