#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "mvtlab/cli_io.hpp"
#include "mvtlab/errors.hpp"

namespace {

using mvtlab::ExperimentConfig;
using mvtlab::ExperimentKind;

struct CommonFlags {
  std::string config;
  std::optional<std::string> out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs;
};

std::optional<int> env_jobs() {
  const char* text = std::getenv("MVTLAB_JOBS");
  if (!text || !*text) return std::nullopt;
  try {
    const int jobs = std::stoi(text);
    if (jobs >= 1) return jobs;
  } catch (const std::exception&) {
  }
  std::cerr << "warning: ignoring MVTLAB_JOBS='" << text << "'\n";
  return std::nullopt;
}

ExperimentConfig load(const CommonFlags& flags, std::optional<ExperimentKind> kind) {
  std::ifstream in(flags.config, std::ios::binary);
  if (!in) throw mvtlab::ParseError("config file '" + flags.config + "' cannot be read");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  std::string text = buffer.str();
  const std::filesystem::path path(flags.config);
  const std::filesystem::path base = path.parent_path().empty() ? "." : path.parent_path();

  if (kind) {
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error&) {
      return mvtlab::parse_config_text(text, base, flags.seed);  // rethrows with line info
    }
    if (doc.is_object()) {
      const std::string name(mvtlab::to_string(*kind));
      if (!doc.contains("kind")) {
        doc["kind"] = name;
        text = doc.dump();
      } else if (doc["kind"] != name) {
        throw mvtlab::ParseError("config kind " + doc["kind"].dump() + " does not match subcommand '" + name + "'");
      }
    }
  }
  ExperimentConfig config = mvtlab::parse_config_text(text, base, flags.seed);
  if (flags.out_dir) config.out_dir = *flags.out_dir;
  if (flags.jobs) config.jobs = *flags.jobs;
  else if (const auto jobs = env_jobs()) config.jobs = *jobs;
  return config;
}

int run(const CommonFlags& flags, std::optional<ExperimentKind> kind) {
  const ExperimentConfig config = load(flags, kind);
  mvtlab::ExperimentResult result;
  try {
    result = mvtlab::run_experiment(config);
  } catch (const mvtlab::Error& e) {
    throw mvtlab::Error(std::string("running ") + std::string(mvtlab::to_string(config.kind)) + ": " + e.name() + ": " +
                        e.what());
  }
  const auto paths = mvtlab::write_reports(config, result);
  std::cout << result.summary << "verdict: " << (result.pass ? "pass" : "fail") << "\n";
  for (const auto& p : paths) std::cout << "wrote " << p.string() << "\n";
  return result.pass ? 0 : 1;
}

void add_common(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("-c,--config", flags.config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
  cmd->add_option("-o,--out-dir", flags.out_dir, "directory for report files");
  cmd->add_option("--seed", flags.seed, "override the config seed");
  cmd->add_option("-j,--jobs", flags.jobs, "worker threads (default: MVTLAB_JOBS, then config)")
      ->check(CLI::PositiveNumber);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mvtlab: multiple-versions-of-treatment experiments"};
  app.require_subcommand(1);
  CommonFlags flags;
  std::optional<ExperimentKind> chosen;
  bool run_any = false;

  auto* run_cmd = app.add_subcommand("run", "run the experiment named by the config's kind");
  add_common(run_cmd, flags);
  run_cmd->callback([&] { run_any = true; });

  for (ExperimentKind kind : mvtlab::experiment_kinds()) {
    const std::string name(mvtlab::to_string(kind));
    auto* cmd = app.add_subcommand(name, "run a " + name + " experiment");
    add_common(cmd, flags);
    cmd->callback([&chosen, kind] { chosen = kind; });
  }

  std::string scenario_name, csv_out;
  std::size_t rows = 10000;
  std::uint64_t sample_seed = 0;
  bool sample = false;
  auto* sample_cmd = app.add_subcommand("sample", "simulate a dataset from a scenario and write CSV");
  sample_cmd->add_option("-s,--scenario", scenario_name, "fixture name or scenario JSON file")->required();
  sample_cmd->add_option("-n,--rows", rows, "rows")->check(CLI::PositiveNumber);
  sample_cmd->add_option("--seed", sample_seed, "seed")->required();
  sample_cmd->add_option("--out", csv_out, "output CSV")->required();
  sample_cmd->callback([&] { sample = true; });

  bool list = false;
  app.add_subcommand("fixtures", "list built-in scenario fixtures")->callback([&] { list = true; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (list) {
      for (auto name : mvtlab::fixture_names()) std::cout << name << "\n";
      return 0;
    }
    if (sample) {
      mvtlab::Scenario scenario;
      if (std::filesystem::exists(scenario_name)) {
        std::ifstream in(scenario_name);
        scenario = mvtlab::scenario_from_json(nlohmann::json::parse(in));
      } else {
        scenario = mvtlab::fixture_by_name(scenario_name);
      }
      const int jobs = env_jobs().value_or(1);
      mvtlab::save_csv(mvtlab::sample_dataset(scenario, rows, sample_seed, jobs), csv_out);
      std::cout << "wrote " << rows << " rows to " << csv_out << "\n";
      return 0;
    }
    return run(flags, run_any ? std::nullopt : chosen);
  } catch (const mvtlab::Error& e) {
    std::cerr << "error: " << (std::string_view(e.name()) == "Error" ? "" : std::string(e.name()) + ": ") << e.what()
              << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
