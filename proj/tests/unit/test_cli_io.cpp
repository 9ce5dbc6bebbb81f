#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "mvtlab/cli_io.hpp"
#include "mvtlab/errors.hpp"

using namespace mvtlab;
namespace fs = std::filesystem;

namespace {
fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("mvtlab_unit_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}
}  // namespace

TEST_CASE("minimal config materialises the documented defaults") {
  const ExperimentConfig c = parse_config_text(R"({"kind": "verify_identity", "scenario": "three_version", "seed": 1})");
  CHECK(c.kind == ExperimentKind::verify_identity);
  CHECK(c.n == 10000);
  CHECK(c.replicates == 1);
  CHECK(c.mode == VerifyMode::exact);
  CHECK_FALSE(c.tolerance);
  const Json resolved = resolved_config(c);
  CHECK(resolved["n"] == 10000);
  CHECK(resolved["scenario_source"] == "three_version");
  CHECK(config_hash(c).size() == 16);
}

TEST_CASE("config guards") {
  CHECK_THROWS_AS(parse_config_text(R"({"kind": "froobulate", "scenario": "three_version"})"),
                  UnknownExperimentKind);
  CHECK_THROWS_AS(parse_config_text(R"({"kind": "proportionality_test", "scenario": "structural_reflective"})"),
                  MissingSeed);
  CHECK_THROWS_AS(parse_config_text(R"({"kind": "verify_identity", "scenario": "three_version", "bogus": 1})"),
                  ParseError);
  CHECK_THROWS_AS(parse_config_text(R"({"kind": "verify_identity", "scenario": "three_version", "n": -5})"),
                  ParseError);
  try {
    parse_config_text("{\n  \"kind\": \"verify_identity\",\n  \"scenario\": \n}");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("line 4") != std::string::npos);
  }
  // exact verification needs no seed
  CHECK_NOTHROW(parse_config_text(R"({"kind": "verify_identity", "scenario": "three_version"})"));
  // a seed override satisfies the requirement
  CHECK(parse_config_text(R"({"kind": "scenario_battery"})", ".", 5).seed == 5u);
}

TEST_CASE("CSV round trip preserves every value") {
  const Dataset d = sample_dataset(fixture_structural_reflective(), 1000, 3);
  std::stringstream buffer;
  write_csv(d, buffer);
  const Dataset back = read_csv(buffer);
  CHECK(back.rows() == 1000);
  CHECK(back.indicator_names().size() == 4);
  for (const auto& col : back.columns()) CHECK(col.values == d.values(col.name));
  CHECK_FALSE(back.has("EY_K"));  // potential outcomes are dropped on load
  CHECK(fit_ols(back, "Y", {"A"}).coefficient("A") == fit_ols(d, "Y", {"A"}).coefficient("A"));
}

TEST_CASE("CSV guards") {
  std::stringstream missing("X_1,X_2,X_4,Y\n1,2,3,4\n");
  CHECK_THROWS_AS(read_csv(missing, {"X_1", "X_2", "X_3", "X_4"}), MissingColumn);
  std::stringstream na("X_1,Y\n1,2\nNA,3\n");
  try {
    read_csv(na);
    FAIL("expected NonNumericCell");
  } catch (const NonNumericCell& e) {
    const std::string what = e.what();
    CHECK(what.find("row 3") != std::string::npos);
    CHECK(what.find("column 1") != std::string::npos);
  }
  std::stringstream empty("");
  CHECK_THROWS_AS(read_csv(empty), EmptyFile);
  std::stringstream header_only("X_1,Y\n");
  CHECK_THROWS_AS(read_csv(header_only), EmptyFile);
}

TEST_CASE("verify_identity experiment on the three-version fixture") {
  const ExperimentConfig c = parse_config_text(R"({"kind": "verify_identity", "scenario": "three_version"})");
  const ExperimentResult r = run_experiment(c);
  CHECK(r.pass);
  REQUIRE(r.table.rows.size() == 1);
  CHECK(r.table.rows[0][5] == "-1.4");
  CHECK(r.table.rows[0][6] == "-1.4");
}

TEST_CASE("a violation fixture fails verification") {
  const ExperimentConfig c = parse_config_text(R"({
    "kind": "verify_identity",
    "scenario": {"fixture": "discrete_reflective",
                 "params": {"violations": [{"kind": "direct_indicator_effect", "targets": [1], "magnitude": 0.3}]}}
  })");
  const ExperimentResult r = run_experiment(c);
  CHECK_FALSE(r.pass);
  CHECK(r.summary.find("independence") != std::string::npos);
}

TEST_CASE("reports are byte-identical across reruns and thread counts") {
  const std::string text = R"({"kind": "scenario_battery", "battery": {"count": 20}, "seed": 31})";
  ExperimentConfig a = parse_config_text(text);
  ExperimentConfig b = parse_config_text(text);
  a.out_dir = scratch("a");
  b.out_dir = scratch("b");
  b.jobs = 3;
  const auto ra = run_experiment(a);
  CHECK(ra.pass);
  CHECK(ra.table.rows.size() == 20);
  const auto pa = write_reports(a, ra);
  const auto pb = write_reports(b, run_experiment(b));
  REQUIRE(pa.size() == 2);
  for (std::size_t i = 0; i < pa.size(); ++i) CHECK(slurp(pa[i]) == slurp(pb[i]));
  CHECK(slurp(pa[0]).find(config_hash(a)) != std::string::npos);
}

TEST_CASE("analysis experiments accept CSV input") {
  const fs::path dir = scratch("csv");
  save_csv(sample_dataset(fixture_social_integration_like(), 5000, 2), dir / "data.csv");
  std::ofstream(dir / "items.json") << R"({"kind": "item_analysis", "data": "data.csv", "item_mode": "joint"})";
  const ExperimentConfig c = parse_config(dir / "items.json");
  CHECK_FALSE(c.sampling());
  const ExperimentResult r = run_experiment(c);
  CHECK(r.table.rows.size() == 4);
}
