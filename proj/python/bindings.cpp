#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/operators.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "mvtlab/cli_io.hpp"
#include "mvtlab/dgp_engine.hpp"
#include "mvtlab/errors.hpp"
#include "mvtlab/estimation.hpp"
#include "mvtlab/longitudinal.hpp"
#include "mvtlab/mvt_verifier.hpp"
#include "mvtlab/psychometrics.hpp"
#include "mvtlab/scenario.hpp"

namespace py = pybind11;
using namespace mvtlab;

namespace {

py::dict dataset_to_dict(const Dataset& d) {
  py::dict out;
  for (const Column& c : d.columns()) out[py::str(c.name)] = py::array_t<double>(c.values.size(), c.values.data());
  return out;
}

Dataset dataset_from_dict(const py::dict& columns, const std::vector<std::string>& categorical) {
  Dataset d;
  for (const auto& [key, value] : columns) {
    const std::string name = py::cast<std::string>(key);
    const auto arr = py::array_t<double, py::array::c_style | py::array::forcecast>::ensure(value);
    if (!arr || arr.ndim() != 1) throw InvalidParameter("column '" + name + "' must be one-dimensional");
    const bool cat = std::find(categorical.begin(), categorical.end(), name) != categorical.end() ||
                     name.rfind("C_", 0) == 0 || name == "K";
    d.add_column(name, std::vector<double>(arr.data(), arr.data() + arr.size()), cat);
  }
  return d;
}

py::dict identity_to_dict(const IdentityReport& r) {
  py::dict out;
  out["lhs"] = r.lhs;
  out["rhs"] = r.rhs;
  out["abs_diff"] = r.abs_diff;
  out["mode"] = std::string(to_string(r.mode));
  out["a"] = r.a;
  out["a_star"] = r.a_star;
  out["size"] = r.size;
  out["replicates"] = r.replicates;
  out["standard_error"] = r.standard_error;
  out["tolerance"] = r.tolerance;
  out["pass"] = r.pass;
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Native core of mvtlab";

  static py::exception<Error> base(m, "Error", PyExc_RuntimeError);
  // every library error surfaces as mvtlab.Error; the message names the type
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::set_error(base, (std::string(e.name()) + ": " + e.what()).c_str());
    }
  });

  py::class_<Scenario>(m, "Scenario")
      .def_static("fixture", &fixture_by_name, py::arg("name"))
      .def_static("from_json", [](const std::string& text) { return scenario_from_json(Json::parse(text)); })
      .def_static("build",
                  [](const std::string& kind, const std::string& params) {
                    return build_scenario(parse_scenario_kind(kind), Json::parse(params));
                  },
                  py::arg("kind"), py::arg("params"))
      .def_static("random", [](std::uint64_t seed, std::optional<std::string> violation) {
        RandomScenarioOptions o;
        if (violation) o.violation = parse_violation_kind(*violation);
        return random_discrete_scenario(seed, o);
      }, py::arg("seed"), py::arg("violation") = py::none())
      .def("to_json", [](const Scenario& s) { return to_json(s).dump(); })
      .def("with_violation",
           [](const Scenario& s, const std::string& kind, std::vector<std::size_t> targets, double magnitude,
              double source_effect) {
             return inject_violation(s, {parse_violation_kind(kind), std::move(targets), magnitude, source_effect});
           },
           py::arg("kind"), py::arg("targets"), py::arg("magnitude"), py::arg("source_effect") = 1.0)
      .def("redefine", [](const Scenario& s, const std::string& a) { return redefine_versions(s, parse_augmentation(a)); })
      .def_property_readonly("kind", [](const Scenario& s) { return std::string(to_string(s.kind)); })
      .def_property_readonly("strata", &Scenario::strata)
      .def_property_readonly("violation_free", &Scenario::violation_free)
      .def_property_readonly("hash", [](const Scenario& s) { return scenario_hash(s); })
      .def(py::self == py::self);

  m.def("fixture_names", [] {
    std::vector<std::string> out;
    for (auto n : fixture_names()) out.emplace_back(n);
    return out;
  });

  m.def("sample", [](const Scenario& s, std::size_t n, std::uint64_t seed) {
    return dataset_to_dict(sample_dataset(s, n, seed));
  }, py::arg("scenario"), py::arg("n"), py::arg("seed"));

  m.def("verify_identity",
        [](const Scenario& s, const std::string& mode, std::size_t n, std::size_t replicates, std::uint64_t seed,
           std::optional<double> tolerance) {
          VerifyOptions o;
          o.mode = parse_verify_mode(mode);
          o.n = n;
          o.replicates = replicates;
          o.seed = seed;
          o.tolerance = tolerance;
          return identity_to_dict(verify_identity(s, o));
        },
        py::arg("scenario"), py::arg("mode") = "exact", py::arg("n") = 10000, py::arg("replicates") = 1,
        py::arg("seed") = 0, py::arg("tolerance") = py::none());

  m.def("derivation_chain", [](const Scenario& s, double a, double a_star) {
    const ChainReport c = verify_derivation_chain(enumerate_population(s), a, a_star);
    py::dict out;
    out["values"] = c.values;
    out["gaps"] = c.gaps;
    out["first_break"] = std::string(to_string(c.first_break));
    out["break_index"] = c.break_index();
    return out;
  }, py::arg("scenario"), py::arg("a"), py::arg("a_star"));

  m.def("run_battery", [](std::size_t count, std::uint64_t seed) {
    py::list out;
    for (const auto& r : run_battery(count, seed)) out.append(identity_to_dict(r));
    return out;
  }, py::arg("count"), py::arg("seed"));

  m.def("fit_one_factor", [](const Eigen::MatrixXd& cov, bool strict) {
    FactorOptions o;
    o.strict = strict;
    const FactorFit f = fit_one_factor(cov, o);
    py::dict out;
    out["loadings"] = f.loadings;
    out["uniquenesses"] = f.uniquenesses;
    out["rmsr"] = f.rmsr;
    out["iterations"] = f.iterations;
    out["converged"] = f.converged;
    out["heywood"] = f.heywood;
    return out;
  }, py::arg("covariance"), py::arg("strict") = false);

  m.def("proportionality_test",
        [](const py::dict& columns, const std::string& outcome, std::vector<std::string> covariates,
           std::uint64_t seed, const std::string& mode, std::size_t bootstrap) {
          const Dataset d = dataset_from_dict(columns, covariates);
          ProportionalityOptions o;
          o.mode = mode == "joint" ? ItemMode::joint : ItemMode::marginal;
          o.bootstrap = bootstrap;
          const ProportionalityReport r = structural_proportionality_test(d, outcome, covariates, seed, o);
          py::dict out;
          out["indicators"] = r.indicators;
          out["loadings"] = r.loadings;
          out["associations"] = r.associations;
          out["kappa"] = r.kappa;
          out["statistic"] = r.statistic;
          out["df"] = r.df;
          out["p_value"] = r.p_value;
          return out;
        },
        py::arg("data"), py::arg("outcome") = "Y", py::arg("covariates") = std::vector<std::string>{},
        py::arg("seed") = 0, py::arg("mode") = "marginal", py::arg("bootstrap") = 500);

  m.def("item_by_item",
        [](const py::dict& columns, const std::string& outcome, std::vector<std::string> covariates,
           const std::string& mode) {
          const Dataset d = dataset_from_dict(columns, covariates);
          py::list out;
          for (const auto& a : item_by_item(d, outcome, covariates, mode == "joint" ? ItemMode::joint : ItemMode::marginal))
            out.append(py::make_tuple(a.indicator, a.coefficient, a.standard_error));
          return out;
        },
        py::arg("data"), py::arg("outcome") = "Y", py::arg("covariates") = std::vector<std::string>{},
        py::arg("mode") = "marginal");

  m.def("analytic_bias", [](const Scenario& s, std::size_t target) {
    const StrategySlopes slopes = analytic_bias(s.two_wave, target);
    py::dict out;
    for (Strategy st : kStrategies) out[py::str(std::string(to_string(st)))] = slopes[st];
    out["true_effect"] = slopes.true_effect;
    return out;
  }, py::arg("scenario"), py::arg("target") = 0);

  m.def("simulate_two_wave", [](const Scenario& s, std::size_t n, std::uint64_t seed) {
    return dataset_to_dict(simulate_two_wave(s.two_wave, n, seed));
  }, py::arg("scenario"), py::arg("n"), py::arg("seed"));

  m.def("run_config",
        [](const std::string& text, std::optional<std::filesystem::path> out_dir, std::optional<std::uint64_t> seed) {
          ExperimentConfig c = parse_config_text(text, ".", seed);
          const ExperimentResult r = run_experiment(c);
          py::dict out;
          out["kind"] = std::string(to_string(r.kind));
          out["pass"] = r.pass;
          out["summary"] = r.summary;
          out["header"] = r.table.header;
          out["rows"] = r.table.rows;
          out["config_hash"] = config_hash(c);
          if (out_dir) {
            c.out_dir = *out_dir;
            out["files"] = write_reports(c, r);
          }
          return out;
        },
        py::arg("config"), py::arg("out_dir") = py::none(), py::arg("seed") = py::none());
}
