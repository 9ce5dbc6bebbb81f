#pragma once

// Brute-force reference computations used as test oracles. They walk the
// joint law cell by cell and share no code with the library's enumerator.

#include <array>
#include <cmath>
#include <map>
#include <vector>

#include "mvtlab/compiled_law.hpp"
#include "mvtlab/scenario.hpp"

namespace oracle {

inline double measure(const std::vector<double>& x, const mvtlab::MeasureSpec& spec) {
  double a = 0.0;
  switch (spec.form) {
    case mvtlab::MeasureForm::sum:
      for (double v : x) a += v;
      break;
    case mvtlab::MeasureForm::mean:
      for (double v : x) a += v / static_cast<double>(x.size());
      break;
    case mvtlab::MeasureForm::weighted_sum:
      for (std::size_t i = 0; i < x.size(); ++i) a += spec.weights[i] * x[i];
      break;
    case mvtlab::MeasureForm::custom_table:
      for (const auto& e : spec.table)
        if (e.indicators == x) a = e.value;
      break;
  }
  if (!spec.cutpoints.empty()) {
    double level = 0.0;
    for (double c : spec.cutpoints) level += a >= c ? 1.0 : 0.0;
    a = level;
  }
  return a;
}

struct Sides {
  double lhs = 0.0;
  double rhs = 0.0;
};

// Both sides of the identity for a discrete scenario, contrast (a, a*).
inline Sides identity_sides(const mvtlab::Scenario& s, double a, double a_star) {
  const mvtlab::DiscreteLaw law = mvtlab::compile_discrete(s);
  const std::size_t strata = s.covariate_probs.size();
  const std::size_t versions = law.version_values.size();
  const std::size_t n = law.indicator_levels.size();
  const auto same = [](double x, double y) { return std::abs(x - y) < 1e-9; };

  // mass[c][side], outcome mass[c][side], version mass[c][k][side]
  std::vector<std::array<double, 2>> mass(strata), ymass(strata);
  std::vector<std::vector<std::array<double, 2>>> kmass(strata, std::vector<std::array<double, 2>>(versions));
  std::vector<std::vector<double>> potential(strata, std::vector<double>(versions, 0.0));

  for (std::size_t c = 0; c < strata; ++c) {
    for (std::size_t u = 0; u < law.hidden_probs.size(); ++u) {
      for (std::size_t k = 0; k < versions; ++k) {
        const double pk = s.covariate_probs[c] * law.hidden_probs[u] * law.version_probs[u][c][k];
        std::vector<std::size_t> idx(n, 0);
        while (true) {
          double px = 1.0, shift = 0.0;
          std::vector<double> x(n);
          for (std::size_t i = 0; i < n; ++i) {
            px *= law.indicator_probs[i][u][k][idx[i]];
            x[i] = law.indicator_levels[i][idx[i]];
            shift += law.indicator_effects[i] * x[i];
          }
          const double mu = law.outcome_means[c][k] + shift + law.hidden_outcome_effects[u];
          potential[c][k] += law.hidden_probs[u] * px * mu;
          const double p = pk * px;
          if (p > 0.0) {
            const double value = measure(x, s.measure);
            for (int side = 0; side < 2; ++side) {
              if (!same(value, side == 0 ? a : a_star)) continue;
              mass[c][side] += p;
              ymass[c][side] += p * (mu + law.version_breach[k]);
              kmass[c][k][side] += p;
            }
          }
          std::size_t i = n;
          bool done = true;
          while (i > 0) {
            --i;
            if (++idx[i] < law.indicator_levels[i].size()) {
              done = false;
              break;
            }
            idx[i] = 0;
          }
          if (done) break;
        }
      }
    }
  }
  Sides out;
  for (std::size_t c = 0; c < strata; ++c) {
    const double pc = s.covariate_probs[c];
    out.lhs += pc * (ymass[c][0] / mass[c][0] - ymass[c][1] / mass[c][1]);
    for (std::size_t k = 0; k < versions; ++k)
      out.rhs += pc * potential[c][k] * (kmass[c][k][0] / mass[c][0] - kmass[c][k][1] / mass[c][1]);
  }
  return out;
}

}  // namespace oracle
