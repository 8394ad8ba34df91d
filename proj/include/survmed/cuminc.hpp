#ifndef SURVMED_CUMINC_HPP
#define SURVMED_CUMINC_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <ostream>
#include <vector>

#include "survmed/cox.hpp"
#include "survmed/dataset_io.hpp"
#include "survmed/error.hpp"
#include "survmed/pipeline.hpp"

namespace survmed {

struct CifCurve {
  int cause = 1;
  int a = 0;
  int a_star = 0;
  std::vector<double> times;
  std::vector<double> cif;
  std::vector<double> survival;  // overall S(t) on the same grid
};

struct CifDiagnostics {
  std::size_t clipped_hazards = 0;  // grid points where sum_j h_j > 1
};

/// Counterfactual cumulative incidence under (a, a*) on the merged jump grid:
/// h_j(s) = dLambda_0^j(s) exp(alpha_1j a + alpha_2j a* [+ alpha_3j a a*]),
/// S(s) = prod_{u<=s} (1 - sum_j h_j(u)), F_j(t) = sum_{s<=t} S(s-) h_j(s).
/// One curve per fitted cause; a cause that was not fitted contributes no hazard.
inline std::vector<CifCurve> cumulative_incidence(const NaturalEffectFit& fit, int a, int a_star,
                                                  CifDiagnostics* diag = nullptr) {
  if (fit.model == ModelKind::ConditionalOnBaseline) {
    throw Error("cuminc", ErrorCode::Unsupported, "cumulative incidence is available for models 1 and 2 only");
  }
  std::vector<double> grid;
  for (const auto& cf : fit.causes) {
    grid.insert(grid.end(), cf.baseline.jump_times.begin(), cf.baseline.jump_times.end());
  }
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

  const std::size_t J = fit.causes.size();
  std::vector<std::vector<double>> h(J, std::vector<double>(grid.size(), 0.0));
  for (std::size_t j = 0; j < J; ++j) {
    const auto& cf = fit.causes[j];
    const auto& c = cf.cox.coefficients;
    double lp = (c.size() > 0 ? c(0) * a : 0.0) + (c.size() > 1 ? c(1) * a_star : 0.0);
    if (fit.model == ModelKind::Interaction && c.size() > 2) lp += c(2) * a * a_star;
    const double rr = std::exp(lp);
    for (std::size_t q = 0; q < cf.baseline.jump_times.size(); ++q) {
      const auto pos = static_cast<std::size_t>(
          std::lower_bound(grid.begin(), grid.end(), cf.baseline.jump_times[q]) - grid.begin());
      h[j][pos] += cf.baseline.increments[q] * rr;
    }
  }

  std::vector<CifCurve> out(J);
  for (std::size_t j = 0; j < J; ++j) {
    out[j].cause = fit.causes[j].cause;
    out[j].a = a;
    out[j].a_star = a_star;
    out[j].times = grid;
    out[j].cif.resize(grid.size());
    out[j].survival.resize(grid.size());
  }
  double surv = 1.0;
  std::vector<double> F(J, 0.0);
  for (std::size_t q = 0; q < grid.size(); ++q) {
    double total = 0.0;
    for (std::size_t j = 0; j < J; ++j) total += h[j][q];
    double scale = 1.0;
    if (total > 1.0) {
      // All remaining mass fails here; split it in proportion to the hazards.
      scale = 1.0 / total;
      if (diag) ++diag->clipped_hazards;
    }
    for (std::size_t j = 0; j < J; ++j) F[j] += surv * h[j][q] * scale;
    surv *= 1.0 - std::min(total, 1.0);
    for (std::size_t j = 0; j < J; ++j) {
      out[j].cif[q] = F[j];
      out[j].survival[q] = surv;
    }
  }
  return out;
}

/// CSV with columns time, cause, cif, surv.
inline void write_cif_csv(std::ostream& out, const std::vector<CifCurve>& curves) {
  out << "time,cause,cif,surv\n";
  for (const auto& c : curves) {
    for (std::size_t q = 0; q < c.times.size(); ++q) {
      out << format_number(c.times[q]) << ',' << c.cause << ',' << format_number(c.cif[q]) << ','
          << format_number(c.survival[q]) << '\n';
    }
  }
}

}  // namespace survmed

#endif  // SURVMED_CUMINC_HPP
