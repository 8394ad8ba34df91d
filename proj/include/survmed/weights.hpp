#ifndef SURVMED_WEIGHTS_HPP
#define SURVMED_WEIGHTS_HPP

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "survmed/core_data.hpp"
#include "survmed/cox.hpp"
#include "survmed/dataset_io.hpp"
#include "survmed/error.hpp"
#include "survmed/glm.hpp"
#include "survmed/reshape.hpp"
#include "survmed/terms.hpp"

namespace survmed {

// Treatment and mediator probabilities below this are positivity failures.
inline constexpr double kProbabilityFloor = 1e-6;

enum class CensoringMode { None, ExposureOnly, HistoryStabilized, HistoryUnstabilized };

inline std::string to_string(CensoringMode m) {
  switch (m) {
    case CensoringMode::None: return "none";
    case CensoringMode::ExposureOnly: return "exposure";
    case CensoringMode::HistoryStabilized: return "history";
    case CensoringMode::HistoryUnstabilized: return "history_unstabilized";
  }
  return "none";
}

inline std::optional<CensoringMode> censoring_mode_from(const std::string& s) {
  if (s == "none") return CensoringMode::None;
  if (s == "exposure" || s == "exposure_only") return CensoringMode::ExposureOnly;
  if (s == "history" || s == "history_stabilized") return CensoringMode::HistoryStabilized;
  if (s == "history_unstabilized") return CensoringMode::HistoryUnstabilized;
  return std::nullopt;
}

namespace weights_detail {

inline RowContext context(const SubjectRecord& s, const VisitSchedule& schedule, std::size_t visit, int exposure) {
  return RowContext{&s, visit, schedule.time(visit), exposure};
}

inline Eigen::RowVectorXd design_row(const Formula& f, const RowContext& ctx) {
  Eigen::RowVectorXd x(f.size() + 1);
  x(0) = 1.0;
  f.eval_into(ctx, x.tail(static_cast<Eigen::Index>(f.size())));
  return x;
}

}  // namespace weights_detail

/// Exposure model Pr(A | L_0); regressors are evaluated at visit 0.
struct TreatmentModel {
  Formula formula;
  FittedGlm fit;

  Eigen::VectorXd probabilities(const SubjectRecord& s, const VisitSchedule& schedule) const {
    return predict_probs(fit, weights_detail::design_row(formula, weights_detail::context(s, schedule, 0, s.exposure)));
  }
};

inline TreatmentModel fit_treatment_model(const Dataset& data, Formula formula) {
  for (const auto& t : formula.terms) {
    for (const auto& f : t.factors()) {
      if (f.kind != Term::Kind::Baseline) {
        throw Error("config", ErrorCode::ConfigError,
                    "treatment model term '" + t.label() + "' must use baseline covariates only");
      }
    }
  }
  const std::size_t n = data.subjects.size();
  Eigen::MatrixXd X(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(formula.size()));
  std::vector<int> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& s = data.subjects[i];
    formula.eval_into(weights_detail::context(s, data.schedule, 0, s.exposure), X.row(static_cast<Eigen::Index>(i)));
    y[i] = s.exposure;
  }
  TreatmentModel m;
  m.formula = std::move(formula);
  m.fit = fit_multinomial(DesignMatrix::with_intercept(std::move(X), m.formula.labels()), y,
                          data.variables.exposure_levels);
  if (!m.fit.converged) throw Error("treatment_model", ErrorCode::NotConverged, "exposure model did not converge");
  return m;
}

/// w^ttm: reciprocal of the fitted probability of the observed exposure.
inline double treatment_weight(const SubjectRecord& s, const VisitSchedule& schedule, const TreatmentModel& model) {
  const double p = model.probabilities(s, schedule)(s.exposure);
  if (p < kProbabilityFloor) {
    throw Error("weights", ErrorCode::DegeneratePropensity,
                "subject " + s.id + ": Pr(A = " + std::to_string(s.exposure) + " | L0) = " + format_number(p));
  }
  return 1.0 / p;
}

/// Mediator model Pr(M_k | a, history): one pooled fit, or one fit per visit.
struct MediatorModel {
  bool pooled = true;
  std::vector<Formula> formulas;  // one when pooled, else one per visit
  std::vector<FittedGlm> fits;

  std::size_t slot(std::size_t visit) const { return pooled ? 0 : visit - 1; }

  Eigen::VectorXd probabilities(const SubjectRecord& s, const VisitSchedule& schedule, std::size_t visit,
                                int exposure) const {
    const std::size_t k = slot(visit);
    return predict_probs(fits[k],
                         weights_detail::design_row(formulas[k], weights_detail::context(s, schedule, visit, exposure)));
  }
};

// Visits at which subject s was measured: 1 .. floor_visit(follow-up).
inline std::size_t measured_visits(const SubjectRecord& s, const VisitSchedule& schedule) {
  return floor_visit(s.followup_time, schedule);
}

inline void check_mediator_formula(const Formula& f) {
  for (const auto& t : f.terms) {
    if (auto lag = t.mediator_lag(); lag && *lag == 0) {
      throw Error("config", ErrorCode::ConfigError,
                  "mediator model term '" + t.label() + "' uses the current mediator M_t");
    }
  }
}

/// Fits on every (subject, visit k >= 1) pair with the subject still at risk
/// at t_k; the response is M_k.
inline MediatorModel fit_mediator_model(const Dataset& data, std::vector<Formula> formulas, bool pooled) {
  const std::size_t K = data.schedule.size();
  if (formulas.empty() || (!pooled && formulas.size() != K)) {
    throw Error("config", ErrorCode::ConfigError,
                "per-visit mediator models need one term list per visit (" + std::to_string(K) + ")");
  }
  for (const auto& f : formulas) check_mediator_formula(f);

  MediatorModel m;
  m.pooled = pooled;
  m.formulas = std::move(formulas);
  const std::size_t slots = pooled ? 1 : K;
  std::vector<std::size_t> count(slots, 0);
  for (const auto& s : data.subjects) {
    const std::size_t last = measured_visits(s, data.schedule);
    for (std::size_t k = 1; k <= last; ++k) ++count[m.slot(k)];
  }
  for (std::size_t slot = 0; slot < slots; ++slot) {
    const Formula& f = m.formulas[slot];
    Eigen::MatrixXd X(static_cast<Eigen::Index>(count[slot]), static_cast<Eigen::Index>(f.size()));
    std::vector<int> y;
    y.reserve(count[slot]);
    Eigen::Index r = 0;
    for (const auto& s : data.subjects) {
      const std::size_t last = measured_visits(s, data.schedule);
      for (std::size_t k = 1; k <= last; ++k) {
        if (m.slot(k) != slot) continue;
        if (!s.mediator[k - 1]) {
          throw Error("mediator_model", ErrorCode::InvalidInput,
                      "subject " + s.id + " has no mediator at visit " + std::to_string(k) + " while at risk");
        }
        f.eval_into(weights_detail::context(s, data.schedule, k, s.exposure), X.row(r++));
        y.push_back(*s.mediator[k - 1]);
      }
    }
    if (y.empty()) {
      throw Error("mediator_model", ErrorCode::InvalidInput,
                  "no mediator measurements" + (pooled ? std::string() : " at visit " + std::to_string(slot + 1)));
    }
    m.fits.push_back(fit_multinomial(DesignMatrix::with_intercept(std::move(X), f.labels()), y,
                                     data.variables.mediator_levels));
    if (!m.fits.back().converged) {
      throw Error("mediator_model", ErrorCode::NotConverged, "mediator model did not converge");
    }
  }
  return m;
}

/// Cumulative mediator ratios for k = 0 .. last: entry k is
/// prod_{s<=k} Pr(M_s | a*, ...) / Pr(M_s | a, ...). Entry 0 is the empty product.
inline std::vector<double> mediator_weight_path(const SubjectRecord& s, const VisitSchedule& schedule, int a,
                                                int a_star, const MediatorModel& model, std::size_t last) {
  std::vector<double> out(last + 1, 1.0);
  for (std::size_t k = 1; k <= last; ++k) {
    double ratio = 1.0;
    if (a_star != a) {
      if (!s.mediator[k - 1]) {
        throw Error("weights", ErrorCode::InvalidInput,
                    "subject " + s.id + " has no mediator at visit " + std::to_string(k));
      }
      const int m = *s.mediator[k - 1];
      const double den = model.probabilities(s, schedule, k, a)(m);
      if (den < kProbabilityFloor) {
        throw Error("weights", ErrorCode::DegenerateMediatorProb,
                    "subject " + s.id + " visit " + std::to_string(k) + ": Pr(M) = " + format_number(den));
      }
      ratio = model.probabilities(s, schedule, k, a_star)(m) / den;
    }
    out[k] = out[k - 1] * ratio;
  }
  return out;
}

/// w^med(k, a, a*) for visit index k.
inline double mediator_weight(const SubjectRecord& s, const VisitSchedule& schedule, std::size_t k, int a, int a_star,
                              const MediatorModel& model) {
  if (k == 0 || a == a_star) return 1.0;
  return mediator_weight_path(s, schedule, a, a_star, model, k)[k];
}

/// Cox model for the censoring hazard fitted on the long rows.
struct CensoringModel {
  Formula formula;
  CoxFit fit;
  BaselineHazard baseline;
};

namespace weights_detail {

// A row ends in a censoring event when it is the subject's last row, the
// status is Censored, and the time is before the administrative end.
inline bool is_censoring_event(const CountingProcessRow& r, const Dataset& data, std::optional<double> study_end) {
  if (r.status != EventStatus::Censored) return false;
  const auto& s = data.subjects[r.subject];
  if (r.stop != s.followup_time) return false;
  if (study_end && r.stop >= *study_end - kTimeTolerance) return false;
  return true;
}

inline std::vector<PathSegment> censoring_path(const Formula& f, const Dataset& data,
                                               const std::vector<CountingProcessRow>& rows, std::size_t first,
                                               std::size_t last) {
  std::vector<PathSegment> path;
  for (std::size_t r = first; r < last; ++r) {
    const auto& row = rows[r];
    const auto& s = data.subjects[row.subject];
    Eigen::VectorXd x(static_cast<Eigen::Index>(f.size()));
    f.eval_into(context(s, data.schedule, row.visit, row.exposure), x);
    path.push_back({row.start, row.stop, std::move(x)});
  }
  return path;
}

}  // namespace weights_detail

/// Censoring hazard lambda_0C(t) exp(theta' x(floor t)) fitted on the
/// unexpanded long rows; censorings at or after `study_end` are administrative.
inline CensoringModel fit_censoring_model(const Dataset& data, const std::vector<CountingProcessRow>& rows,
                                          Formula formula, std::optional<double> study_end) {
  SurvivalRows sr;
  const std::size_t n = rows.size();
  sr.start.resize(n);
  sr.stop.resize(n);
  sr.status.resize(n);
  sr.weight.assign(n, 1.0);
  sr.X.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(formula.size()));
  sr.covariate_names = formula.labels();
  for (std::size_t i = 0; i < n; ++i) {
    const auto& r = rows[i];
    sr.start[i] = r.start;
    sr.stop[i] = r.stop;
    sr.status[i] = weights_detail::is_censoring_event(r, data, study_end) ? 1 : 0;
    formula.eval_into(weights_detail::context(data.subjects[r.subject], data.schedule, r.visit, r.exposure),
                      sr.X.row(static_cast<Eigen::Index>(i)));
  }
  CensoringModel m;
  m.formula = std::move(formula);
  bool any = std::find(sr.status.begin(), sr.status.end(), 1) != sr.status.end();
  if (!any) {
    // Nothing to model: survival is identically one.
    m.fit.cause = 1;
    m.fit.coefficients = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m.formula.size()));
    m.fit.covariate_names = sr.covariate_names;
    m.fit.converged = true;
    m.baseline.cause = 1;
    return m;
  }
  try {
    m.fit = fit_weighted_cox(sr, 1);
  } catch (const Error& e) {
    throw Error("censoring_model", e.code(), e.detail());
  }
  if (!m.fit.converged) throw Error("censoring_model", ErrorCode::NotConverged, "censoring model did not converge");
  m.baseline = breslow_baseline(m.fit, sr);
  return m;
}

/// w^cen at time t (left limit, i.e. over censoring jumps strictly before t).
/// Without a stabilizer: 1 / G_full(t). With one: G_stab(t) / G_full(t).
inline double censoring_weight(const SubjectRecord& s, const VisitSchedule& schedule, double t,
                               const CensoringModel& full, const CensoringModel* stabilizer = nullptr,
                               ProductLimitDiagnostics* diag = nullptr) {
  auto path_of = [&](const Formula& f) {
    std::vector<PathSegment> path;
    const std::size_t last = floor_visit(s.followup_time, schedule);
    for (std::size_t k = 0; k <= last; ++k) {
      Eigen::VectorXd x(static_cast<Eigen::Index>(f.size()));
      f.eval_into(weights_detail::context(s, schedule, k, s.exposure), x);
      path.push_back({schedule.time(k), k == last ? s.followup_time : schedule.time(k + 1), std::move(x)});
    }
    return path;
  };
  const double den = censoring_survival(full.fit, full.baseline, path_of(full.formula), t, false, diag);
  const double num =
      stabilizer ? censoring_survival(stabilizer->fit, stabilizer->baseline, path_of(stabilizer->formula), t, false, diag)
                 : 1.0;
  return num / den;
}

/// Components of one expanded row's weight.
struct WeightBundle {
  double treatment = 1.0;
  double mediator = 1.0;
  double censoring = 1.0;
  double total = 1.0;
};

struct ComponentSummary {
  double min = 0.0;
  double max = 0.0;
  double mean = 0.0;
};

struct WeightDiagnostics {
  ComponentSummary treatment, mediator, censoring, total;
  std::size_t clipped_censoring_factors = 0;
  double effective_sample_size = 0.0;  // (sum w)^2 / sum w^2 over expanded rows
  std::size_t truncated = 0;
  std::optional<double> lower_cap, upper_cap;
};

struct NuisanceModels {
  TreatmentModel treatment;
  MediatorModel mediator;
  std::optional<CensoringModel> censoring;   // full-history (or exposure-only) model
  std::optional<CensoringModel> stabilizer;  // exposure-only numerator
};

/// Linear-interpolation quantile (R type 7) of unsorted values.
inline double quantile7(std::vector<double> v, double p) {
  if (v.empty()) return std::nan("");
  std::sort(v.begin(), v.end());
  const double h = (static_cast<double>(v.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

namespace weights_detail {

inline ComponentSummary summarize(const std::vector<WeightBundle>& b, double WeightBundle::*field) {
  ComponentSummary s;
  if (b.empty()) return s;
  s.min = s.max = b[0].*field;
  double sum = 0.0;
  for (const auto& w : b) {
    s.min = std::min(s.min, w.*field);
    s.max = std::max(s.max, w.*field);
    sum += w.*field;
  }
  s.mean = sum / static_cast<double>(b.size());
  return s;
}

}  // namespace weights_detail

/// Fills case_weight of every expanded row with w^ttm(a) * w^med(floor, a, a*) * w^cen,
/// optionally capping totals at the `truncate_pct` and 100 - `truncate_pct` percentiles.
inline std::vector<WeightBundle> assign_weights(const Dataset& data, const std::vector<CountingProcessRow>& rows,
                                                std::vector<ExpandedRow>& expanded, const NuisanceModels& models,
                                                CensoringMode mode, std::optional<double> truncate_pct,
                                                WeightDiagnostics* diagnostics = nullptr) {
  const int P = data.variables.exposure_levels;
  const std::size_t nsub = data.subjects.size();
  if ((mode != CensoringMode::None && !models.censoring) ||
      (mode == CensoringMode::HistoryStabilized && !models.stabilizer)) {
    throw Error("weights", ErrorCode::ConfigError, "censoring weights requested without a censoring model");
  }

  // Per-row treatment and censoring parts depend on the observed exposure only.
  std::vector<double> ttm(nsub);
  std::vector<double> cen(rows.size(), 1.0);
  std::vector<std::vector<double>> med(nsub * static_cast<std::size_t>(P));
  ProductLimitDiagnostics pl;

  std::size_t r0 = 0;
  for (std::size_t i = 0; i < nsub; ++i) {
    const auto& s = data.subjects[i];
    std::size_t r1 = r0;
    while (r1 < rows.size() && rows[r1].subject == i) ++r1;
    if (r1 == r0) throw Error("weights", ErrorCode::InvalidInput, "subject " + s.id + " has no long rows");
    try {
      ttm[i] = treatment_weight(s, data.schedule, models.treatment);
      const std::size_t last = rows[r1 - 1].visit;
      for (int as = 0; as < P; ++as) {
        med[i * static_cast<std::size_t>(P) + static_cast<std::size_t>(as)] =
            mediator_weight_path(s, data.schedule, s.exposure, as, models.mediator, last);
      }
    } catch (const Error& e) {
      throw Error(e.stage(), e.code(), e.detail() + " (row " + std::to_string(r0) + ")");
    }
    if (mode != CensoringMode::None) {
      std::vector<double> stops;
      for (std::size_t r = r0; r < r1; ++r) stops.push_back(rows[r].stop);
      const auto& full = *models.censoring;
      auto g = censoring_survival_at(full.fit, full.baseline,
                                     weights_detail::censoring_path(full.formula, data, rows, r0, r1), stops, false, &pl);
      std::vector<double> num(stops.size(), 1.0);
      if (mode == CensoringMode::HistoryStabilized) {
        const auto& st = *models.stabilizer;
        num = censoring_survival_at(st.fit, st.baseline, weights_detail::censoring_path(st.formula, data, rows, r0, r1),
                                    stops, false, &pl);
      }
      for (std::size_t r = r0; r < r1; ++r) cen[r] = num[r - r0] / g[r - r0];
    }
    r0 = r1;
  }

  std::vector<WeightBundle> out(expanded.size());
  for (std::size_t e = 0; e < expanded.size(); ++e) {
    const auto& row = rows[expanded[e].row];
    auto& b = out[e];
    b.treatment = ttm[row.subject];
    b.mediator = med[row.subject * static_cast<std::size_t>(P) + static_cast<std::size_t>(expanded[e].hypothetical_exposure)]
                    [row.visit];
    b.censoring = cen[expanded[e].row];
    b.total = b.treatment * b.mediator * b.censoring;
  }

  WeightDiagnostics diag;
  if (truncate_pct && *truncate_pct > 0.0) {
    if (*truncate_pct >= 50.0) throw Error("weights", ErrorCode::ConfigError, "truncate_pct must be below 50");
    std::vector<double> totals;
    totals.reserve(out.size());
    for (const auto& b : out) totals.push_back(b.total);
    const double lo = quantile7(totals, *truncate_pct / 100.0);
    const double hi = quantile7(std::move(totals), 1.0 - *truncate_pct / 100.0);
    diag.lower_cap = lo;
    diag.upper_cap = hi;
    for (auto& b : out) {
      if (b.total < lo || b.total > hi) {
        b.total = std::clamp(b.total, lo, hi);
        ++diag.truncated;
      }
    }
  }
  for (std::size_t e = 0; e < expanded.size(); ++e) expanded[e].case_weight = out[e].total;

  if (diagnostics) {
    diag.treatment = weights_detail::summarize(out, &WeightBundle::treatment);
    diag.mediator = weights_detail::summarize(out, &WeightBundle::mediator);
    diag.censoring = weights_detail::summarize(out, &WeightBundle::censoring);
    diag.total = weights_detail::summarize(out, &WeightBundle::total);
    diag.clipped_censoring_factors = pl.clipped_factors;
    double s1 = 0.0, s2 = 0.0;
    for (const auto& b : out) {
      s1 += b.total;
      s2 += b.total * b.total;
    }
    diag.effective_sample_size = s2 > 0.0 ? s1 * s1 / s2 : 0.0;
    *diagnostics = diag;
  }
  return out;
}

/// Per-row weight components as CSV.
inline void write_weights_csv(std::ostream& out, const Dataset& data, const std::vector<CountingProcessRow>& rows,
                              const std::vector<ExpandedRow>& expanded, const std::vector<WeightBundle>& bundles) {
  out << "Individual,Start,Stop,Status,A,Astar,treatment_w,mediator_w,censoring_w,total\n";
  for (std::size_t e = 0; e < expanded.size(); ++e) {
    const auto& r = rows[expanded[e].row];
    const auto& b = bundles[e];
    out << data.subjects[r.subject].id << ',' << format_number(r.start) << ',' << format_number(r.stop) << ','
        << code_of(r.status) << ',' << r.exposure << ',' << expanded[e].hypothetical_exposure << ','
        << format_number(b.treatment) << ',' << format_number(b.mediator) << ',' << format_number(b.censoring) << ','
        << format_number(b.total) << '\n';
  }
}

}  // namespace survmed

#endif  // SURVMED_WEIGHTS_HPP
