#ifndef SURVMED_COX_HPP
#define SURVMED_COX_HPP

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "survmed/error.hpp"
#include "survmed/glm.hpp"

namespace survmed {

/// Counting-process rows (start, stop] in struct-of-arrays form.
struct SurvivalRows {
  std::vector<double> start;
  std::vector<double> stop;
  std::vector<int> status;
  Eigen::MatrixXd X;  // rows x covariates, no intercept
  std::vector<double> weight;
  std::vector<std::string> covariate_names;

  std::size_t size() const { return stop.size(); }
};

struct CoxFit {
  int cause = 1;
  Eigen::VectorXd coefficients;
  std::vector<std::string> covariate_names;
  bool converged = false;
  double log_partial_likelihood = 0.0;
  int iterations = 0;
};

/// Breslow cumulative-hazard step function of one cause.
struct BaselineHazard {
  int cause = 1;
  std::vector<double> jump_times;  // strictly increasing
  std::vector<double> increments;  // dLambda_0 at each jump

  double cumulative(double t) const {
    double total = 0.0;
    for (std::size_t i = 0; i < jump_times.size() && jump_times[i] <= t; ++i) total += increments[i];
    return total;
  }
};

struct CoxOptions {
  int max_iterations = 100;
  double score_tolerance = 1e-8;
  double loglik_tolerance = 1e-10;
  int max_halvings = 20;
  double divergence_norm = 1e3;
  double rank_tolerance = 1e-10;
};

namespace cox_detail {

// Risk-set sweep order, computed once per (rows, cause).
struct RiskSetIndex {
  std::vector<double> event_times;               // descending, distinct
  std::vector<std::vector<std::size_t>> events;  // rows failing at each event time
  std::vector<std::size_t> by_stop;              // stop descending
  std::vector<std::size_t> by_start;             // start descending

  RiskSetIndex(const SurvivalRows& rows, int cause) {
    const std::size_t n = rows.size();
    std::vector<std::size_t> ev;
    for (std::size_t i = 0; i < n; ++i) {
      if (rows.status[i] == cause) ev.push_back(i);
    }
    std::sort(ev.begin(), ev.end(), [&](std::size_t a, std::size_t b) {
      return rows.stop[a] > rows.stop[b] || (rows.stop[a] == rows.stop[b] && a < b);
    });
    for (std::size_t i : ev) {
      if (event_times.empty() || rows.stop[i] != event_times.back()) {
        event_times.push_back(rows.stop[i]);
        events.emplace_back();
      }
      events.back().push_back(i);
    }
    by_stop.resize(n);
    std::iota(by_stop.begin(), by_stop.end(), std::size_t{0});
    by_start = by_stop;
    std::stable_sort(by_stop.begin(), by_stop.end(), [&](std::size_t a, std::size_t b) { return rows.stop[a] > rows.stop[b]; });
    std::stable_sort(by_start.begin(), by_start.end(),
                     [&](std::size_t a, std::size_t b) { return rows.start[a] > rows.start[b]; });
  }
};

struct Accumulated {
  double loglik = 0.0;
  Eigen::VectorXd score;
  Eigen::MatrixXd info;
  std::vector<double> breslow;  // increment per event time, same order as RiskSetIndex
};

// One sweep over event times from last to first, keeping weighted risk-set
// sums S0, S1, S2 for the interval convention start < t <= stop.
inline Accumulated accumulate(const SurvivalRows& rows, const RiskSetIndex& idx, const Eigen::VectorXd& beta,
                              bool want_info, bool want_breslow) {
  const Eigen::Index p = rows.X.cols();
  const std::size_t n = rows.size();
  Eigen::VectorXd lp = n > 0 && p > 0 ? Eigen::VectorXd(rows.X * beta) : Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  const double shift = n > 0 ? lp.maxCoeff() : 0.0;
  Eigen::VectorXd risk = (lp.array() - shift).exp();

  Accumulated acc;
  acc.score = Eigen::VectorXd::Zero(p);
  if (want_info) acc.info = Eigen::MatrixXd::Zero(p, p);
  if (want_breslow) acc.breslow.resize(idx.event_times.size());

  double s0 = 0.0;
  Eigen::VectorXd s1 = Eigen::VectorXd::Zero(p);
  Eigen::MatrixXd s2 = Eigen::MatrixXd::Zero(want_info ? p : 0, want_info ? p : 0);
  std::size_t in = 0, out = 0;
  auto update = [&](std::size_t i, double sign) {
    const double wr = sign * rows.weight[i] * risk(i);
    s0 += wr;
    if (p > 0) {
      s1.noalias() += wr * rows.X.row(static_cast<Eigen::Index>(i)).transpose();
      if (want_info) {
        s2.noalias() += wr * rows.X.row(static_cast<Eigen::Index>(i)).transpose() * rows.X.row(static_cast<Eigen::Index>(i));
      }
    }
  };
  for (std::size_t e = 0; e < idx.event_times.size(); ++e) {
    const double t = idx.event_times[e];
    while (in < n && rows.stop[idx.by_stop[in]] >= t) update(idx.by_stop[in++], 1.0);
    while (out < n && rows.start[idx.by_start[out]] >= t) update(idx.by_start[out++], -1.0);

    double dw = 0.0;
    Eigen::VectorXd xs = Eigen::VectorXd::Zero(p);
    for (std::size_t i : idx.events[e]) {
      dw += rows.weight[i];
      acc.loglik += rows.weight[i] * lp(static_cast<Eigen::Index>(i));
      if (p > 0) xs.noalias() += rows.weight[i] * rows.X.row(static_cast<Eigen::Index>(i)).transpose();
    }
    acc.loglik -= dw * (std::log(s0) + shift);
    if (p > 0) {
      const Eigen::VectorXd mean = s1 / s0;
      acc.score.noalias() += xs - dw * mean;
      if (want_info) acc.info.noalias() += dw * (s2 / s0 - mean * mean.transpose());
    }
    if (want_breslow) acc.breslow[e] = dw / (s0 * std::exp(shift));
  }
  return acc;
}

inline void check_rows(const SurvivalRows& rows, const char* stage) {
  const std::size_t n = rows.size();
  if (rows.start.size() != n || rows.status.size() != n || rows.weight.size() != n ||
      static_cast<std::size_t>(rows.X.rows()) != n) {
    throw Error(stage, ErrorCode::InvalidInput, "survival row arrays have inconsistent lengths");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!(rows.start[i] < rows.stop[i])) throw Error(stage, ErrorCode::InvalidInput, "interval with start >= stop");
    if (!(rows.weight[i] > 0.0) || !std::isfinite(rows.weight[i])) {
      throw Error(stage, ErrorCode::InvalidInput, "case weights must be positive and finite");
    }
  }
  if (!rows.X.allFinite()) throw Error(stage, ErrorCode::InvalidInput, "non-finite covariates");
}

}  // namespace cox_detail

/// Weighted Breslow partial log-likelihood for `cause`.
inline double cox_partial_loglik(const SurvivalRows& rows, int cause, const Eigen::VectorXd& beta) {
  cox_detail::RiskSetIndex idx(rows, cause);
  return cox_detail::accumulate(rows, idx, beta, false, false).loglik;
}

/// Weighted partial-likelihood score: per event time, weighted case covariates
/// minus the weighted risk-set mean.
inline Eigen::VectorXd cox_score(const SurvivalRows& rows, int cause, const Eigen::VectorXd& beta) {
  cox_detail::RiskSetIndex idx(rows, cause);
  return cox_detail::accumulate(rows, idx, beta, false, false).score;
}

/// Newton-Raphson on the weighted partial likelihood; events of any other
/// code are treated as censoring. Ties use the Breslow approximation.
inline CoxFit fit_weighted_cox(const SurvivalRows& rows, int cause, const CoxOptions& opt = {}) {
  cox_detail::check_rows(rows, "cox");
  const Eigen::Index p = rows.X.cols();
  cox_detail::RiskSetIndex idx(rows, cause);
  if (idx.event_times.empty()) {
    throw Error("cox", ErrorCode::NoEventsForCause, "no events of cause " + std::to_string(cause));
  }
  if (p > 0) {
    // A constant covariate is absorbed by the baseline hazard, so check [1, X].
    Eigen::MatrixXd aug(rows.X.rows(), p + 1);
    aug.col(0).setOnes();
    aug.rightCols(p) = rows.X;
    glm_detail::check_design(aug, opt.rank_tolerance, "cox");
  }

  CoxFit fit;
  fit.cause = cause;
  fit.covariate_names = rows.covariate_names;
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  auto acc = cox_detail::accumulate(rows, idx, beta, true, false);
  if (p == 0) {
    fit.coefficients = beta;
    fit.converged = true;
    fit.log_partial_likelihood = acc.loglik;
    return fit;
  }
  int small_changes = 0;
  for (int iter = 0; iter < opt.max_iterations; ++iter) {
    fit.iterations = iter;
    if (acc.score.cwiseAbs().maxCoeff() < opt.score_tolerance) {
      fit.converged = true;
      break;
    }
    Eigen::VectorXd step = acc.info.ldlt().solve(acc.score);
    if (!step.allFinite()) step = acc.info.completeOrthogonalDecomposition().solve(acc.score);
    double scale = 1.0;
    bool accepted = false;
    Eigen::VectorXd trial;
    cox_detail::Accumulated trial_acc;
    for (int h = 0; h <= opt.max_halvings; ++h) {
      trial = beta + scale * step;
      trial_acc = cox_detail::accumulate(rows, idx, trial, true, false);
      if (std::isfinite(trial_acc.loglik) && trial_acc.loglik >= acc.loglik - 1e-13 * std::abs(acc.loglik)) {
        accepted = true;
        break;
      }
      scale *= 0.5;
    }
    if (!accepted) {
      double wsum = 0.0;
      for (double w : rows.weight) wsum += w;
      fit.converged = acc.score.cwiseAbs().maxCoeff() < 1e-6 * std::max(1.0, wsum);
      break;
    }
    const double change = std::abs(trial_acc.loglik - acc.loglik);
    const double previous = acc.loglik;
    beta = trial;
    acc = std::move(trial_acc);
    fit.iterations = iter + 1;
    if (beta.norm() > opt.divergence_norm) {
      throw Error("cox", ErrorCode::MonotoneLikelihood, "coefficients diverge for cause " + std::to_string(cause));
    }
    if (change <= opt.loglik_tolerance * std::max(std::abs(previous), 1e-300) && ++small_changes == 2) {
      fit.converged = true;
      break;
    }
  }
  if (fit.converged && beta.norm() > 0.0) {
    const double doubled = cox_detail::accumulate(rows, idx, 2.0 * beta, false, false).loglik;
    if (doubled - acc.loglik > 1e-10 * std::max(1.0, std::abs(acc.loglik))) {
      throw Error("cox", ErrorCode::MonotoneLikelihood, "partial likelihood keeps increasing for cause " + std::to_string(cause));
    }
  }
  fit.coefficients = beta;
  fit.log_partial_likelihood = acc.loglik;
  return fit;
}

/// Breslow increments: weighted cause events at t over the weighted
/// relative-risk total of the risk set at t.
inline BaselineHazard breslow_baseline(const CoxFit& fit, const SurvivalRows& rows) {
  cox_detail::check_rows(rows, "cox");
  cox_detail::RiskSetIndex idx(rows, fit.cause);
  BaselineHazard bh;
  bh.cause = fit.cause;
  if (idx.event_times.empty()) return bh;
  Eigen::VectorXd beta = fit.coefficients.size() == rows.X.cols() ? fit.coefficients : Eigen::VectorXd::Zero(rows.X.cols());
  auto acc = cox_detail::accumulate(rows, idx, beta, false, true);
  for (std::size_t e = idx.event_times.size(); e-- > 0;) {
    bh.jump_times.push_back(idx.event_times[e]);
    bh.increments.push_back(acc.breslow[e]);
  }
  return bh;
}

/// Piece of a subject's covariate path: covariates x apply on (start, stop].
struct PathSegment {
  double start = 0.0;
  double stop = 0.0;
  Eigen::VectorXd x;
};

struct ProductLimitDiagnostics {
  std::size_t clipped_factors = 0;
};

inline constexpr double kSurvivalFactorFloor = 1e-6;

/// Product over censoring jumps s <= t (s < t when `inclusive` is false) of
/// 1 - exp(x(s)'theta) dLambda_0C(s), each factor clipped to [1e-6, 1].
/// Jumps beyond the end of the path contribute nothing.
inline double censoring_survival(const CoxFit& fit, const BaselineHazard& baseline,
                                 const std::vector<PathSegment>& path, double t, bool inclusive = true,
                                 ProductLimitDiagnostics* diag = nullptr) {
  double surv = 1.0;
  std::size_t seg = 0;
  for (std::size_t j = 0; j < baseline.jump_times.size(); ++j) {
    const double s = baseline.jump_times[j];
    if (inclusive ? s > t : s >= t) break;
    while (seg < path.size() && path[seg].stop < s) ++seg;
    if (seg == path.size()) break;
    if (!(path[seg].start < s)) continue;
    const double lp = fit.coefficients.size() > 0 ? path[seg].x.dot(fit.coefficients) : 0.0;
    double factor = 1.0 - std::exp(lp) * baseline.increments[j];
    if (factor < kSurvivalFactorFloor || factor > 1.0) {
      factor = std::clamp(factor, kSurvivalFactorFloor, 1.0);
      if (diag) ++diag->clipped_factors;
    }
    surv *= factor;
  }
  return surv;
}

/// censoring_survival at each of the increasing `times` in one pass.
inline std::vector<double> censoring_survival_at(const CoxFit& fit, const BaselineHazard& baseline,
                                                 const std::vector<PathSegment>& path,
                                                 const std::vector<double>& times, bool inclusive = true,
                                                 ProductLimitDiagnostics* diag = nullptr) {
  std::vector<double> out(times.size(), 1.0);
  double surv = 1.0;
  std::size_t j = 0, seg = 0;
  const std::size_t J = baseline.jump_times.size();
  for (std::size_t q = 0; q < times.size(); ++q) {
    const double t = times[q];
    for (; j < J; ++j) {
      const double s = baseline.jump_times[j];
      if (inclusive ? s > t : s >= t) break;
      while (seg < path.size() && path[seg].stop < s) ++seg;
      if (seg == path.size()) {
        j = J;
        break;
      }
      if (!(path[seg].start < s)) continue;
      const double lp = fit.coefficients.size() > 0 ? path[seg].x.dot(fit.coefficients) : 0.0;
      double factor = 1.0 - std::exp(lp) * baseline.increments[j];
      if (factor < kSurvivalFactorFloor || factor > 1.0) {
        factor = std::clamp(factor, kSurvivalFactorFloor, 1.0);
        if (diag) ++diag->clipped_factors;
      }
      surv *= factor;
    }
    out[q] = surv;
  }
  return out;
}

}  // namespace survmed

#endif  // SURVMED_COX_HPP
