#ifndef SURVMED_GLM_HPP
#define SURVMED_GLM_HPP

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "survmed/error.hpp"

namespace survmed {

/// n x p regressors; column 0 is the intercept.
struct DesignMatrix {
  Eigen::MatrixXd X;
  std::vector<std::string> column_names;

  static DesignMatrix with_intercept(Eigen::MatrixXd regressors, std::vector<std::string> names) {
    DesignMatrix d;
    d.X.resize(regressors.rows(), regressors.cols() + 1);
    d.X.col(0).setOnes();
    d.X.rightCols(regressors.cols()) = regressors;
    d.column_names.reserve(names.size() + 1);
    d.column_names.push_back("(intercept)");
    for (auto& n : names) d.column_names.push_back(std::move(n));
    return d;
  }
};

/// Multinomial logit with category 0 as reference; row c-1 of `coefficients`
/// holds the linear predictor of category c.
struct FittedGlm {
  Eigen::MatrixXd coefficients;
  std::vector<std::string> column_names;
  int categories = 2;
  bool converged = false;
  double log_likelihood = 0.0;
  int iterations = 0;
};

struct GlmOptions {
  int max_iterations = 100;
  double score_tolerance = 1e-8;
  double loglik_tolerance = 1e-10;  // relative change
  int max_halvings = 20;
  double separation_norm = 1e3;
  double rank_tolerance = 1e-10;  // relative to the largest singular value
};

namespace glm_detail {

inline void check_design(const Eigen::MatrixXd& X, double rank_tol, const char* stage) {
  if (X.rows() < 1 || X.cols() < 1) throw Error(stage, ErrorCode::InvalidInput, "empty design matrix");
  if (!X.allFinite()) throw Error(stage, ErrorCode::InvalidInput, "non-finite entries in design matrix");
  Eigen::BDCSVD<Eigen::MatrixXd> svd(X);
  const auto& sv = svd.singularValues();
  if (X.rows() < X.cols() || sv(sv.size() - 1) <= rank_tol * sv(0)) {
    throw Error(stage, ErrorCode::RankDeficient,
                "design matrix is rank deficient (" + std::to_string(X.rows()) + " x " + std::to_string(X.cols()) + ")");
  }
}

// Softmax with reference category 0, evaluated stably.
inline void softmax_row(const Eigen::MatrixXd& B, const Eigen::Ref<const Eigen::RowVectorXd>& x,
                        Eigen::Ref<Eigen::VectorXd> probs) {
  const Eigen::Index C = B.rows() + 1;
  double mx = 0.0;
  probs(0) = 0.0;
  for (Eigen::Index c = 1; c < C; ++c) {
    probs(c) = B.row(c - 1).dot(x);
    mx = std::max(mx, probs(c));
  }
  double total = 0.0;
  for (Eigen::Index c = 0; c < C; ++c) {
    probs(c) = std::exp(probs(c) - mx);
    total += probs(c);
  }
  probs /= total;
}

}  // namespace glm_detail

/// Weighted multinomial log-likelihood at coefficient matrix B.
inline double multinomial_loglik(const Eigen::MatrixXd& B, const Eigen::MatrixXd& X, std::span<const int> y,
                                 std::span<const double> w = {}) {
  const Eigen::MatrixXd eta = X * B.transpose();
  double ll = 0.0;
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const double wi = w.empty() ? 1.0 : w[static_cast<std::size_t>(i)];
    const double mx = std::max(0.0, eta.row(i).maxCoeff());
    const double total = std::exp(-mx) + (eta.row(i).array() - mx).exp().sum();
    const int yi = y[static_cast<std::size_t>(i)];
    ll += wi * ((yi == 0 ? 0.0 : eta(i, yi - 1)) - mx - std::log(total));
  }
  return ll;
}

/// Gradient of multinomial_loglik, same shape as B.
inline Eigen::MatrixXd multinomial_score(const Eigen::MatrixXd& B, const Eigen::MatrixXd& X, std::span<const int> y,
                                         std::span<const double> w = {}) {
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(B.rows(), B.cols());
  Eigen::VectorXd probs(B.rows() + 1);
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const double wi = w.empty() ? 1.0 : w[static_cast<std::size_t>(i)];
    glm_detail::softmax_row(B, X.row(i), probs);
    const int yi = y[static_cast<std::size_t>(i)];
    for (Eigen::Index c = 1; c <= B.rows(); ++c) {
      g.row(c - 1) += wi * ((yi == c ? 1.0 : 0.0) - probs(c)) * X.row(i);
    }
  }
  return g;
}

/// Maximum-likelihood multinomial logit by Newton-Raphson with step halving.
/// Throws RankDeficient for a collinear design and SeparationDetected when a
/// coefficient vector diverges.
inline FittedGlm fit_multinomial(const DesignMatrix& design, std::span<const int> y, int categories,
                                 std::span<const double> case_weights = {}, const GlmOptions& opt = {}) {
  const Eigen::MatrixXd& X = design.X;
  const Eigen::Index n = X.rows(), p = X.cols();
  if (categories < 2) throw Error("glm", ErrorCode::InvalidInput, "need at least two response categories");
  if (static_cast<Eigen::Index>(y.size()) != n) throw Error("glm", ErrorCode::InvalidInput, "response length mismatch");
  if (!case_weights.empty() && static_cast<Eigen::Index>(case_weights.size()) != n) {
    throw Error("glm", ErrorCode::InvalidInput, "weight length mismatch");
  }
  for (int yi : y) {
    if (yi < 0 || yi >= categories) throw Error("glm", ErrorCode::InvalidInput, "response category out of range");
  }
  for (double wi : case_weights) {
    if (!(wi > 0.0) || !std::isfinite(wi)) throw Error("glm", ErrorCode::InvalidInput, "case weights must be positive");
  }
  glm_detail::check_design(X, opt.rank_tolerance, "glm");

  const Eigen::Index m = categories - 1;
  const Eigen::Index dim = m * p;
  FittedGlm fit;
  fit.categories = categories;
  fit.column_names = design.column_names;
  Eigen::MatrixXd B = Eigen::MatrixXd::Zero(m, p);
  double ll = multinomial_loglik(B, X, y, case_weights);

  Eigen::VectorXd w = Eigen::VectorXd::Ones(n);
  for (Eigen::Index i = 0; i < n && !case_weights.empty(); ++i) w(i) = case_weights[static_cast<std::size_t>(i)];
  Eigen::MatrixXd probs(n, m);
  Eigen::VectorXd score(dim);
  Eigen::MatrixXd info(dim, dim);
  Eigen::VectorXd v(n);
  int small_changes = 0;
  for (int iter = 0; iter < opt.max_iterations; ++iter) {
    const Eigen::MatrixXd eta = X * B.transpose();
    for (Eigen::Index i = 0; i < n; ++i) {
      const double mx = std::max(0.0, eta.row(i).maxCoeff());
      probs.row(i) = (eta.row(i).array() - mx).exp();
      probs.row(i) /= std::exp(-mx) + probs.row(i).sum();
    }
    for (Eigen::Index c = 0; c < m; ++c) {
      for (Eigen::Index i = 0; i < n; ++i) {
        v(i) = w(i) * ((y[static_cast<std::size_t>(i)] == c + 1 ? 1.0 : 0.0) - probs(i, c));
      }
      score.segment(c * p, p) = X.transpose() * v;
      for (Eigen::Index d = 0; d <= c; ++d) {
        v = w.array() * probs.col(c).array() * ((c == d ? 1.0 : 0.0) - probs.col(d).array());
        info.block(c * p, d * p, p, p) = X.transpose() * v.asDiagonal() * X;
        if (d != c) info.block(d * p, c * p, p, p) = info.block(c * p, d * p, p, p).transpose();
      }
    }
    fit.iterations = iter;
    if (score.cwiseAbs().maxCoeff() < opt.score_tolerance) {
      fit.converged = true;
      break;
    }

    Eigen::VectorXd step = info.ldlt().solve(score);
    if (!step.allFinite()) step = info.completeOrthogonalDecomposition().solve(score);
    Eigen::MatrixXd trial;
    double trial_ll = ll;
    double scale = 1.0;
    bool accepted = false;
    for (int h = 0; h <= opt.max_halvings; ++h) {
      trial = B;
      for (Eigen::Index c = 0; c < m; ++c) trial.row(c) += scale * step.segment(c * p, p).transpose();
      trial_ll = multinomial_loglik(trial, X, y, case_weights);
      if (std::isfinite(trial_ll) && trial_ll >= ll - 1e-13 * std::abs(ll)) {  // rounding noise near the optimum
        accepted = true;
        break;
      }
      scale *= 0.5;
    }
    if (!accepted) {
      // No ascent possible: already at the optimum up to rounding.
      fit.converged = score.cwiseAbs().maxCoeff() < 1e-6 * std::max(1.0, w.sum());
      break;
    }
    const double change = std::abs(trial_ll - ll);
    B = std::move(trial);
    const double previous = ll;
    ll = trial_ll;
    for (Eigen::Index c = 0; c < m; ++c) {
      if (B.row(c).norm() > opt.separation_norm) {
        throw Error("glm", ErrorCode::SeparationDetected,
                    "coefficients for category " + std::to_string(c + 1) + " diverge");
      }
    }
    fit.iterations = iter + 1;
    // One more Newton step after the first small change lands on the optimum.
    if (change <= opt.loglik_tolerance * std::max(std::abs(previous), 1e-300) && ++small_changes == 2) {
      fit.converged = true;
      break;
    }
  }
  // Saturated fits stop on a tiny score before the norm grows large. At a
  // finite maximum, doubling B lowers the likelihood.
  if (fit.converged && B.norm() > 0.0) {
    const double doubled = multinomial_loglik(2.0 * B, X, y, case_weights);
    if (doubled - ll > 1e-10 * std::max(1.0, std::abs(ll))) {
      throw Error("glm", ErrorCode::SeparationDetected, "likelihood keeps increasing along the fitted coefficients");
    }
  }
  fit.coefficients = std::move(B);
  fit.log_likelihood = ll;
  return fit;
}

/// Probability of `category` for regressor row x (intercept included).
inline double predict_prob(const FittedGlm& fit, std::span<const double> x, int category) {
  Eigen::Map<const Eigen::RowVectorXd> row(x.data(), static_cast<Eigen::Index>(x.size()));
  Eigen::VectorXd probs(fit.categories);
  glm_detail::softmax_row(fit.coefficients, row, probs);
  return probs(category);
}

inline Eigen::VectorXd predict_probs(const FittedGlm& fit, const Eigen::Ref<const Eigen::RowVectorXd>& x) {
  Eigen::VectorXd probs(fit.categories);
  glm_detail::softmax_row(fit.coefficients, x, probs);
  return probs;
}

/// Binary logistic regression by iteratively reweighted least squares.
/// Kept separate from fit_multinomial so the two can be checked against each other.
inline Eigen::VectorXd fit_logistic(const Eigen::MatrixXd& X, std::span<const int> y, std::span<const double> w = {},
                                    int max_iterations = 100, double tolerance = 1e-12) {
  glm_detail::check_design(X, 1e-10, "glm");
  const Eigen::Index n = X.rows();
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(X.cols());
  for (int iter = 0; iter < max_iterations; ++iter) {
    Eigen::VectorXd eta = X * beta;
    Eigen::VectorXd z(n), ww(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double mu = 1.0 / (1.0 + std::exp(-eta(i)));
      const double v = std::max(mu * (1.0 - mu), 1e-300);
      const double wi = w.empty() ? 1.0 : w[static_cast<std::size_t>(i)];
      ww(i) = wi * v;
      z(i) = eta(i) + (y[static_cast<std::size_t>(i)] - mu) / v;
    }
    Eigen::MatrixXd XtW = X.transpose() * ww.asDiagonal();
    Eigen::VectorXd next = (XtW * X).ldlt().solve(XtW * z);
    const double delta = (next - beta).cwiseAbs().maxCoeff();
    beta = next;
    if (delta < tolerance) break;
  }
  return beta;
}

}  // namespace survmed

#endif  // SURVMED_GLM_HPP
