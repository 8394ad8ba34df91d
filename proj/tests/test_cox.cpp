#include <gtest/gtest.h>

#include <random>

#include "brute_force.hpp"
#include "survmed/cox.hpp"

using namespace survmed;

namespace {

SurvivalRows make_rows(const std::vector<double>& stop, const std::vector<int>& status,
                       const std::vector<std::vector<double>>& x, std::vector<double> w = {}) {
  SurvivalRows r;
  r.stop = stop;
  r.start.assign(stop.size(), 0.0);
  r.status = status;
  const auto p = static_cast<Eigen::Index>(x.empty() ? 0 : x[0].size());
  r.X.resize(static_cast<Eigen::Index>(stop.size()), p);
  for (std::size_t i = 0; i < x.size(); ++i) {
    for (Eigen::Index k = 0; k < p; ++k) r.X(static_cast<Eigen::Index>(i), k) = x[i][static_cast<std::size_t>(k)];
  }
  r.weight = w.empty() ? std::vector<double>(stop.size(), 1.0) : w;
  for (Eigen::Index k = 0; k < p; ++k) r.covariate_names.push_back("x" + std::to_string(k));
  return r;
}

std::vector<brute::CoxRow> brute_rows(const SurvivalRows& r) {
  std::vector<brute::CoxRow> out;
  for (std::size_t i = 0; i < r.size(); ++i) {
    std::vector<double> x;
    for (Eigen::Index k = 0; k < r.X.cols(); ++k) x.push_back(r.X(static_cast<Eigen::Index>(i), k));
    out.push_back({r.start[i], r.stop[i], r.status[i], x, r.weight[i]});
  }
  return out;
}

// Counting-process data with time-varying covariates, two causes and ties.
SurvivalRows random_rows(std::uint64_t seed, int subjects, int p) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> code(0, 2);
  SurvivalRows r;
  r.X.resize(0, p);
  std::vector<std::vector<double>> xs;
  for (int i = 0; i < subjects; ++i) {
    const double end = std::round((0.2 + 3.0 * u(rng)) * 10.0) / 10.0;
    const double w = 0.5 + u(rng);
    const int status = code(rng);
    double start = 0.0;
    for (double visit : {1.0, 2.0}) {
      if (visit >= end) break;
      std::vector<double> x;
      for (int k = 0; k < p; ++k) x.push_back(z(rng));
      r.start.push_back(start);
      r.stop.push_back(visit);
      r.status.push_back(0);
      r.weight.push_back(w);
      xs.push_back(x);
      start = visit;
    }
    std::vector<double> x;
    for (int k = 0; k < p; ++k) x.push_back(z(rng));
    r.start.push_back(start);
    r.stop.push_back(end);
    r.status.push_back(status);
    r.weight.push_back(w);
    xs.push_back(x);
  }
  r.X.resize(static_cast<Eigen::Index>(xs.size()), p);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    for (int k = 0; k < p; ++k) r.X(static_cast<Eigen::Index>(i), k) = xs[i][static_cast<std::size_t>(k)];
  }
  for (int k = 0; k < p; ++k) r.covariate_names.push_back("x" + std::to_string(k));
  return r;
}

}  // namespace

TEST(FitCox, SymmetricGroupsGiveZero) {
  auto r = make_rows({1, 2, 3, 4, 1, 2, 3, 4}, {1, 1, 0, 1, 1, 1, 0, 1}, {{0}, {0}, {0}, {0}, {1}, {1}, {1}, {1}});
  auto fit = fit_weighted_cox(r, 1);
  EXPECT_TRUE(fit.converged);
  EXPECT_NEAR(fit.coefficients(0), 0.0, 1e-8);
}

TEST(FitCox, ThreeSubjectExampleIsMonotone) {
  // x = (1, 0, 0): the subject failing first carries x = 1, so the partial
  // likelihood increases without bound in beta.
  auto r = make_rows({1, 2, 3}, {1, 1, 1}, {{1}, {0}, {0}});
  try {
    fit_weighted_cox(r, 1);
    FAIL() << "expected MonotoneLikelihood";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MonotoneLikelihood);
  }
}

TEST(FitCox, ThreeSubjectFiniteVariantMatchesGrid) {
  // x = (0, 1, 0): l(beta) = -log(e^b + 2) + b - log(e^b + 1).
  auto r = make_rows({1, 2, 3}, {1, 1, 1}, {{0}, {1}, {0}});
  auto fit = fit_weighted_cox(r, 1);
  ASSERT_TRUE(fit.converged);
  auto ell = [](double b) { return -std::log(std::exp(b) + 2.0) + b - std::log(std::exp(b) + 1.0); };
  double best = 0.0;
  for (double step = 1.0; step > 1e-9; step /= 10.0) {
    double lo = best - 10 * step, arg = lo;
    for (double b = lo; b <= best + 10 * step; b += step) {
      if (ell(b) > ell(arg)) arg = b;
    }
    best = arg;
  }
  EXPECT_NEAR(fit.coefficients(0), best, 1e-6);
  EXPECT_NEAR(fit.coefficients(0), 0.5 * std::log(2.0), 1e-6);  // closed form: e^{2b} = 2
  EXPECT_NEAR(fit.log_partial_likelihood, ell(fit.coefficients(0)), 1e-10);

  // Breslow increments by hand.
  auto bh = breslow_baseline(fit, r);
  const double e = std::exp(fit.coefficients(0));
  ASSERT_EQ(bh.jump_times.size(), 3u);
  EXPECT_NEAR(bh.increments[0], 1.0 / (2.0 + e), 1e-12);
  EXPECT_NEAR(bh.increments[1], 1.0 / (1.0 + e), 1e-12);
  EXPECT_NEAR(bh.increments[2], 1.0, 1e-12);
}

TEST(FitCox, HalfWeightDuplicates) {
  auto r = random_rows(3, 30, 2);
  auto fit = fit_weighted_cox(r, 1);
  SurvivalRows d = r;
  const auto n = static_cast<Eigen::Index>(r.size());
  d.X.resize(2 * n, r.X.cols());
  d.X << r.X, r.X;
  d.start.insert(d.start.end(), r.start.begin(), r.start.end());
  d.stop.insert(d.stop.end(), r.stop.begin(), r.stop.end());
  d.status.insert(d.status.end(), r.status.begin(), r.status.end());
  d.weight.insert(d.weight.end(), r.weight.begin(), r.weight.end());
  for (double& w : d.weight) w *= 0.5;
  auto half = fit_weighted_cox(d, 1);
  EXPECT_LT((fit.coefficients - half.coefficients).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Breslow, NelsonAalenWhenNull) {
  auto r = make_rows({1, 2, 3, 4}, {1, 0, 1, 1}, {{0.3}, {1.0}, {-2.0}, {0.5}});
  CoxFit null;
  null.coefficients = Eigen::VectorXd::Zero(1);
  auto bh = breslow_baseline(null, r);
  ASSERT_EQ(bh.jump_times.size(), 3u);
  EXPECT_DOUBLE_EQ(bh.increments[0], 1.0 / 4.0);
  EXPECT_DOUBLE_EQ(bh.increments[1], 1.0 / 2.0);
  EXPECT_DOUBLE_EQ(bh.increments[2], 1.0);
  EXPECT_DOUBLE_EQ(bh.cumulative(3.5), 0.75);

  null.cause = 2;
  EXPECT_TRUE(breslow_baseline(null, r).jump_times.empty());
}

TEST(Breslow, WeightScaleInvariance) {
  auto r = random_rows(8, 25, 2);
  auto fit = fit_weighted_cox(r, 2);
  auto a = breslow_baseline(fit, r);
  for (double& w : r.weight) w *= 3.7;
  auto b = breslow_baseline(fit, r);
  ASSERT_EQ(a.increments.size(), b.increments.size());
  for (std::size_t i = 0; i < a.increments.size(); ++i) EXPECT_NEAR(a.increments[i], b.increments[i], 1e-14);
}

TEST(CensoringSurvival, Examples) {
  CoxFit null;
  null.coefficients = Eigen::VectorXd::Zero(1);
  std::vector<PathSegment> path{{0.0, 10.0, Eigen::VectorXd::Zero(1)}};
  BaselineHazard empty;
  EXPECT_EQ(censoring_survival(null, empty, path, 5.0), 1.0);

  // One censoring among n = 5 at risk: Breslow increment 1/5.
  auto r = make_rows({1, 2, 3, 4, 5}, {0, 1, 0, 0, 0}, {{0}, {0}, {0}, {0}, {0}});
  auto bh = breslow_baseline(null, r);
  EXPECT_EQ(censoring_survival(null, bh, path, 1.5), 1.0);
  EXPECT_NEAR(censoring_survival(null, bh, path, 2.0), 1.0 - 1.0 / 4.0, 1e-15);  // 4 at risk at t = 2
  EXPECT_EQ(censoring_survival(null, bh, path, 2.0, false), 1.0);
  auto r5 = make_rows({2, 2.5, 3, 4, 5}, {1, 0, 0, 0, 0}, {{0}, {0}, {0}, {0}, {0}});
  EXPECT_NEAR(censoring_survival(null, breslow_baseline(null, r5), path, 2.0), 1.0 - 1.0 / 5.0, 1e-15);
}

TEST(CensoringSurvival, ClipsFactors) {
  CoxFit fit;
  fit.coefficients = Eigen::VectorXd::Constant(1, 3.0);
  BaselineHazard bh;
  bh.jump_times = {1.0, 2.0};
  bh.increments = {0.5, 0.01};
  std::vector<PathSegment> path{{0.0, 3.0, Eigen::VectorXd::Ones(1)}};
  ProductLimitDiagnostics diag;
  const double s = censoring_survival(fit, bh, path, 2.5, true, &diag);
  EXPECT_EQ(diag.clipped_factors, 1u);
  EXPECT_NEAR(s, kSurvivalFactorFloor * (1.0 - std::exp(3.0) * 0.01), 1e-18);
}

TEST(CensoringSurvival, MonotoneAndOneAtZero) {
  auto r = random_rows(5, 40, 1);
  auto fit = fit_weighted_cox(r, 2);
  auto bh = breslow_baseline(fit, r);
  std::vector<PathSegment> path{{0.0, 1.0, Eigen::VectorXd::Constant(1, 0.4)},
                                {1.0, 2.0, Eigen::VectorXd::Constant(1, -1.0)},
                                {2.0, 4.0, Eigen::VectorXd::Constant(1, 2.0)}};
  EXPECT_EQ(censoring_survival(fit, bh, path, 0.0), 1.0);
  std::vector<double> grid;
  for (int i = 0; i <= 400; ++i) grid.push_back(i * 0.01);
  auto many = censoring_survival_at(fit, bh, path, grid);
  double prev = 1.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    EXPECT_LE(many[i], prev);
    EXPECT_DOUBLE_EQ(many[i], censoring_survival(fit, bh, path, grid[i]));
    prev = many[i];
  }
}

TEST(FitCox, ScoreAtSolutionAndFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto r = random_rows(seed, 40, 3);
    auto fit = fit_weighted_cox(r, 1);
    ASSERT_TRUE(fit.converged);
    EXPECT_LT(cox_score(r, 1, fit.coefficients).cwiseAbs().maxCoeff(), 1e-6);
    Eigen::VectorXd b = fit.coefficients.array() + 0.25;
    auto g = cox_score(r, 1, b);
    for (Eigen::Index k = 0; k < b.size(); ++k) {
      Eigen::VectorXd up = b, dn = b;
      up(k) += 1e-5;
      dn(k) -= 1e-5;
      const double fd = (cox_partial_loglik(r, 1, up) - cox_partial_loglik(r, 1, dn)) / 2e-5;
      EXPECT_NEAR(g(k), fd, 1e-4 * std::max(1.0, std::abs(fd)));
    }
  }
}

TEST(FitCox, CauseSpecificConsistency) {
  auto r = random_rows(17, 40, 2);
  auto fit = fit_weighted_cox(r, 1);
  auto relabeled = r;
  for (int& s : relabeled.status) s = s == 2 ? 0 : s;
  auto again = fit_weighted_cox(relabeled, 1);
  EXPECT_LT((fit.coefficients - again.coefficients).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(FitCox, MatchesDirectSearch) {
  for (std::uint64_t seed = 100; seed < 110; ++seed) {
    auto r = random_rows(seed, 20, 1 + static_cast<int>(seed % 3));
    auto fit = fit_weighted_cox(r, 1);
    auto rows = brute_rows(r);
    auto beta = brute::nelder_mead([&](const std::vector<double>& b) { return -brute::cox_loglik(rows, 1, b); },
                                   std::vector<double>(static_cast<std::size_t>(r.X.cols()), 0.0));
    for (Eigen::Index k = 0; k < r.X.cols(); ++k) EXPECT_NEAR(fit.coefficients(k), beta[static_cast<std::size_t>(k)], 1e-4);
    std::vector<double> b(fit.coefficients.data(), fit.coefficients.data() + fit.coefficients.size());
    EXPECT_NEAR(fit.log_partial_likelihood, brute::cox_loglik(rows, 1, b), 1e-9);
  }
}

TEST(FitCox, Errors) {
  auto r = make_rows({1, 2, 3}, {0, 2, 0}, {{0}, {1}, {0}});
  try {
    fit_weighted_cox(r, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NoEventsForCause);
  }
  auto c = make_rows({1, 2, 3}, {1, 1, 0}, {{2}, {2}, {2}});
  try {
    fit_weighted_cox(c, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::RankDeficient);
  }
  auto bad = make_rows({1, 2, 3}, {1, 1, 0}, {{0}, {1}, {0}}, {1.0, 0.0, 1.0});
  EXPECT_THROW(fit_weighted_cox(bad, 1), Error);
}
