#include <gtest/gtest.h>

#include <cmath>

#include "dgps.hpp"
#include "fixtures.hpp"
#include "survmed/pipeline.hpp"
#include "survmed/simulate.hpp"

using namespace survmed;

namespace {

Eigen::VectorXd v(std::initializer_list<double> xs) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) out(i++) = x;
  return out;
}

}  // namespace

TEST(Decompose, TableFourModelOne) {
  auto e = decompose(v({0.599, 0.012}), ModelKind::NoInteraction, 0, 1);
  EXPECT_NEAR(e.total.value, 1.843, 0.002);
  EXPECT_NEAR(e.direct.value, 1.821, 0.002);
  EXPECT_NEAR(e.indirect.value, 1.012, 0.002);
  ASSERT_TRUE(e.mediated_proportion);
  EXPECT_NEAR(100 * e.mediated_proportion->value, 2.0, 0.15);
}

TEST(Decompose, TableFourModelTwoReverse) {
  auto e = decompose(v({0.591, 0.002, 0.017}), ModelKind::Interaction, 1, 0);
  EXPECT_NEAR(e.total.value, 0.544, 0.002);
  EXPECT_NEAR(e.direct.value, 0.554, 0.002);
  EXPECT_NEAR(e.indirect.value, 0.981, 0.002);
}

TEST(Decompose, ZeroContrast) {
  for (auto kind : {ModelKind::NoInteraction, ModelKind::Interaction, ModelKind::ConditionalOnBaseline}) {
    auto e = decompose(v({0.4, -0.3, 0.2}), kind, 1, 1);
    EXPECT_EQ(e.total.value, 1.0);
    EXPECT_EQ(e.direct.value, 1.0);
    EXPECT_EQ(e.indirect.value, 1.0);
    EXPECT_FALSE(e.mediated_proportion);
  }
}

TEST(Decompose, IdentityAndAntisymmetry) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> z;
  for (int rep = 0; rep < 500; ++rep) {
    const Eigen::VectorXd c = v({z(rng), z(rng), z(rng)});
    for (auto kind : {ModelKind::NoInteraction, ModelKind::Interaction}) {
      for (auto [a, as] : {std::pair{0, 1}, std::pair{1, 0}, std::pair{0, 2}}) {
        auto e = decompose(c, kind, a, as);
        EXPECT_EQ(e.total.value, e.direct.value * e.indirect.value);
        auto r = decompose(c, kind, as, a);
        EXPECT_NEAR(std::log(e.total.value), -std::log(r.total.value), 1e-12);
      }
    }
    // Model 2 with a zero interaction is model 1.
    Eigen::VectorXd c0 = c;
    c0(2) = 0.0;
    auto m1 = decompose(c0.head(2), ModelKind::NoInteraction, 0, 1);
    auto m2 = decompose(c0, ModelKind::Interaction, 0, 1);
    EXPECT_NEAR(m1.total.value, m2.total.value, 1e-12);
    EXPECT_NEAR(m1.direct.value, m2.direct.value, 1e-12);
    EXPECT_NEAR(m1.indirect.value, m2.indirect.value, 1e-12);
  }
}

namespace {

const Dataset& designed_data() {
  static const Dataset d = generate(parse_dgp(dgps::designed(false)), 4000, 77);
  return d;
}

}  // namespace

TEST(RunAnalysis, ExposureFreeMediatorModelGivesZeroIndirect) {
  // Without a in the mediator model every mediator weight is 1, so both
  // hypothetical copies of a row are identical and astar carries no signal.
  auto spec = dgps::spec_for_designed(false);
  spec.mediator_terms = {"l_t", "l_0"};
  spec.causes = {1, 2};
  AnalysisArtifacts art;
  auto fit = fit_natural_effect(designed_data(), spec, &art);
  for (const auto& w : art.weights) EXPECT_EQ(w.mediator, 1.0);
  for (const auto& cf : fit.causes) EXPECT_NEAR(cf.cox.coefficients(1), 0.0, 1e-8);
}

TEST(RunAnalysis, PointEstimatesOnDesignedData) {
  auto spec = dgps::spec_for_designed(false);
  spec.causes = {1, 2};
  AnalysisArtifacts art;
  auto res = run_analysis(designed_data(), spec, &art);
  ASSERT_EQ(res.fit.causes.size(), 2u);
  EXPECT_EQ(res.fit.covariate_names, (std::vector<std::string>{"a", "astar"}));
  EXPECT_EQ(art.expanded.size(), 2 * art.rows.size());
  EXPECT_EQ(res.fit.expanded_rows, art.expanded.size());
  ASSERT_EQ(res.decomposition.entries.size(), 2u);
  const auto& e = res.decomposition.entries[0];
  EXPECT_EQ(e.total.value, e.direct.value * e.indirect.value);
  EXPECT_FALSE(e.total.ci);
  // IE = 1.3 by design; n = 4000 is only a sanity range.
  EXPECT_NEAR(std::log(e.indirect.value), std::log(1.3), 0.25);
}

TEST(RunAnalysis, EqualCaseWeightsFollowExposureOnlyDirection) {
  auto spec = dgps::spec_for_designed(false);
  spec.treatment_terms = {};
  spec.mediator_terms = {};
  auto fit = fit_natural_effect(designed_data(), spec);
  const double total = fit.causes[0].cox.coefficients(0) + fit.causes[0].cox.coefficients(1);

  const auto& d = designed_data();
  auto rows = to_counting_process(d);
  SurvivalRows sr;
  sr.X.resize(static_cast<Eigen::Index>(rows.size()), 1);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    sr.start.push_back(rows[i].start);
    sr.stop.push_back(rows[i].stop);
    sr.status.push_back(code_of(rows[i].status));
    sr.weight.push_back(1.0);
    sr.X(static_cast<Eigen::Index>(i), 0) = rows[i].exposure;
  }
  auto crude = fit_weighted_cox(sr, 1);
  EXPECT_EQ(std::signbit(total), std::signbit(crude.coefficients(0)));
}

TEST(RunAnalysis, NullPathSimulation) {
  // Exposure does not move the mediator and the mediator does not move the outcome.
  auto j = dgps::ie_null();
  j["events"]["cause1"]["coef"]["m"] = 0.0;
  const auto data = generate(parse_dgp(j), 20000, 2024);
  auto spec = dgps::spec_for_ie_null();
  spec.causes = {1, 2};
  auto fit = fit_natural_effect(data, spec);
  for (const auto& cf : fit.causes) EXPECT_LT(std::abs(cf.cox.coefficients(1)), 0.05) << "cause " << cf.cause;
}

TEST(RunAnalysis, LabelSwapNegatesTotal) {
  const auto& d = designed_data();
  Dataset swapped = d;
  for (auto& s : swapped.subjects) s.exposure = 1 - s.exposure;
  auto spec = dgps::spec_for_designed(false);
  auto a = fit_natural_effect(d, spec);
  auto b = fit_natural_effect(swapped, spec);
  const auto& ca = a.causes[0].cox.coefficients;
  const auto& cb = b.causes[0].cox.coefficients;
  EXPECT_NEAR(ca(0) + ca(1), -(cb(0) + cb(1)), 1e-6);
}

TEST(RunAnalysis, ModelsTwoAndFive) {
  auto spec = dgps::spec_for_designed(false);
  spec.model = ModelKind::Interaction;
  auto two = fit_natural_effect(designed_data(), spec);
  EXPECT_EQ(two.covariate_names, (std::vector<std::string>{"a", "astar", "a:astar"}));
  spec.model = ModelKind::ConditionalOnBaseline;
  spec.baseline_terms = {"l_0"};
  spec.astar_baseline_interaction = true;
  auto five = fit_natural_effect(designed_data(), spec);
  EXPECT_EQ(five.covariate_names, (std::vector<std::string>{"a", "astar", "l_0", "astar:l_0"}));
  EXPECT_TRUE(five.causes[0].cox.converged);
  spec.baseline_terms = {"l_t"};
  EXPECT_THROW(fit_natural_effect(designed_data(), spec), Error);
}

TEST(Bootstrap, ZeroReplicates) {
  auto spec = dgps::spec_for_designed(false);
  auto res = run_analysis(designed_data(), spec);
  EXPECT_EQ(res.decomposition.bootstrap.requested, 0);
  for (const auto& c : res.decomposition.coefficients) EXPECT_FALSE(c.ci);
}

TEST(Bootstrap, DeterministicAcrossRunsAndThreads) {
  const auto data = generate(parse_dgp(dgps::ie_null()), 600, 9);
  auto spec = dgps::spec_for_ie_null();
  spec.bootstrap_replicates = 40;
  spec.seed = 123;
  spec.threads = 1;
  auto a = run_analysis(data, spec);
  auto b = run_analysis(data, spec);
  spec.threads = 4;
  auto c = run_analysis(data, spec);
  for (const auto* other : {&b, &c}) {
    const auto& x = a.decomposition.entries[0];
    const auto& y = other->decomposition.entries[0];
    ASSERT_TRUE(x.indirect.ci && y.indirect.ci);
    EXPECT_EQ(x.indirect.ci->lower, y.indirect.ci->lower);
    EXPECT_EQ(x.indirect.ci->upper, y.indirect.ci->upper);
    EXPECT_EQ(x.total.p_value, y.total.p_value);
    for (std::size_t k = 0; k < a.decomposition.coefficients.size(); ++k) {
      EXPECT_EQ(a.decomposition.coefficients[k].ci->lower, other->decomposition.coefficients[k].ci->lower);
    }
  }
  const auto& ci = *a.decomposition.entries[0].indirect.ci;
  EXPECT_LT(ci.lower, ci.upper);
  spec.seed = 124;
  auto d = run_analysis(data, spec);
  EXPECT_NE(d.decomposition.entries[0].indirect.ci->lower, ci.lower);
}

TEST(Bootstrap, TooManyFailures) {
  // Two cause-1 events, one per arm: the point fit is finite, but a resample
  // that misses either event has a monotone likelihood or no events.
  auto data = generate(parse_dgp(dgps::ie_null()), 150, 3);
  bool kept[2] = {false, false};
  for (auto& s : data.subjects) {
    if (s.status != EventStatus::MainEvent) continue;
    if (kept[s.exposure]) {
      s.status = EventStatus::Censored;
    } else {
      kept[s.exposure] = true;
    }
  }
  ASSERT_TRUE(kept[0] && kept[1]);
  auto spec = dgps::spec_for_ie_null();
  spec.mediator_terms = {};
  spec.treatment_terms = {};
  spec.bootstrap_replicates = 60;
  EXPECT_NO_THROW(fit_natural_effect(data, spec));
  try {
    run_analysis(data, spec);
    FAIL() << "expected TooManyFailedReplicates";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::TooManyFailedReplicates);
    EXPECT_EQ(e.stage(), "bootstrap");
  }
}

TEST(RunAnalysis, ErrorsCarryStages) {
  auto data = fixtures::toy_dataset();
  AnalysisSpec spec;
  spec.bootstrap_replicates = 0;
  spec.contrasts = {{0, 2}};
  try {
    run_analysis(data, spec);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ConfigError);
  }
  spec.contrasts = {{0, 1}};
  spec.censoring = CensoringMode::HistoryStabilized;
  EXPECT_THROW(run_analysis(data, spec), Error);
}
