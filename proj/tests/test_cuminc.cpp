#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "dgps.hpp"
#include "survmed/cuminc.hpp"

using namespace survmed;

namespace {

CauseFit cause(int c, std::vector<double> times, std::vector<double> inc, std::vector<double> coef) {
  CauseFit cf;
  cf.cause = c;
  cf.cox.cause = c;
  cf.cox.coefficients = Eigen::Map<Eigen::VectorXd>(coef.data(), static_cast<Eigen::Index>(coef.size()));
  cf.baseline.cause = c;
  cf.baseline.jump_times = std::move(times);
  cf.baseline.increments = std::move(inc);
  return cf;
}

NaturalEffectFit two_causes(std::vector<double> c1, std::vector<double> c2) {
  NaturalEffectFit f;
  f.covariate_names = {"a", "astar"};
  f.causes = {cause(1, {1.0, 2.0}, {0.1, 0.2}, c1), cause(2, {1.0, 2.0}, {0.05, 0.0}, c2)};
  return f;
}

NaturalEffectFit random_fit(std::uint64_t seed, double scale) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  NaturalEffectFit f;
  f.covariate_names = {"a", "astar"};
  for (int c = 1; c <= 2; ++c) {
    std::vector<double> t, inc;
    double s = 0.0;
    for (int q = 0; q < 30; ++q) {
      s += 0.1 + u(rng);
      t.push_back(s);
      inc.push_back(scale * u(rng));
    }
    f.causes.push_back(cause(c, t, inc, {u(rng) - 0.5, u(rng) - 0.5}));
  }
  return f;
}

}  // namespace

TEST(CumulativeIncidence, HandExample) {
  auto curves = cumulative_incidence(two_causes({0.0, 0.0}, {0.0, 0.0}), 0, 0);
  ASSERT_EQ(curves.size(), 2u);
  EXPECT_EQ(curves[0].times, (std::vector<double>{1.0, 2.0}));
  EXPECT_NEAR(curves[0].cif[0], 0.10, 1e-15);
  EXPECT_NEAR(curves[0].cif[1], 0.27, 1e-15);
  EXPECT_NEAR(curves[1].cif[0], 0.05, 1e-15);
  EXPECT_NEAR(curves[1].cif[1], 0.05, 1e-15);
  EXPECT_NEAR(curves[0].survival[1], 0.85 * 0.8, 1e-15);
}

TEST(CumulativeIncidence, ZeroIncrementsGiveZero) {
  NaturalEffectFit f;
  f.causes = {cause(1, {1.0, 3.0}, {0.0, 0.0}, {0.5, 0.5})};
  auto c = cumulative_incidence(f, 1, 1);
  for (double v : c[0].cif) EXPECT_EQ(v, 0.0);
  for (double v : c[0].survival) EXPECT_EQ(v, 1.0);
}

TEST(CumulativeIncidence, SingleCauseIsOneMinusKaplanMeier) {
  NaturalEffectFit f;
  f.causes = {cause(1, {0.5, 1.0, 2.5}, {0.2, 0.25, 0.5}, {0.0, 0.0})};
  auto c = cumulative_incidence(f, 0, 1)[0];
  double km = 1.0;
  const double h[3] = {0.2, 0.25, 0.5};
  for (int q = 0; q < 3; ++q) {
    km *= 1.0 - h[q];
    EXPECT_NEAR(c.cif[static_cast<std::size_t>(q)], 1.0 - km, 1e-15);
  }
}

TEST(CumulativeIncidence, ConservationAndMonotonicity) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto f = random_fit(seed, 0.08);
    for (auto [a, as] : {std::pair{0, 0}, std::pair{0, 1}, std::pair{1, 0}, std::pair{1, 1}}) {
      auto c = cumulative_incidence(f, a, as);
      ASSERT_EQ(c[0].times, c[1].times);
      for (std::size_t q = 0; q < c[0].times.size(); ++q) {
        EXPECT_NEAR(c[0].cif[q] + c[1].cif[q] + c[0].survival[q], 1.0, 1e-12);
        if (q > 0) {
          EXPECT_GE(c[0].cif[q], c[0].cif[q - 1]);
          EXPECT_GE(c[1].cif[q], c[1].cif[q - 1]);
          EXPECT_LE(c[0].survival[q], c[0].survival[q - 1]);
        }
      }
    }
  }
}

TEST(CumulativeIncidence, IndirectCoefficientScalesHazard) {
  // Moving a* by one multiplies every increment by exp(alpha_2).
  const double alpha2 = 0.4;
  auto f = two_causes({0.0, alpha2}, {0.0, 0.0});
  auto c = cumulative_incidence(f, 0, 1);
  const double h1 = 0.1 * std::exp(alpha2), h2 = 0.2 * std::exp(alpha2);
  EXPECT_NEAR(c[0].cif[0], h1, 1e-15);
  EXPECT_NEAR(c[0].cif[1], h1 + (1.0 - h1 - 0.05) * h2, 1e-15);
}

TEST(CumulativeIncidence, InteractionTerm) {
  NaturalEffectFit f = two_causes({0.1, 0.2, 0.3}, {0.0, 0.0, 0.0});
  f.model = ModelKind::Interaction;
  auto c = cumulative_incidence(f, 1, 1);
  EXPECT_NEAR(c[0].cif[0], 0.1 * std::exp(0.6), 1e-15);
}

TEST(CumulativeIncidence, ClipsExcessHazard) {
  NaturalEffectFit f = two_causes({0.0, 3.0}, {0.0, 3.0});
  CifDiagnostics d;
  auto c = cumulative_incidence(f, 0, 1, &d);
  EXPECT_GE(d.clipped_hazards, 1u);
  for (std::size_t q = 0; q < 2; ++q) {
    EXPECT_NEAR(c[0].cif[q] + c[1].cif[q] + c[0].survival[q], 1.0, 1e-12);
    EXPECT_GE(c[0].survival[q], 0.0);
  }
  // At the first jump the hazards are 2.0 and 1.0: all mass fails, split 2:1.
  EXPECT_NEAR(c[0].cif[0], 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(c[1].cif[0], 1.0 / 3.0, 1e-15);
}

TEST(CumulativeIncidence, ConditionalModelUnsupported) {
  NaturalEffectFit f = two_causes({0.0, 0.0}, {0.0, 0.0});
  f.model = ModelKind::ConditionalOnBaseline;
  try {
    cumulative_incidence(f, 0, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Unsupported);
  }
}

TEST(CumulativeIncidence, FromFittedModel) {
  const auto data = generate(parse_dgp(dgps::designed(false)), 1500, 4);
  auto spec = dgps::spec_for_designed(false);
  spec.causes = {1, 2};
  auto fit = fit_natural_effect(data, spec);
  auto c0 = cumulative_incidence(fit, 0, 0);
  auto c1 = cumulative_incidence(fit, 0, 1);
  // The indirect path raises cause-1 risk.
  EXPECT_GT(c1[0].cif.back(), c0[0].cif.back());
  EXPECT_NEAR(c0[0].cif.back() + c0[1].cif.back() + c0[0].survival.back(), 1.0, 1e-12);
}

TEST(CumulativeIncidence, CsvLayout) {
  std::ostringstream os;
  write_cif_csv(os, cumulative_incidence(two_causes({0.0, 0.0}, {0.0, 0.0}), 0, 0));
  EXPECT_EQ(os.str(),
            "time,cause,cif,surv\n"
            "1,1,0.1,0.85\n2,1,0.27,0.68\n"
            "1,2,0.05,0.85\n2,2,0.05,0.68\n");
}
