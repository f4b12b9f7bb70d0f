#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "distdid/identify.hpp"
#include "test_util.hpp"

using namespace distdid;

namespace {
const Link kNormal{LinkKind::Normal}, kLogit{LinkKind::Logistic}, kIdentity{LinkKind::Identity};
}

TEST(Identify, IdentityLinkIsDistributionalDid) {
  std::mt19937_64 rng(1);
  const auto grid = testutil::integer_grid(25);
  const auto regime = LinkRegime::shared(kIdentity);
  for (int trial = 0; trial < 200; ++trial) {
    const auto F10 = testutil::random_df(rng, grid), F01 = testutil::random_df(rng, grid),
               F00 = testutil::random_df(rng, grid);
    const auto cf = counterfactual_two_period(F10, F01, F00, regime, 0.25);
    for (std::size_t i = 0; i < grid.size(); ++i) EXPECT_EQ(cf[i], F10[i] + F01[i] - F00[i]);
  }
}

TEST(Identify, NormalLinkHandComputed) {
  const auto grid = testutil::integer_grid(1);
  StepDF F10{grid, {0.3}, "", true}, F01{grid, {0.6}, "", true}, F00{grid, {0.5}, "", true};
  const auto cf = counterfactual_two_period(F10, F01, F00, LinkRegime::shared(kNormal));
  // Phi(Phi^-1(0.3) + Phi^-1(0.6) - Phi^-1(0.5)) = Phi(-0.5244005127080409 + 0.2533471031357997)
  EXPECT_NEAR(cf[0], 0.39317497716657973, 1e-12);
}

TEST(Identify, GroupIndexedLinksUseTreatedLinkOutside) {
  const auto grid = testutil::integer_grid(1);
  StepDF F10{grid, {0.3}, "", true}, F01{grid, {0.6}, "", true}, F00{grid, {0.5}, "", true};
  LinkRegime r;
  r.link_for = {{0, kNormal}, {1, kLogit}};
  const auto cf = counterfactual_two_period(F10, F01, F00, r);
  const double idx = quantile(kLogit, 0.3) + quantile(kNormal, 0.6) - quantile(kNormal, 0.5);
  EXPECT_NEAR(cf[0], cdf(kLogit, idx), 1e-15);
}

TEST(Identify, TimeIndexedLinks) {
  const auto links = resolve_links([] {
    LinkRegime r;
    r.theta = Theta::TimeIndexed;
    r.link_for = {{-1, kNormal}, {2, kLogit}};
    return r;
  }(), 1, 0, -1, 2);
  EXPECT_EQ(links.outer, kLogit);
  EXPECT_EQ(links.treated_pre, kNormal);
  EXPECT_EQ(links.control_post, kLogit);
  EXPECT_EQ(links.control_pre, kNormal);
}

TEST(Identify, MissingLinkThrows) {
  LinkRegime r;
  r.link_for = {{1, kNormal}};
  EXPECT_THROW(r.at(0), DomainError);
}

TEST(Identify, IndexCoefficientsAddUp) {
  std::mt19937_64 rng(2);
  const auto grid = testutil::integer_grid(10);
  const auto F10 = testutil::random_df(rng, grid), F01 = testutil::random_df(rng, grid),
             F00 = testutil::random_df(rng, grid);
  const auto regime = LinkRegime::shared(kNormal);
  const auto k = index_coeffs(F00, F10, F01, regime, 0.01);
  const auto cf = counterfactual_two_period(F10, F01, F00, regime, 0.01);
  for (std::size_t i = 0; i < grid.size(); ++i)
    EXPECT_NEAR(cdf(kNormal, k.alpha[i] + k.beta[i] + k.gamma[i]), cf[i], 1e-12);
}

TEST(Identify, ClippingBoundsExtremeValues) {
  const auto grid = testutil::integer_grid(2);
  StepDF F10{grid, {0.0, 1.0}, "", true}, F01{grid, {0.0, 1.0}, "", true}, F00{grid, {0.0, 1.0}, "", true};
  IdentifyDiagnostics diag;
  const auto cf = counterfactual_two_period(F10, F01, F00, LinkRegime::shared(kNormal), 0.01, {}, &diag);
  EXPECT_NEAR(cf[0], 0.01, 1e-12);
  EXPECT_NEAR(cf[1], 0.99, 1e-12);
  EXPECT_EQ(diag.clipped, 6u);
}

TEST(Identify, UnclippedInfinityMinusInfinityIsNumericalError) {
  const auto grid = testutil::integer_grid(1);
  StepDF F10{grid, {0.5}, "", true}, F01{grid, {1.0}, "", true}, F00{grid, {1.0}, "", true};
  EXPECT_THROW(counterfactual_two_period(F10, F01, F00, LinkRegime::shared(kNormal), 0.0), NumericalError);
}

TEST(Identify, DefaultEpsilonIsQuarterOverSmallestCell) {
  ClipPolicy p;
  EXPECT_DOUBLE_EQ(p.resolve(50), 1.0 / 200.0);
  p.epsilon = 0.02;
  EXPECT_DOUBLE_EQ(p.resolve(50), 0.02);
  p.enabled = false;
  EXPECT_EQ(p.resolve(50), 0.0);
}

TEST(Identify, BoundedLinksAreNeverClipped) {
  const auto grid = testutil::integer_grid(1);
  StepDF F10{grid, {0.0}, "", true}, F01{grid, {1.0}, "", true}, F00{grid, {0.2}, "", true};
  IdentifyDiagnostics diag;
  const auto cf = counterfactual_two_period(F10, F01, F00, LinkRegime::shared(kIdentity), 0.1, {}, &diag);
  EXPECT_DOUBLE_EQ(cf[0], 0.8);
  EXPECT_EQ(diag.clipped, 0u);
}

TEST(Identify, IdentityOutOfRangeIsFlaggedAndMonotonizeOptional) {
  const auto grid = testutil::integer_grid(3);
  StepDF F10{grid, {0.9, 0.9, 1.0}, "", true}, F01{grid, {0.2, 0.9, 1.0}, "", true},
      F00{grid, {0.0, 0.9, 0.9}, "", true};
  IdentifyDiagnostics diag;
  const auto cf = counterfactual_two_period(F10, F01, F00, LinkRegime::shared(kIdentity), 0.0, {}, &diag);
  EXPECT_EQ(diag.out_of_range, 2u);  // 1.1 and 1.1
  EXPECT_TRUE(diag.nonmonotone == !is_nondecreasing(cf.values));
  IdentifyOptions mono;
  mono.monotonize = true;
  const auto m = counterfactual_two_period(F10, F01, F00, LinkRegime::shared(kIdentity), 0.0, mono);
  EXPECT_TRUE(is_nondecreasing(m.values));
}

TEST(Identify, DesignChecksForPeriods) {
  std::vector<Observation> obs;
  int id = 0;
  for (int t : {-2, -1, 1, 2})
    for (int g : {0, 1})
      for (int k = 0; k < 3; ++k) obs.push_back({"u" + std::to_string(id++), t, g, double(k + g), {}});
  const PanelDataset nsmp(obs, DesignMode::NSMP);
  const auto grid = build_grid(nsmp, GridAllUnique{});
  const auto r = LinkRegime::shared(kNormal);
  EXPECT_NO_THROW(counterfactual_nsmp(nsmp, -2, 2, r, grid));
  EXPECT_THROW(counterfactual_nsmp(nsmp, 1, 2, r, grid), IdentificationError);
  EXPECT_THROW(counterfactual_nsmp(nsmp, -1, -2, r, grid), IdentificationError);

  for (auto& o : obs) o.group = o.group == 1 ? 2 : kNeverTreated;
  const PanelDataset stag(obs, DesignMode::Staggered);
  EXPECT_NO_THROW(counterfactual_staggered(stag, 2, 1, 2, r, grid));   // t' = 1 < g is pre
  EXPECT_THROW(counterfactual_staggered(stag, 2, 2, 2, r, grid), IdentificationError);
  EXPECT_THROW(counterfactual_staggered(stag, 2, -1, 1, r, grid), IdentificationError);
  EXPECT_THROW(counterfactual_staggered(stag, kNeverTreated, -1, 1, r, grid), IdentificationError);
}

TEST(Identify, CellsFromDataMatchStepDfPath) {
  std::mt19937_64 rng(4);
  const auto d = testutil::two_period(testutil::draws(rng, 40, 0, true), testutil::draws(rng, 40, -0.1, true),
                                      testutil::draws(rng, 30, 0.2, true), testutil::draws(rng, 30, 0.1, true));
  const auto grid = build_grid(d, GridSimulationRule{});
  const auto r = LinkRegime::shared(kNormal);
  const auto a = counterfactual_two_period(d, r, grid);
  const auto b = counterfactual_two_period(group_period_ecdf(d, 1, 0, grid), group_period_ecdf(d, 0, 1, grid),
                                           group_period_ecdf(d, 0, 0, grid), r, 1.0 / (4 * 30));
  EXPECT_EQ(a.values, b.values);
}
