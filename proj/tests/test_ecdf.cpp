#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "distdid/ecdf.hpp"
#include "test_util.hpp"

using namespace distdid;

// Brute-force count of cell members at or below y.
static double ecdf_oracle(const std::vector<double>& sample, double y) {
  std::size_t k = 0;
  for (double v : sample) k += v <= y;
  return static_cast<double>(k) / static_cast<double>(sample.size());
}

TEST(Ecdf, MatchesCountingOracle) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const auto c0 = testutil::draws(rng, 37, 0.0, trial % 2 == 0);
    const auto c1 = testutil::draws(rng, 41, 0.3, trial % 2 == 0);
    const auto t0 = testutil::draws(rng, 29, 0.1, trial % 2 == 0);
    const auto t1 = testutil::draws(rng, 33, 0.5, trial % 2 == 0);
    const auto d = testutil::two_period(c0, c1, t0, t1);
    const auto grid = build_grid(d, GridAllUnique{});
    const auto F = group_period_ecdf(d, 1, 0, grid);
    for (std::size_t i = 0; i < grid.size(); ++i) EXPECT_EQ(F[i], ecdf_oracle(t0, grid[i]));
    EXPECT_TRUE(F.monotone);
  }
}

TEST(Ecdf, WeightedMatchesReplicatedData) {
  const auto d = testutil::two_period({1, 2, 3, 4}, {1, 5}, {2, 2.5}, {3, 6});
  const std::vector<double> w{2, 0, 1, 3, 1, 1, 4, 1, 1, 1};
  const auto grid = build_grid(d, GridAllUnique{});
  const auto rep = replicate_units(d, w);
  for (int g : {0, 1})
    for (int t : {0, 1}) {
      const auto a = group_period_ecdf_weighted(d, g, t, grid, w);
      const auto b = group_period_ecdf_weighted(rep, g, t, grid);
      for (std::size_t i = 0; i < grid.size(); ++i) EXPECT_DOUBLE_EQ(a.df[i], b.df[i]);
      EXPECT_DOUBLE_EQ(a.mass, b.mass);
    }
}

TEST(Ecdf, EmptyOrMasslessCellThrows) {
  const auto d = testutil::two_period({1, 2}, {1}, {2}, {3});
  const auto grid = build_grid(d, GridAllUnique{});
  EXPECT_THROW(group_period_ecdf(d, 1, 5, grid), IdentificationError);
  std::vector<double> w(d.num_units(), 1.0);
  w[d.unit_of(d.cell(1, 1)[0])] = 0.0;
  EXPECT_THROW(group_period_ecdf_weighted(d, 1, 1, grid, w), IdentificationError);
}

TEST(Ecdf, SimulationRuleHandExample) {
  // Pooled outcomes {0,1,1,2,3,9,10}: type-1 90th percentile is the 7th
  // order statistic (ceil(6.3) = 7), i.e. 10, so only the two largest go.
  const auto d = testutil::two_period({0, 1}, {1, 2}, {3, 9}, {10});
  const auto g = build_grid(d, GridSimulationRule{});
  EXPECT_EQ(g.points, (std::vector<double>{0, 1, 2, 3}));
  EXPECT_EQ(g.sup_y, 10.0);
}

TEST(Ecdf, SimulationRuleDropsAboveNinetiethPercentile) {
  std::vector<double> ys;
  for (int i = 1; i <= 40; ++i) ys.push_back(i);
  const std::vector<double> a(ys.begin(), ys.begin() + 10), b(ys.begin() + 10, ys.begin() + 20),
      c(ys.begin() + 20, ys.begin() + 30), e(ys.begin() + 30, ys.end());
  const auto d = testutil::two_period(a, b, c, e);
  const auto g = build_grid(d, GridSimulationRule{});
  EXPECT_EQ(g.points.front(), 1.0);
  EXPECT_EQ(g.points.back(), 36.0);  // q90 = 36; 39 and 40 are also the two largest
}

TEST(Ecdf, TrimmedRuleKeepsCentralValues) {
  std::vector<double> ys;
  for (int i = 1; i <= 20; ++i) ys.push_back(i);
  const auto d = testutil::two_period({ys.begin(), ys.begin() + 5}, {ys.begin() + 5, ys.begin() + 10},
                                      {ys.begin() + 10, ys.begin() + 15}, {ys.begin() + 15, ys.end()});
  const auto g = build_grid(d, GridTrimmed{0.1, 0.9});
  EXPECT_EQ(g.points.front(), 2.0);
  EXPECT_EQ(g.points.back(), 18.0);
}

TEST(Ecdf, ExplicitGridValidation) {
  const auto d = testutil::two_period({0, 1}, {1, 2}, {3, 9}, {10});
  const auto g = build_grid(d, GridExplicit{{0.5, 2.5}});
  EXPECT_EQ(g.sup_y, 10.0);
  EXPECT_THROW(build_grid(d, GridExplicit{{1.0, 1.0}}), DomainError);
  EXPECT_THROW(build_grid(d, GridExplicit{{}}), DomainError);
}

TEST(Ecdf, TypeOneQuantile) {
  EXPECT_EQ(empirical_quantile_type1({5, 1, 3, 2, 4}, 0.5), 3.0);
  EXPECT_EQ(empirical_quantile_type1({5, 1, 3, 2, 4}, 0.2), 1.0);
  EXPECT_EQ(empirical_quantile_type1({5, 1, 3, 2, 4}, 0.21), 2.0);
  EXPECT_EQ(empirical_quantile_type1({5, 1, 3, 2, 4}, 1.0), 5.0);
}

TEST(Ecdf, CsvRoundTripIsExact) {
  std::mt19937_64 rng(9);
  const auto d = testutil::two_period(testutil::draws(rng, 20, 0, false), testutil::draws(rng, 20, 0, false),
                                      testutil::draws(rng, 20, 0, false), testutil::draws(rng, 20, 0, false));
  const auto grid = build_grid(d, GridAllUnique{});
  const auto F = group_period_ecdf(d, 0, 1, grid);
  std::stringstream buf;
  write_csv(buf, F);
  const auto back = read_stepdf_csv(buf, grid.sup_y);
  EXPECT_EQ(back.grid, F.grid);
  for (std::size_t i = 0; i < F.size(); ++i) EXPECT_NEAR(back[i], F[i], 1e-12);
}

TEST(Ecdf, RunningMaxMonotonizes) {
  StepDF df;
  df.grid = testutil::integer_grid(4);
  df.values = {0.2, 0.1, 0.5, 0.4};
  const auto m = running_max(df);
  EXPECT_EQ(m.values, (std::vector<double>{0.2, 0.2, 0.5, 0.5}));
  EXPECT_TRUE(m.monotone);
}
