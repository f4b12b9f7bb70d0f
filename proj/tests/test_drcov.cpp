#include <gtest/gtest.h>

#include <random>

#include "distdid/drcov.hpp"
#include "distdid/estimator.hpp"
#include "test_util.hpp"

using namespace distdid;

namespace {

const Link kNormal{LinkKind::Normal}, kLogit{LinkKind::Logistic}, kCauchy{LinkKind::Cauchy};

Eigen::MatrixXd intercept_design(std::size_t n) { return Eigen::MatrixXd::Ones(static_cast<Eigen::Index>(n), 1); }

// Two-period repeated cross-section with covariates; the latent outcome
// follows a probit-style index model in x.
PanelDataset covariate_data(std::mt19937_64& rng, std::size_t n_cell, double slope, bool constant_x = false) {
  std::normal_distribution<double> z(0.0, 1.0);
  std::vector<Observation> obs;
  int id = 0;
  for (int t : {0, 1})
    for (int g : {0, 1})
      for (std::size_t k = 0; k < n_cell; ++k) {
        const double x = constant_x ? 1.5 : z(rng);
        const double y = std::round(4.0 * (0.2 * g - 0.1 * t + slope * x + z(rng))) / 4.0;
        obs.push_back({"u" + std::to_string(id++), t, g, y, {x, x * 0.5 + z(rng)}});
      }
  return PanelDataset(std::move(obs), DesignMode::TwoPeriod, {"x1", "x2"});
}

}  // namespace

TEST(Qmle, InterceptOnlyEqualsQuantileOfMean) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.01, 0.99);
  for (Link link : {kNormal, kLogit, kCauchy}) {
    for (int trial = 0; trial < 40; ++trial) {
      const std::size_t n = 50 + trial * 7;
      const double target = u(rng);
      std::vector<double> r(n);
      std::size_t ones = std::max<std::size_t>(1, std::min(n - 1, static_cast<std::size_t>(target * n)));
      for (std::size_t i = 0; i < n; ++i) r[i] = i < ones ? 1.0 : 0.0;
      const double mean = static_cast<double>(ones) / static_cast<double>(n);
      const auto fit = qmle_binary_fit(r, intercept_design(n), link);
      EXPECT_TRUE(fit.converged);
      EXPECT_NEAR(fit.coef[0], quantile(link, mean), 1e-8) << to_string(link) << " mean " << mean;
    }
  }
}

TEST(Qmle, AllEqualResponsesAreDegenerate) {
  std::vector<double> zeros(30, 0.0), ones(30, 1.0);
  const auto f0 = qmle_binary_fit(zeros, intercept_design(30), kNormal);
  EXPECT_TRUE(f0.degenerate);
  EXPECT_NEAR(f0.coef[0], quantile(kNormal, 1e-10), 1e-12);
  const auto f1 = qmle_binary_fit(ones, intercept_design(30), kNormal);
  EXPECT_NEAR(f1.coef[0], quantile(kNormal, 1.0 - 1e-10), 1e-9);
}

TEST(Qmle, ScoreMatchesFiniteDifferences) {
  std::mt19937_64 rng(21);
  std::normal_distribution<double> z(0.0, 1.0);
  std::bernoulli_distribution coin(0.4);
  for (int problem = 0; problem < 100; ++problem) {
    const Link link = problem % 3 == 0 ? kNormal : problem % 3 == 1 ? kLogit : kCauchy;
    const Eigen::Index n = 20 + problem % 17, p = 1 + problem % 3;
    Eigen::MatrixXd X(n, p);
    std::vector<double> r(static_cast<std::size_t>(n)), w(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
      X(i, 0) = 1.0;
      for (Eigen::Index c = 1; c < p; ++c) X(i, c) = z(rng);
      r[static_cast<std::size_t>(i)] = coin(rng);
      w[static_cast<std::size_t>(i)] = 0.5 + std::abs(z(rng));
    }
    Eigen::VectorXd eta(p);
    for (Eigen::Index c = 0; c < p; ++c) eta[c] = 0.5 * z(rng);
    const auto score = qmle_score(r, X, link, eta, w);
    for (Eigen::Index c = 0; c < p; ++c) {
      const double h = 1e-6;
      Eigen::VectorXd up = eta, dn = eta;
      up[c] += h;
      dn[c] -= h;
      const double fd = (qmle_loglik(r, X, link, up, w) - qmle_loglik(r, X, link, dn, w)) / (2 * h);
      EXPECT_NEAR(score[c], fd, 1e-5 * std::max(1.0, std::abs(fd))) << "problem " << problem;
    }
  }
}

TEST(Qmle, RecoversProbitCoefficients) {
  std::mt19937_64 rng(77);
  std::normal_distribution<double> z(0.0, 1.0);
  const Eigen::Index n = 2000;
  const Eigen::Vector3d truth(0.3, -0.8, 0.5);
  Eigen::MatrixXd X(n, 3);
  std::vector<double> r(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    X.row(i) << 1.0, z(rng), z(rng);
    r[static_cast<std::size_t>(i)] = (X.row(i).dot(truth) + z(rng) > 0.0) ? 1.0 : 0.0;
  }
  const auto fit = qmle_binary_fit(r, X, kNormal);
  ASSERT_TRUE(fit.converged);
  EXPECT_LT((fit.coef - truth).cwiseAbs().maxCoeff(), 0.1);
  EXPECT_LT(qmle_score(r, X, kNormal, fit.coef).norm(), 1e-8);

  // Coarse lattice over the two slopes: no lattice point beats the fit, and
  // the best lattice point lies next to it.
  double best = -1e300;
  Eigen::Vector2d arg = Eigen::Vector2d::Zero();
  for (double b1 = -1.5; b1 <= 0.0; b1 += 0.05)
    for (double b2 = 0.0; b2 <= 1.5; b2 += 0.05) {
      const Eigen::Vector3d eta(fit.coef[0], b1, b2);
      const double ll = qmle_loglik(r, X, kNormal, eta);
      if (ll > best) {
        best = ll;
        arg = {b1, b2};
      }
    }
  EXPECT_LE(best, fit.loglik + 1e-9);
  EXPECT_LT(std::abs(arg[0] - fit.coef[1]), 0.05 + 1e-9);
  EXPECT_LT(std::abs(arg[1] - fit.coef[2]), 0.05 + 1e-9);
}

TEST(Qmle, HessianNegativeDefiniteAtOptimum) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> z(0.0, 1.0);
  const Eigen::Index n = 300;
  Eigen::MatrixXd X(n, 2);
  std::vector<double> r(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    X.row(i) << 1.0, z(rng);
    r[static_cast<std::size_t>(i)] = (0.4 * X(i, 1) + z(rng) > 0.2) ? 1.0 : 0.0;
  }
  for (Link link : {kNormal, kLogit}) {
    const auto fit = qmle_binary_fit(r, X, link);
    Eigen::Matrix2d H;
    const double h = 1e-4;
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b) {
        Eigen::VectorXd e = fit.coef;
        auto f = [&](double da, double db) {
          Eigen::VectorXd v = e;
          v[a] += da;
          v[b] += db;
          return qmle_loglik(r, X, link, v);
        };
        H(a, b) = (f(h, h) - f(h, -h) - f(-h, h) + f(-h, -h)) / (4 * h * h);
      }
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(H);
    EXPECT_LT(es.eigenvalues().maxCoeff(), 0.0);
  }
}

TEST(Qmle, CompleteSeparationIsClampedAndFlagged) {
  const Eigen::Index n = 40;
  Eigen::MatrixXd X(n, 2);
  std::vector<double> r(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    X.row(i) << 1.0, static_cast<double>(i) - 19.5;
    r[static_cast<std::size_t>(i)] = i < 20 ? 1.0 : 0.0;
  }
  const auto fit = qmle_binary_fit(r, X, kNormal);
  EXPECT_TRUE(fit.separated);
  EXPECT_TRUE(fit.coef.allFinite());
}

TEST(Qmle, RankDeficientDesignRejected) {
  Eigen::MatrixXd X(4, 2);
  X << 1, 2, 1, 2, 1, 2, 1, 2;
  std::vector<double> r{1, 0, 1, 0};
  EXPECT_THROW(qmle_binary_fit(r, X, kNormal), DomainError);
}

TEST(Qmle, CauchyFitIsFlaggedNonconcave) {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> z(0.0, 1.0);
  const Eigen::Index n = 400;
  Eigen::MatrixXd X(n, 2);
  std::vector<double> r(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    X.row(i) << 1.0, z(rng);
    r[static_cast<std::size_t>(i)] = (0.7 * X(i, 1) + z(rng) > 0.0) ? 1.0 : 0.0;
  }
  const auto fit = qmle_binary_fit(r, X, kCauchy);
  EXPECT_TRUE(fit.nonconcave);
  EXPECT_LT(qmle_score(r, X, kCauchy, fit.coef).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(DrCov, ConstantOnlyDictionaryReducesToNoCovariatePipeline) {
  std::mt19937_64 rng(31);
  const auto data = covariate_data(rng, 120, 0.6);
  EstimatorSpec plain;
  plain.grid = build_grid(data, GridSimulationRule{});
  EstimatorSpec cov = plain;
  cov.covariates = DRSpec{};
  const auto a = estimate(data, plain);
  const auto b = estimate(data, cov);
  for (std::size_t i = 0; i < plain.grid.size(); ++i) {
    EXPECT_NEAR(a.counterfactual[i], b.counterfactual[i], 1e-10);
    EXPECT_NEAR(a.dtt.values[i], b.dtt.values[i], 1e-10);
  }
}

TEST(DrCov, DegenerateCovariateIsPrunedToIntercept) {
  std::mt19937_64 rng(32);
  auto data = covariate_data(rng, 100, 0.0, true);
  DRSpec spec;
  spec.covariates = {0};
  spec.dictionary = Dictionary::Quadratic;
  EXPECT_EQ(independent_columns(data, spec), (std::vector<Eigen::Index>{0}));
  EstimatorSpec plain;
  plain.grid = build_grid(data, GridSimulationRule{});
  EstimatorSpec cov = plain;
  cov.covariates = spec;
  const auto a = estimate(data, plain);
  const auto b = estimate(data, cov);
  for (std::size_t i = 0; i < plain.grid.size(); ++i) EXPECT_NEAR(a.counterfactual[i], b.counterfactual[i], 1e-10);
}

TEST(DrCov, DictionaryRows) {
  Observation o{"a", 0, 0, 0.0, {2.0, 3.0}};
  DRSpec s;
  s.covariates = {0, 1};
  EXPECT_EQ(dictionary_size(s), 3u);
  s.dictionary = Dictionary::Quadratic;
  EXPECT_EQ(dictionary_size(s), 6u);
  const auto row = dictionary_row(o, s);
  EXPECT_EQ(row[0], 1.0);
  EXPECT_EQ(row[3], 4.0);
  EXPECT_EQ(row[4], 9.0);
  EXPECT_EQ(row[5], 6.0);
}

TEST(DrCov, TopOfGridFitsAreDegenerate) {
  std::mt19937_64 rng(33);
  const auto data = covariate_data(rng, 80, 0.5);
  DRSpec spec;
  spec.covariates = {0};
  const auto grid = build_grid(data, GridAllUnique{});
  const auto coefs = dr_three_step(data, spec, grid);
  EXPECT_TRUE(coefs.diag00.back().degenerate);
  EXPECT_TRUE(coefs.diag10.back().degenerate);
  EXPECT_TRUE(coefs.diag01.back().degenerate);
}

TEST(DrCov, CovariateAdjustmentRecoversModelCounterfactual) {
  // Y = 0.2 D - 0.1 t + x + e with e ~ N(0,1) and x ~ N(0,1): within cells,
  // P(Y <= y | x) = Phi(y - 0.2 D + 0.1 t - x), so the probit model with
  // dictionary (1, x) is correct and the counterfactual for the treated in
  // period 1 is E[Phi(y - 0.2 + 0.1 - x)] = Phi((y - 0.1) / sqrt 2).
  std::mt19937_64 rng(34);
  std::normal_distribution<double> z(0.0, 1.0);
  std::vector<Observation> obs;
  int id = 0;
  for (int t : {0, 1})
    for (int g : {0, 1})
      for (int k = 0; k < 1500; ++k) {
        const double x = z(rng);
        obs.push_back({"u" + std::to_string(id++), t, g, 0.2 * g - 0.1 * t + x + z(rng), {x}});
      }
  const PanelDataset data(std::move(obs), DesignMode::TwoPeriod, {"x"});
  DRSpec spec;
  spec.covariates = {0};
  const Grid grid({-1.5, -0.5, 0.0, 0.5, 1.5}, 10.0);
  const auto coefs = dr_three_step(data, spec, grid);
  const auto cf = counterfactual_x(data, coefs, spec, grid);
  for (std::size_t i = 0; i < grid.size(); ++i)
    EXPECT_NEAR(cf[i], cdf(kNormal, (grid[i] - 0.1) / std::sqrt(2.0)), 0.03) << "y = " << grid[i];
  for (std::size_t i = 0; i < grid.size(); ++i) EXPECT_NEAR(coefs.alpha(i)[1], -1.0, 0.15);
}
