#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "distdid/links.hpp"

using namespace distdid;

namespace {
const double kInf = std::numeric_limits<double>::infinity();
const Link kNormal{LinkKind::Normal}, kLogit{LinkKind::Logistic}, kCauchy{LinkKind::Cauchy},
    kUniform{LinkKind::Uniform}, kIdentity{LinkKind::Identity};
}  // namespace

// Reference values from standard tables.
TEST(Links, NormalQuantileTableValues) {
  EXPECT_NEAR(quantile(kNormal, 0.975), 1.959963984540054, 1e-13);
  EXPECT_NEAR(quantile(kNormal, 0.95), 1.6448536269514722, 1e-13);
  EXPECT_NEAR(quantile(kNormal, 0.001), -3.090232306167813, 1e-12);
  EXPECT_NEAR(quantile(kNormal, 1e-10), -6.361340902404056, 1e-9);
  EXPECT_NEAR(quantile(kNormal, 1.0 - 1e-10), 6.361340889697422, 1e-6);
  EXPECT_EQ(quantile(kNormal, 0.5), 0.0);
}

TEST(Links, CdfTableValues) {
  EXPECT_NEAR(cdf(kNormal, 1.0), 0.8413447460685429, 1e-15);
  EXPECT_NEAR(cdf(kNormal, -8.0), 6.22096057427178e-16, 1e-28);
  EXPECT_NEAR(cdf(kLogit, 1.0), 0.7310585786300049, 1e-15);
  EXPECT_NEAR(cdf(kCauchy, 1.0), 0.75, 1e-15);
  EXPECT_EQ(cdf(kUniform, -0.5), 0.0);
  EXPECT_EQ(cdf(kUniform, 1.5), 1.0);
  EXPECT_EQ(cdf(kIdentity, 1.5), 1.5);
}

TEST(Links, RoundTripStrictlyIncreasing) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(1e-9, 1.0 - 1e-9);
  for (Link l : {kNormal, kLogit, kCauchy}) {
    for (int i = 0; i < 2000; ++i) {
      const double p = u(rng);
      EXPECT_NEAR(cdf(l, quantile(l, p)), p, 1e-12) << to_string(l) << " p=" << p;
    }
  }
}

TEST(Links, UnboundedEndpoints) {
  for (Link l : {kNormal, kLogit, kCauchy}) {
    EXPECT_EQ(quantile(l, 0.0), -kInf);
    EXPECT_EQ(quantile(l, 1.0), kInf);
    EXPECT_EQ(cdf(l, -kInf), 0.0);
    EXPECT_EQ(cdf(l, kInf), 1.0);
  }
}

TEST(Links, BoundedLinksRejectInfiniteArguments) {
  EXPECT_THROW(cdf(kUniform, kInf), DomainError);
  EXPECT_THROW(cdf(kIdentity, -kInf), DomainError);
  EXPECT_EQ(quantile(kIdentity, 0.3), 0.3);
  EXPECT_EQ(quantile(kUniform, 0.0), 0.0);
}

TEST(Links, QuantileRejectsOutOfRange) {
  EXPECT_THROW(quantile(kNormal, -0.1), DomainError);
  EXPECT_THROW(quantile(kNormal, 1.1), DomainError);
  EXPECT_THROW(quantile(kNormal, std::nan("")), DomainError);
  EXPECT_THROW(cdf(kNormal, std::nan("")), DomainError);
}

TEST(Links, CauchyTailsKeepPrecision) {
  EXPECT_NEAR(quantile(kCauchy, 1e-8) / (-1.0 / (M_PI * 1e-8)), 1.0, 1e-8);
  EXPECT_NEAR(quantile(kCauchy, 0.25), -1.0, 1e-15);
  EXPECT_NEAR(quantile(kCauchy, 0.75), 1.0, 1e-15);
}

TEST(Links, DensityMatchesFiniteDifference) {
  for (Link l : {kNormal, kLogit, kCauchy}) {
    for (double x : {-3.0, -0.7, 0.0, 0.4, 2.5}) {
      const double h = 1e-6;
      const double fd = (cdf(l, x + h) - cdf(l, x - h)) / (2 * h);
      EXPECT_NEAR(density(l, x), fd, 1e-8);
    }
  }
}

TEST(Links, ParseNamesCaseInsensitively) {
  EXPECT_EQ(parse_link("Normal").kind, LinkKind::Normal);
  EXPECT_EQ(parse_link("CAUCHY").kind, LinkKind::Cauchy);
  EXPECT_EQ(parse_link("identity").kind, LinkKind::Identity);
  try {
    parse_link("probit");
    FAIL();
  } catch (const DomainError& e) {
    EXPECT_NE(std::string(e.what()).find("normal, logistic, cauchy, uniform, identity"), std::string::npos);
  }
}

TEST(Links, OnlyUnboundedLinksAreStrictlyIncreasing) {
  EXPECT_TRUE(kNormal.strictly_increasing());
  EXPECT_TRUE(kCauchy.strictly_increasing());
  EXPECT_FALSE(kUniform.strictly_increasing());
  EXPECT_FALSE(kIdentity.strictly_increasing());
}
