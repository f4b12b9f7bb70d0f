#pragma once

// Working CDFs used to model untreated-potential-outcome distribution
// functions locally at each outcome level.

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <string_view>

namespace distdid {

/// Raised for arguments outside a function's mathematical domain.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

enum class LinkKind { Normal, Logistic, Cauchy, Uniform, Identity };

struct Link {
  LinkKind kind = LinkKind::Normal;

  constexpr bool strictly_increasing() const {
    return kind == LinkKind::Normal || kind == LinkKind::Logistic ||
           kind == LinkKind::Cauchy;
  }
  friend constexpr bool operator==(Link, Link) = default;
};

inline constexpr std::array<std::string_view, 5> kLinkNames = {
    "normal", "logistic", "cauchy", "uniform", "identity"};

inline std::string_view to_string(LinkKind kind) {
  return kLinkNames[static_cast<std::size_t>(kind)];
}
inline std::string_view to_string(Link link) { return to_string(link.kind); }

inline std::string valid_link_names() {
  std::string out;
  for (auto name : kLinkNames) {
    if (!out.empty()) out += ", ";
    out += name;
  }
  return out;
}

/// Case-insensitive lookup of a link by name.
inline Link parse_link(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  for (std::size_t i = 0; i < kLinkNames.size(); ++i)
    if (lower == kLinkNames[i]) return Link{static_cast<LinkKind>(i)};
  throw DomainError("unknown link '" + std::string(name) +
                    "'; valid links: " + valid_link_names());
}

namespace detail {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

inline double normal_cdf(double x) {
  // erfc keeps full relative accuracy in the lower tail.
  return 0.5 * std::erfc(-x / std::numbers::sqrt2);
}

inline double normal_pdf(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

// Rational approximation (relative error ~1e-9) followed by one Halley step.
inline double normal_quantile(double p) {
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                 -2.759285104469687e+02, 1.383577518672690e+02,
                                 -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                 -1.556989798598866e+02, 6.680131188771972e+01,
                                 -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                 -2.400758277161838e+00, -2.549732539343734e+00,
                                 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                 2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double p_low = 0.02425;

  double x;
  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - p_low) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log1p(-p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  // Halley refinement; in the upper half work with the complementary
  // probability so the residual is not swamped by rounding near 1.
  double e;
  if (x <= 0.0) {
    e = normal_cdf(x) - p;
  } else {
    e = (1.0 - p) - 0.5 * std::erfc(x / std::numbers::sqrt2);
  }
  const double u = e / normal_pdf(x);
  x -= u / (1.0 + 0.5 * x * u);
  return x;
}

}  // namespace detail

/// Working CDF evaluated at an extended real. Identity and Uniform reject
/// infinite arguments.
inline double cdf(Link link, double x) {
  if (std::isnan(x)) throw DomainError("cdf: NaN argument");
  switch (link.kind) {
    case LinkKind::Normal:
      return detail::normal_cdf(x);
    case LinkKind::Logistic:
      if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
      return std::exp(x) / (1.0 + std::exp(x));
    case LinkKind::Cauchy:
      if (std::isinf(x)) return x > 0 ? 1.0 : 0.0;
      return 0.5 + std::atan(x) / std::numbers::pi;
    case LinkKind::Uniform:
      if (std::isinf(x)) throw DomainError("cdf: uniform link needs a finite argument");
      return std::clamp(x, 0.0, 1.0);
    case LinkKind::Identity:
      if (std::isinf(x)) throw DomainError("cdf: identity link needs a finite argument");
      return x;
  }
  return x;
}

/// Left inverse of cdf on [0,1]. Unbounded links map 0 and 1 to -inf/+inf.
inline double quantile(Link link, double p) {
  if (!(p >= 0.0 && p <= 1.0))
    throw DomainError("quantile: probability " + std::to_string(p) + " outside [0,1]");
  switch (link.kind) {
    case LinkKind::Normal:
      if (p == 0.0) return -detail::kInf;
      if (p == 1.0) return detail::kInf;
      if (p == 0.5) return 0.0;
      return detail::normal_quantile(p);
    case LinkKind::Logistic:
      if (p == 0.0) return -detail::kInf;
      if (p == 1.0) return detail::kInf;
      return std::log(p) - std::log1p(-p);
    case LinkKind::Cauchy:
      if (p == 0.0) return -detail::kInf;
      if (p == 1.0) return detail::kInf;
      if (p == 0.5) return 0.0;
      // tan(pi(p-1/2)) = -1/tan(pi p); the latter keeps precision near 0 and 1.
      if (p < 0.25) return -1.0 / std::tan(std::numbers::pi * p);
      if (p > 0.75) return 1.0 / std::tan(std::numbers::pi * (1.0 - p));
      return std::tan(std::numbers::pi * (p - 0.5));
    case LinkKind::Uniform:
    case LinkKind::Identity:
      return p;
  }
  return p;
}

/// Derivative of cdf. Uniform uses the value 1 on the closed support.
inline double density(Link link, double x) {
  if (!std::isfinite(x)) throw DomainError("density: argument must be finite");
  switch (link.kind) {
    case LinkKind::Normal:
      return detail::normal_pdf(x);
    case LinkKind::Logistic: {
      const double e = std::exp(-std::abs(x));
      return e / ((1.0 + e) * (1.0 + e));
    }
    case LinkKind::Cauchy:
      return 1.0 / (std::numbers::pi * (1.0 + x * x));
    case LinkKind::Uniform:
      return (x >= 0.0 && x <= 1.0) ? 1.0 : 0.0;
    case LinkKind::Identity:
      return 1.0;
  }
  return 0.0;
}

}  // namespace distdid
