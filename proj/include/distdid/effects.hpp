#pragma once

// Treatment-effect curves on distribution and quantile scales, the left
// inverse of a step DF, and interval geometry for quantile bands.

#include <cmath>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "ecdf.hpp"
#include "links.hpp"

namespace distdid {

/// Simultaneous band around a curve. For outcome-grid bands `sup_y` holds
/// the support supremum used by the left inverse.
struct UniformBand {
  std::vector<double> axis;
  double sup_y = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> center, lo, hi;
  std::vector<double> scale;
  double level = 0.9;
  double critical_value = 0.0;
  /// Envelopes were cut back to [0,1] (distribution-function bands only).
  bool truncated = false;
};

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  bool contains(double x) const { return lo <= x && x <= hi; }
  friend bool operator==(const Interval&, const Interval&) = default;
};

struct Envelope {
  std::vector<double> lo, hi;
  double level = 0.9;
};

/// DTT on an outcome grid or QTT on a probability grid.
struct EffectCurve {
  std::vector<double> axis;
  std::vector<double> values;
  std::optional<Envelope> band;
};

inline EffectCurve dtt(const StepDF& treated, const StepDF& counterfactual) {
  require_same_grid(treated.grid, counterfactual.grid, "dtt");
  EffectCurve out;
  out.axis = treated.grid.points;
  out.values.resize(treated.size());
  for (std::size_t i = 0; i < treated.size(); ++i) out.values[i] = treated[i] - counterfactual[i];
  return out;
}

enum class AdttRule { GridMean, Trapezoid };

/// Average DTT: mean over grid points, or the trapezoid integral divided by
/// the grid span.
inline double adtt(const EffectCurve& curve, AdttRule rule = AdttRule::GridMean) {
  const auto& v = curve.values;
  if (v.empty()) return 0.0;
  if (rule == AdttRule::GridMean || v.size() == 1) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  }
  double area = 0.0;
  for (std::size_t i = 1; i < v.size(); ++i)
    area += 0.5 * (v[i] + v[i - 1]) * (curve.axis[i] - curve.axis[i - 1]);
  return area / (curve.axis.back() - curve.axis.front());
}

/// inf{y in grid : F(y) >= tau}, or sup_y when F never reaches tau.
inline double left_inverse(std::span<const double> values, std::span<const double> points,
                           double sup_y, double tau) {
  if (!(tau >= 0.0 && tau <= 1.0)) throw DomainError("left_inverse: tau outside [0,1]");
  for (std::size_t i = 0; i < values.size(); ++i)
    if (values[i] >= tau) return points[i];
  return sup_y;
}

inline double left_inverse(const StepDF& df, double tau) {
  return left_inverse(df.values, df.grid.points, df.grid.sup_y, tau);
}

/// {0.05, 0.10, ..., 0.95}.
inline std::vector<double> default_taus() {
  std::vector<double> taus;
  for (int k = 1; k <= 19; ++k) taus.push_back(0.05 * k);
  return taus;
}

inline EffectCurve qtt(const StepDF& treated, const StepDF& counterfactual,
                       std::span<const double> taus) {
  require_same_grid(treated.grid, counterfactual.grid, "qtt");
  EffectCurve out;
  out.axis.assign(taus.begin(), taus.end());
  for (double tau : taus)
    out.values.push_back(left_inverse(treated, tau) - left_inverse(counterfactual, tau));
  return out;
}

/// [i1, i2] minus [j1, j2] = [i1 - j2, i2 - j1].
inline Interval minkowski_diff(const Interval& i, const Interval& j) {
  if (!(i.lo <= i.hi) || !(j.lo <= j.hi)) throw DomainError("minkowski_diff: malformed interval");
  return {i.lo - j.hi, i.hi - j.lo};
}

/// Quantile-function intervals from a DF band: [U^{-1}(tau), L^{-1}(tau)]
/// with both envelopes made nondecreasing by a running max first.
inline std::vector<Interval> invert_df_band(const UniformBand& band, std::span<const double> taus) {
  if (band.axis.empty() || band.lo.size() != band.axis.size() || band.hi.size() != band.axis.size())
    throw DomainError("invert_df_band: envelopes do not match the grid");
  const double sup_y = std::isnan(band.sup_y) ? band.axis.back() : band.sup_y;
  std::vector<double> lo = band.lo, hi = band.hi;
  for (std::size_t i = 1; i < lo.size(); ++i) {
    lo[i] = std::max(lo[i], lo[i - 1]);
    hi[i] = std::max(hi[i], hi[i - 1]);
  }
  for (std::size_t i = 0; i < lo.size(); ++i)
    if (lo[i] > hi[i]) throw DomainError("invert_df_band: band edges cross at y = " +
                                         std::to_string(band.axis[i]));
  std::vector<Interval> out;
  out.reserve(taus.size());
  for (double tau : taus)
    out.push_back({left_inverse(hi, band.axis, sup_y, tau), left_inverse(lo, band.axis, sup_y, tau)});
  return out;
}

inline std::vector<Interval> qtt_band(std::span<const Interval> treated,
                                      std::span<const Interval> counterfactual) {
  if (treated.size() != counterfactual.size()) throw DomainError("qtt_band: tau grid mismatch");
  std::vector<Interval> out;
  out.reserve(treated.size());
  for (std::size_t i = 0; i < treated.size(); ++i)
    out.push_back(minkowski_diff(treated[i], counterfactual[i]));
  return out;
}

inline Envelope envelope_of(const UniformBand& band) { return {band.lo, band.hi, band.level}; }

inline Envelope envelope_of(std::span<const Interval> intervals, double level) {
  Envelope e;
  e.level = level;
  for (const auto& iv : intervals) {
    e.lo.push_back(iv.lo);
    e.hi.push_back(iv.hi);
  }
  return e;
}

/// `axis,estimate,lo,hi`; lo and hi are empty without a band.
inline void write_csv(std::ostream& out, const EffectCurve& c) {
  out.precision(17);
  out << "axis,estimate,lo,hi\n";
  for (std::size_t i = 0; i < c.axis.size(); ++i) {
    out << c.axis[i] << ',' << c.values[i] << ',';
    if (c.band) out << c.band->lo[i] << ',' << c.band->hi[i];
    else out << ',';
    out << '\n';
  }
}

inline EffectCurve read_effect_csv(std::istream& in) {
  std::string line;
  std::getline(in, line);
  EffectCurve c;
  Envelope env;
  bool banded = true;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    const auto f = detail::split_csv_line(line);
    if (f.size() != 4) throw DataError("row " + std::to_string(row) + ": expected axis,estimate,lo,hi");
    c.axis.push_back(detail::parse_real(f[0], row, "axis"));
    c.values.push_back(detail::parse_real(f[1], row, "estimate"));
    if (f[2].empty() || f[3].empty()) {
      banded = false;
    } else {
      env.lo.push_back(detail::parse_real(f[2], row, "lo"));
      env.hi.push_back(detail::parse_real(f[3], row, "hi"));
    }
  }
  if (banded && !c.axis.empty()) c.band = std::move(env);
  return c;
}

/// Whitespace-separated columns with a comment header, as read by gnuplot.
inline void write_plot_data(std::ostream& out, const EffectCurve& c, const std::string& title) {
  out.precision(10);
  out << "# " << title << "\n# axis estimate" << (c.band ? " lo hi" : "") << '\n';
  for (std::size_t i = 0; i < c.axis.size(); ++i) {
    out << c.axis[i] << ' ' << c.values[i];
    if (c.band) out << ' ' << c.band->lo[i] << ' ' << c.band->hi[i];
    out << '\n';
  }
}

inline nlohmann::json to_json(const EffectCurve& c) {
  nlohmann::json j{{"axis", c.axis}, {"estimate", c.values}};
  if (c.band) {
    j["lo"] = c.band->lo;
    j["hi"] = c.band->hi;
    j["level"] = c.band->level;
  }
  return j;
}

}  // namespace distdid
