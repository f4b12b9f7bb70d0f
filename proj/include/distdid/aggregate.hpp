#pragma once

// Convex weights over (group, pre period, post period) triples and the
// weighted distribution functions they induce.

#include <cmath>
#include <compare>
#include <fstream>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "data.hpp"
#include "ecdf.hpp"

namespace distdid {

struct Triple {
  int group = 1;
  int pre = 0;
  int post = 1;
  friend auto operator<=>(const Triple&, const Triple&) = default;
};

inline std::string to_string(const Triple& t) {
  return "(" + group_name(t.group) + "," + std::to_string(t.pre) + "," + std::to_string(t.post) +
         ")";
}

enum class WeightProvenance { EqualPerGroup, EventStudy, Explicit };

struct WeightScheme {
  std::map<Triple, double> weights;
  WeightProvenance provenance = WeightProvenance::Explicit;
  /// Event time for EventStudy schemes.
  int event_time = 0;

  double total() const {
    double s = 0.0;
    for (const auto& [t, w] : weights) s += w;
    return s;
  }
};

/// Treated groups of a design; the two-group designs use label 1.
inline std::vector<int> treated_groups(const DesignInfo& design) {
  if (design.mode != DesignMode::Staggered) return {1};
  std::vector<int> out;
  for (int g : design.groups)
    if (g != kNeverTreated) out.push_back(g);
  return out;
}

inline int control_group(DesignMode mode) {
  return mode == DesignMode::Staggered ? kNeverTreated : 0;
}

/// Observed pre-treatment periods for group g: t' <= g - 1, t' != 0.
inline std::vector<int> valid_pre_periods(const DesignInfo& design, int g) {
  if (design.mode == DesignMode::TwoPeriod) return {0};
  std::vector<int> out;
  for (int t : design.pre_periods)
    if (t <= g - 1) out.push_back(t);
  for (int t : design.post_periods)
    if (t != 0 && t <= g - 1) out.push_back(t);
  return out;
}

/// Observed post-treatment periods for group g: t >= g.
inline std::vector<int> valid_post_periods(const DesignInfo& design, int g) {
  if (design.mode == DesignMode::TwoPeriod) return {1};
  std::vector<int> out;
  for (int t : design.post_periods)
    if (t >= g) out.push_back(t);
  return out;
}

inline bool is_valid_triple(const DesignInfo& design, const Triple& t) {
  const auto groups = treated_groups(design);
  if (std::find(groups.begin(), groups.end(), t.group) == groups.end()) return false;
  const auto pre = valid_pre_periods(design, t.group);
  const auto post = valid_post_periods(design, t.group);
  return std::find(pre.begin(), pre.end(), t.pre) != pre.end() &&
         std::find(post.begin(), post.end(), t.post) != post.end();
}

/// Equal weight on every valid (t', t) pair of one group.
inline WeightScheme equal_group_weights(const DesignInfo& design, int g) {
  const auto groups = treated_groups(design);
  if (std::find(groups.begin(), groups.end(), g) == groups.end())
    throw DomainError("group " + group_name(g) + " is not a treated group of this design");
  const auto pre = valid_pre_periods(design, g);
  const auto post = valid_post_periods(design, g);
  if (pre.empty() || post.empty())
    throw DomainError("group " + group_name(g) + " has no valid (pre, post) pair");
  WeightScheme s;
  s.provenance = WeightProvenance::EqualPerGroup;
  const double w = 1.0 / static_cast<double>(pre.size() * post.size());
  for (int tp : pre)
    for (int t : post) s.weights[{g, tp, t}] = w;
  return s;
}

/// Event-study weights: groups exposed for exactly e periods, each weighted
/// by its empirical share among eligible groups and spread evenly over its
/// pre periods. Unit weights (bootstrap draws) enter the group shares.
inline WeightScheme event_study_weights(const PanelDataset& data, int e,
                                        std::span<const double> unit_weights = {}) {
  if (e < 0) throw DomainError("event time must be nonnegative");
  const DesignInfo design = detect_design(data);
  const int T = design.post_periods.empty() ? 0 : design.post_periods.back();

  std::map<int, double> mass;
  for (std::size_t j = 0; j < data.num_units(); ++j)
    mass[data.unit_group(j)] += unit_weights.empty() ? 1.0 : unit_weights[j];

  std::map<int, double> eligible;
  double eligible_mass = 0.0;
  for (int g : treated_groups(design)) {
    if (static_cast<long long>(g) + e > T) continue;
    const int t = g + e;
    if (!std::binary_search(design.post_periods.begin(), design.post_periods.end(), t)) continue;
    if (valid_pre_periods(design, g).empty()) continue;
    if (mass[g] <= 0.0) continue;
    eligible[g] = mass[g];
    eligible_mass += mass[g];
  }
  if (eligible.empty())
    throw DomainError("no treated group is observed " + std::to_string(e) +
                      " periods after first treatment");

  WeightScheme s;
  s.provenance = WeightProvenance::EventStudy;
  s.event_time = e;
  double total = 0.0;
  for (const auto& [g, m] : eligible) {
    const auto pre = valid_pre_periods(design, g);
    const double share = m / eligible_mass;
    for (int tp : pre) {
      const double raw = share / static_cast<double>(pre.size());
      s.weights[{g, tp, g + e}] = raw;
      total += raw;
    }
  }
  for (auto& [t, w] : s.weights) w /= total;
  return s;
}

/// User-supplied weights. Totals within [0.999, 1.001] are renormalized;
/// anything else is rejected.
inline WeightScheme explicit_weights(const DesignInfo& design, std::map<Triple, double> weights) {
  double total = 0.0;
  for (const auto& [t, w] : weights) {
    if (!(w >= 0.0) || !std::isfinite(w))
      throw DomainError("weight for " + to_string(t) + " must be finite and nonnegative");
    if (!is_valid_triple(design, t))
      throw DomainError("triple " + to_string(t) + " is not a valid (group, pre, post) triple");
    total += w;
  }
  if (total < 0.999 || total > 1.001)
    throw DomainError("weights sum to " + std::to_string(total) + ", not 1");
  WeightScheme s;
  s.provenance = WeightProvenance::Explicit;
  for (auto& [t, w] : weights) s.weights[t] = w / total;
  return s;
}

/// Reads `g,tpre,tpost,weight` rows.
inline std::map<Triple, double> read_weights_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::string line;
  std::getline(in, line);
  std::map<Triple, double> out;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    const auto f = detail::split_csv_line(line);
    if (f.size() != 4) throw DataError("row " + std::to_string(row) + ": expected g,tpre,tpost,weight");
    Triple t{detail::parse_group(f[0], row, "g"), detail::parse_int(f[1], row, "tpre"),
             detail::parse_int(f[2], row, "tpost")};
    if (!out.emplace(t, detail::parse_real(f[3], row, "weight")).second)
      throw DataError("row " + std::to_string(row) + ": duplicate triple " + to_string(t));
  }
  return out;
}

/// Pointwise convex combination of per-triple DFs. Zero-weight triples
/// need no DF.
inline StepDF weighted_df(const std::map<Triple, StepDF>& dfs, const WeightScheme& scheme) {
  const StepDF* first = nullptr;
  StepDF out;
  for (const auto& [t, w] : scheme.weights) {
    if (w == 0.0) continue;
    auto it = dfs.find(t);
    if (it == dfs.end()) throw DomainError("no distribution function for triple " + to_string(t));
    if (!first) {
      first = &it->second;
      out.grid = first->grid;
      out.values.assign(first->size(), 0.0);
    } else {
      require_same_grid(first->grid, it->second.grid, "weighted_df");
    }
    for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] += w * it->second[i];
  }
  if (!first) throw DomainError("weight scheme has no positive weight");
  out.label = "weighted";
  out.monotone = is_nondecreasing(out.values);
  return out;
}

}  // namespace distdid
