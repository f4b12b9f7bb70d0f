#pragma once

// Counterfactual distribution functions under functional index parallel
// trends: two-period, non-staggered multi-period and staggered designs.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "data.hpp"
#include "ecdf.hpp"
#include "links.hpp"

namespace distdid {

/// Floating-point breakdown such as an undefined inf - inf index.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Theta {
  /// Links indexed by group (theta = 1).
  GroupIndexed,
  /// Links indexed by period (theta = 0).
  TimeIndexed,
};

/// Working-CDF configuration: a link per group (GroupIndexed) or per
/// period (TimeIndexed). `fallback` covers labels without an explicit entry.
struct LinkRegime {
  Theta theta = Theta::GroupIndexed;
  std::map<int, Link> link_for;
  std::optional<Link> fallback;

  static LinkRegime shared(Link link, Theta theta = Theta::GroupIndexed) {
    LinkRegime r;
    r.theta = theta;
    r.fallback = link;
    return r;
  }

  Link at(int label) const {
    if (auto it = link_for.find(label); it != link_for.end()) return it->second;
    if (fallback) return *fallback;
    throw DomainError(std::string("no link assigned to ") +
                      (theta == Theta::GroupIndexed ? "group " : "period ") +
                      group_name(label));
  }
};

/// The four links entering one counterfactual: the outer link and the
/// inverse links applied to the treated-pre, control-post and control-pre DFs.
struct CounterfactualLinks {
  Link outer;
  Link treated_pre;
  Link control_post;
  Link control_pre;
};

/// Resolves the links for treated group `g`, control group `c`, pre period
/// `pre` and post period `post`.
inline CounterfactualLinks resolve_links(const LinkRegime& regime, int g, int c, int pre,
                                         int post) {
  if (regime.theta == Theta::GroupIndexed)
    return {regime.at(g), regime.at(g), regime.at(c), regime.at(c)};
  return {regime.at(post), regime.at(pre), regime.at(post), regime.at(pre)};
}

/// ECDF values are clipped to [eps, 1 - eps] before inversion through an
/// unbounded link. By default eps = 1 / (4 * smallest input cell size).
struct ClipPolicy {
  bool enabled = true;
  std::optional<double> epsilon;

  double resolve(double min_cell_mass) const {
    if (!enabled) return 0.0;
    if (epsilon) return *epsilon;
    return 1.0 / (4.0 * min_cell_mass);
  }
};

struct IdentifyOptions {
  ClipPolicy clip;
  /// Apply a running-max rearrangement to the counterfactual.
  bool monotonize = false;
};

struct IdentifyDiagnostics {
  std::size_t clipped = 0;
  /// Identity-link outputs outside [0,1] (a testable implication).
  std::size_t out_of_range = 0;
  bool nonmonotone = false;

  IdentifyDiagnostics& operator+=(const IdentifyDiagnostics& o) {
    clipped += o.clipped;
    out_of_range += o.out_of_range;
    nonmonotone = nonmonotone || o.nonmonotone;
    return *this;
  }
};

/// Index coefficient curves on the grid.
struct IndexCoeffs {
  Grid grid;
  std::vector<double> alpha, beta, gamma;
};

namespace detail {

inline double inverse_link(Link link, double p, double eps, std::size_t& clipped) {
  if (link.strictly_increasing() && eps > 0.0) {
    const double c = std::clamp(p, eps, 1.0 - eps);
    if (c != p) ++clipped;
    p = c;
  }
  return quantile(link, p);
}

}  // namespace detail

/// alpha, beta and gamma from the baseline DF F00, the treated-pre DF F10
/// and the control-post DF F01. Entries may be infinite when clipping is off.
inline IndexCoeffs index_coeffs(const StepDF& F00, const StepDF& F10, const StepDF& F01,
                                const LinkRegime& regime, double eps = 0.0) {
  require_same_grid(F00.grid, F10.grid, "index_coeffs");
  require_same_grid(F00.grid, F01.grid, "index_coeffs");
  const auto links = resolve_links(regime, 1, 0, 0, 1);
  IndexCoeffs out{F00.grid, {}, {}, {}};
  std::size_t clipped = 0;
  for (std::size_t i = 0; i < F00.size(); ++i) {
    const double a = detail::inverse_link(links.control_pre, F00[i], eps, clipped);
    const double q10 = detail::inverse_link(links.treated_pre, F10[i], eps, clipped);
    const double q01 = detail::inverse_link(links.control_post, F01[i], eps, clipped);
    out.alpha.push_back(a);
    out.beta.push_back(q10 - a);
    out.gamma.push_back(q01 - a);
  }
  return out;
}

/// Pointwise counterfactual from the treated-pre, control-post and
/// control-pre DFs. `eps` = 0 disables clipping.
inline StepDF counterfactual_from_dfs(const StepDF& treated_pre, const StepDF& control_post,
                                      const StepDF& control_pre, const CounterfactualLinks& links,
                                      double eps, const IdentifyOptions& opts = {},
                                      IdentifyDiagnostics* diag = nullptr) {
  require_same_grid(treated_pre.grid, control_post.grid, "counterfactual");
  require_same_grid(treated_pre.grid, control_pre.grid, "counterfactual");
  StepDF out;
  out.grid = treated_pre.grid;
  out.values.resize(treated_pre.size());
  out.label = "Fcf";
  IdentifyDiagnostics local;
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    const double q10 = detail::inverse_link(links.treated_pre, treated_pre[i], eps, local.clipped);
    const double q01 =
        detail::inverse_link(links.control_post, control_post[i], eps, local.clipped);
    const double q00 = detail::inverse_link(links.control_pre, control_pre[i], eps, local.clipped);
    const double index = q10 + q01 - q00;
    if (std::isnan(index))
      throw NumericalError("undefined index (inf - inf) at y = " +
                           std::to_string(out.grid[i]) +
                           "; enable ECDF clipping or choose another grid");
    double v = cdf(links.outer, index);
    if (links.outer.kind == LinkKind::Identity && (v < 0.0 || v > 1.0)) ++local.out_of_range;
    out.values[i] = v;
  }
  local.nonmonotone = !is_nondecreasing(out.values);
  if (opts.monotonize) {
    out = running_max(std::move(out));
  } else {
    out.monotone = false;
  }
  if (diag) *diag += local;
  return out;
}

/// Two-period counterfactual F_{Y01|D=1} from F10, F01 and F00.
inline StepDF counterfactual_two_period(const StepDF& F10, const StepDF& F01, const StepDF& F00,
                                        const LinkRegime& regime, double eps = 0.0,
                                        const IdentifyOptions& opts = {},
                                        IdentifyDiagnostics* diag = nullptr) {
  return counterfactual_from_dfs(F10, F01, F00, resolve_links(regime, 1, 0, 0, 1), eps, opts,
                                 diag);
}

/// Counterfactual for treated group `g` against control group `c` built
/// from the data, with optional per-unit weights.
inline StepDF counterfactual_cells(const PanelDataset& data, int g, int c, int pre, int post,
                                   const LinkRegime& regime, const Grid& grid,
                                   const IdentifyOptions& opts = {},
                                   std::span<const double> unit_weights = {},
                                   IdentifyDiagnostics* diag = nullptr) {
  const auto tp = group_period_ecdf_weighted(data, g, pre, grid, unit_weights);
  const auto cpost = group_period_ecdf_weighted(data, c, post, grid, unit_weights);
  const auto cpre = group_period_ecdf_weighted(data, c, pre, grid, unit_weights);
  const double eps = opts.clip.resolve(std::min({tp.mass, cpost.mass, cpre.mass}));
  auto out = counterfactual_from_dfs(tp.df, cpost.df, cpre.df,
                                     resolve_links(regime, g, c, pre, post), eps, opts, diag);
  out.label = "Fcf(group " + group_name(g) + ", pre " + std::to_string(pre) + ", post " +
              std::to_string(post) + ")";
  return out;
}

inline StepDF counterfactual_two_period(const PanelDataset& data, const LinkRegime& regime,
                                        const Grid& grid, const IdentifyOptions& opts = {},
                                        std::span<const double> unit_weights = {},
                                        IdentifyDiagnostics* diag = nullptr) {
  if (data.design() != DesignMode::TwoPeriod)
    throw IdentificationError("two-period counterfactual needs a two-period dataset");
  return counterfactual_cells(data, 1, 0, 0, 1, regime, grid, opts, unit_weights, diag);
}

/// Non-staggered multi-period design: treated group 1, control group 0.
inline StepDF counterfactual_nsmp(const PanelDataset& data, int pre, int post,
                                  const LinkRegime& regime, const Grid& grid,
                                  const IdentifyOptions& opts = {},
                                  std::span<const double> unit_weights = {},
                                  IdentifyDiagnostics* diag = nullptr) {
  if (data.design() != DesignMode::NSMP)
    throw IdentificationError("non-staggered counterfactual needs a multi-period two-group dataset");
  if (pre >= 0) throw IdentificationError("pre period " + std::to_string(pre) + " is not < 0");
  if (post <= 0) throw IdentificationError("post period " + std::to_string(post) + " is not > 0");
  return counterfactual_cells(data, 1, 0, pre, post, regime, grid, opts, unit_weights, diag);
}

/// Staggered design: group g against the never-treated group.
inline StepDF counterfactual_staggered(const PanelDataset& data, int g, int pre, int post,
                                       const LinkRegime& regime, const Grid& grid,
                                       const IdentifyOptions& opts = {},
                                       std::span<const double> unit_weights = {},
                                       IdentifyDiagnostics* diag = nullptr) {
  if (data.design() != DesignMode::Staggered)
    throw IdentificationError("staggered counterfactual needs a staggered dataset");
  if (g == kNeverTreated) throw IdentificationError("the never-treated group has no counterfactual");
  if (pre == 0 || pre > g - 1)
    throw IdentificationError("period " + std::to_string(pre) +
                              " is not pre-treatment for group " + std::to_string(g));
  if (post < g)
    throw IdentificationError("period " + std::to_string(post) + " precedes treatment of group " +
                              std::to_string(g));
  return counterfactual_cells(data, g, kNeverTreated, pre, post, regime, grid, opts, unit_weights,
                              diag);
}

}  // namespace distdid
