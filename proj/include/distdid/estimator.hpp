#pragma once

// Point estimation: cell ECDFs, per-triple counterfactuals, convex
// weighting and the DTT curve. Every bootstrap replication reruns this with
// per-unit weights.

#include <map>
#include <optional>
#include <span>
#include <utility>
#include <variant>

#include "aggregate.hpp"
#include "data.hpp"
#include "drcov.hpp"
#include "ecdf.hpp"
#include "effects.hpp"
#include "identify.hpp"

namespace distdid {

/// Equal weights within one group. The group may be omitted when the
/// design has a single treated group.
struct AggregateEqual {
  std::optional<int> group;
};
struct AggregateEvent {
  int event_time = 0;
};
struct AggregateExplicit {
  std::map<Triple, double> weights;
};
using AggregateSpec = std::variant<AggregateEqual, AggregateEvent, AggregateExplicit>;

struct EstimatorSpec {
  LinkRegime regime = LinkRegime::shared(Link{LinkKind::Normal});
  Grid grid;
  IdentifyOptions identify;
  AggregateSpec aggregate = AggregateEqual{};
  /// Distribution-regression covariate adjustment (two-period only).
  std::optional<DRSpec> covariates;
};

struct PointEstimate {
  StepDF treated;
  StepDF counterfactual;
  EffectCurve dtt;
  WeightScheme weights;
  IdentifyDiagnostics diagnostics;
};

inline WeightScheme resolve_weights(const PanelDataset& data, const AggregateSpec& spec,
                                    std::span<const double> unit_weights = {}) {
  const DesignInfo design = detect_design(data);
  if (const auto* eq = std::get_if<AggregateEqual>(&spec)) {
    int g = 1;
    if (eq->group) {
      g = *eq->group;
    } else {
      const auto groups = treated_groups(design);
      if (groups.size() != 1)
        throw DomainError("equal weighting needs a group when the design has " +
                          std::to_string(groups.size()) + " treated groups (use equal:<g>)");
      g = groups.front();
    }
    return equal_group_weights(design, g);
  }
  if (const auto* ev = std::get_if<AggregateEvent>(&spec))
    return event_study_weights(data, ev->event_time, unit_weights);
  return explicit_weights(design, std::get<AggregateExplicit>(spec).weights);
}

/// Full estimator on `data` with optional per-unit weights.
inline PointEstimate estimate(const PanelDataset& data, const EstimatorSpec& spec,
                              std::span<const double> unit_weights = {}) {
  PointEstimate out;
  const Grid& grid = spec.grid;

  if (spec.covariates) {
    if (data.design() != DesignMode::TwoPeriod)
      throw IdentificationError("covariate adjustment supports the two-period design only");
    out.weights.weights[{1, 0, 1}] = 1.0;
    const auto coefs = dr_three_step(data, *spec.covariates, grid, unit_weights);
    out.treated = group_period_ecdf_weighted(data, 1, 1, grid, unit_weights).df;
    out.counterfactual = counterfactual_x(data, coefs, *spec.covariates, grid, unit_weights);
    out.dtt = dtt(out.treated, out.counterfactual);
    return out;
  }

  out.weights = resolve_weights(data, spec.aggregate, unit_weights);
  const int control = control_group(data.design());

  std::map<std::pair<int, int>, CellEcdf> cells;
  auto cell = [&](int g, int t) -> const CellEcdf& {
    auto it = cells.find({g, t});
    if (it == cells.end())
      it = cells.emplace(std::pair{g, t}, group_period_ecdf_weighted(data, g, t, grid, unit_weights))
               .first;
    return it->second;
  };

  std::map<Triple, StepDF> treated_dfs, cf_dfs;
  for (const auto& [triple, w] : out.weights.weights) {
    if (w == 0.0) continue;
    const auto& tp = cell(triple.group, triple.pre);
    const auto& cpost = cell(control, triple.post);
    const auto& cpre = cell(control, triple.pre);
    const double eps = spec.identify.clip.resolve(std::min({tp.mass, cpost.mass, cpre.mass}));
    cf_dfs[triple] = counterfactual_from_dfs(
        tp.df, cpost.df, cpre.df, resolve_links(spec.regime, triple.group, control, triple.pre, triple.post),
        eps, spec.identify, &out.diagnostics);
    treated_dfs[triple] = cell(triple.group, triple.post).df;
  }
  if (out.weights.weights.size() == 1) {
    out.treated = treated_dfs.begin()->second;
    out.counterfactual = cf_dfs.begin()->second;
  } else {
    out.treated = weighted_df(treated_dfs, out.weights);
    out.counterfactual = weighted_df(cf_dfs, out.weights);
  }
  out.treated.label = "treated";
  out.counterfactual.label = "counterfactual";
  out.dtt = dtt(out.treated, out.counterfactual);
  return out;
}

}  // namespace distdid
