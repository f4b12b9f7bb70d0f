#pragma once

// Outcome grids and group-period empirical distribution functions.

#include <algorithm>
#include <cmath>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "data.hpp"
#include "links.hpp"

namespace distdid {

/// Strictly increasing finite outcome points plus the supremum of the
/// observed support, which the left inverse falls back to.
struct Grid {
  std::vector<double> points;
  double sup_y = 0.0;

  Grid() = default;
  Grid(std::vector<double> pts, double sup) : points(std::move(pts)), sup_y(sup) {
    validate();
  }

  std::size_t size() const { return points.size(); }
  double operator[](std::size_t i) const { return points[i]; }

  void validate() const {
    if (points.empty()) throw DomainError("grid is empty");
    for (std::size_t i = 0; i < points.size(); ++i) {
      if (!std::isfinite(points[i])) throw DomainError("grid points must be finite");
      if (i > 0 && !(points[i] > points[i - 1]))
        throw DomainError("grid points must be strictly increasing");
    }
    if (sup_y < points.back()) throw DomainError("grid sup_y below the last grid point");
  }

  friend bool operator==(const Grid&, const Grid&) = default;
};

/// A distribution function evaluated on a grid.
struct StepDF {
  Grid grid;
  std::vector<double> values;
  std::string label;
  /// True only when nondecreasing by construction.
  bool monotone = false;

  std::size_t size() const { return values.size(); }
  double operator[](std::size_t i) const { return values[i]; }
};

inline void require_same_grid(const Grid& a, const Grid& b, const char* where) {
  if (!(a == b)) throw DomainError(std::string(where) + ": grid mismatch");
}

/// Nondecreasing rearrangement by running maximum from the left.
inline StepDF running_max(StepDF df) {
  for (std::size_t i = 1; i < df.values.size(); ++i)
    df.values[i] = std::max(df.values[i], df.values[i - 1]);
  df.monotone = true;
  return df;
}

inline bool is_nondecreasing(std::span<const double> v) {
  return std::is_sorted(v.begin(), v.end());
}

/// Cell ECDF together with the cell mass that produced it.
struct CellEcdf {
  StepDF df;
  /// Observation count, or total weight when weights were supplied.
  double mass = 0.0;
};

/// ECDF of the (group, period) cell. `unit_weights`, when nonempty, holds one
/// weight per unit (bootstrap multiplicities or multiplier weights); values
/// are then ratios of weighted counts clamped to [0,1].
inline CellEcdf group_period_ecdf_weighted(const PanelDataset& data, int group, int period,
                                           const Grid& grid,
                                           std::span<const double> unit_weights = {}) {
  const auto members = data.cell(group, period);
  const std::string name = PanelDataset::cell_name(group, period);
  if (members.empty()) throw IdentificationError("empty cell " + name);
  const bool weighted = !unit_weights.empty();

  CellEcdf out;
  out.df.grid = grid;
  out.df.values.assign(grid.size(), 0.0);
  out.df.label = "F" + name;

  double total = 0.0;
  for (std::size_t i : members)
    total += weighted ? unit_weights[data.unit_of(i)] : 1.0;
  if (!(total > 0.0)) throw IdentificationError("cell " + name + " has no mass in this draw");

  double running = 0.0;
  std::size_t k = 0;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    const double y = grid[g];
    while (k < members.size() && data[members[k]].outcome <= y) {
      running += weighted ? unit_weights[data.unit_of(members[k])] : 1.0;
      ++k;
    }
    out.df.values[g] = std::clamp(running / total, 0.0, 1.0);
  }
  out.df.monotone = weighted ? is_nondecreasing(out.df.values) : true;
  out.mass = total;
  return out;
}

inline StepDF group_period_ecdf(const PanelDataset& data, int group, int period,
                                const Grid& grid) {
  return group_period_ecdf_weighted(data, group, period, grid).df;
}

struct GridAllUnique {};
struct GridSimulationRule {};
struct GridExplicit {
  std::vector<double> points;
};
/// Unique values between the pooled lower and upper type-1 percentiles.
struct GridTrimmed {
  double lower = 0.1;
  double upper = 0.9;
};
using GridRule = std::variant<GridAllUnique, GridSimulationRule, GridExplicit, GridTrimmed>;

/// Empirical quantile as the left inverse of the ECDF (type 1).
inline double empirical_quantile_type1(std::vector<double> values, double p) {
  if (values.empty()) throw DomainError("empirical quantile of an empty sample");
  std::sort(values.begin(), values.end());
  const double n = static_cast<double>(values.size());
  auto k = static_cast<std::size_t>(std::ceil(p * n - 1e-12));
  k = std::clamp<std::size_t>(k, 1, values.size());
  return values[k - 1];
}

inline Grid build_grid(const PanelDataset& data, const GridRule& rule) {
  std::vector<double> ys;
  ys.reserve(data.size());
  for (const auto& o : data.observations()) ys.push_back(o.outcome);
  if (ys.empty()) throw DomainError("build_grid: no outcomes");
  const double max_y = *std::max_element(ys.begin(), ys.end());

  if (const auto* ex = std::get_if<GridExplicit>(&rule)) {
    Grid g;
    g.points = ex->points;
    g.sup_y = g.points.empty() ? max_y : std::max(max_y, g.points.back());
    g.validate();
    return g;
  }

  std::vector<double> uniq = ys;
  std::sort(uniq.begin(), uniq.end());
  uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
  if (std::holds_alternative<GridSimulationRule>(rule)) {
    const double q90 = empirical_quantile_type1(ys, 0.9);
    uniq.resize(uniq.size() >= 2 ? uniq.size() - 2 : 0);
    std::erase_if(uniq, [q90](double y) { return y > q90; });
    if (uniq.empty()) throw DomainError("simulation grid rule leaves an empty grid");
  }
  if (const auto* tr = std::get_if<GridTrimmed>(&rule)) {
    if (!(tr->lower >= 0.0 && tr->lower < tr->upper && tr->upper <= 1.0))
      throw DomainError("trimmed grid needs 0 <= lower < upper <= 1");
    const double qlo = empirical_quantile_type1(ys, tr->lower);
    const double qhi = empirical_quantile_type1(ys, tr->upper);
    std::erase_if(uniq, [&](double y) { return y < qlo || y > qhi; });
    if (uniq.empty()) throw DomainError("trimmed grid rule leaves an empty grid");
  }
  return Grid(std::move(uniq), max_y);
}

inline void write_csv(std::ostream& out, const StepDF& df) {
  out.precision(17);
  out << "y,value\n";
  for (std::size_t i = 0; i < df.size(); ++i) out << df.grid[i] << ',' << df.values[i] << '\n';
}

/// Reads a `y,value` CSV. sup_y is taken as the last grid point unless given.
inline StepDF read_stepdf_csv(std::istream& in, std::optional<double> sup_y = {}) {
  std::string line;
  std::getline(in, line);
  StepDF df;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    const auto f = detail::split_csv_line(line);
    if (f.size() < 2) throw DataError("row " + std::to_string(row) + ": expected y,value");
    df.grid.points.push_back(detail::parse_real(f[0], row, "y"));
    df.values.push_back(detail::parse_real(f[1], row, "value"));
  }
  if (df.grid.points.empty()) throw DataError("step function CSV has no rows");
  df.grid.sup_y = sup_y.value_or(df.grid.points.back());
  df.grid.validate();
  df.monotone = is_nondecreasing(df.values);
  return df;
}

inline nlohmann::json to_json(const StepDF& df) {
  return {{"label", df.label},
          {"y", df.grid.points},
          {"sup_y", df.grid.sup_y},
          {"value", df.values},
          {"monotone", df.monotone}};
}

}  // namespace distdid
