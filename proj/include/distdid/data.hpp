#pragma once

// Observation storage for balanced panels, unbalanced panels and repeated
// cross-sections, with two-group or staggered group labels.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace distdid {

/// Malformed input files or inconsistent observation sets.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A group-period cell required by the estimator is empty or a period
/// relation required by the design does not hold.
class IdentificationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Group label of never-treated units in staggered designs.
inline constexpr int kNeverTreated = std::numeric_limits<int>::max();

inline std::string group_name(int group) {
  return group == kNeverTreated ? std::string("inf") : std::to_string(group);
}

struct Observation {
  std::string unit_id;
  int period = 0;
  int group = 0;
  double outcome = 0.0;
  std::vector<double> covariates;
};

enum class DesignMode { TwoPeriod, NSMP, Staggered };
enum class SamplingKind { BalancedPanel, UnbalancedPanel, RepeatedCrossSection };

inline std::string_view to_string(DesignMode m) {
  switch (m) {
    case DesignMode::TwoPeriod: return "two-period";
    case DesignMode::NSMP: return "nsmp";
    case DesignMode::Staggered: return "staggered";
  }
  return "?";
}

inline std::string_view to_string(SamplingKind k) {
  switch (k) {
    case SamplingKind::BalancedPanel: return "balanced-panel";
    case SamplingKind::UnbalancedPanel: return "unbalanced-panel";
    case SamplingKind::RepeatedCrossSection: return "repeated-cross-section";
  }
  return "?";
}

struct DesignInfo {
  SamplingKind kind = SamplingKind::BalancedPanel;
  DesignMode mode = DesignMode::TwoPeriod;
  std::vector<int> pre_periods;
  std::vector<int> post_periods;
  std::vector<int> groups;
};

struct CellStats {
  std::size_t count = 0;
  double share = 0.0;
};

/// Immutable collection of observations with a dense unit index and
/// per-cell observation lists sorted by outcome.
class PanelDataset {
 public:
  PanelDataset() = default;

  PanelDataset(std::vector<Observation> observations, DesignMode mode,
               std::vector<std::string> covariate_names = {})
      : obs_(std::move(observations)),
        mode_(mode),
        covariate_names_(std::move(covariate_names)) {
    if (obs_.empty()) throw DataError("dataset has no observations");
    if (mode_ == DesignMode::TwoPeriod) normalize_two_period();
    index();
  }

  const std::vector<Observation>& observations() const { return obs_; }
  const Observation& operator[](std::size_t i) const { return obs_[i]; }
  DesignMode design() const { return mode_; }
  const std::vector<std::string>& covariate_names() const { return covariate_names_; }

  /// Pooled observation count n.
  std::size_t size() const { return obs_.size(); }
  /// Number of distinct units N.
  std::size_t num_units() const { return unit_ids_.size(); }
  const std::vector<std::string>& unit_ids() const { return unit_ids_; }
  std::size_t unit_of(std::size_t obs) const { return obs_unit_[obs]; }
  int unit_group(std::size_t unit) const { return unit_group_[unit]; }

  const std::vector<int>& periods() const { return periods_; }
  const std::vector<int>& groups() const { return groups_; }

  /// n_t; zero for periods without observations.
  std::size_t period_count(int period) const {
    auto it = period_count_.find(period);
    return it == period_count_.end() ? 0 : it->second;
  }

  /// S_jt.
  bool present(std::size_t unit, int period) const {
    return presence_.count({unit, period}) != 0;
  }

  /// Observation indices of a (group, period) cell ordered by outcome.
  std::span<const std::size_t> cell(int group, int period) const {
    auto it = cells_.find({group, period});
    if (it == cells_.end()) return {};
    return it->second;
  }

  /// Identifies a cell as e.g. "(group 1, period -2)".
  static std::string cell_name(int group, int period) {
    return "(group " + group_name(group) + ", period " + std::to_string(period) + ")";
  }

 private:
  void normalize_two_period() {
    std::set<int> labels;
    for (const auto& o : obs_) labels.insert(o.period);
    if (labels.size() != 2)
      throw DataError("two-period design needs exactly two distinct periods, found " +
                      std::to_string(labels.size()));
    const int first = *labels.begin();
    for (auto& o : obs_) o.period = (o.period == first) ? 0 : 1;
  }

  void index() {
    std::unordered_map<std::string, std::size_t> unit_lookup;
    obs_unit_.resize(obs_.size());
    const std::size_t ncov = covariate_names_.size();
    for (std::size_t i = 0; i < obs_.size(); ++i) {
      const auto& o = obs_[i];
      if (!std::isfinite(o.outcome))
        throw DataError("row " + std::to_string(i + 1) + ": outcome is not finite");
      if (o.covariates.size() != ncov)
        throw DataError("row " + std::to_string(i + 1) + ": expected " +
                        std::to_string(ncov) + " covariates");
      for (double x : o.covariates)
        if (!std::isfinite(x))
          throw DataError("row " + std::to_string(i + 1) + ": covariate is not finite");
      check_labels(o, i);

      auto [it, inserted] = unit_lookup.try_emplace(o.unit_id, unit_ids_.size());
      if (inserted) {
        unit_ids_.push_back(o.unit_id);
        unit_group_.push_back(o.group);
      } else if (unit_group_[it->second] != o.group) {
        throw DataError("row " + std::to_string(i + 1) + ": unit '" + o.unit_id +
                        "' changes group label");
      }
      obs_unit_[i] = it->second;
      if (!presence_.insert({it->second, o.period}).second)
        throw DataError("row " + std::to_string(i + 1) + ": duplicate (unit '" + o.unit_id +
                        "', period " + std::to_string(o.period) + ")");
      ++period_count_[o.period];
      cells_[{o.group, o.period}].push_back(i);
    }
    for (auto& [key, members] : cells_) {
      std::stable_sort(members.begin(), members.end(), [&](std::size_t a, std::size_t b) {
        return obs_[a].outcome < obs_[b].outcome;
      });
    }
    for (const auto& [t, count] : period_count_) periods_.push_back(t);
    std::set<int> gs(unit_group_.begin(), unit_group_.end());
    groups_.assign(gs.begin(), gs.end());
  }

  void check_labels(const Observation& o, std::size_t i) const {
    const auto row = "row " + std::to_string(i + 1) + ": ";
    switch (mode_) {
      case DesignMode::TwoPeriod:
      case DesignMode::NSMP:
        if (o.group != 0 && o.group != 1)
          throw DataError(row + "two-group designs need group labels 0 or 1");
        if (mode_ == DesignMode::NSMP && o.period == 0)
          throw DataError(row + "period 0 is reserved in multi-period designs");
        break;
      case DesignMode::Staggered:
        if (o.group != kNeverTreated && o.group < 1)
          throw DataError(row + "staggered group labels must be >= 1 or inf");
        if (o.period == 0)
          throw DataError(row + "period 0 is reserved in multi-period designs");
        break;
    }
  }

  std::vector<Observation> obs_;
  DesignMode mode_ = DesignMode::TwoPeriod;
  std::vector<std::string> covariate_names_;
  std::vector<std::string> unit_ids_;
  std::vector<int> unit_group_;
  std::vector<std::size_t> obs_unit_;
  std::set<std::pair<std::size_t, int>> presence_;
  std::map<int, std::size_t> period_count_;
  std::map<std::pair<int, int>, std::vector<std::size_t>> cells_;
  std::vector<int> periods_;
  std::vector<int> groups_;
};

/// Count and within-period share p_dt of a (group, period) cell.
inline CellStats cell_stats(const PanelDataset& data, int group, int period) {
  const std::size_t nt = data.period_count(period);
  if (nt == 0)
    throw DataError("no observations in period " + std::to_string(period));
  const std::size_t count = data.cell(group, period).size();
  return {count, static_cast<double>(count) / static_cast<double>(nt)};
}

inline DesignInfo detect_design(const PanelDataset& data) {
  DesignInfo info;
  const std::size_t N = data.num_units();
  const std::size_t T = data.periods().size();
  if (data.size() == N * T) {
    info.kind = SamplingKind::BalancedPanel;
  } else if (data.size() == N && T > 1) {
    info.kind = SamplingKind::RepeatedCrossSection;
  } else {
    info.kind = SamplingKind::UnbalancedPanel;
  }
  for (int t : data.periods()) {
    if (data.design() == DesignMode::TwoPeriod)
      (t == 0 ? info.pre_periods : info.post_periods).push_back(t);
    else
      (t < 0 ? info.pre_periods : info.post_periods).push_back(t);
  }
  info.groups = data.groups();
  info.mode = data.design();
  return info;
}

/// Column mapping for CSV ingestion.
struct CsvSchema {
  std::string id = "id";
  std::string time = "time";
  std::string group = "group";
  std::string outcome = "y";
  std::vector<std::string> covariates;
  /// Unset means infer from the labels (see infer_design_mode).
  std::optional<DesignMode> mode;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  fields.push_back(std::move(cur));
  for (auto& f : fields) {
    const auto b = f.find_first_not_of(" \t");
    const auto e = f.find_last_not_of(" \t");
    f = (b == std::string::npos) ? std::string() : f.substr(b, e - b + 1);
  }
  return fields;
}

inline double parse_real(const std::string& s, std::size_t row, const std::string& col) {
  double v = 0.0;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (s.empty() || ec != std::errc() || ptr != end || !std::isfinite(v))
    throw DataError("row " + std::to_string(row) + ": cannot parse '" + s + "' in column '" +
                    col + "' as a finite real");
  return v;
}

inline int parse_int(const std::string& s, std::size_t row, const std::string& col) {
  int v = 0;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (s.empty() || ec != std::errc() || ptr != end)
    throw DataError("row " + std::to_string(row) + ": cannot parse '" + s + "' in column '" +
                    col + "' as an integer");
  return v;
}

inline int parse_group(const std::string& s, std::size_t row, const std::string& col) {
  std::string lower = s;
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  if (lower.empty() || lower == "inf" || lower == "+inf" || lower == "infinity")
    return kNeverTreated;
  return parse_int(s, row, col);
}

}  // namespace detail

/// Two-group labels with two periods give TwoPeriod, two-group labels with
/// more periods give NSMP, anything else is Staggered.
inline DesignMode infer_design_mode(const std::vector<Observation>& obs) {
  std::set<int> groups, periods;
  for (const auto& o : obs) {
    groups.insert(o.group);
    periods.insert(o.period);
  }
  const bool two_group =
      std::all_of(groups.begin(), groups.end(), [](int g) { return g == 0 || g == 1; });
  if (two_group) return periods.size() == 2 ? DesignMode::TwoPeriod : DesignMode::NSMP;
  return DesignMode::Staggered;
}

inline PanelDataset read_csv(std::istream& in, const CsvSchema& schema) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("CSV input is empty");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  const auto header = detail::split_csv_line(line);
  auto column = [&](const std::string& name) {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw DataError("missing column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t c_id = column(schema.id), c_t = column(schema.time),
                    c_g = column(schema.group), c_y = column(schema.outcome);
  std::vector<std::size_t> c_x;
  for (const auto& name : schema.covariates) c_x.push_back(column(name));

  std::vector<Observation> obs;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    const auto f = detail::split_csv_line(line);
    if (f.size() != header.size())
      throw DataError("row " + std::to_string(row) + ": expected " +
                      std::to_string(header.size()) + " fields, found " +
                      std::to_string(f.size()));
    Observation o;
    o.unit_id = f[c_id];
    if (o.unit_id.empty()) throw DataError("row " + std::to_string(row) + ": empty unit id");
    o.period = detail::parse_int(f[c_t], row, schema.time);
    o.group = detail::parse_group(f[c_g], row, schema.group);
    if (f[c_y].empty())
      throw DataError("row " + std::to_string(row) + ": missing outcome");
    o.outcome = detail::parse_real(f[c_y], row, schema.outcome);
    for (std::size_t k = 0; k < c_x.size(); ++k) {
      if (f[c_x[k]].empty())
        throw DataError("row " + std::to_string(row) + ": missing covariate '" +
                        schema.covariates[k] + "'");
      o.covariates.push_back(detail::parse_real(f[c_x[k]], row, schema.covariates[k]));
    }
    obs.push_back(std::move(o));
  }
  const DesignMode mode = schema.mode.value_or(infer_design_mode(obs));
  try {
    return PanelDataset(std::move(obs), mode, schema.covariates);
  } catch (const DataError& e) {
    // Row numbers inside PanelDataset count data rows; shift past the header.
    std::string msg = e.what();
    if (msg.rfind("row ", 0) == 0) {
      const auto colon = msg.find(':');
      const auto r = std::stoul(msg.substr(4, colon - 4));
      msg = "row " + std::to_string(r + 1) + msg.substr(colon);
    }
    throw DataError(msg);
  }
}

inline PanelDataset load_csv(const std::string& path, const CsvSchema& schema = {}) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  return read_csv(in, schema);
}

inline void write_csv(std::ostream& out, const PanelDataset& data, const CsvSchema& schema = {}) {
  out << schema.id << ',' << schema.time << ',' << schema.group << ',' << schema.outcome;
  for (const auto& name : data.covariate_names()) out << ',' << name;
  out << '\n';
  out.precision(17);
  for (const auto& o : data.observations()) {
    out << o.unit_id << ',' << o.period << ',' << group_name(o.group) << ',' << o.outcome;
    for (double x : o.covariates) out << ',' << x;
    out << '\n';
  }
}

/// Builds the dataset implied by integer unit multiplicities (a
/// nonparametric bootstrap draw). Copies get ids "<id>#<k>".
inline PanelDataset replicate_units(const PanelDataset& data, std::span<const double> counts) {
  std::vector<std::vector<std::size_t>> rows(data.num_units());
  for (std::size_t i = 0; i < data.size(); ++i) rows[data.unit_of(i)].push_back(i);
  std::vector<Observation> out;
  for (std::size_t j = 0; j < data.num_units(); ++j) {
    const auto copies = static_cast<std::size_t>(std::llround(counts[j]));
    for (std::size_t k = 0; k < copies; ++k) {
      for (std::size_t i : rows[j]) {
        Observation o = data[i];
        o.unit_id += "#" + std::to_string(k);
        out.push_back(std::move(o));
      }
    }
  }
  return PanelDataset(std::move(out), data.design(), data.covariate_names());
}

}  // namespace distdid
