#pragma once

// Run configuration: a small TOML-style key/value reader and the mapping
// from configuration keys to estimator, bootstrap and simulation settings.
//
// Supported syntax: `key = value` lines, `[section]` headers, `#` comments,
// strings, numbers, booleans, arrays (may span lines) and inline tables.

#include <cctype>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "aggregate.hpp"
#include "data.hpp"
#include "drcov.hpp"
#include "ecdf.hpp"
#include "estimator.hpp"
#include "identify.hpp"
#include "inference.hpp"
#include "links.hpp"
#include "simlab.hpp"

namespace distdid {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using nlohmann::json;

namespace detail {

class TomlReader {
 public:
  TomlReader(const std::string& text, std::size_t line) : s_(text), line_(line) {}

  json value() {
    skip_ws();
    if (pos_ >= s_.size()) fail("missing value");
    const char c = s_[pos_];
    if (c == '"' || c == '\'') return string_value();
    if (c == '[') return array();
    if (c == '{') return table();
    return scalar();
  }

  std::string key() {
    skip_ws();
    if (pos_ < s_.size() && (s_[pos_] == '"' || s_[pos_] == '\'')) return string_value();
    const std::size_t start = pos_;
    while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_' ||
                                s_[pos_] == '-' || s_[pos_] == '.'))
      ++pos_;
    if (pos_ == start) fail("expected a key");
    return s_.substr(start, pos_ - start);
  }

  void expect(char c) {
    skip_ws();
    if (pos_ >= s_.size() || s_[pos_] != c) fail(std::string("expected '") + c + "'");
    ++pos_;
  }

  void finish() {
    skip_ws();
    if (pos_ != s_.size()) fail("unexpected trailing text");
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw ConfigError("config line " + std::to_string(line_) + ": " + what);
  }

  void skip_ws() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }

  std::string string_value() {
    const char quote = s_[pos_++];
    std::string out;
    while (pos_ < s_.size() && s_[pos_] != quote) {
      char c = s_[pos_++];
      if (c == '\\' && quote == '"' && pos_ < s_.size()) {
        c = s_[pos_++];
        switch (c) {
          case 'n': c = '\n'; break;
          case 't': c = '\t'; break;
          case '"': case '\\': break;
          default: fail(std::string("unknown escape \\") + c);
        }
      }
      out += c;
    }
    if (pos_ >= s_.size()) fail("unterminated string");
    ++pos_;
    return out;
  }

  json array() {
    ++pos_;
    json out = json::array();
    skip_ws();
    if (pos_ < s_.size() && s_[pos_] == ']') {
      ++pos_;
      return out;
    }
    for (;;) {
      out.push_back(value());
      skip_ws();
      if (pos_ < s_.size() && s_[pos_] == ',') {
        ++pos_;
        skip_ws();
        if (pos_ < s_.size() && s_[pos_] == ']') break;
        continue;
      }
      break;
    }
    expect(']');
    return out;
  }

  json table() {
    ++pos_;
    json out = json::object();
    skip_ws();
    if (pos_ < s_.size() && s_[pos_] == '}') {
      ++pos_;
      return out;
    }
    for (;;) {
      const std::string k = key();
      expect('=');
      out[k] = value();
      skip_ws();
      if (pos_ < s_.size() && s_[pos_] == ',') {
        ++pos_;
        continue;
      }
      break;
    }
    expect('}');
    return out;
  }

  json scalar() {
    const std::size_t start = pos_;
    while (pos_ < s_.size() && s_[pos_] != ',' && s_[pos_] != ']' && s_[pos_] != '}' &&
           !std::isspace(static_cast<unsigned char>(s_[pos_])))
      ++pos_;
    const std::string tok = s_.substr(start, pos_ - start);
    if (tok == "true") return true;
    if (tok == "false") return false;
    if (tok.empty()) fail("missing value");
    if (tok.find_first_of(".eE") == std::string::npos && tok != "inf" && tok != "nan") {
      std::int64_t v = 0;
      const auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
      if (ec == std::errc() && p == tok.data() + tok.size()) return v;
    }
    try {
      std::size_t used = 0;
      const double d = std::stod(tok, &used);
      if (used == tok.size()) return d;
    } catch (const std::exception&) {
    }
    fail("cannot read value '" + tok + "' (strings need quotes)");
  }

  const std::string& s_;
  std::size_t line_;
  std::size_t pos_ = 0;
};

inline std::string strip_comment(const std::string& line) {
  char quote = 0;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quote) {
      if (c == '\\' && quote == '"') ++i;
      else if (c == quote) quote = 0;
    } else if (c == '"' || c == '\'') {
      quote = c;
    } else if (c == '#') {
      return line.substr(0, i);
    }
  }
  return line;
}

inline int bracket_depth(const std::string& text) {
  int depth = 0;
  char quote = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quote) {
      if (c == '\\' && quote == '"') ++i;
      else if (c == quote) quote = 0;
    } else if (c == '"' || c == '\'') {
      quote = c;
    } else if (c == '[' || c == '{') {
      ++depth;
    } else if (c == ']' || c == '}') {
      --depth;
    }
  }
  return depth;
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace detail

/// Parses configuration text into a JSON object; sections become nested objects.
inline json parse_config(std::istream& in) {
  json root = json::object();
  json* section = &root;
  std::string raw, pending;
  std::size_t line_no = 0, start_line = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = detail::trim(detail::strip_comment(raw));
    if (pending.empty()) {
      if (line.empty()) continue;
      start_line = line_no;
      if (line.front() == '[' && line.find('=') == std::string::npos) {
        if (line.back() != ']') throw ConfigError("config line " + std::to_string(line_no) + ": bad section header");
        const std::string name = detail::trim(line.substr(1, line.size() - 2));
        if (name.empty()) throw ConfigError("config line " + std::to_string(line_no) + ": empty section name");
        section = &root[name];
        if (!section->is_object()) *section = json::object();
        continue;
      }
    }
    pending += (pending.empty() ? "" : " ") + line;
    if (detail::bracket_depth(pending) > 0) continue;
    detail::TomlReader r(pending, start_line);
    const std::string k = r.key();
    r.expect('=');
    json v = r.value();
    r.finish();
    if (section->contains(k)) throw ConfigError("config line " + std::to_string(start_line) + ": duplicate key '" + k + "'");
    (*section)[k] = std::move(v);
    pending.clear();
  }
  if (!pending.empty())
    throw ConfigError("config line " + std::to_string(start_line) + ": unterminated array or table");
  return root;
}

inline json parse_config(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in);
}

inline json load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  return parse_config(in);
}

/// FNV-1a over the canonical JSON text; keys that do not affect results
/// (thread counts, output locations) are excluded.
inline std::string config_hash(json cfg) {
  for (const char* k : {"threads", "out", "config"}) cfg.erase(k);
  const std::string text = cfg.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream s;
  s << std::hex;
  s.width(16);
  s.fill('0');
  s << h;
  return s.str();
}

namespace detail {

inline const json* find(const json& cfg, const char* key) {
  auto it = cfg.find(key);
  return it == cfg.end() || it->is_null() ? nullptr : &*it;
}

inline std::string get_string(const json& cfg, const char* key, const std::string& def) {
  const json* v = find(cfg, key);
  if (!v) return def;
  if (!v->is_string()) throw ConfigError(std::string("'") + key + "' must be a string");
  return v->get<std::string>();
}

inline double get_number(const json& cfg, const char* key, double def) {
  const json* v = find(cfg, key);
  if (!v) return def;
  if (!v->is_number()) throw ConfigError(std::string("'") + key + "' must be a number");
  return v->get<double>();
}

inline long long get_integer(const json& cfg, const char* key, long long def) {
  const json* v = find(cfg, key);
  if (!v) return def;
  if (!v->is_number_integer() && !v->is_number_unsigned())
    throw ConfigError(std::string("'") + key + "' must be an integer");
  return v->get<long long>();
}

inline bool get_bool(const json& cfg, const char* key, bool def) {
  const json* v = find(cfg, key);
  if (!v) return def;
  if (!v->is_boolean()) throw ConfigError(std::string("'") + key + "' must be true or false");
  return v->get<bool>();
}

inline std::vector<std::string> get_strings(const json& cfg, const char* key) {
  const json* v = find(cfg, key);
  if (!v) return {};
  if (!v->is_array()) throw ConfigError(std::string("'") + key + "' must be an array of strings");
  std::vector<std::string> out;
  for (const auto& e : *v) {
    if (!e.is_string()) throw ConfigError(std::string("'") + key + "' must be an array of strings");
    out.push_back(e.get<std::string>());
  }
  return out;
}

inline std::vector<double> get_numbers(const json& cfg, const char* key) {
  const json* v = find(cfg, key);
  if (!v) return {};
  if (!v->is_array()) throw ConfigError(std::string("'") + key + "' must be an array of numbers");
  std::vector<double> out;
  for (const auto& e : *v) {
    if (!e.is_number()) throw ConfigError(std::string("'") + key + "' must be an array of numbers");
    out.push_back(e.get<double>());
  }
  return out;
}

inline Link link_or_config_error(const std::string& name) {
  try {
    return parse_link(name);
  } catch (const DomainError& e) {
    throw ConfigError(e.what());
  }
}

inline int parse_label(const std::string& s, const char* what) {
  const std::string t = trim(s);
  if (t == "inf" || t == "Inf" || t == "INF") return kNeverTreated;
  int v = 0;
  const auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || p != t.data() + t.size())
    throw ConfigError(std::string("bad ") + what + " label '" + s + "'");
  return v;
}

}  // namespace detail

inline DesignMode parse_design(const std::string& s) {
  if (s == "two-period" || s == "twoperiod" || s == "2x2") return DesignMode::TwoPeriod;
  if (s == "nsmp") return DesignMode::NSMP;
  if (s == "staggered") return DesignMode::Staggered;
  throw ConfigError("unknown design '" + s + "' (valid: two-period, nsmp, staggered)");
}

inline CsvSchema schema_from(const json& cfg) {
  CsvSchema s;
  s.id = detail::get_string(cfg, "id", s.id);
  s.time = detail::get_string(cfg, "time", s.time);
  s.group = detail::get_string(cfg, "group", s.group);
  s.outcome = detail::get_string(cfg, "outcome", s.outcome);
  s.covariates = detail::get_strings(cfg, "covariates");
  if (const json* d = detail::find(cfg, "design")) {
    if (!d->is_string()) throw ConfigError("'design' must be a string");
    s.mode = parse_design(d->get<std::string>());
  }
  return s;
}

/// `link` sets the shared link; `links = {"0" = "normal", "1" = "logistic"}`
/// assigns per-label links; `theta = "group" | "time"`.
inline LinkRegime regime_from(const json& cfg) {
  LinkRegime r;
  const std::string theta = detail::get_string(cfg, "theta", "group");
  if (theta == "group" || theta == "1") r.theta = Theta::GroupIndexed;
  else if (theta == "time" || theta == "0") r.theta = Theta::TimeIndexed;
  else throw ConfigError("'theta' must be \"group\" or \"time\"");
  if (const json* l = detail::find(cfg, "links")) {
    if (!l->is_object()) throw ConfigError("'links' must be an inline table of label = link");
    for (const auto& [k, v] : l->items()) {
      if (!v.is_string()) throw ConfigError("'links' values must be link names");
      r.link_for[detail::parse_label(k, "link")] = detail::link_or_config_error(v.get<std::string>());
    }
  }
  const std::string shared = detail::get_string(cfg, "link", r.link_for.empty() ? "normal" : "");
  if (!shared.empty()) r.fallback = detail::link_or_config_error(shared);
  return r;
}

/// `grid = "unique" | "simulation" | "trim:<lo>,<hi>"` or an explicit array.
inline GridRule grid_rule_from(const json& cfg) {
  const json* g = detail::find(cfg, "grid");
  if (!g) return GridAllUnique{};
  if (g->is_array()) return GridExplicit{detail::get_numbers(cfg, "grid")};
  if (!g->is_string()) throw ConfigError("'grid' must be \"unique\", \"simulation\" or an array");
  const auto s = g->get<std::string>();
  if (s == "unique") return GridAllUnique{};
  if (s == "simulation") return GridSimulationRule{};
  if (s.rfind("trim:", 0) == 0) {
    GridTrimmed t;
    char sep = 0;
    std::istringstream in(s.substr(5));
    if (in >> t.lower >> sep >> t.upper && sep == ',' && in.eof() && t.lower >= 0.0 && t.lower < t.upper &&
        t.upper <= 1.0)
      return t;
  }
  throw ConfigError("unknown grid rule '" + s +
                    "' (valid: unique, simulation, trim:<lo>,<hi>, or an array of points)");
}

inline std::vector<double> taus_from(const json& cfg) {
  auto taus = detail::get_numbers(cfg, "taus");
  if (taus.empty()) return default_taus();
  for (double t : taus)
    if (!(t > 0.0 && t < 1.0)) throw ConfigError("'taus' entries must lie in (0,1)");
  return taus;
}

/// `equal`, `equal:<g>`, `event:<e>` or `file:<path>`.
inline AggregateSpec aggregate_from(const json& cfg) {
  const std::string a = detail::get_string(cfg, "aggregate", "equal");
  if (a == "equal") return AggregateEqual{};
  const auto colon = a.find(':');
  const std::string kind = a.substr(0, colon), arg = colon == std::string::npos ? "" : a.substr(colon + 1);
  if (kind == "equal" && !arg.empty()) return AggregateEqual{detail::parse_label(arg, "group")};
  if (kind == "event" && !arg.empty()) return AggregateEvent{detail::parse_label(arg, "event-time")};
  if (kind == "file" && !arg.empty()) {
    try {
      return AggregateExplicit{read_weights_csv(arg)};
    } catch (const DataError& e) {
      throw ConfigError(std::string("weights file: ") + e.what());
    }
  }
  throw ConfigError("unknown aggregate '" + a + "' (valid: equal, equal:<g>, event:<e>, file:<path>)");
}

inline BootstrapPlan plan_from(const json& cfg) {
  BootstrapPlan p;
  p.replications = static_cast<int>(detail::get_integer(cfg, "boot", 999));
  if (p.replications < 0) throw ConfigError("'boot' must be nonnegative");
  const long long seed = detail::get_integer(cfg, "seed", 1);
  p.seed = static_cast<std::uint64_t>(seed);
  p.level = detail::get_number(cfg, "level", 0.9);
  if (!(p.level > 0.0 && p.level < 1.0)) throw ConfigError("'level' must lie in (0,1)");
  const std::string scheme = detail::get_string(cfg, "scheme", "nonparam");
  if (scheme == "nonparam") {
    p.scheme = BootstrapScheme::Nonparametric;
  } else {
    p.scheme = BootstrapScheme::Multiplier;
    if (scheme == "rademacher") p.multiplier = MultiplierDist::Rademacher;
    else if (scheme == "normal") p.multiplier = MultiplierDist::StdNormal;
    else if (scheme == "mammen") p.multiplier = MultiplierDist::Mammen;
    else throw ConfigError("unknown scheme '" + scheme + "' (valid: nonparam, rademacher, normal, mammen)");
  }
  return p;
}

inline IdentifyOptions identify_from(const json& cfg) {
  IdentifyOptions o;
  o.clip.enabled = detail::get_bool(cfg, "clip", true);
  if (const json* e = detail::find(cfg, "clip_eps")) {
    if (!e->is_number() || !(e->get<double>() >= 0.0 && e->get<double>() < 0.5))
      throw ConfigError("'clip_eps' must be a number in [0, 0.5)");
    o.clip.epsilon = e->get<double>();
  }
  o.monotonize = detail::get_bool(cfg, "monotonize", false);
  return o;
}

/// Estimator settings for `data`; the grid is built from the data.
inline EstimatorSpec estimator_spec_from(const json& cfg, const PanelDataset& data) {
  EstimatorSpec spec;
  spec.regime = regime_from(cfg);
  spec.identify = identify_from(cfg);
  spec.aggregate = aggregate_from(cfg);
  spec.grid = build_grid(data, grid_rule_from(cfg));
  const auto covs = detail::get_strings(cfg, "covariates");
  if (!covs.empty()) {
    if (data.design() != DesignMode::TwoPeriod)
      throw ConfigError("covariates are supported for the two-period design only");
    DRSpec dr;
    for (std::size_t k = 0; k < covs.size(); ++k) dr.covariates.push_back(k);
    const std::string dict = detail::get_string(cfg, "dictionary", "linear");
    if (dict == "linear") dr.dictionary = Dictionary::Linear;
    else if (dict == "quadratic") dr.dictionary = Dictionary::Quadratic;
    else throw ConfigError("unknown dictionary '" + dict + "' (valid: linear, quadratic)");
    dr.regime = spec.regime;
    dr.clip = spec.identify.clip;
    spec.covariates = dr;
  } else if (detail::find(cfg, "dictionary")) {
    throw ConfigError("'dictionary' needs 'covariates'");
  }
  return spec;
}

/// `normal` or `ald:<kappa>`.
inline ErrorDist error_from(const std::string& s) {
  if (s == "normal") return {};
  if (s.rfind("ald:", 0) == 0) {
    try {
      std::size_t used = 0;
      const double k = std::stod(s.substr(4), &used);
      if (used == s.size() - 4 && k > 0.0 && k < 1.0) return {k};
    } catch (const std::exception&) {
    }
  }
  throw ConfigError("unknown error distribution '" + s + "' (valid: normal, ald:<kappa> with kappa in (0,1))");
}

inline DGPConfig dgp_from(const json& cfg) {
  DGPConfig d;
  const long long dgp = detail::get_integer(cfg, "dgp", 1);
  if (dgp != 1 && dgp != 2) throw ConfigError("'dgp' must be 1 or 2");
  d.dgp = dgp == 1 ? DgpKind::Censored : DgpKind::Continuous;
  d.error = error_from(detail::get_string(cfg, "error", "normal"));
  const long long n = detail::get_integer(cfg, "n", 1000);
  if (n < 4 || n % 2) throw ConfigError("'n' must be even and at least 4");
  d.n = static_cast<std::size_t>(n);
  d.reps = static_cast<int>(detail::get_integer(cfg, "reps", 500));
  if (d.reps < 1) throw ConfigError("'reps' must be positive");
  d.boot = static_cast<int>(detail::get_integer(cfg, "boot", 499));
  d.seed = static_cast<std::uint64_t>(detail::get_integer(cfg, "seed", 20240601));
  d.level = detail::get_number(cfg, "level", 0.9);
  if (!(d.level > 0.0 && d.level < 1.0)) throw ConfigError("'level' must lie in (0,1)");
  d.alpha = detail::get_number(cfg, "alpha", d.alpha);
  d.beta = detail::get_number(cfg, "beta", d.beta);
  d.gamma = detail::get_number(cfg, "gamma", d.gamma);
  d.delta = detail::get_number(cfg, "delta", d.delta);
  d.link = detail::link_or_config_error(detail::get_string(cfg, "link", "normal"));
  d.qtt_coverage = detail::get_bool(cfg, "qtt_coverage", false);
  if (detail::find(cfg, "grid")) d.grid = grid_rule_from(cfg);
  d.threads = static_cast<unsigned>(std::max<long long>(1, detail::get_integer(cfg, "threads", 1)));
  return d;
}

}  // namespace distdid
