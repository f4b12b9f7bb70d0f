#pragma once

// Monte Carlo harness for the two-period repeated cross-section design:
// latent Y~ = alpha + D beta + t gamma + D t delta + U with Normal or
// asymmetric Laplace errors, observed either as a censored discretization
// (DGP1) or directly (DGP2).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "data.hpp"
#include "ecdf.hpp"
#include "effects.hpp"
#include "estimator.hpp"
#include "inference.hpp"
#include "links.hpp"

namespace distdid {

// Asymmetric Laplace ALD(0, 1, kappa): density proportional to
// exp(-sqrt2 kappa u) for u >= 0 and exp(sqrt2 u / kappa) for u < 0, so that
// P(U <= 0) = kappa^2 / (1 + kappa^2) and E[U] = (1/kappa - kappa) / sqrt2.

inline void check_kappa(double kappa) {
  if (!(kappa > 0.0 && kappa < 1.0)) throw DomainError("ALD skew kappa must lie in (0,1)");
}

inline double ald_cdf(double u, double kappa) {
  check_kappa(kappa);
  const double p0 = kappa * kappa / (1.0 + kappa * kappa);
  if (u < 0.0) return p0 * std::exp(std::numbers::sqrt2 * u / kappa);
  return 1.0 - (1.0 - p0) * std::exp(-std::numbers::sqrt2 * kappa * u);
}

inline double ald_quantile(double p, double kappa) {
  check_kappa(kappa);
  if (!(p > 0.0 && p < 1.0)) throw DomainError("ald_quantile: p must lie in (0,1)");
  const double p0 = kappa * kappa / (1.0 + kappa * kappa);
  if (p < p0) return kappa / std::numbers::sqrt2 * std::log(p / p0);
  return -std::log((1.0 - p) / (1.0 - p0)) / (std::numbers::sqrt2 * kappa);
}

inline double ald_mean(double kappa) {
  check_kappa(kappa);
  return (1.0 / kappa - kappa) / std::numbers::sqrt2;
}

/// Open-interval uniform draw for inverse-transform sampling.
inline double open_uniform(std::mt19937_64& rng) {
  double u = uniform01(rng);
  while (u <= 0.0) u = uniform01(rng);
  return u;
}

inline double sample_ald(std::mt19937_64& rng, double kappa) {
  return ald_quantile(open_uniform(rng), kappa);
}

enum class DgpKind { Censored /* DGP1 */, Continuous /* DGP2 */ };

struct ErrorDist {
  /// Unset means standard normal.
  std::optional<double> ald_kappa;

  double cdf(double u) const {
    return ald_kappa ? ald_cdf(u, *ald_kappa) : distdid::cdf(Link{LinkKind::Normal}, u);
  }
  double draw(std::mt19937_64& rng) const {
    const double u = open_uniform(rng);
    return ald_kappa ? ald_quantile(u, *ald_kappa) : quantile(Link{LinkKind::Normal}, u);
  }
  std::string name() const {
    if (!ald_kappa) return "normal";
    std::ostringstream s;
    s << "ald:" << *ald_kappa;
    return s.str();
  }
};

struct DGPConfig {
  DgpKind dgp = DgpKind::Censored;
  std::size_t n = 1000;
  ErrorDist error;
  double alpha = 0.1, beta = 0.2, gamma = -0.1, delta = 0.0;
  Link link{LinkKind::Normal};
  int boot = 499;
  int reps = 500;
  std::uint64_t seed = 20240601;
  /// Band level; tests run at 1 - level.
  double level = 0.9;
  /// Also invert joint DF bands and record QTT-interval coverage of zero.
  bool qtt_coverage = false;
  /// Outcome grid rule; the default drops the upper tail only.
  GridRule grid = GridSimulationRule{};
  unsigned threads = 1;
};

inline double dgp_observe(DgpKind dgp, double latent) {
  return dgp == DgpKind::Censored ? std::max(std::ceil(latent + 1.0), 0.0) : latent;
}

/// Synthetic repeated cross-section: unit i is observed once, in period
/// 1{i > n/2}, with treatment D_i ~ Bernoulli(1/2).
inline PanelDataset gen_dgp(const DGPConfig& cfg, std::mt19937_64& rng) {
  if (cfg.n < 4 || cfg.n % 2 != 0) throw DomainError("DGP sample size must be even and at least 4");
  std::vector<Observation> obs;
  obs.reserve(cfg.n);
  for (std::size_t i = 1; i <= cfg.n; ++i) {
    const int d = uniform01(rng) < 0.5 ? 1 : 0;
    const int t = i > cfg.n / 2 ? 1 : 0;
    const double u = cfg.error.draw(rng);
    const double latent = cfg.alpha + d * cfg.beta + t * cfg.gamma + d * t * cfg.delta + u;
    obs.push_back({std::to_string(i), t, d, dgp_observe(cfg.dgp, latent), {}});
  }
  return PanelDataset(std::move(obs), DesignMode::TwoPeriod);
}

/// Population DF of Y given (D, t) under the DGP, at outcome y.
inline double true_df(const DGPConfig& cfg, int d, int t, bool treated_potential, double y) {
  const double shift = cfg.alpha + d * cfg.beta + t * cfg.gamma +
                       (treated_potential ? d * t * cfg.delta : 0.0);
  if (cfg.dgp == DgpKind::Continuous) return cfg.error.cdf(y - shift);
  // max(ceil(Y~ + 1), 0) <= y  <=>  Y~ <= floor(y) - 1 for y >= 0.
  if (y < 0.0) return 0.0;
  return cfg.error.cdf(std::floor(y) - 1.0 - shift);
}

struct MCMetrics {
  double l2_dtt = 0.0;
  double l2_cdf = 0.0;
  double mb_adtt = 0.0;
  double mad_adtt = 0.0;
  std::optional<double> rej_dtt, rej_adtt;
  /// Share of replications whose DTT band contains the true DTT everywhere.
  std::optional<double> cover_dtt;
  /// Share whose QTT intervals contain zero at every tau (null DGP only).
  std::optional<double> cover_qtt;
  std::vector<double> l2_dtt_trace, adtt_trace;
};

struct McReplication {
  double l2_dtt = 0.0, l2_cdf = 0.0, adtt_error = 0.0;
  bool rej_dtt = false, rej_adtt = false, cover_dtt = false, cover_qtt = false;
};

inline McReplication run_one(const DGPConfig& cfg, std::size_t rep) {
  auto rng = rng_stream(cfg.seed, rep, 0);
  const auto data = gen_dgp(cfg, rng);
  EstimatorSpec spec;
  spec.regime = LinkRegime::shared(cfg.link);
  spec.grid = build_grid(data, cfg.grid);
  const auto est = estimate(data, spec);

  const auto& grid = spec.grid;
  std::vector<double> true_cf(grid.size()), true_dtt(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    true_cf[i] = true_df(cfg, 1, 1, false, grid[i]);
    true_dtt[i] = true_df(cfg, 1, 1, true, grid[i]) - true_cf[i];
  }
  McReplication out;
  double s_dtt = 0.0, s_cdf = 0.0, true_adtt = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    s_dtt += std::pow(est.dtt.values[i] - true_dtt[i], 2);
    s_cdf += std::pow(est.counterfactual.values[i] - true_cf[i], 2);
    true_adtt += true_dtt[i];
  }
  const double L = static_cast<double>(grid.size());
  out.l2_dtt = std::sqrt(s_dtt / L);
  out.l2_cdf = std::sqrt(s_cdf / L);
  out.adtt_error = adtt(est.dtt) - true_adtt / L;
  if (cfg.boot <= 0) return out;

  BootstrapPlan plan;
  plan.replications = cfg.boot;
  plan.seed = splitmix64(cfg.seed ^ splitmix64(rep + 1));
  plan.level = cfg.level;
  const auto reps = bootstrap_replications(data, spec, plan, 1);

  const CurveDraws dtt_draws{est.dtt.values, reps.dtt};
  const auto band = uniform_band(dtt_draws, cfg.level);
  out.rej_dtt = sup_t_test(dtt_draws, 1.0 - cfg.level).reject;
  out.cover_dtt = true;
  for (std::size_t i = 0; i < grid.size(); ++i)
    if (true_dtt[i] < band.lo[i] || true_dtt[i] > band.hi[i]) out.cover_dtt = false;

  CurveDraws adtt_draws{{adtt(est.dtt)}, {}};
  for (const auto& d : reps.dtt) {
    const EffectCurve c{grid.points, d, std::nullopt};
    adtt_draws.draws.push_back({adtt(c)});
  }
  out.rej_adtt = sup_t_test(adtt_draws, 1.0 - cfg.level).reject;

  if (cfg.qtt_coverage) {
    const std::vector<CurveDraws> dfs = {{est.treated.values, reps.treated},
                                         {est.counterfactual.values, reps.counterfactual}};
    auto bands = uniform_bands(dfs, cfg.level);
    for (auto& b : bands) {
      b.axis = grid.points;
      b.sup_y = grid.sup_y;
      truncate_to_unit(b);
    }
    const auto taus = default_taus();
    const auto intervals = qtt_band(invert_df_band(bands[0], taus), invert_df_band(bands[1], taus));
    out.cover_qtt = std::all_of(intervals.begin(), intervals.end(),
                                [](const Interval& iv) { return iv.contains(0.0); });
  }
  return out;
}

inline double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

/// Replications run in parallel over `cfg.threads`, each with its own
/// generator keyed by (seed, replication).
inline MCMetrics run_mc(const DGPConfig& cfg) {
  if (cfg.reps < 1) throw DomainError("Monte Carlo needs at least one replication");
  const auto reps = parallel_map(static_cast<std::size_t>(cfg.reps), cfg.threads,
                                 [&](std::size_t r) { return run_one(cfg, r); });
  MCMetrics m;
  const double R = static_cast<double>(reps.size());
  double rej = 0, rej_a = 0, cov = 0, cov_q = 0;
  for (const auto& r : reps) {
    m.l2_dtt += r.l2_dtt / R;
    m.l2_cdf += r.l2_cdf / R;
    m.mb_adtt += r.adtt_error / R;
    rej += r.rej_dtt;
    rej_a += r.rej_adtt;
    cov += r.cover_dtt;
    cov_q += r.cover_qtt;
    m.l2_dtt_trace.push_back(r.l2_dtt);
    m.adtt_trace.push_back(r.adtt_error);
  }
  const double med = median(m.adtt_trace);
  std::vector<double> dev;
  for (double a : m.adtt_trace) dev.push_back(std::abs(a - med));
  m.mad_adtt = median(dev);
  if (cfg.boot > 0) {
    m.rej_dtt = rej / R;
    m.rej_adtt = rej_a / R;
    m.cover_dtt = cov / R;
    if (cfg.qtt_coverage && cfg.delta == 0.0) m.cover_qtt = cov_q / R;
  }
  return m;
}

inline void write_table_header(std::ostream& out) {
  out << "dgp,error,link,n,reps,boot,L2_DTT,Rej_DTT,MB_ADTT,MAD_ADTT,Rej_ADTT,L2_cDF,Cover_DTT,Cover_QTT\n";
}

inline void write_table_row(std::ostream& out, const DGPConfig& cfg, const MCMetrics& m) {
  auto opt = [&](const std::optional<double>& v) {
    if (v) out << *v;
  };
  out.precision(6);
  out << (cfg.dgp == DgpKind::Censored ? 1 : 2) << ',' << cfg.error.name() << ',' << to_string(cfg.link)
      << ',' << cfg.n << ',' << cfg.reps << ',' << cfg.boot << ',' << m.l2_dtt << ',';
  opt(m.rej_dtt);
  out << ',' << m.mb_adtt << ',' << m.mad_adtt << ',';
  opt(m.rej_adtt);
  out << ',' << m.l2_cdf << ',';
  opt(m.cover_dtt);
  out << ',';
  opt(m.cover_qtt);
  out << '\n';
}

/// Synthetic multi-period block panel: units observed in periods
/// -pre..-1 and 1..post, `treated` of them in group 1, outcomes on a
/// quarter grid (weekly averages of monthly counts) with a common time
/// effect on the index scale.
struct PanelConfig {
  std::size_t units = 876;
  std::size_t treated = 37;
  int pre_periods = 3;
  int post_periods = 5;
  double effect = 0.0;
  /// Label treated units g = 1 and controls g = inf (staggered layout).
  bool staggered = false;
  std::uint64_t seed = 7;
};

inline PanelDataset gen_block_panel(const PanelConfig& cfg) {
  if (cfg.treated == 0 || cfg.treated >= cfg.units) throw DomainError("need 0 < treated < units");
  auto rng = rng_stream(cfg.seed, 0, 0);
  std::vector<Observation> obs;
  for (std::size_t j = 0; j < cfg.units; ++j) {
    const int d = j < cfg.treated ? 1 : 0;
    const double block = 0.6 * std_normal(rng);
    for (int t = -cfg.pre_periods; t <= cfg.post_periods; ++t) {
      if (t == 0) continue;
      const double rate = std::exp(-0.6 + block + 0.05 * t - (d && t > 0 ? cfg.effect : 0.0));
      // Poisson count by inversion, reported as a weekly average.
      const double u = uniform01(rng);
      int k = 0;
      double p = std::exp(-rate), acc = p;
      while (u > acc && k < 50) {
        ++k;
        p *= rate / k;
        acc += p;
      }
      const int g = cfg.staggered ? (d ? 1 : kNeverTreated) : d;
      obs.push_back({"b" + std::to_string(j), t, g, k / 4.0, {}});
    }
  }
  return PanelDataset(std::move(obs), cfg.staggered ? DesignMode::Staggered : DesignMode::NSMP);
}

}  // namespace distdid
