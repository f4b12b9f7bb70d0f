#pragma once

// Unit-level bootstrap and sup-t uniform bands.
//
// Each replication reruns the estimator with per-unit weights: resampling
// multiplicities for the nonparametric (cluster) bootstrap, or 1 + xi_j for
// the multiplier bootstrap. Bands scale deviations at each point by the
// bootstrap interquartile range over the normal IQR and take the level-p
// quantile of the supremum over all points of all jointly banded curves.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <mutex>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "data.hpp"
#include "effects.hpp"
#include "estimator.hpp"

namespace distdid {

enum class BootstrapScheme { Nonparametric, Multiplier };
enum class MultiplierDist { Rademacher, StdNormal, Mammen };

struct BootstrapPlan {
  BootstrapScheme scheme = BootstrapScheme::Nonparametric;
  MultiplierDist multiplier = MultiplierDist::Rademacher;
  int replications = 999;
  std::uint64_t seed = 0;
  double level = 0.9;
  /// Redraws allowed for a replication that leaves a required cell empty.
  int max_retries = 50;
};

inline constexpr double kNormalIqr = 1.3489795003921634;
inline constexpr double kScaleFloor = 1e-10;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Independent generator keyed by (seed, a, b); identical keys give
/// identical streams regardless of scheduling.
inline std::mt19937_64 rng_stream(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  const std::uint64_t k = splitmix64(splitmix64(splitmix64(seed) ^ a) ^ (b + 0x632BE59BD9B4E019ULL));
  std::seed_seq seq{static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(k >> 32),
                    static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b)};
  return std::mt19937_64(seq);
}

/// Uniform on [0,1) from the top 53 bits; portable across standard libraries.
inline double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Standard normal by Box-Muller on uniform01 draws.
inline double std_normal(std::mt19937_64& rng) {
  double u1 = uniform01(rng);
  while (u1 <= 0.0) u1 = uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

inline double multiplier_draw(MultiplierDist dist, std::mt19937_64& rng) {
  switch (dist) {
    case MultiplierDist::Rademacher:
      return (rng() >> 63) ? 1.0 : -1.0;
    case MultiplierDist::StdNormal:
      return std_normal(rng);
    case MultiplierDist::Mammen: {
      const double s5 = std::sqrt(5.0);
      const double p = (s5 + 1.0) / (2.0 * s5);
      return uniform01(rng) < p ? -(s5 - 1.0) / 2.0 : (s5 + 1.0) / 2.0;
    }
  }
  return 0.0;
}

/// Per-unit weights for replication `rep` (draw `attempt` after redraws).
inline std::vector<double> resample_weights(const PanelDataset& data, const BootstrapPlan& plan,
                                            std::size_t rep, std::size_t attempt = 0) {
  auto rng = rng_stream(plan.seed, rep, attempt);
  const std::size_t N = data.num_units();
  std::vector<double> w(N, 0.0);
  if (plan.scheme == BootstrapScheme::Nonparametric) {
    for (std::size_t k = 0; k < N; ++k) {
      const auto j = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(N));
      w[std::min(j, N - 1)] += 1.0;
    }
  } else {
    for (std::size_t j = 0; j < N; ++j) w[j] = 1.0 + multiplier_draw(plan.multiplier, rng);
  }
  return w;
}

/// Nonparametric replication as a dataset: N units drawn with replacement,
/// each bringing all of its period rows.
inline PanelDataset resample(const PanelDataset& data, const BootstrapPlan& plan, std::size_t rep,
                             std::size_t attempt = 0) {
  if (plan.scheme != BootstrapScheme::Nonparametric)
    throw DomainError("multiplier replications are weight vectors; use resample_weights");
  const auto w = resample_weights(data, plan, rep, attempt);
  return replicate_units(data, w);
}

/// Runs fn(0..count-1) on up to `threads` workers; results are stored by
/// index, so the output does not depend on the thread count. The exception
/// from the lowest failing index is rethrown.
template <typename Fn>
auto parallel_map(std::size_t count, unsigned threads, Fn&& fn) {
  using R = decltype(fn(std::size_t{0}));
  std::vector<R> out(count);
  std::vector<std::exception_ptr> errors(count);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        out[i] = fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(count, 1))));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

/// A point estimate and its bootstrap draws; draws[b][i].
struct CurveDraws {
  std::vector<double> center;
  std::vector<std::vector<double>> draws;
};

namespace detail {

// Linear-interpolation sample quantile of a sorted vector.
inline double sorted_quantile_linear(std::span<const double> sorted, double p) {
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

// Left inverse of the empirical distribution of `values` at p.
inline double quantile_type1(std::vector<double> values, double p) {
  std::sort(values.begin(), values.end());
  auto k = static_cast<std::size_t>(std::ceil(p * static_cast<double>(values.size()) - 1e-12));
  k = std::clamp<std::size_t>(k, 1, values.size());
  return values[k - 1];
}

}  // namespace detail

/// Robust per-point scale: bootstrap IQR / normal IQR, floored.
inline std::vector<double> robust_scale(const CurveDraws& c) {
  const std::size_t L = c.center.size();
  std::vector<double> scale(L, kScaleFloor);
  std::vector<double> col(c.draws.size());
  for (std::size_t i = 0; i < L; ++i) {
    for (std::size_t b = 0; b < c.draws.size(); ++b) col[b] = c.draws[b][i];
    std::sort(col.begin(), col.end());
    const double iqr = detail::sorted_quantile_linear(col, 0.75) - detail::sorted_quantile_linear(col, 0.25);
    scale[i] = std::max(iqr / kNormalIqr, kScaleFloor);
  }
  return scale;
}

/// Sup-t statistics t*_b over the concatenation of all curves.
inline std::vector<double> sup_t_draws(std::span<const CurveDraws> curves,
                                       std::span<const std::vector<double>> scales) {
  const std::size_t B = curves.front().draws.size();
  std::vector<double> t(B, 0.0);
  for (std::size_t c = 0; c < curves.size(); ++c)
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t i = 0; i < curves[c].center.size(); ++i)
        t[b] = std::max(t[b], std::abs(curves[c].draws[b][i] - curves[c].center[i]) / scales[c][i]);
  return t;
}

/// Joint level-p bands over several curves (one band per curve).
inline std::vector<UniformBand> uniform_bands(std::span<const CurveDraws> curves, double level) {
  if (curves.empty()) throw DomainError("uniform_bands: no curves");
  if (!(level > 0.0 && level < 1.0)) throw DomainError("uniform_bands: level must be in (0,1)");
  const std::size_t B = curves.front().draws.size();
  if (B == 0) throw DomainError("uniform_bands: no bootstrap draws");
  bool all_identical = true, equals_center = true;
  for (const auto& c : curves) {
    if (c.draws.size() != B) throw DomainError("uniform_bands: unequal draw counts");
    for (const auto& d : c.draws) {
      if (d.size() != c.center.size()) throw DomainError("uniform_bands: draw length mismatch");
      if (d != c.draws.front()) all_identical = false;
      if (d != c.center) equals_center = false;
    }
  }
  // A single draw carries no spread information but is still a valid run.
  if (B > 1 && all_identical && !equals_center)
    throw DomainError("uniform_bands: bootstrap draws are identical at every point");

  std::vector<std::vector<double>> scales;
  for (const auto& c : curves) scales.push_back(robust_scale(c));
  const auto t = sup_t_draws(curves, scales);
  const double crit = detail::quantile_type1(t, level);

  std::vector<UniformBand> out;
  for (std::size_t c = 0; c < curves.size(); ++c) {
    UniformBand band;
    band.center = curves[c].center;
    band.scale = scales[c];
    band.level = level;
    band.critical_value = crit;
    for (std::size_t i = 0; i < band.center.size(); ++i) {
      const double r = crit * band.scale[i];
      band.lo.push_back(band.center[i] - r);
      band.hi.push_back(band.center[i] + r);
    }
    out.push_back(std::move(band));
  }
  return out;
}

inline UniformBand uniform_band(const CurveDraws& curve, double level) {
  return uniform_bands(std::span<const CurveDraws>(&curve, 1), level).front();
}

/// Cuts a distribution-function band back to [0,1].
inline void truncate_to_unit(UniformBand& band) {
  for (std::size_t i = 0; i < band.lo.size(); ++i) {
    const double lo = std::max(band.lo[i], 0.0), hi = std::min(band.hi[i], 1.0);
    if (lo != band.lo[i] || hi != band.hi[i]) band.truncated = true;
    band.lo[i] = lo;
    band.hi[i] = hi;
  }
}

struct SupTTest {
  bool reject = false;
  double statistic = 0.0;
  double critical = 0.0;
};

/// Sup-t test of the zero function: rejects iff some nonzero estimate
/// reaches the (1 - alpha) band radius, i.e. the band excludes zero there.
inline SupTTest sup_t_test(const CurveDraws& curve, double alpha) {
  const auto band = uniform_band(curve, 1.0 - alpha);
  SupTTest out;
  out.critical = band.critical_value;
  for (std::size_t i = 0; i < band.center.size(); ++i) {
    const double c = std::abs(band.center[i]);
    out.statistic = std::max(out.statistic, c / band.scale[i]);
    if (c > 0.0 && c >= band.critical_value * band.scale[i]) out.reject = true;
  }
  return out;
}

/// Bootstrap draws of the treated DF, counterfactual DF and DTT.
struct Replications {
  std::vector<std::vector<double>> treated, counterfactual, dtt;
  /// Replications that needed at least one redraw.
  std::size_t degenerate = 0;
};

inline Replications bootstrap_replications(const PanelDataset& data, const EstimatorSpec& spec,
                                           const BootstrapPlan& plan, unsigned threads = 1) {
  if (plan.replications < 1) throw DomainError("bootstrap needs at least one replication");
  struct Draw {
    PointEstimate est;
    bool redrawn = false;
  };
  auto draws = parallel_map(static_cast<std::size_t>(plan.replications), threads, [&](std::size_t b) {
    for (int attempt = 0;; ++attempt) {
      const auto w = resample_weights(data, plan, b, static_cast<std::size_t>(attempt));
      try {
        return Draw{estimate(data, spec, w), attempt > 0};
      } catch (const IdentificationError& e) {
        if (attempt >= plan.max_retries)
          throw IdentificationError("bootstrap replication " + std::to_string(b) + " stayed degenerate after " +
                                    std::to_string(plan.max_retries) + " redraws: " + e.what());
      }
    }
  });
  Replications out;
  for (auto& d : draws) {
    out.treated.push_back(std::move(d.est.treated.values));
    out.counterfactual.push_back(std::move(d.est.counterfactual.values));
    out.dtt.push_back(std::move(d.est.dtt.values));
    if (d.redrawn) ++out.degenerate;
  }
  return out;
}

/// Everything the band pipeline reports.
struct BandResult {
  PointEstimate estimate;
  UniformBand treated_band, counterfactual_band, dtt_band;
  SupTTest dtt_test;
  std::vector<double> taus;
  std::vector<Interval> qf_treated, qf_counterfactual, qtt_intervals;
  EffectCurve qtt;
  std::size_t degenerate_replications = 0;
};

inline BandResult band_pipeline(const PanelDataset& data, const EstimatorSpec& spec,
                                const BootstrapPlan& plan, std::span<const double> taus,
                                unsigned threads = 1) {
  BandResult out;
  out.estimate = estimate(data, spec);
  const auto reps = bootstrap_replications(data, spec, plan, threads);
  out.degenerate_replications = reps.degenerate;
  if (10 * reps.degenerate > static_cast<std::size_t>(plan.replications))
    throw IdentificationError(std::to_string(reps.degenerate) + " of " +
                              std::to_string(plan.replications) +
                              " bootstrap replications were degenerate (more than 10%)");

  const auto& grid = spec.grid;
  const std::vector<CurveDraws> dfs = {{out.estimate.treated.values, reps.treated},
                                       {out.estimate.counterfactual.values, reps.counterfactual}};
  auto df_bands = uniform_bands(dfs, plan.level);
  for (auto& b : df_bands) {
    b.axis = grid.points;
    b.sup_y = grid.sup_y;
    truncate_to_unit(b);
  }
  out.treated_band = std::move(df_bands[0]);
  out.counterfactual_band = std::move(df_bands[1]);

  const CurveDraws dtt_draws{out.estimate.dtt.values, reps.dtt};
  out.dtt_band = uniform_band(dtt_draws, plan.level);
  out.dtt_band.axis = grid.points;
  out.dtt_band.sup_y = grid.sup_y;
  out.dtt_test = sup_t_test(dtt_draws, 1.0 - plan.level);
  out.estimate.dtt.band = envelope_of(out.dtt_band);

  out.taus.assign(taus.begin(), taus.end());
  out.qf_treated = invert_df_band(out.treated_band, taus);
  out.qf_counterfactual = invert_df_band(out.counterfactual_band, taus);
  out.qtt_intervals = qtt_band(out.qf_treated, out.qf_counterfactual);
  out.qtt = qtt(out.estimate.treated, out.estimate.counterfactual, taus);
  out.qtt.band = envelope_of(out.qtt_intervals, plan.level);
  return out;
}

}  // namespace distdid
