#pragma once

// Covariate-adjusted counterfactuals for the two-period design via
// distribution regression: a binary-response QMLE of 1{Y <= y} on a
// covariate dictionary per cell and grid point, then averaging the implied
// counterfactual probabilities over the treated post-period covariates.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "data.hpp"
#include "ecdf.hpp"
#include "effects.hpp"
#include "identify.hpp"
#include "links.hpp"

namespace distdid {

enum class Dictionary { Linear, Quadratic };

struct QmleOptions {
  int max_iterations = 100;
  /// Exit when the max-norm of the score falls below this.
  double tolerance = 1e-9;
  /// Fitted probabilities are clipped to [prob_clip, 1 - prob_clip].
  double prob_clip = 1e-10;
  /// Indices beyond +-separation_bound are clamped and the fit flagged.
  double separation_bound = 30.0;
  /// Intercept for all-equal responses is quantile(clip) or quantile(1 - clip).
  double degenerate_clip = 1e-10;
};

struct QmleFit {
  Eigen::VectorXd coef;
  double loglik = 0.0;
  double score_norm = 0.0;
  int iterations = 0;
  bool converged = false;
  bool separated = false;
  bool degenerate = false;
  bool nonconcave = false;
};

namespace detail {

inline double density_slope(Link link, double z) {
  switch (link.kind) {
    case LinkKind::Normal: return -z * density(link, z);
    case LinkKind::Logistic: return density(link, z) * (1.0 - 2.0 * cdf(link, z));
    case LinkKind::Cauchy: {
      const double d = 1.0 + z * z;
      return -2.0 * z / (std::numbers::pi * d * d);
    }
    default: return 0.0;
  }
}

struct QmleEval {
  double loglik = 0.0;
  Eigen::VectorXd score;
  Eigen::MatrixXd hessian;  // observed
  Eigen::MatrixXd info;     // expected (Fisher), positive semidefinite
  bool clamped = false;
};

inline QmleEval qmle_evaluate(std::span<const double> r, const Eigen::MatrixXd& X,
                              std::span<const double> w, Link link, const Eigen::VectorXd& eta,
                              const QmleOptions& opts, bool derivatives) {
  const Eigen::Index p = X.cols();
  QmleEval ev;
  ev.score = Eigen::VectorXd::Zero(p);
  if (derivatives) {
    ev.hessian = Eigen::MatrixXd::Zero(p, p);
    ev.info = Eigen::MatrixXd::Zero(p, p);
  }
  const Eigen::VectorXd index = X * eta;
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const double wi = w.empty() ? 1.0 : w[static_cast<std::size_t>(i)];
    if (wi == 0.0) continue;
    double z = index[i];
    if (std::abs(z) > opts.separation_bound) {
      z = std::copysign(opts.separation_bound, z);
      ev.clamped = true;
    }
    const double F = std::clamp(cdf(link, z), opts.prob_clip, 1.0 - opts.prob_clip);
    const double ri = r[static_cast<std::size_t>(i)];
    ev.loglik += wi * (ri * std::log(F) + (1.0 - ri) * std::log1p(-F));
    if (!derivatives) continue;
    const double f = density(link, z);
    const double v = F * (1.0 - F);
    const double g = f * (ri - F) / v;
    ev.score.noalias() += (wi * g) * X.row(i).transpose();
    const double slope = density_slope(link, z);
    const double dg = (slope * (ri - F) - f * f) / v - f * f * (ri - F) * (1.0 - 2.0 * F) / (v * v);
    ev.hessian.noalias() += (wi * dg) * X.row(i).transpose() * X.row(i);
    ev.info.noalias() += (wi * f * f / v) * X.row(i).transpose() * X.row(i);
  }
  return ev;
}

inline QmleFit qmle_newton(std::span<const double> r, const Eigen::MatrixXd& X,
                           std::span<const double> w, Link link, Eigen::VectorXd eta,
                           const QmleOptions& opts) {
  QmleFit fit;
  for (int it = 0; it <= opts.max_iterations; ++it) {
    const auto ev = qmle_evaluate(r, X, w, link, eta, opts, true);
    fit.iterations = it;
    fit.loglik = ev.loglik;
    fit.score_norm = ev.score.lpNorm<Eigen::Infinity>();
    fit.separated = ev.clamped;
    if (fit.score_norm < opts.tolerance) {
      fit.converged = true;
      break;
    }
    if (it == opts.max_iterations) break;
    Eigen::VectorXd step;
    Eigen::LLT<Eigen::MatrixXd> newton(-ev.hessian);
    if (newton.info() == Eigen::Success) {
      step = newton.solve(ev.score);
    } else {
      Eigen::LDLT<Eigen::MatrixXd> scoring(ev.info);
      step = scoring.solve(ev.score);
    }
    if (!step.allFinite()) break;
    double t = 1.0;
    bool improved = false;
    for (int h = 0; h < 40; ++h, t *= 0.5) {
      const Eigen::VectorXd trial = eta + t * step;
      const double ll = qmle_evaluate(r, X, w, link, trial, opts, false).loglik;
      if (ll >= ev.loglik - 1e-12 * std::abs(ev.loglik)) {
        eta = trial;
        improved = true;
        break;
      }
    }
    if (!improved) break;
  }
  fit.coef = std::move(eta);
  return fit;
}

}  // namespace detail

/// Weighted quasi log-likelihood of a binary response model.
inline double qmle_loglik(std::span<const double> responses, const Eigen::MatrixXd& design,
                          Link link, const Eigen::VectorXd& eta,
                          std::span<const double> weights = {}, const QmleOptions& opts = {}) {
  return detail::qmle_evaluate(responses, design, weights, link, eta, opts, false).loglik;
}

inline Eigen::VectorXd qmle_score(std::span<const double> responses, const Eigen::MatrixXd& design,
                                  Link link, const Eigen::VectorXd& eta,
                                  std::span<const double> weights = {},
                                  const QmleOptions& opts = {}) {
  return detail::qmle_evaluate(responses, design, weights, link, eta, opts, true).score;
}

/// Maximizes the binary-response quasi log-likelihood by Newton-Raphson
/// with step halving. Column 0 of `design` must be the constant.
inline QmleFit qmle_binary_fit(std::span<const double> responses, const Eigen::MatrixXd& design,
                               Link link, std::span<const double> weights = {},
                               const QmleOptions& opts = {}) {
  if (!link.strictly_increasing())
    throw DomainError("distribution regression needs a normal, logistic or cauchy link");
  if (design.rows() != static_cast<Eigen::Index>(responses.size()) || design.rows() == 0)
    throw DomainError("qmle: responses and design rows differ or are empty");
  if (!weights.empty() && weights.size() != responses.size())
    throw DomainError("qmle: weight vector length mismatch");
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  if (qr.rank() < design.cols()) throw DomainError("qmle: design matrix is rank deficient");

  double pos = 0.0, tot = 0.0;
  for (std::size_t i = 0; i < responses.size(); ++i) {
    const double wi = weights.empty() ? 1.0 : weights[i];
    pos += wi * responses[i];
    tot += wi;
  }
  if (pos <= 0.0 || pos >= tot) {
    QmleFit fit;
    fit.coef = Eigen::VectorXd::Zero(design.cols());
    fit.coef[0] = quantile(link, pos <= 0.0 ? opts.degenerate_clip : 1.0 - opts.degenerate_clip);
    fit.degenerate = true;
    fit.converged = true;
    fit.loglik = qmle_loglik(responses, design, link, fit.coef, weights, opts);
    return fit;
  }

  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(design.cols());
  if (link.kind != LinkKind::Cauchy)
    return detail::qmle_newton(responses, design, weights, link, zero, opts);

  // Cauchy likelihood is not concave: start from the probit solution and
  // from zero and keep the better optimum.
  const auto probit = detail::qmle_newton(responses, design, weights, Link{LinkKind::Normal}, zero, opts);
  auto a = detail::qmle_newton(responses, design, weights, link, probit.coef, opts);
  auto b = detail::qmle_newton(responses, design, weights, link, zero, opts);
  auto best = (b.loglik > a.loglik) ? std::move(b) : std::move(a);
  best.nonconcave = true;
  return best;
}

/// Covariate dictionary and per-group links for the three-step fit.
struct DRSpec {
  /// Indices into the dataset's covariate columns; empty means constant only.
  std::vector<std::size_t> covariates;
  Dictionary dictionary = Dictionary::Linear;
  LinkRegime regime = LinkRegime::shared(Link{LinkKind::Normal});
  QmleOptions qmle;
  ClipPolicy clip;
};

inline std::size_t dictionary_size(const DRSpec& spec) {
  const std::size_t k = spec.covariates.size();
  if (spec.dictionary == Dictionary::Linear) return 1 + k;
  return 1 + k + k + k * (k - 1) / 2;
}

/// p(X) for one observation: 1, x_k, and for Quadratic x_k^2 and x_k x_l.
inline Eigen::VectorXd dictionary_row(const Observation& o, const DRSpec& spec) {
  Eigen::VectorXd row(static_cast<Eigen::Index>(dictionary_size(spec)));
  Eigen::Index c = 0;
  row[c++] = 1.0;
  for (std::size_t k : spec.covariates) row[c++] = o.covariates.at(k);
  if (spec.dictionary == Dictionary::Quadratic) {
    for (std::size_t k : spec.covariates) row[c++] = o.covariates[k] * o.covariates[k];
    for (std::size_t a = 0; a < spec.covariates.size(); ++a)
      for (std::size_t b = a + 1; b < spec.covariates.size(); ++b)
        row[c++] = o.covariates[spec.covariates[a]] * o.covariates[spec.covariates[b]];
  }
  return row;
}

/// Dictionary columns kept after dropping those collinear with earlier ones
/// on the pooled sample; the constant is always kept.
inline std::vector<Eigen::Index> independent_columns(const PanelDataset& data, const DRSpec& spec) {
  const auto p = static_cast<Eigen::Index>(dictionary_size(spec));
  Eigen::MatrixXd all(static_cast<Eigen::Index>(data.size()), p);
  for (std::size_t i = 0; i < data.size(); ++i)
    all.row(static_cast<Eigen::Index>(i)) = dictionary_row(data[i], spec).transpose();
  std::vector<Eigen::Index> keep{0};
  for (Eigen::Index c = 1; c < p; ++c) {
    Eigen::MatrixXd trial(all.rows(), static_cast<Eigen::Index>(keep.size()) + 1);
    for (std::size_t k = 0; k < keep.size(); ++k) trial.col(static_cast<Eigen::Index>(k)) = all.col(keep[k]);
    trial.col(trial.cols() - 1) = all.col(c);
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(trial);
    qr.setThreshold(1e-10);
    if (qr.rank() == trial.cols()) keep.push_back(c);
  }
  return keep;
}

struct CellDesign {
  Eigen::MatrixXd X;
  std::vector<double> outcome;
  std::vector<double> weight;
  double mass = 0.0;
};

inline CellDesign cell_design(const PanelDataset& data, int group, int period, const DRSpec& spec,
                              std::span<const Eigen::Index> columns,
                              std::span<const double> unit_weights) {
  const auto members = data.cell(group, period);
  if (members.empty())
    throw IdentificationError("empty cell " + PanelDataset::cell_name(group, period));
  CellDesign d;
  d.X.resize(static_cast<Eigen::Index>(members.size()), static_cast<Eigen::Index>(columns.size()));
  for (std::size_t r = 0; r < members.size(); ++r) {
    const auto full = dictionary_row(data[members[r]], spec);
    for (std::size_t c = 0; c < columns.size(); ++c)
      d.X(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = full[columns[c]];
    d.outcome.push_back(data[members[r]].outcome);
    const double w = unit_weights.empty() ? 1.0 : unit_weights[data.unit_of(members[r])];
    d.weight.push_back(w);
    d.mass += w;
  }
  if (!(d.mass > 0.0))
    throw IdentificationError("cell " + PanelDataset::cell_name(group, period) + " has no mass in this draw");
  return d;
}

struct FitDiagnostics {
  bool converged = true;
  bool separated = false;
  bool degenerate = false;
  bool nonconcave = false;
};

/// Coefficient curves: eta00 = alpha, eta10, eta01 per grid point.
struct CoefCurve {
  Grid grid;
  std::vector<Eigen::Index> columns;
  std::vector<Eigen::VectorXd> eta00, eta10, eta01;
  std::vector<FitDiagnostics> diag00, diag10, diag01;
  /// Clipping level applied to cell response means.
  double epsilon = 0.0;

  Eigen::VectorXd alpha(std::size_t i) const { return eta00[i]; }
  Eigen::VectorXd beta(std::size_t i) const { return eta10[i] - eta00[i]; }
  Eigen::VectorXd gamma(std::size_t i) const { return eta01[i] - eta00[i]; }
};

namespace detail {

inline std::pair<Eigen::VectorXd, FitDiagnostics> fit_indicator(const CellDesign& cell, double y,
                                                                Link link, double eps,
                                                                const QmleOptions& opts,
                                                                const std::string& where) {
  std::vector<double> r(cell.outcome.size());
  double pos = 0.0;
  for (std::size_t i = 0; i < r.size(); ++i) {
    r[i] = cell.outcome[i] <= y ? 1.0 : 0.0;
    pos += cell.weight[i] * r[i];
  }
  const double mean = pos / cell.mass;
  FitDiagnostics diag;
  // Response means in the clipping region get an intercept-only fit at the
  // clipped mean, matching the no-covariate estimator's boundary rule.
  if (mean <= 0.0 || mean >= 1.0 || (eps > 0.0 && (mean < eps || mean > 1.0 - eps))) {
    Eigen::VectorXd coef = Eigen::VectorXd::Zero(cell.X.cols());
    const double p = eps > 0.0 ? std::clamp(mean, eps, 1.0 - eps)
                               : std::clamp(mean, opts.degenerate_clip, 1.0 - opts.degenerate_clip);
    coef[0] = quantile(link, p);
    diag.degenerate = true;
    return {coef, diag};
  }
  auto fit = qmle_binary_fit(r, cell.X, link, cell.weight, opts);
  diag.converged = fit.converged;
  diag.separated = fit.separated;
  diag.degenerate = fit.degenerate;
  diag.nonconcave = fit.nonconcave;
  if (!fit.coef.allFinite())
    throw NumericalError("distribution regression diverged in " + where + " at y = " + std::to_string(y));
  return {fit.coef, diag};
}

}  // namespace detail

/// Three separate cell fits at every grid point: (0,0) with the control
/// pre link, (1,0) with the treated pre link, (0,1) with the control post link.
inline CoefCurve dr_three_step(const PanelDataset& data, const DRSpec& spec, const Grid& grid,
                               std::span<const double> unit_weights = {}) {
  if (data.design() != DesignMode::TwoPeriod)
    throw IdentificationError("covariate adjustment supports the two-period design only");
  for (std::size_t k : spec.covariates)
    if (k >= data.covariate_names().size()) throw DomainError("covariate index out of range");
  CoefCurve out;
  out.grid = grid;
  out.columns = independent_columns(data, spec);
  const auto links = resolve_links(spec.regime, 1, 0, 0, 1);
  const auto c00 = cell_design(data, 0, 0, spec, out.columns, unit_weights);
  const auto c10 = cell_design(data, 1, 0, spec, out.columns, unit_weights);
  const auto c01 = cell_design(data, 0, 1, spec, out.columns, unit_weights);
  out.epsilon = spec.clip.resolve(std::min({c00.mass, c10.mass, c01.mass}));
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double y = grid[i];
    auto [e00, d00] = detail::fit_indicator(c00, y, links.control_pre, out.epsilon, spec.qmle, "cell (0,0)");
    auto [e10, d10] = detail::fit_indicator(c10, y, links.treated_pre, out.epsilon, spec.qmle, "cell (1,0)");
    auto [e01, d01] = detail::fit_indicator(c01, y, links.control_post, out.epsilon, spec.qmle, "cell (0,1)");
    out.eta00.push_back(std::move(e00));
    out.eta10.push_back(std::move(e10));
    out.eta01.push_back(std::move(e01));
    out.diag00.push_back(d00);
    out.diag10.push_back(d10);
    out.diag01.push_back(d01);
  }
  return out;
}

/// Counterfactual DF averaged over the treated post-period covariates.
inline StepDF counterfactual_x(const PanelDataset& data, const CoefCurve& coefs, const DRSpec& spec,
                               const Grid& grid, std::span<const double> unit_weights = {}) {
  require_same_grid(coefs.grid, grid, "counterfactual_x");
  const auto links = resolve_links(spec.regime, 1, 0, 0, 1);
  const auto treated = cell_design(data, 1, 1, spec, coefs.columns, unit_weights);
  StepDF out;
  out.grid = grid;
  out.label = "Fcf(covariates)";
  out.values.resize(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const Eigen::VectorXd i10 = treated.X * coefs.eta10[i];
    const Eigen::VectorXd i01 = treated.X * coefs.eta01[i];
    const Eigen::VectorXd i00 = treated.X * coefs.eta00[i];
    double acc = 0.0;
    for (Eigen::Index r = 0; r < treated.X.rows(); ++r)
      acc += treated.weight[static_cast<std::size_t>(r)] * cdf(links.outer, i10[r] + i01[r] - i00[r]);
    out.values[i] = std::clamp(acc / treated.mass, 0.0, 1.0);
  }
  out.monotone = false;
  return out;
}

inline EffectCurve dtt_x(const PanelDataset& data, const CoefCurve& coefs, const DRSpec& spec,
                         const Grid& grid, std::span<const double> unit_weights = {}) {
  const auto treated = group_period_ecdf_weighted(data, 1, 1, grid, unit_weights);
  return dtt(treated.df, counterfactual_x(data, coefs, spec, grid, unit_weights));
}

}  // namespace distdid
