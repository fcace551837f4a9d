#pragma once

#include "agflow/interaction.hpp"
#include "agflow/schedule.hpp"
#include "agflow/targets.hpp"
#include "agflow/types.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace agflow {

/// Per-iteration diagnostics of one run. Fields are absent when the metric
/// was not recorded for that run.
struct RunRecord {
  int iteration = 0;
  double time_t = 0.0;
  std::optional<double> kl;
  std::optional<double> lyapunov;
  std::optional<double> mse_contrib;
  std::optional<std::int64_t> wall_nanos;
  std::string config_digest;
};

namespace detail {

template <typename Scalar>
std::pair<RowVector<Scalar>, Matrix<Scalar>> empirical_moments(const Matrix<Scalar>& positions) {
  RowVector<Scalar> mean = positions.colwise().mean();
  Matrix<Scalar> centered = positions.rowwise() - mean;
  Matrix<Scalar> cov = (centered.transpose() * centered) / Scalar(positions.rows() - 1);
  return {std::move(mean), std::move(cov)};
}

}  // namespace detail

/// KL divergence of the Gaussian fitted to the particles against a Gaussian
/// target: KL(N(m, S) || N(xbar, Q))
///   = 1/2 [ tr(Q^{-1} S) + (xbar-m)^T Q^{-1} (xbar-m) - d + log(det Q / det S) ].
template <typename Scalar>
Scalar kl_gaussian_fit(const Matrix<Scalar>& positions, const GaussianTarget<Scalar>& target) {
  const Index n = positions.rows();
  const Index d = positions.cols();
  if (d != target.dim()) throw std::invalid_argument("kl_gaussian_fit: dimension mismatch");
  if (n < d + 2) throw std::invalid_argument("kl_gaussian_fit: needs N >= d + 2 particles");
  auto [mean, cov] = detail::empirical_moments(positions);
  cov.diagonal().array() += Scalar(1e-9) * cov.trace() / Scalar(d);
  Eigen::LLT<Matrix<Scalar>> fit_llt(cov);
  if (fit_llt.info() != Eigen::Success)
    throw numerical_error("kl_gaussian_fit: degenerate empirical covariance");
  const auto& target_llt = target.covariance_llt();
  Vector<Scalar> diff = target.mean() - mean.transpose();
  const Scalar trace_term = target_llt.solve(cov).trace();
  const Scalar quad_term = diff.dot(target_llt.solve(diff));
  const Scalar log_det_q = targets_log_det(target_llt);
  const Scalar log_det_s = targets_log_det(fit_llt);
  return Scalar(0.5) * (trace_term + quad_term - Scalar(d) + log_det_q - log_det_s);
}

template <typename Scalar>
Scalar targets_log_det(const Eigen::LLT<Matrix<Scalar>>& llt) {
  return Scalar(2) * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

/// Rule-of-thumb (Silverman) bandwidth 1.06 sigma N^{-1/5} for d = 1.
template <typename Scalar>
Scalar silverman_bandwidth(const Matrix<Scalar>& positions) {
  if (positions.cols() != 1) throw std::invalid_argument("silverman_bandwidth: d = 1 only");
  if (positions.rows() < 2) throw std::invalid_argument("silverman_bandwidth: needs N >= 2");
  auto [mean, cov] = detail::empirical_moments(positions);
  return Scalar(1.06) * std::sqrt(cov(0, 0)) * std::pow(Scalar(positions.rows()), Scalar(-0.2));
}

/// KDE-based KL estimate for d = 1: fits a Gaussian-kernel density to the
/// particles and integrates rho_hat log(rho_hat / rho_inf) on a uniform grid
/// by the trapezoid rule. Errors out if the grid captures less than 0.999 of
/// the estimated mass.
template <typename Scalar, typename Target>
Scalar kl_kde(const Matrix<Scalar>& positions, const Target& target, Scalar bandwidth) {
  if (positions.cols() != 1) throw std::invalid_argument("kl_kde: d = 1 only");
  if (!(bandwidth > Scalar(0))) throw std::invalid_argument("kl_kde: bandwidth must be > 0");
  const Index n = positions.rows();
  const Scalar lo = positions.minCoeff() - Scalar(8) * bandwidth;
  const Scalar hi = positions.maxCoeff() + Scalar(8) * bandwidth;
  const Index grid_n = std::clamp<Index>(static_cast<Index>((hi - lo) / (bandwidth / Scalar(4))) + 1,
                                         Index(2001), Index(1) << 16);
  const Scalar step = (hi - lo) / Scalar(grid_n - 1);

  Array<Scalar> grid = Array<Scalar>::LinSpaced(grid_n, lo, hi);
  Array<Scalar> density = Array<Scalar>::Zero(grid_n);
  const Scalar inv_two_h2 = Scalar(1) / (Scalar(2) * bandwidth * bandwidth);
  for (Index i = 0; i < n; ++i)
    density += (-(grid - positions(i, 0)).square() * inv_two_h2).exp();
  density *= Scalar(1) / (Scalar(n) * bandwidth * std::sqrt(Scalar(2) * std::numbers::pi_v<Scalar>));

  auto trapezoid = [step](const Array<Scalar>& f) {
    return step * (f.sum() - Scalar(0.5) * (f[0] + f[f.size() - 1]));
  };
  const Scalar mass = trapezoid(density);
  if (mass < Scalar(0.999))
    throw numerical_error("kl_kde: grid captures only " + std::to_string(static_cast<double>(mass)) +
                          " of the estimated mass");

  Array<Scalar> integrand(grid_n);
  Vector<Scalar> point(1);
  for (Index g = 0; g < grid_n; ++g) {
    if (density[g] > Scalar(0)) {
      point[0] = grid[g];
      integrand[g] = density[g] * (std::log(density[g]) - log_density(target, point));
    } else {
      integrand[g] = Scalar(0);
    }
  }
  return trapezoid(integrand);
}

/// The 1-d Gaussian optimal transport map T(x) = xbar + sqrt(Q / var) (x - m),
/// pushing N(m, var) forward to N(xbar, Q).
template <typename Scalar>
struct AffineMap1D {
  Scalar scale;
  Scalar offset;
  Scalar operator()(Scalar x) const { return offset + scale * x; }
};

template <typename Scalar>
AffineMap1D<Scalar> ot_map_gaussian_1d(Scalar mean, Scalar var, const GaussianTarget<Scalar>& target) {
  if (target.dim() != 1) throw std::invalid_argument("ot_map_gaussian_1d: target must be 1-d");
  if (!(var > Scalar(0))) throw std::domain_error("ot_map_gaussian_1d: source variance must be > 0");
  const Scalar scale = std::sqrt(target.covariance()(0, 0) / var);
  return {scale, target.mean()[0] - scale * mean};
}

/// Energy along the flow (d = 1 Gaussian target):
///   V(t) = (1/N) sum_i 1/2 |X^i + e^{-gamma} Y^i - T(X^i)|^2 + e^{beta} gap,
/// with T the optimal transport map from the Gaussian fitted to the particles
/// to the target, and gap the current estimate of F(rho_t) - F(rho_inf).
template <typename Scalar>
Scalar lyapunov_energy(const Ensemble<Scalar>& ens, const ScalingSchedule<Scalar>& schedule,
                       const GaussianTarget<Scalar>& target, Scalar functional_gap) {
  if (ens.dim() != 1 || target.dim() != 1) throw std::invalid_argument("lyapunov_energy: d = 1 only");
  if (ens.particles() < 2) throw std::invalid_argument("lyapunov_energy: needs N >= 2");
  auto [mean, cov] = detail::empirical_moments(ens.positions);
  const auto transport = ot_map_gaussian_1d(mean(0, 0), cov(0, 0), target);
  const Scalar damping = exp_neg_gamma(schedule, ens.time);
  Array<Scalar> residual = ens.positions.col(0).array() + damping * ens.momenta.col(0).array() -
                           (transport.offset + transport.scale * ens.positions.col(0).array());
  return Scalar(0.5) * residual.square().mean() + exp_beta(schedule, ens.time) * functional_gap;
}

/// Per-run estimates (1/N) sum_i psi(X^i) gathered over M runs, against the
/// exact expectation.
template <typename Scalar>
struct MseAccumulator {
  std::vector<Scalar> per_run_estimates;
  Scalar truth = Scalar(0);
};

/// m.s.e. = (1/M) sum_m (estimate_m - truth)^2.
template <typename Scalar>
Scalar mse(const MseAccumulator<Scalar>& acc) {
  if (acc.per_run_estimates.empty()) throw std::invalid_argument("mse: empty accumulator");
  if (!std::isfinite(acc.truth)) throw std::invalid_argument("mse: truth must be finite");
  Scalar sum = Scalar(0);
  for (const Scalar estimate : acc.per_run_estimates) {
    const Scalar err = estimate - acc.truth;
    sum += err * err;
  }
  return sum / Scalar(acc.per_run_estimates.size());
}

/// Least-squares slope of log(value) against log(t) over the window
/// [t_lo, t_hi]. Requires at least 10 points in the window, all positive.
template <typename Scalar>
Scalar rate_slope(std::span<const std::pair<Scalar, Scalar>> series, Scalar t_lo, Scalar t_hi) {
  std::vector<std::pair<Scalar, Scalar>> kept;
  for (const auto& [t, value] : series) {
    if (t < t_lo || t > t_hi) continue;
    if (!(value > Scalar(0))) throw std::domain_error("rate_slope: non-positive value in window");
    kept.emplace_back(std::log(t), std::log(value));
  }
  if (kept.size() < 10) throw std::invalid_argument("rate_slope: needs >= 10 points in the window");
  Scalar mean_x = 0, mean_y = 0;
  for (const auto& [x, y] : kept) {
    mean_x += x;
    mean_y += y;
  }
  mean_x /= Scalar(kept.size());
  mean_y /= Scalar(kept.size());
  Scalar sxx = 0, sxy = 0;
  for (const auto& [x, y] : kept) {
    sxx += (x - mean_x) * (x - mean_x);
    sxy += (x - mean_x) * (y - mean_y);
  }
  if (!(sxx > Scalar(0))) throw std::domain_error("rate_slope: window spans a single abscissa");
  return sxy / sxx;
}

template <typename Scalar>
Scalar rate_slope(const std::vector<std::pair<Scalar, Scalar>>& series, Scalar t_lo, Scalar t_hi) {
  return rate_slope(std::span<const std::pair<Scalar, Scalar>>(series), t_lo, t_hi);
}

struct TimingSummary {
  double mean_nanos = 0;
  double p50_nanos = 0;
  double p95_nanos = 0;
};

/// Aggregates wall_nanos across a run, skipping iteration 0 (setup) and
/// records without timing.
inline TimingSummary wall_time_per_iteration(std::span<const RunRecord> records) {
  std::vector<double> nanos;
  nanos.reserve(records.size());
  for (const auto& rec : records)
    if (rec.iteration > 0 && rec.wall_nanos) nanos.push_back(static_cast<double>(*rec.wall_nanos));
  if (nanos.size() < 2) throw std::invalid_argument("wall_time_per_iteration: needs >= 2 timed iterations");
  std::sort(nanos.begin(), nanos.end());
  double sum = 0;
  for (const double v : nanos) sum += v;
  const auto quantile = [&nanos](double q) {
    const auto idx = static_cast<std::size_t>(q * static_cast<double>(nanos.size() - 1) + 0.5);
    return nanos[std::min(idx, nanos.size() - 1)];
  };
  return {sum / static_cast<double>(nanos.size()), quantile(0.5), quantile(0.95)};
}

}  // namespace agflow
