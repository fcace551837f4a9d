#pragma once

#include "agflow/types.hpp"

#include <cmath>
#include <optional>
#include <sstream>
#include <stdexcept>

namespace agflow {

/// Particle state {(X^i, Y^i)}_{i=1..N} at flow time t. Rows are particles.
template <typename Scalar>
struct Ensemble {
  Matrix<Scalar> positions;
  Matrix<Scalar> momenta;
  Scalar time = Scalar(0);

  Index particles() const { return positions.rows(); }
  Index dim() const { return positions.cols(); }
};

template <typename Scalar>
void validate_ensemble(const Ensemble<Scalar>& ens) {
  if (ens.particles() < 1 || ens.dim() < 1)
    throw std::invalid_argument("Ensemble: needs N >= 1 particles in d >= 1");
  if (ens.momenta.rows() != ens.positions.rows() || ens.momenta.cols() != ens.positions.cols())
    throw std::invalid_argument("Ensemble: positions and momenta shape mismatch");
  if (!ens.positions.allFinite() || !ens.momenta.allFinite())
    throw numerical_error("Ensemble: non-finite state");
}

enum class InteractionKind { none, gaussian, diffusion_map, density_estimation };

/// Strategy computing I^(N)(x) ~ grad log rho(x) from the ensemble.
/// epsilon is the kernel bandwidth (diffusion_map / density_estimation);
/// jitter regularizes the empirical covariance (gaussian). jitter unset means
/// the default 1e-9 * trace(Sigma)/d.
template <typename Scalar>
struct InteractionApproximator {
  InteractionKind kind = InteractionKind::none;
  Scalar epsilon = Scalar(0);
  std::optional<Scalar> jitter;

  static InteractionApproximator none() { return {InteractionKind::none, Scalar(0), {}}; }
  static InteractionApproximator gaussian(std::optional<Scalar> jitter = {}) {
    return {InteractionKind::gaussian, Scalar(0), jitter};
  }
  static InteractionApproximator diffusion_map(Scalar epsilon) {
    if (!(epsilon > Scalar(0))) throw std::invalid_argument("InteractionApproximator: epsilon must be > 0");
    return {InteractionKind::diffusion_map, epsilon, {}};
  }
  static InteractionApproximator density_estimation(Scalar epsilon) {
    if (!(epsilon > Scalar(0))) throw std::invalid_argument("InteractionApproximator: epsilon must be > 0");
    return {InteractionKind::density_estimation, epsilon, {}};
  }
};

namespace detail {

// Pairwise squared distances. Direct differencing is more accurate; the
// expanded |x|^2 + |y|^2 - 2 x.y form is used only past d = 8 where the
// O(N^2 d) pair loop starts to dominate.
template <typename Scalar>
Matrix<Scalar> pairwise_squared_distances(const Matrix<Scalar>& x) {
  const Index n = x.rows();
  Matrix<Scalar> sq(n, n);
  if (x.cols() > 8) {
    Vector<Scalar> norms = x.rowwise().squaredNorm();
    sq = norms.replicate(1, n) + norms.transpose().replicate(n, 1) - Scalar(2) * (x * x.transpose());
    sq = sq.cwiseMax(Scalar(0));
    sq.diagonal().setZero();
  } else {
    for (Index i = 0; i < n; ++i) {
      sq(i, i) = Scalar(0);
      for (Index j = 0; j < i; ++j) {
        const Scalar dij = (x.row(i) - x.row(j)).squaredNorm();
        sq(i, j) = dij;
        sq(j, i) = dij;
      }
    }
  }
  return sq;
}

// g_eps(x, y) = exp(-|x - y|^2 / (4 eps)), for all pairs.
template <typename Scalar>
Matrix<Scalar> gaussian_kernel_matrix(const Matrix<Scalar>& x, Scalar epsilon) {
  return (pairwise_squared_distances(x).array() / (Scalar(-4) * epsilon)).exp().matrix();
}

// Shared tail of DM and DE: row i of the result is
//   prefactor * [ (K row i . X) / (K row i).sum() - X^i ].
// Throws if any row sum of K is not a positive finite number.
template <typename Scalar>
Matrix<Scalar> weighted_difference_rows(const Matrix<Scalar>& kernel, const Matrix<Scalar>& x,
                                        Scalar prefactor, Scalar epsilon) {
  Vector<Scalar> denom = kernel.rowwise().sum();
  for (Index i = 0; i < denom.size(); ++i) {
    if (!(denom[i] > Scalar(0)) || !std::isfinite(denom[i])) {
      std::ostringstream msg;
      msg << "interaction: kernel normalization underflow at particle " << i
          << " (denominator " << denom[i] << "); increase epsilon (= " << epsilon << ")";
      throw numerical_error(msg.str());
    }
  }
  Matrix<Scalar> weighted = kernel * x;
  weighted.array().colwise() /= denom.array();
  return prefactor * (weighted - x);
}

}  // namespace detail

/// Gaussian-closure interaction: row i is -(Sigma + jitter I)^{-1} (X^i - m)
/// with m the empirical mean and Sigma the unbiased empirical covariance.
template <typename Scalar>
Matrix<Scalar> gaussian_interaction(const Matrix<Scalar>& positions,
                                    std::optional<Scalar> jitter = {}) {
  const Index n = positions.rows();
  const Index d = positions.cols();
  if (n < 2) throw std::invalid_argument("gaussian_interaction: needs N >= 2 for the unbiased covariance");
  RowVector<Scalar> mean = positions.colwise().mean();
  Matrix<Scalar> centered = positions.rowwise() - mean;
  Matrix<Scalar> cov = (centered.transpose() * centered) / Scalar(n - 1);
  const Scalar jit = jitter.value_or(Scalar(1e-9) * cov.trace() / Scalar(d));
  cov.diagonal().array() += jit;
  Eigen::LLT<Matrix<Scalar>> llt(cov);
  if (llt.info() != Eigen::Success) {
    Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> es(cov);
    std::ostringstream msg;
    msg << "gaussian_interaction: regularized covariance is singular (smallest eigenvalue "
        << es.eigenvalues().minCoeff() << ")";
    throw numerical_error(msg.str());
  }
  return -llt.solve(centered.transpose()).transpose();
}

/// Diffusion-map interaction (DM):
///   I(X^i) = (1/eps) sum_j k(X^i, X^j)(X^j - X^i) / sum_j k(X^i, X^j),
/// where k(x, y) = g_eps(x, y) / sqrt(sum_l g_eps(y, X^l)). The normalization
/// is by the second argument's column sum over all particles, and the sums
/// include the self term j = i, which makes N = 1 well-defined (zero).
template <typename Scalar>
Matrix<Scalar> diffusion_map_interaction(const Matrix<Scalar>& positions, Scalar epsilon) {
  if (!(epsilon > Scalar(0))) throw std::invalid_argument("diffusion_map_interaction: epsilon must be > 0");
  if (positions.rows() < 1) throw std::invalid_argument("diffusion_map_interaction: needs N >= 1");
  Matrix<Scalar> kernel = detail::gaussian_kernel_matrix(positions, epsilon);
  RowVector<Scalar> inv_sqrt_colsum = kernel.colwise().sum().array().rsqrt();
  kernel.array().rowwise() *= inv_sqrt_colsum.array();
  return detail::weighted_difference_rows(kernel, positions, Scalar(1) / epsilon, epsilon);
}

/// Density-estimation interaction (DE): same weighted difference with the raw
/// Gaussian kernel and a 1/(2 eps) prefactor.
template <typename Scalar>
Matrix<Scalar> density_estimation_interaction(const Matrix<Scalar>& positions, Scalar epsilon) {
  if (!(epsilon > Scalar(0))) throw std::invalid_argument("density_estimation_interaction: epsilon must be > 0");
  if (positions.rows() < 1) throw std::invalid_argument("density_estimation_interaction: needs N >= 1");
  Matrix<Scalar> kernel = detail::gaussian_kernel_matrix(positions, epsilon);
  return detail::weighted_difference_rows(kernel, positions, Scalar(1) / (Scalar(2) * epsilon), epsilon);
}

template <typename Scalar>
Matrix<Scalar> apply(const InteractionApproximator<Scalar>& approx, const Matrix<Scalar>& positions) {
  switch (approx.kind) {
    case InteractionKind::none:
      return Matrix<Scalar>::Zero(positions.rows(), positions.cols());
    case InteractionKind::gaussian:
      return gaussian_interaction(positions, approx.jitter);
    case InteractionKind::diffusion_map:
      return diffusion_map_interaction(positions, approx.epsilon);
    case InteractionKind::density_estimation:
      return density_estimation_interaction(positions, approx.epsilon);
  }
  throw std::invalid_argument("apply: unknown interaction kind");
}

template <typename Scalar>
Matrix<Scalar> apply(const InteractionApproximator<Scalar>& approx, const Ensemble<Scalar>& ens) {
  return apply(approx, ens.positions);
}

}  // namespace agflow
