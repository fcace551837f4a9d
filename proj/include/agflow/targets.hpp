#pragma once

#include "agflow/rng.hpp"
#include "agflow/types.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <variant>
#include <vector>

namespace agflow {

template <typename Scalar>
Scalar norm_pdf(Scalar z) {
  return std::exp(Scalar(-0.5) * z * z) / std::sqrt(Scalar(2) * std::numbers::pi_v<Scalar>);
}

template <typename Scalar>
Scalar norm_cdf(Scalar z) {
  return Scalar(0.5) * std::erfc(-z / std::numbers::sqrt2_v<Scalar>);
}

namespace detail {

template <typename Scalar>
Eigen::LLT<Matrix<Scalar>> factor_spd(const Matrix<Scalar>& m, const char* who) {
  if (m.rows() != m.cols()) throw std::invalid_argument(std::string(who) + ": covariance must be square");
  if (!m.isApprox(m.transpose(), Scalar(1e-12)))
    throw std::invalid_argument(std::string(who) + ": covariance must be symmetric");
  Eigen::LLT<Matrix<Scalar>> llt(m);
  if (llt.info() != Eigen::Success)
    throw std::invalid_argument(std::string(who) + ": covariance must be positive-definite");
  return llt;
}

template <typename Scalar>
Scalar log_det_from_llt(const Eigen::LLT<Matrix<Scalar>>& llt) {
  return Scalar(2) * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

template <typename Scalar>
void require_dim(const Vector<Scalar>& x, Index d, const char* who) {
  if (x.size() != d) throw std::invalid_argument(std::string(who) + ": dimension mismatch");
}

}  // namespace detail

/// Gaussian target N(mean, Q). The potential is f(x) = 1/2 (x-mean)^T Q^{-1} (x-mean)
/// up to the normalizing constant, i.e. f = -log(rho_inf).
template <typename Scalar>
class GaussianTarget {
 public:
  GaussianTarget(Vector<Scalar> mean, Matrix<Scalar> covariance)
      : mean_(std::move(mean)),
        cov_(std::move(covariance)),
        llt_(detail::factor_spd(cov_, "GaussianTarget")) {
    if (mean_.size() != cov_.rows()) throw std::invalid_argument("GaussianTarget: mean/covariance size mismatch");
    log_norm_ = Scalar(-0.5) * (Scalar(mean_.size()) * std::log(Scalar(2) * std::numbers::pi_v<Scalar>) +
                                detail::log_det_from_llt(llt_));
  }

  Index dim() const { return mean_.size(); }
  const Vector<Scalar>& mean() const { return mean_; }
  const Matrix<Scalar>& covariance() const { return cov_; }
  const Eigen::LLT<Matrix<Scalar>>& covariance_llt() const { return llt_; }
  Scalar log_normalizer() const { return log_norm_; }

 private:
  Vector<Scalar> mean_;
  Matrix<Scalar> cov_;
  Eigen::LLT<Matrix<Scalar>> llt_;
  Scalar log_norm_;
};

template <typename Scalar>
Vector<Scalar> grad_potential(const GaussianTarget<Scalar>& target, const Vector<Scalar>& x) {
  detail::require_dim(x, target.dim(), "grad_potential");
  return target.covariance_llt().solve(x - target.mean());
}

/// Row-wise gradient for a whole ensemble: row i is grad f(X.row(i)).
template <typename Scalar>
Matrix<Scalar> grad_potential_rows(const GaussianTarget<Scalar>& target, const Matrix<Scalar>& positions) {
  if (positions.cols() != target.dim()) throw std::invalid_argument("grad_potential_rows: dimension mismatch");
  Matrix<Scalar> centered = positions.rowwise() - target.mean().transpose();
  return target.covariance_llt().solve(centered.transpose()).transpose();
}

template <typename Scalar>
Scalar log_density(const GaussianTarget<Scalar>& target, const Vector<Scalar>& x) {
  detail::require_dim(x, target.dim(), "log_density");
  Vector<Scalar> centered = x - target.mean();
  return target.log_normalizer() - Scalar(0.5) * centered.dot(target.covariance_llt().solve(centered));
}

/// Mixture of Gaussians, sum_k w_k N(mu_k, Q_k). Weights must be positive and
/// sum to one.
template <typename Scalar>
class GaussianMixtureTarget {
 public:
  GaussianMixtureTarget(Vector<Scalar> weights, std::vector<Vector<Scalar>> means,
                        std::vector<Matrix<Scalar>> covariances)
      : weights_(std::move(weights)), means_(std::move(means)), covs_(std::move(covariances)) {
    const Index k = weights_.size();
    if (k < 1) throw std::invalid_argument("GaussianMixtureTarget: needs at least one component");
    if (static_cast<Index>(means_.size()) != k || static_cast<Index>(covs_.size()) != k)
      throw std::invalid_argument("GaussianMixtureTarget: component count mismatch");
    if ((weights_.array() <= Scalar(0)).any())
      throw std::invalid_argument("GaussianMixtureTarget: weights must be > 0");
    if (std::abs(weights_.sum() - Scalar(1)) > Scalar(1e-12))
      throw std::invalid_argument("GaussianMixtureTarget: weights must sum to 1");
    const Index d = means_[0].size();
    for (Index i = 0; i < k; ++i) {
      if (means_[i].size() != d) throw std::invalid_argument("GaussianMixtureTarget: mean dimension mismatch");
      llts_.push_back(detail::factor_spd(covs_[i], "GaussianMixtureTarget"));
      log_norms_.push_back(Scalar(-0.5) * (Scalar(d) * std::log(Scalar(2) * std::numbers::pi_v<Scalar>) +
                                           detail::log_det_from_llt(llts_.back())));
    }
  }

  /// Symmetric two-component 1-d mixture 1/2 N(-m, sigma2) + 1/2 N(m, sigma2).
  static GaussianMixtureTarget symmetric_pair(Scalar m, Scalar sigma2) {
    Vector<Scalar> w(2);
    w << Scalar(0.5), Scalar(0.5);
    Vector<Scalar> lo(1), hi(1);
    lo << -m;
    hi << m;
    Matrix<Scalar> cov(1, 1);
    cov << sigma2;
    return GaussianMixtureTarget(w, {lo, hi}, {cov, cov});
  }

  Index dim() const { return means_[0].size(); }
  Index components() const { return weights_.size(); }
  const Vector<Scalar>& weights() const { return weights_; }
  const std::vector<Vector<Scalar>>& means() const { return means_; }
  const std::vector<Matrix<Scalar>>& covariances() const { return covs_; }

  /// log w_k + log N(x; mu_k, Q_k) for each component.
  Vector<Scalar> component_log_terms(const Vector<Scalar>& x) const {
    detail::require_dim(x, dim(), "GaussianMixtureTarget");
    Vector<Scalar> out(components());
    for (Index i = 0; i < components(); ++i) {
      Vector<Scalar> centered = x - means_[i];
      out[i] = std::log(weights_[i]) + log_norms_[i] -
               Scalar(0.5) * centered.dot(llts_[i].solve(centered));
    }
    return out;
  }

  const Eigen::LLT<Matrix<Scalar>>& component_llt(Index i) const { return llts_[i]; }

 private:
  Vector<Scalar> weights_;
  std::vector<Vector<Scalar>> means_;
  std::vector<Matrix<Scalar>> covs_;
  std::vector<Eigen::LLT<Matrix<Scalar>>> llts_;
  std::vector<Scalar> log_norms_;
};

template <typename Scalar>
Scalar log_density(const GaussianMixtureTarget<Scalar>& target, const Vector<Scalar>& x) {
  Vector<Scalar> terms = target.component_log_terms(x);
  const Scalar m = terms.maxCoeff();
  return m + std::log((terms.array() - m).exp().sum());
}

/// Gradient of f = -log(rho_inf) in responsibility form,
///   grad f(x) = sum_k w_k(x) Q_k^{-1} (x - mu_k),
/// with responsibilities w_k(x) through a log-sum-exp so that far tails do
/// not underflow.
template <typename Scalar>
Vector<Scalar> grad_potential(const GaussianMixtureTarget<Scalar>& target, const Vector<Scalar>& x) {
  Vector<Scalar> terms = target.component_log_terms(x);
  const Scalar m = terms.maxCoeff();
  Array<Scalar> resp = (terms.array() - m).exp();
  resp /= resp.sum();
  Vector<Scalar> grad = Vector<Scalar>::Zero(target.dim());
  for (Index i = 0; i < target.components(); ++i)
    grad += resp[i] * target.component_llt(i).solve(x - target.means()[i]);
  return grad;
}

template <typename Scalar>
Matrix<Scalar> grad_potential_rows(const GaussianMixtureTarget<Scalar>& target, const Matrix<Scalar>& positions) {
  if (positions.cols() != target.dim()) throw std::invalid_argument("grad_potential_rows: dimension mismatch");
  Matrix<Scalar> out(positions.rows(), positions.cols());
  for (Index i = 0; i < positions.rows(); ++i)
    out.row(i) = grad_potential(target, Vector<Scalar>(positions.row(i).transpose())).transpose();
  return out;
}

/// phi0(x) = slope . x + offset; gradient is the constant slope.
template <typename Scalar>
struct LinearPhi0 {
  Vector<Scalar> slope;
  Scalar offset = Scalar(0);
};

/// phi0(x) = 1/2 x^T A x with A positive-semidefinite; gradient is A x.
template <typename Scalar>
struct QuadraticPhi0 {
  Matrix<Scalar> curvature;
};

template <typename Scalar>
using Phi0 = std::variant<LinearPhi0<Scalar>, QuadraticPhi0<Scalar>>;

/// Initial condition: positions drawn from N(mean, cov), momenta set to
/// grad phi0 evaluated at each position. phi0 must be convex.
template <typename Scalar>
class GaussianInitial {
 public:
  GaussianInitial(Vector<Scalar> mean, Matrix<Scalar> covariance, Phi0<Scalar> phi0)
      : mean_(std::move(mean)),
        cov_(std::move(covariance)),
        chol_(detail::factor_spd(cov_, "GaussianInitial").matrixL()),
        phi0_(std::move(phi0)) {
    if (mean_.size() != cov_.rows()) throw std::invalid_argument("GaussianInitial: mean/covariance size mismatch");
    if (const auto* lin = std::get_if<LinearPhi0<Scalar>>(&phi0_)) {
      if (lin->slope.size() != mean_.size())
        throw std::invalid_argument("GaussianInitial: phi0 slope dimension mismatch");
    } else {
      const auto& quad = std::get<QuadraticPhi0<Scalar>>(phi0_);
      if (quad.curvature.rows() != mean_.size() || quad.curvature.cols() != mean_.size())
        throw std::invalid_argument("GaussianInitial: phi0 curvature dimension mismatch");
      Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> es(quad.curvature);
      if (es.eigenvalues().minCoeff() < Scalar(-1e-12))
        throw std::invalid_argument("GaussianInitial: quadratic phi0 must be positive-semidefinite");
    }
  }

  Index dim() const { return mean_.size(); }
  const Vector<Scalar>& mean() const { return mean_; }
  const Matrix<Scalar>& covariance() const { return cov_; }
  const Phi0<Scalar>& phi0() const { return phi0_; }

 private:
  Vector<Scalar> mean_;
  Matrix<Scalar> cov_;
  Matrix<Scalar> chol_;
  Phi0<Scalar> phi0_;

  template <typename S>
  friend Matrix<S> sample_initial(const GaussianInitial<S>&, Index, Rng&);
};

/// n i.i.d. rows from N(mean, cov); deterministic given the generator state.
template <typename Scalar>
Matrix<Scalar> sample_initial(const GaussianInitial<Scalar>& init, Index n, Rng& rng) {
  if (n < 1) throw std::invalid_argument("sample_initial: n must be >= 1");
  Matrix<Scalar> z = rng.normal_matrix<Scalar>(n, init.dim());
  return (z * init.chol_.transpose()).rowwise() + init.mean_.transpose();
}

template <typename Scalar>
Vector<Scalar> initial_momentum(const GaussianInitial<Scalar>& init, const Vector<Scalar>& x) {
  detail::require_dim(x, init.dim(), "initial_momentum");
  if (const auto* lin = std::get_if<LinearPhi0<Scalar>>(&init.phi0())) return lin->slope;
  return std::get<QuadraticPhi0<Scalar>>(init.phi0()).curvature * x;
}

/// Momentum rows Y^i = grad phi0(X^i) for a whole position matrix.
template <typename Scalar>
Matrix<Scalar> initial_momentum_rows(const GaussianInitial<Scalar>& init, const Matrix<Scalar>& positions) {
  if (positions.cols() != init.dim()) throw std::invalid_argument("initial_momentum_rows: dimension mismatch");
  if (const auto* lin = std::get_if<LinearPhi0<Scalar>>(&init.phi0()))
    return Matrix<Scalar>::Ones(positions.rows(), 1) * lin->slope.transpose();
  return positions * std::get<QuadraticPhi0<Scalar>>(init.phi0()).curvature.transpose();
}

/// Test functions whose expectations under the target have closed forms (d = 1).
enum class TestFunction { half_rectified_identity, mean, second_moment };

template <typename Scalar>
Scalar apply_test_function(TestFunction fn, Scalar x) {
  switch (fn) {
    case TestFunction::half_rectified_identity:
      return x >= Scalar(0) ? x : Scalar(0);
    case TestFunction::mean:
      return x;
    case TestFunction::second_moment:
      return x * x;
  }
  throw std::invalid_argument("apply_test_function: unknown test function");
}

namespace detail {
// E[x 1_{x>=0}] under N(mu, sigma^2): mu Phi(mu/sigma) + sigma phi(mu/sigma).
template <typename Scalar>
Scalar half_rectified_mean(Scalar mu, Scalar sigma) {
  const Scalar z = mu / sigma;
  return mu * norm_cdf(z) + sigma * norm_pdf(z);
}
}  // namespace detail

template <typename Scalar>
Scalar exact_expectation(const GaussianTarget<Scalar>& target, TestFunction fn) {
  if (target.dim() != 1 && fn != TestFunction::mean)
    throw std::invalid_argument("exact_expectation: closed forms are d=1 only");
  const Scalar mu = target.mean()[0];
  const Scalar var = target.covariance()(0, 0);
  switch (fn) {
    case TestFunction::half_rectified_identity:
      return detail::half_rectified_mean(mu, std::sqrt(var));
    case TestFunction::mean:
      return mu;
    case TestFunction::second_moment:
      return mu * mu + var;
  }
  throw std::invalid_argument("exact_expectation: unknown test function");
}

template <typename Scalar>
Scalar exact_expectation(const GaussianMixtureTarget<Scalar>& target, TestFunction fn) {
  if (target.dim() != 1)
    throw std::invalid_argument("exact_expectation: closed forms are d=1 only");
  Scalar acc = Scalar(0);
  for (Index i = 0; i < target.components(); ++i) {
    const Scalar w = target.weights()[i];
    const Scalar mu = target.means()[i][0];
    const Scalar var = target.covariances()[i](0, 0);
    switch (fn) {
      case TestFunction::half_rectified_identity:
        acc += w * detail::half_rectified_mean(mu, std::sqrt(var));
        break;
      case TestFunction::mean:
        acc += w * mu;
        break;
      case TestFunction::second_moment:
        acc += w * (mu * mu + var);
        break;
    }
  }
  return acc;
}

}  // namespace agflow
