#pragma once

#include "agflow/types.hpp"

#include <cmath>
#include <stdexcept>

namespace agflow {

/// Time-varying scaling parameters of the accelerated flow,
///   alpha_t = log p - log t,  beta_t = p log t + log C,  gamma_t = p log t,
/// which satisfy the ideal-scaling identities dgamma/dt = dbeta/dt = e^alpha.
template <typename Scalar>
struct ScalingSchedule {
  Scalar p;
  Scalar C;
  Scalar t0;

  ScalingSchedule(Scalar p_, Scalar C_, Scalar t0_ = Scalar(1)) : p(p_), C(C_), t0(t0_) {
    if (!(p >= Scalar(2))) throw std::invalid_argument("ScalingSchedule: p must be >= 2");
    if (!(C > Scalar(0))) throw std::invalid_argument("ScalingSchedule: C must be > 0");
    if (!(t0 > Scalar(0))) throw std::invalid_argument("ScalingSchedule: t0 must be > 0");
  }
};

namespace detail {
template <typename Scalar>
void require_positive_time(Scalar t) {
  if (!(t > Scalar(0))) throw std::domain_error("schedule: t must be > 0");
}
}  // namespace detail

template <typename Scalar>
Scalar alpha(const ScalingSchedule<Scalar>& s, Scalar t) {
  detail::require_positive_time(t);
  return std::log(s.p) - std::log(t);
}

template <typename Scalar>
Scalar beta(const ScalingSchedule<Scalar>& s, Scalar t) {
  detail::require_positive_time(t);
  return s.p * std::log(t) + std::log(s.C);
}

template <typename Scalar>
Scalar gamma(const ScalingSchedule<Scalar>& s, Scalar t) {
  detail::require_positive_time(t);
  return s.p * std::log(t);
}

// The two coefficients below multiply the Hamilton's equations. They are the
// closed forms of exp(alpha - gamma) and exp(alpha + beta + gamma); computing
// them directly avoids the cancellation of summing logs and exponentiating.

/// e^{alpha_t - gamma_t} = p / t^{p+1}; multiplies the momentum in the drift.
template <typename Scalar>
Scalar velocity_coeff(const ScalingSchedule<Scalar>& s, Scalar t) {
  detail::require_positive_time(t);
  return s.p * std::pow(t, -(s.p + Scalar(1)));
}

/// e^{alpha_t + beta_t + gamma_t} = C p t^{2p-1}; multiplies the force in the kick.
template <typename Scalar>
Scalar force_coeff(const ScalingSchedule<Scalar>& s, Scalar t) {
  detail::require_positive_time(t);
  return s.C * s.p * std::pow(t, Scalar(2) * s.p - Scalar(1));
}

/// e^{beta_t} = C t^p; weight of the functional gap in the Lyapunov energy.
template <typename Scalar>
Scalar exp_beta(const ScalingSchedule<Scalar>& s, Scalar t) {
  detail::require_positive_time(t);
  return s.C * std::pow(t, s.p);
}

/// e^{-gamma_t} = t^{-p}; weight of the momentum in the Lyapunov transport term.
template <typename Scalar>
Scalar exp_neg_gamma(const ScalingSchedule<Scalar>& s, Scalar t) {
  detail::require_positive_time(t);
  return std::pow(t, -s.p);
}

}  // namespace agflow
