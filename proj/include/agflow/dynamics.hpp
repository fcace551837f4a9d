#pragma once

#include "agflow/interaction.hpp"
#include "agflow/rng.hpp"
#include "agflow/schedule.hpp"
#include "agflow/targets.hpp"
#include "agflow/types.hpp"

#include <chrono>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <tuple>
#include <utility>

namespace agflow {

/// Position update of the symplectic iteration. The tabulated algorithm
/// drifts with the pre-kick momentum Y_k (paper_verbatim); half_step is the
/// standard leapfrog variant drifting with Y_{k+1/2}.
enum class XUpdateRule { paper_verbatim, half_step };

template <typename Scalar>
struct AcceleratedConfig {
  ScalingSchedule<Scalar> schedule;
  Scalar dt;
  XUpdateRule x_update = XUpdateRule::paper_verbatim;
  InteractionApproximator<Scalar> approx;
};

namespace detail {
template <typename Scalar>
void require_positive_dt(Scalar dt) {
  if (!(dt > Scalar(0))) throw std::invalid_argument("dynamics: dt must be > 0");
}
}  // namespace detail

/// One full iteration of the interacting-particle accelerated flow:
/// half-kick, drift, recompute interaction, half-kick. Exactly two
/// interaction evaluations (at X_k and at X_{k+1}).
template <typename Scalar, typename Target>
Ensemble<Scalar> accelerated_step(const Ensemble<Scalar>& ens, const AcceleratedConfig<Scalar>& cfg,
                                  const Target& target) {
  detail::require_positive_dt(cfg.dt);
  validate_ensemble(ens);
  const Scalar t_half = ens.time + cfg.dt / Scalar(2);
  const Scalar kick = Scalar(0.5) * force_coeff(cfg.schedule, t_half) * cfg.dt;
  const Scalar drift = velocity_coeff(cfg.schedule, t_half) * cfg.dt;
  const bool interacting = cfg.approx.kind != InteractionKind::none;

  Matrix<Scalar> force = grad_potential_rows(target, ens.positions);
  if (interacting) force += apply(cfg.approx, ens.positions);
  Matrix<Scalar> momenta_half = ens.momenta - kick * force;

  Ensemble<Scalar> out;
  out.positions = ens.positions +
                  drift * (cfg.x_update == XUpdateRule::paper_verbatim ? ens.momenta : momenta_half);
  Matrix<Scalar> force_new = grad_potential_rows(target, out.positions);
  if (interacting) force_new += apply(cfg.approx, out.positions);
  out.momenta = momenta_half - kick * force_new;
  out.time = t_half + cfg.dt / Scalar(2);

  if (!out.positions.allFinite() || !out.momenta.allFinite())
    throw numerical_error("accelerated_step: non-finite state after step");
  return out;
}

struct RunStats {
  std::size_t iterations = 0;
  std::size_t interaction_evals = 0;
};

/// Runs accelerated_step `iterations` times in place, invoking
/// hook(k, ensemble, step_nanos) after each iteration (k = 1..K). The
/// interaction is evaluated once up front, as in the tabulated algorithm;
/// the step recomputes it at the same positions (pure function, same value),
/// so the up-front call doubles as fail-fast validation of the initial
/// ensemble. Total interaction evaluations: 2K + 1.
template <typename Scalar, typename Target, typename Hook>
RunStats run_accelerated(Ensemble<Scalar>& ens, const AcceleratedConfig<Scalar>& cfg, const Target& target,
                         int iterations, Hook&& hook) {
  if (iterations < 1) throw std::invalid_argument("run_accelerated: iteration count must be >= 1");
  validate_ensemble(ens);
  RunStats stats;
  if (cfg.approx.kind != InteractionKind::none) {
    (void)apply(cfg.approx, ens.positions);
    ++stats.interaction_evals;
  }
  for (int k = 1; k <= iterations; ++k) {
    const auto begin = std::chrono::steady_clock::now();
    try {
      ens = accelerated_step(ens, cfg, target);
    } catch (const numerical_error& err) {
      std::ostringstream msg;
      msg << "run_accelerated: iteration " << k << ": " << err.what();
      throw numerical_error(msg.str());
    }
    if (cfg.approx.kind != InteractionKind::none) stats.interaction_evals += 2;
    ++stats.iterations;
    const auto nanos =
        std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now() - begin).count();
    hook(k, std::as_const(ens), static_cast<std::int64_t>(nanos));
  }
  return stats;
}

template <typename Scalar, typename Target>
RunStats run_accelerated(Ensemble<Scalar>& ens, const AcceleratedConfig<Scalar>& cfg, const Target& target,
                         int iterations) {
  return run_accelerated(ens, cfg, target, iterations,
                         [](int, const Ensemble<Scalar>&, std::int64_t) {});
}

/// One step of the deterministic accelerated ODE pair
///   dX/dt = e^{alpha-gamma} Y,  dY/dt = -e^{alpha+beta+gamma} grad f(X),
/// staged exactly as the particle iteration with the interaction term zero.
template <typename Scalar, typename Target>
std::tuple<Vector<Scalar>, Vector<Scalar>, Scalar> nesterov_ode_step(
    const Vector<Scalar>& x, const Vector<Scalar>& y, Scalar t, const ScalingSchedule<Scalar>& schedule,
    const Target& target, Scalar dt, XUpdateRule x_update = XUpdateRule::paper_verbatim) {
  if (!(t >= schedule.t0)) throw std::domain_error("nesterov_ode_step: t must be >= t0");
  Ensemble<Scalar> ens{x.transpose(), y.transpose(), t};
  const AcceleratedConfig<Scalar> cfg{schedule, dt, x_update, InteractionApproximator<Scalar>::none()};
  ens = accelerated_step(ens, cfg, target);
  return {ens.positions.row(0).transpose(), ens.momenta.row(0).transpose(), ens.time};
}

/// Euler-Maruyama step of the overdamped Langevin equation
///   dX = -grad f(X) dt + sqrt(2) dB.
/// noise_scale is a test hook; 0 reduces the step to plain gradient descent.
/// The generator is consumed identically regardless of noise_scale.
template <typename Scalar, typename Target>
Matrix<Scalar> langevin_step(const Matrix<Scalar>& positions, Scalar dt, const Target& target, Rng& rng,
                             Scalar noise_scale = Scalar(1)) {
  detail::require_positive_dt(dt);
  Matrix<Scalar> out = positions - grad_potential_rows(target, positions) * dt +
                       (noise_scale * std::sqrt(Scalar(2) * dt)) *
                           rng.normal_matrix<Scalar>(positions.rows(), positions.cols());
  if (!out.allFinite()) throw numerical_error("langevin_step: non-finite state after step");
  return out;
}

/// Euler-Maruyama step of the underdamped Langevin pair
///   dX = v dt,  dv = -gamma v dt - grad f(X) dt + sqrt(2) dB,
/// with the position updated first and the force taken at the updated
/// position (semi-implicit form; for zero noise and friction it reduces to
/// the symplectic Euler integrator).
template <typename Scalar, typename Target>
std::pair<Matrix<Scalar>, Matrix<Scalar>> underdamped_step(const Matrix<Scalar>& positions,
                                                           const Matrix<Scalar>& velocities, Scalar dt,
                                                           Scalar gamma_friction, const Target& target, Rng& rng,
                                                           Scalar noise_scale = Scalar(1)) {
  detail::require_positive_dt(dt);
  if (!(gamma_friction >= Scalar(0)))
    throw std::invalid_argument("underdamped_step: friction must be >= 0");
  Matrix<Scalar> new_positions = positions + velocities * dt;
  Matrix<Scalar> new_velocities = velocities - gamma_friction * dt * velocities -
                                  grad_potential_rows(target, new_positions) * dt +
                                  (noise_scale * std::sqrt(Scalar(2) * dt)) *
                                      rng.normal_matrix<Scalar>(positions.rows(), positions.cols());
  if (!new_positions.allFinite() || !new_velocities.allFinite())
    throw numerical_error("underdamped_step: non-finite state after step");
  return {std::move(new_positions), std::move(new_velocities)};
}

/// Forward-Euler step of the deterministic first-order flow
///   dX = -(grad f(X) + I^(N)(X)) dt,
/// whose marginals match the overdamped Langevin equation.
template <typename Scalar, typename Target>
Matrix<Scalar> deterministic_first_order_step(const Matrix<Scalar>& positions, Scalar dt, const Target& target,
                                              const InteractionApproximator<Scalar>& approx) {
  detail::require_positive_dt(dt);
  if (approx.kind == InteractionKind::none)
    throw std::invalid_argument("deterministic_first_order_step: needs an interacting approximation");
  Matrix<Scalar> out =
      positions - (grad_potential_rows(target, positions) + apply(approx, positions)) * dt;
  if (!out.allFinite()) throw numerical_error("deterministic_first_order_step: non-finite state after step");
  return out;
}

}  // namespace agflow
