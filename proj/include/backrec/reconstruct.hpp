#pragma once

#include "backrec/cg.hpp"
#include "backrec/evolve.hpp"
#include "backrec/field.hpp"
#include "backrec/grid.hpp"
#include "backrec/types.hpp"

#include <json.hpp>

#include <cmath>
#include <optional>
#include <utility>

namespace backrec {

// Inverse problem data: a measurement g of u(T) with ||g - u(T)||_2 <= delta
// and an a-priori H^1 bound E on the unknown initial state.
template <typename Scalar>
struct ReconstructionProblem {
  EvolutionFamily<Scalar> family;
  StateVector<Scalar> g;
  Scalar delta = 0;   // noise bound, L^2 units
  Scalar E = 0;       // a-priori bound on ||u(0)||_{H^1}
  Scalar alpha_floor = Scalar(1e-14);
  Scalar outer_tolerance = Scalar(1e-10);  // relative residual of the outer CG
  int max_outer_iterations = 0;  // 0: 10 * node count
};

template <typename Scalar>
struct AlphaChoice {
  Scalar alpha;
  bool floored;  // delta * M * kappa fell below the floor (e.g. delta == 0)
};

/// Regularization rule alpha = delta * M * kappa, floored to keep the
/// operator nonsingular when delta degenerates to zero.
template <typename Scalar>
AlphaChoice<Scalar> choose_alpha(Scalar delta, Scalar M, Scalar kappa,
                                 Scalar alpha_floor = Scalar(1e-14)) {
  const Scalar raw = delta * M * kappa;
  if (raw < alpha_floor) return {alpha_floor, true};
  return {raw, false};
}

// Operator-norm constant entering the alpha rule.  backward_euler factors
// are SPD contractions, so the discrete constant is exactly 1; otherwise it
// is estimated by power iteration.
template <typename Scalar>
Scalar operator_norm_constant(const EvolutionFamily<Scalar>& family) {
  if (family.scheme() == Scheme::backward_euler) return Scalar(1);
  return estimate_M(family, 50);
}

// B_alpha u = alpha (A(0) u + u) + U(T,0)^* U(T,0) u, the operator of the
// bilinear form
//
//   b_alpha(u, v) = alpha (a(0; u, v) + <u, v>) + <U(T,0) u, U(T,0) v>,
//
// symmetric and positive definite with <B_alpha u, u> >= alpha kappa ||u||_{H^1}^2.
template <typename Scalar>
StateVector<Scalar> apply_B_alpha(const ReconstructionProblem<Scalar>& p,
                                  Scalar alpha,
                                  const StateVector<Scalar>& u) {
  const auto& f = p.family;
  const int K = f.mesh().steps;
  StateVector<Scalar> out = apply_adjoint(f, apply_forward(f, u, 0, K), 0, K);
  out.values += alpha * (f.operator_at(0).apply(u.values) + u.values);
  return out;
}

/// U(T,0)^* g, the right-hand side g_2 of the normal equation.
template <typename Scalar>
StateVector<Scalar> right_hand_side(const ReconstructionProblem<Scalar>& p) {
  return apply_adjoint(p.family, p.g, 0, p.family.mesh().steps);
}

/// Tikhonov functional
///   L_alpha(u) = alpha/2 (a(0;u,u) + ||u||_2^2) + 1/2 ||U(T,0)u - g||_2^2.
template <typename Scalar>
Scalar tikhonov_functional(const ReconstructionProblem<Scalar>& p, Scalar alpha,
                           const StateVector<Scalar>& u) {
  const auto& f = p.family;
  const Scalar quad =
      l2_inner({u.grid, f.operator_at(0).apply(u.values)}, u) + l2_inner(u, u);
  const StateVector<Scalar> misfit =
      apply_forward(f, u, 0, f.mesh().steps) - p.g;
  return alpha / 2 * quad + l2_inner(misfit, misfit) / 2;
}

/// Gradient of the Tikhonov functional, B_alpha u - U(T,0)^* g; vanishes at
/// the reconstruction.
template <typename Scalar>
StateVector<Scalar> tikhonov_gradient(const ReconstructionProblem<Scalar>& p,
                                      Scalar alpha,
                                      const StateVector<Scalar>& u) {
  return apply_B_alpha(p, alpha, u) - right_hand_side(p);
}

template <typename Scalar>
struct ReconstructionResult {
  StateVector<Scalar> u0;  // the reconstructed initial state
  Scalar alpha = 0;
  bool alpha_floored = false;
  Trajectory<Scalar> trajectory;  // u(t_k) = U(t_k, 0) u0
  int cg_iterations = 0;
  Scalar cg_residual = 0;  // relative residual of the outer solve
  Scalar functional_value = 0;
  // Lax-Milgram diagnostic: ||u0||_{H^1} against (1/(kappa alpha)) ||U^*g||_{H^-1}.
  Scalar h1_bound_lhs = 0;
  Scalar h1_bound_rhs = 0;
  // Relative gap ||eta(2T) - U^*g|| / ||U^*g|| of the reflected forward leg;
  // set by qbv_reconstruct only.
  std::optional<Scalar> qbv_g2_relative_defect;
};

namespace detail {

template <typename Scalar>
int outer_iteration_cap(const ReconstructionProblem<Scalar>& p) {
  return p.max_outer_iterations > 0
             ? p.max_outer_iterations
             : 10 * static_cast<int>(p.family.grid().node_count());
}

template <typename Scalar>
ReconstructionResult<Scalar> finalize_result(
    const ReconstructionProblem<Scalar>& p, const AlphaChoice<Scalar>& ac,
    StateVector<Scalar> u0, int iterations, Scalar residual,
    const StateVector<Scalar>& rhs) {
  ReconstructionResult<Scalar> res;
  res.alpha = ac.alpha;
  res.alpha_floored = ac.floored;
  res.cg_iterations = iterations;
  res.cg_residual = residual;
  res.functional_value = tikhonov_functional(p, ac.alpha, u0);
  res.h1_bound_lhs = h1_norm(u0);
  res.h1_bound_rhs =
      hminus1_norm(rhs) / (p.family.field().kappa * ac.alpha);
  res.trajectory = record(p.family, u0);
  res.u0 = std::move(u0);
  return res;
}

}  // namespace detail

// Solves B_alpha u = U(T,0)^* g by matrix-free conjugate gradients with
// alpha = delta * M * kappa.  Each operator application costs one forward
// and one adjoint evolution sweep.  Non-convergence is reported, never
// silently accepted.
//
// The callback (if any) receives (iteration, iterate values, relative
// residual) after each outer CG update.
template <typename Scalar, typename Callback>
ReconstructionResult<Scalar> solve(const ReconstructionProblem<Scalar>& p,
                                   Callback&& per_iteration) {
  if (!(p.g.grid == p.family.grid()))
    throw std::invalid_argument("solve: measurement grid mismatch");
  if (!p.g.is_finite())
    throw std::invalid_argument("solve: measurement has non-finite entries");
  const Scalar M = operator_norm_constant(p.family);
  const auto ac =
      choose_alpha(p.delta, M, p.family.field().kappa, p.alpha_floor);

  const StateVector<Scalar> rhs = right_hand_side(p);
  auto apply = [&](const Vector<Scalar>& v) {
    return apply_B_alpha(p, ac.alpha, {p.family.grid(), v}).values;
  };
  auto cg = conjugate_gradient<Scalar>(apply, rhs.values, p.outer_tolerance,
                                       detail::outer_iteration_cap(p),
                                       std::forward<Callback>(per_iteration));
  if (!cg.converged)
    throw SolveError("reconstruction: outer conjugate gradient stalled",
                     cg.iterations,
                     static_cast<double>(cg.relative_residual));
  return detail::finalize_result(p, ac,
                                 StateVector<Scalar>{p.family.grid(), cg.x},
                                 cg.iterations, cg.relative_residual, rhs);
}

template <typename Scalar>
ReconstructionResult<Scalar> solve(const ReconstructionProblem<Scalar>& p) {
  return solve(p, CgNoCallback{});
}

// Quasi-boundary value route to the same reconstruction:
//
//   1. reflect the coefficients about t = T to get b(t) on [0, 2T];
//   2. march the measurement forward over [T, 2T] under the reflected
//      coefficients to obtain g_2 = eta(2T), the discrete U(T,0)^* g;
//   3. solve the nonlocal condition alpha (B(0) w(0) + w(0)) + w(2T) = g_2,
//      where w(2T) is w(0) marched over [0, T] and then over the reflected
//      leg, i.e. U(T,0)^* U(T,0) w(0).
//
// Each reflected-leg step solves with the coefficient frozen at the step's
// source time (and, for crank_nicolson, multiplies at the target time), so
// it is the transpose of the matching forward factor up to the roundoff of
// evaluating b(tau) versus a(2T - tau).  The result therefore coincides
// with solve() to solver precision.
template <typename Scalar>
ReconstructionResult<Scalar> qbv_reconstruct(
    const ReconstructionProblem<Scalar>& p) {
  const auto& f = p.family;
  const auto& mesh = f.mesh();
  if (mesh.t_start != Scalar(0) || mesh.t_end != f.field().horizon)
    throw std::invalid_argument(
        "qbv_reconstruct: mesh must cover [0, horizon]");
  if (!(p.g.grid == f.grid()))
    throw std::invalid_argument("qbv_reconstruct: measurement grid mismatch");
  const int K = mesh.steps;
  const Scalar T = mesh.t_end;
  const Scalar dt = mesh.dt();

  const CoefficientField<Scalar> reflected = reflect_in_time(f.field());
  const EvolutionFamily<Scalar> leg(reflected, f.grid(),
                                    TimeMesh<Scalar>(T, 2 * T, K), f.scheme(),
                                    f.inner_solver_tolerance());
  // Stiffness of the reflected field at t = 0 (equals A(0) by construction).
  const StiffnessOperator<Scalar> b0(reflected, f.grid(), Scalar(0));

  auto leg_apply = [&](Vector<Scalar> v) {
    for (int m = 0; m < K; ++m) {
      if (f.scheme() == Scheme::backward_euler) {
        v = leg.solve_shifted(m, dt, v);
      } else {
        v = leg.solve_shifted(m, dt / 2, v);
        v -= (dt / 2) * leg.operator_at(m + 1).apply(v);
      }
    }
    return v;
  };

  const Vector<Scalar> g2 = leg_apply(p.g.values);

  const Scalar M = operator_norm_constant(f);
  const auto ac = choose_alpha(p.delta, M, f.field().kappa, p.alpha_floor);
  auto apply = [&](const Vector<Scalar>& w) {
    Vector<Scalar> out =
        leg_apply(apply_forward(f, {f.grid(), w}, 0, K).values);
    out += ac.alpha * (b0.apply(w) + w);
    return out;
  };
  auto cg = conjugate_gradient<Scalar>(apply, g2, p.outer_tolerance,
                                       detail::outer_iteration_cap(p));
  if (!cg.converged)
    throw SolveError("qbv reconstruction: outer conjugate gradient stalled",
                     cg.iterations,
                     static_cast<double>(cg.relative_residual));

  const StateVector<Scalar> rhs = right_hand_side(p);
  auto res = detail::finalize_result(p, ac,
                                     StateVector<Scalar>{f.grid(), cg.x},
                                     cg.iterations, cg.relative_residual, rhs);
  const Scalar rn = rhs.values.norm();
  res.qbv_g2_relative_defect =
      rn > Scalar(0) ? (g2 - rhs.values).norm() / rn : (g2).norm();
  return res;
}

/// Diagnostics in JSON form (states are exported separately).
template <typename Scalar>
nlohmann::json to_json(const ReconstructionResult<Scalar>& r) {
  nlohmann::json j{
      {"alpha", r.alpha},
      {"alpha_floored", r.alpha_floored},
      {"cg_iterations", r.cg_iterations},
      {"cg_residual", r.cg_residual},
      {"functional_value", r.functional_value},
      {"h1_bound", {{"lhs", r.h1_bound_lhs}, {"rhs", r.h1_bound_rhs}}},
  };
  if (r.qbv_g2_relative_defect)
    j["qbv_g2_relative_defect"] = *r.qbv_g2_relative_defect;
  return j;
}

}  // namespace backrec
