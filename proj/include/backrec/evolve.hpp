#pragma once

#include "backrec/cg.hpp"
#include "backrec/field.hpp"
#include "backrec/grid.hpp"
#include "backrec/types.hpp"

#include <cmath>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <ostream>
#include <random>
#include <string>
#include <vector>

namespace backrec {

enum class Scheme { backward_euler, crank_nicolson };

/// Uniform partition of [t_start, t_end] into `steps` intervals.  A mesh
/// with zero steps (single node, t_end == t_start) is the identity family.
template <typename Scalar>
struct TimeMesh {
  Scalar t_start = 0;
  Scalar t_end = 0;
  int steps = 0;

  TimeMesh() = default;
  TimeMesh(Scalar t_start_, Scalar t_end_, int steps_)
      : t_start(t_start_), t_end(t_end_), steps(steps_) {
    if (steps < 0) throw std::invalid_argument("TimeMesh: negative step count");
    if (steps == 0 && t_end != t_start)
      throw std::invalid_argument("TimeMesh: zero steps over a nonempty span");
    if (steps >= 1 && !(t_end > t_start))
      throw std::invalid_argument("TimeMesh: t_end must exceed t_start");
  }

  Scalar dt() const {
    return steps == 0 ? Scalar(0) : (t_end - t_start) / Scalar(steps);
  }
  Scalar node(int k) const {
    return k == steps ? t_end : t_start + Scalar(k) * dt();
  }

  friend bool operator==(const TimeMesh&, const TimeMesh&) = default;
};

// Discrete evolution family for  d/dt u + A(t) u = 0.
//
// backward_euler advances by u_{k+1} = (I + dt A(t_{k+1}))^{-1} u_k; every
// factor is an SPD contraction for the discrete L^2 inner product, so the
// family satisfies ||U(p,s)||_2 <= 1 and the adjoint U(p,s)^* is the same
// solves applied in reverse order.  crank_nicolson advances by
// (I + dt/2 A(t_{k+1})) u_{k+1} = (I - dt/2 A(t_k)) u_k.
//
// Coefficients are sampled once per mesh node at construction, so the family
// is immutable afterwards and safe to share across threads.
template <typename Scalar>
class EvolutionFamily {
 public:
  EvolutionFamily(CoefficientField<Scalar> field, PeriodicGrid<Scalar> grid,
                  TimeMesh<Scalar> mesh,
                  Scheme scheme = Scheme::backward_euler,
                  Scalar inner_solver_tolerance = Scalar(1e-12))
      : field_(std::move(field)),
        grid_(grid),
        mesh_(mesh),
        scheme_(scheme),
        inner_tol_(inner_solver_tolerance) {
    if (field_.dim != grid_.dim)
      throw std::invalid_argument("EvolutionFamily: field/grid dim mismatch");
    node_ops_.reserve(mesh_.steps + 1);
    for (int k = 0; k <= mesh_.steps; ++k)
      node_ops_.emplace_back(field_, grid_, mesh_.node(k));
  }

  const CoefficientField<Scalar>& field() const { return field_; }
  const PeriodicGrid<Scalar>& grid() const { return grid_; }
  const TimeMesh<Scalar>& mesh() const { return mesh_; }
  Scheme scheme() const { return scheme_; }
  Scalar inner_solver_tolerance() const { return inner_tol_; }
  int max_inner_iterations() const {
    return 10 * static_cast<int>(grid_.node_count());
  }

  const StiffnessOperator<Scalar>& operator_at(int node) const {
    return node_ops_.at(static_cast<std::size_t>(node));
  }

  // Gershgorin bound on dt * lambda_max(A).  Values above 2 make
  // crank_nicolson steps oscillatory (though still L^2 stable).
  Scalar cn_stability_product() const {
    const Scalar h = grid_.spacing();
    return mesh_.dt() * Scalar(4 * grid_.dim) / (h * h * field_.kappa);
  }

  /// Solves (I + coef * A_node) x = rhs with the cached operator.
  Vector<Scalar> solve_shifted(int node, Scalar coef,
                               const Vector<Scalar>& rhs) const {
    const auto& op = operator_at(node);
    auto apply = [&](const Vector<Scalar>& v) {
      return (v + coef * op.apply(v)).eval();
    };
    auto res = conjugate_gradient<Scalar>(apply, rhs, inner_tol_,
                                          max_inner_iterations());
    if (!res.converged)
      throw SolveError("evolution step: inner conjugate gradient stalled",
                       res.iterations,
                       static_cast<double>(res.relative_residual));
    return std::move(res.x);
  }

 private:
  CoefficientField<Scalar> field_;
  PeriodicGrid<Scalar> grid_;
  TimeMesh<Scalar> mesh_;
  Scheme scheme_;
  Scalar inner_tol_;
  std::vector<StiffnessOperator<Scalar>> node_ops_;
};

namespace detail {

template <typename Scalar>
void check_step_range(const EvolutionFamily<Scalar>& f, int k_s, int k_p) {
  if (k_s < 0 || k_p > f.mesh().steps || k_s > k_p)
    throw std::invalid_argument("evolution: step index order violation");
}

}  // namespace detail

/// One step from mesh node k to node k+1.
template <typename Scalar>
StateVector<Scalar> step(const EvolutionFamily<Scalar>& f, int k,
                         const StateVector<Scalar>& u) {
  detail::check_step_range(f, k, k + 1);
  if (!(u.grid == f.grid()))
    throw std::invalid_argument("evolution: state grid mismatch");
  const Scalar dt = f.mesh().dt();
  if (f.scheme() == Scheme::backward_euler)
    return {u.grid, f.solve_shifted(k + 1, dt, u.values)};
  const Vector<Scalar> rhs =
      u.values - (dt / 2) * f.operator_at(k).apply(u.values);
  return {u.grid, f.solve_shifted(k + 1, dt / 2, rhs)};
}

// Transpose of the factor applied by step(f, k, .).  backward_euler factors
// are symmetric; for crank_nicolson the transpose applies the resolvent
// first and the explicit part second.
template <typename Scalar>
StateVector<Scalar> step_transposed(const EvolutionFamily<Scalar>& f, int k,
                                    const StateVector<Scalar>& v) {
  detail::check_step_range(f, k, k + 1);
  if (!(v.grid == f.grid()))
    throw std::invalid_argument("evolution: state grid mismatch");
  const Scalar dt = f.mesh().dt();
  if (f.scheme() == Scheme::backward_euler)
    return {v.grid, f.solve_shifted(k + 1, dt, v.values)};
  Vector<Scalar> x = f.solve_shifted(k + 1, dt / 2, v.values);
  x -= (dt / 2) * f.operator_at(k).apply(x);
  return {v.grid, std::move(x)};
}

/// U(t_{k_p}, t_{k_s}) u; k_s == k_p returns u unchanged.
template <typename Scalar>
StateVector<Scalar> apply_forward(const EvolutionFamily<Scalar>& f,
                                  const StateVector<Scalar>& u_s, int k_s,
                                  int k_p) {
  detail::check_step_range(f, k_s, k_p);
  StateVector<Scalar> u = u_s;
  for (int k = k_s; k < k_p; ++k) u = step(f, k, u);
  return u;
}

/// U(t_{k_p}, t_{k_s})^* v: transposed factors in reversed order.  This is
/// the discrete realization of the backward adjoint family V(s, p).
template <typename Scalar>
StateVector<Scalar> apply_adjoint(const EvolutionFamily<Scalar>& f,
                                  const StateVector<Scalar>& v, int k_s,
                                  int k_p) {
  detail::check_step_range(f, k_s, k_p);
  StateVector<Scalar> w = v;
  for (int k = k_p - 1; k >= k_s; --k) w = step_transposed(f, k, w);
  return w;
}

/// Power iteration on U^* U over the full mesh; returns the square root of
/// the largest Rayleigh quotient seen (nondecreasing in `iterations`).
template <typename Scalar>
Scalar estimate_M(const EvolutionFamily<Scalar>& f, int iterations) {
  if (iterations < 1)
    throw std::invalid_argument("estimate_M: need at least one iteration");
  std::mt19937_64 rng(0x5eed0f2a11ULL);
  std::normal_distribution<Scalar> normal(Scalar(0), Scalar(1));
  StateVector<Scalar> z = StateVector<Scalar>::zero(f.grid());
  for (Index i = 0; i < z.values.size(); ++i) z.values(i) = normal(rng);
  z.values.normalize();

  const int K = f.mesh().steps;
  Scalar best = 0;
  for (int i = 0; i < iterations; ++i) {
    StateVector<Scalar> w = apply_adjoint(f, apply_forward(f, z, 0, K), 0, K);
    const Scalar zz = l2_inner(z, z);
    if (!(zz > Scalar(0))) break;
    best = std::max(best, l2_inner(w, z) / zz);
    const Scalar wn = w.values.norm();
    if (!(wn > Scalar(0))) break;
    w.values /= wn;
    z = std::move(w);
  }
  return std::sqrt(best);
}

/// Full trajectory states[k] = U(t_k, t_0) u0.
template <typename Scalar>
struct Trajectory {
  TimeMesh<Scalar> mesh;
  std::vector<StateVector<Scalar>> states;
};

template <typename Scalar>
Trajectory<Scalar> record(const EvolutionFamily<Scalar>& f,
                          const StateVector<Scalar>& u0) {
  Trajectory<Scalar> traj;
  traj.mesh = f.mesh();
  traj.states.reserve(f.mesh().steps + 1);
  traj.states.push_back(u0);
  for (int k = 0; k < f.mesh().steps; ++k)
    traj.states.push_back(step(f, k, traj.states.back()));
  return traj;
}

enum class TrajectoryColumns { values, norms };

/// One row per mesh node: t_k followed by nodal values, or by L^2/H^1 norms.
template <typename Scalar>
void write_trajectory_csv(std::ostream& os, const Trajectory<Scalar>& traj,
                          TrajectoryColumns columns) {
  os << std::setprecision(std::numeric_limits<Scalar>::max_digits10);
  if (columns == TrajectoryColumns::norms) {
    os << "t,l2_norm,h1_norm\n";
    for (int k = 0; k < static_cast<int>(traj.states.size()); ++k)
      os << traj.mesh.node(k) << "," << l2_norm(traj.states[k]) << ","
         << h1_norm(traj.states[k]) << "\n";
    return;
  }
  os << "t";
  if (!traj.states.empty())
    for (Index i = 0; i < traj.states.front().values.size(); ++i)
      os << ",u" << i;
  os << "\n";
  for (int k = 0; k < static_cast<int>(traj.states.size()); ++k) {
    os << traj.mesh.node(k);
    const auto& v = traj.states[k].values;
    for (Index i = 0; i < v.size(); ++i) os << "," << v(i);
    os << "\n";
  }
}

}  // namespace backrec
