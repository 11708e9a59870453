#pragma once

#include "backrec/types.hpp"

#include <cmath>
#include <utility>

namespace backrec {

template <typename Scalar>
struct CgResult {
  Vector<Scalar> x;
  int iterations = 0;
  Scalar relative_residual = 0;
  bool converged = true;
};

struct CgNoCallback {
  template <typename V, typename S>
  void operator()(int, const V&, S) const {}
};

// Matrix-free conjugate gradients for a symmetric positive definite operator,
// zero initial guess, stopping on ||r|| <= rel_tol ||b||.  The optional
// callback sees (iteration, current iterate, relative residual) after every
// update, which the tests use to assert monotone decrease of the underlying
// quadratic.
template <typename Scalar, typename Op, typename Callback = CgNoCallback>
CgResult<Scalar> conjugate_gradient(Op&& apply, const Vector<Scalar>& b,
                                    Scalar rel_tol, int max_iterations,
                                    Callback&& cb = Callback{}) {
  CgResult<Scalar> res;
  res.x = Vector<Scalar>::Zero(b.size());
  const Scalar b_norm = b.norm();
  if (b_norm == Scalar(0)) return res;

  Vector<Scalar> r = b;
  Vector<Scalar> p = b;
  Scalar rr = r.squaredNorm();
  for (int it = 1; it <= max_iterations; ++it) {
    const Vector<Scalar> Ap = apply(p);
    const Scalar pAp = p.dot(Ap);
    if (!(pAp > Scalar(0)))
      throw SolveError("conjugate gradient: operator is not positive definite",
                       it, static_cast<double>(std::sqrt(rr) / b_norm));
    const Scalar gamma = rr / pAp;
    res.x += gamma * p;
    r -= gamma * Ap;
    const Scalar rr_new = r.squaredNorm();
    res.iterations = it;
    res.relative_residual = std::sqrt(rr_new) / b_norm;
    cb(it, res.x, res.relative_residual);
    if (res.relative_residual <= rel_tol) return res;
    p = r + (rr_new / rr) * p;
    rr = rr_new;
  }
  res.converged = false;
  return res;
}

}  // namespace backrec
