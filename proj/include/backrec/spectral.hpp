#pragma once

#include "backrec/types.hpp"

#include <cmath>
#include <complex>
#include <numbers>

namespace backrec {

// Dense discrete Fourier transforms for the periodic grid.  Sizes here stay
// at desk scale (N <= a few hundred per axis), where an explicit DFT matrix
// applied per axis is exact, deterministic and fast enough.

/// Unnormalized DFT matrix, F(k, j) = exp(-2 pi i k j / n).
template <typename Scalar>
Eigen::MatrixX<std::complex<Scalar>> dft_matrix(Index n) {
  using C = std::complex<Scalar>;
  Eigen::MatrixX<C> F(n, n);
  const Scalar w = Scalar(2) * std::numbers::pi_v<Scalar> / Scalar(n);
  for (Index k = 0; k < n; ++k)
    for (Index j = 0; j < n; ++j) {
      const Scalar phase = w * Scalar((k * j) % n);
      F(k, j) = C(std::cos(phase), -std::sin(phase));
    }
  return F;
}

// Forward transform of a flattened grid function (x index fastest).  For
// dim == 2 the transform is applied separably along both axes.
template <typename Scalar>
Eigen::VectorX<std::complex<Scalar>> dft_forward(int dim, Index n,
                                                 const Vector<Scalar>& v) {
  using C = std::complex<Scalar>;
  const Eigen::MatrixX<C> F = dft_matrix<Scalar>(n);
  if (dim == 1) return F * v.template cast<C>();
  Eigen::Map<const Eigen::MatrixX<Scalar>> M(v.data(), n, n);
  Eigen::MatrixX<C> spec = F * M.template cast<C>() * F.transpose();
  return Eigen::Map<Eigen::VectorX<C>>(spec.data(), n * n);
}

/// Inverse of dft_forward; returns the real part.
template <typename Scalar>
Vector<Scalar> dft_inverse(int dim, Index n,
                           const Eigen::VectorX<std::complex<Scalar>>& spec) {
  using C = std::complex<Scalar>;
  const Eigen::MatrixX<C> Fc = dft_matrix<Scalar>(n).conjugate();
  if (dim == 1)
    return ((Fc * spec) / Scalar(n)).real();
  Eigen::Map<const Eigen::MatrixX<C>> S(spec.data(), n, n);
  Eigen::MatrixX<C> out = Fc * S * Fc.transpose() / Scalar(n * n);
  Eigen::MatrixX<Scalar> re = out.real();
  return Eigen::Map<Vector<Scalar>>(re.data(), n * n);
}

// Symbol of the forward-difference periodic Laplacian, flattened like grid
// storage: lambda_k = sum_d (2/h^2)(1 - cos(2 pi k_d / n)).  This is the
// quadratic form matching the discrete H^1 seminorm exactly.
template <typename Scalar>
Vector<Scalar> laplacian_symbols(int dim, Index n, Scalar h) {
  Vector<Scalar> axis(n);
  const Scalar w = Scalar(2) * std::numbers::pi_v<Scalar> / Scalar(n);
  for (Index k = 0; k < n; ++k)
    axis(k) = (Scalar(2) / (h * h)) * (Scalar(1) - std::cos(w * Scalar(k)));
  if (dim == 1) return axis;
  Vector<Scalar> sym(n * n);
  for (Index j = 0; j < n; ++j)
    for (Index i = 0; i < n; ++i) sym(i + n * j) = axis(i) + axis(j);
  return sym;
}

}  // namespace backrec
