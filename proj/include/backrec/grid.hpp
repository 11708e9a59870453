#pragma once

#include "backrec/field.hpp"
#include "backrec/spectral.hpp"
#include "backrec/types.hpp"

#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>

namespace backrec {

// Uniform periodic grid on [0, side)^dim with N nodes per axis.  Nodes are
// x_i = i h, h = side / N; two-dimensional states are flattened with the x
// index fastest (column-major N x N).
template <typename Scalar>
struct PeriodicGrid {
  int dim = 1;
  Index points = 0;  // N, nodes per axis
  Scalar side = 0;   // L

  PeriodicGrid() = default;
  PeriodicGrid(int dim_, Index points_, Scalar side_)
      : dim(dim_), points(points_), side(side_) {
    if (dim != 1 && dim != 2)
      throw std::invalid_argument("PeriodicGrid: dim must be 1 or 2");
    if (points < 4) throw std::invalid_argument("PeriodicGrid: need N >= 4");
    if (!(side > Scalar(0)))
      throw std::invalid_argument("PeriodicGrid: side must be positive");
  }

  Scalar spacing() const { return side / Scalar(points); }
  Index node_count() const { return dim == 1 ? points : points * points; }

  Point2<Scalar> position(Index flat) const {
    const Scalar h = spacing();
    if (dim == 1) return {Scalar(flat) * h, Scalar(0)};
    return {Scalar(flat % points) * h, Scalar(flat / points) * h};
  }

  friend bool operator==(const PeriodicGrid&, const PeriodicGrid&) = default;
};

/// Real-valued grid function with value semantics.
template <typename Scalar>
struct StateVector {
  PeriodicGrid<Scalar> grid;
  Vector<Scalar> values;

  static StateVector zero(const PeriodicGrid<Scalar>& g) {
    return {g, Vector<Scalar>::Zero(g.node_count())};
  }

  template <typename Fn>
  static StateVector from_function(const PeriodicGrid<Scalar>& g, Fn fn) {
    StateVector s{g, Vector<Scalar>(g.node_count())};
    for (Index i = 0; i < g.node_count(); ++i) s.values(i) = fn(g.position(i));
    return s;
  }

  bool is_finite() const { return values.allFinite(); }
};

template <typename Scalar>
void require_same_grid(const StateVector<Scalar>& a,
                       const StateVector<Scalar>& b) {
  if (!(a.grid == b.grid)) throw std::invalid_argument("grid mismatch");
}

template <typename Scalar>
StateVector<Scalar> operator+(const StateVector<Scalar>& a,
                              const StateVector<Scalar>& b) {
  require_same_grid(a, b);
  return {a.grid, a.values + b.values};
}

template <typename Scalar>
StateVector<Scalar> operator-(const StateVector<Scalar>& a,
                              const StateVector<Scalar>& b) {
  require_same_grid(a, b);
  return {a.grid, a.values - b.values};
}

template <typename Scalar>
StateVector<Scalar> operator*(Scalar c, const StateVector<Scalar>& a) {
  return {a.grid, c * a.values};
}

// ---------------------------------------------------------------------------
// Discrete norms.

/// <u, v> = h^dim sum_j u_j v_j.
template <typename Scalar>
Scalar l2_inner(const StateVector<Scalar>& u, const StateVector<Scalar>& v) {
  require_same_grid(u, v);
  return std::pow(u.grid.spacing(), Scalar(u.grid.dim)) * u.values.dot(v.values);
}

template <typename Scalar>
Scalar l2_norm(const StateVector<Scalar>& u) {
  return std::sqrt(std::pow(u.grid.spacing(), Scalar(u.grid.dim))) *
         u.values.norm();
}

namespace detail {

/// Cyclic shift v_j -> v_{j+1} along axis d of the flattened grid function.
template <typename Scalar>
Vector<Scalar> shift_up(const PeriodicGrid<Scalar>& g, const Vector<Scalar>& v,
                        int d) {
  const Index n = g.points;
  Vector<Scalar> out(v.size());
  if (g.dim == 1) {
    out.head(n - 1) = v.tail(n - 1);
    out(n - 1) = v(0);
    return out;
  }
  Eigen::Map<const Eigen::MatrixX<Scalar>> M(v.data(), n, n);
  Eigen::Map<Eigen::MatrixX<Scalar>> O(out.data(), n, n);
  if (d == 0) {
    O.topRows(n - 1) = M.bottomRows(n - 1);
    O.row(n - 1) = M.row(0);
  } else {
    O.leftCols(n - 1) = M.rightCols(n - 1);
    O.col(n - 1) = M.col(0);
  }
  return out;
}

template <typename Scalar>
Vector<Scalar> shift_down(const PeriodicGrid<Scalar>& g,
                          const Vector<Scalar>& v, int d) {
  const Index n = g.points;
  Vector<Scalar> out(v.size());
  if (g.dim == 1) {
    out.tail(n - 1) = v.head(n - 1);
    out(0) = v(n - 1);
    return out;
  }
  Eigen::Map<const Eigen::MatrixX<Scalar>> M(v.data(), n, n);
  Eigen::Map<Eigen::MatrixX<Scalar>> O(out.data(), n, n);
  if (d == 0) {
    O.bottomRows(n - 1) = M.topRows(n - 1);
    O.row(0) = M.row(n - 1);
  } else {
    O.rightCols(n - 1) = M.leftCols(n - 1);
    O.col(0) = M.col(n - 1);
  }
  return out;
}

}  // namespace detail

// Forward-difference gradient seminorm, ||D_h u||_2^2 = sum_d ||(u_{+d}-u)/h||_2^2.
// With this choice ||D_h u||_2^2 = <L_h u, u> holds exactly for the standard
// periodic Laplacian, which keeps the H^1 / H^-1 duality below sharp.
template <typename Scalar>
Scalar h1_seminorm(const StateVector<Scalar>& u) {
  const Scalar h = u.grid.spacing();
  const Scalar w = std::pow(h, Scalar(u.grid.dim));
  Scalar acc = 0;
  for (int d = 0; d < u.grid.dim; ++d) {
    Vector<Scalar> diff =
        (detail::shift_up(u.grid, u.values, d) - u.values) / h;
    acc += w * diff.squaredNorm();
  }
  return std::sqrt(acc);
}

template <typename Scalar>
Scalar h1_norm(const StateVector<Scalar>& u) {
  const Scalar s = h1_seminorm(u);
  const Scalar n = l2_norm(u);
  return std::sqrt(s * s + n * n);
}

/// ||(I + L_h)^{-1/2} u||_2 via Fourier diagonalization of the
/// constant-coefficient periodic Laplacian.
template <typename Scalar>
Scalar hminus1_norm(const StateVector<Scalar>& u) {
  const auto& g = u.grid;
  const auto spec = dft_forward(g.dim, g.points, u.values);
  const Vector<Scalar> sym = laplacian_symbols(g.dim, g.points, g.spacing());
  Scalar acc = 0;
  for (Index k = 0; k < spec.size(); ++k)
    acc += std::norm(spec(k)) / (Scalar(1) + sym(k));
  const Scalar w = std::pow(g.spacing(), Scalar(g.dim)) / Scalar(g.node_count());
  return std::sqrt(w * acc);
}

// ---------------------------------------------------------------------------
// Divergence-form stiffness operator
//
//   (A_h u)_j = -( a_{j+1/2} (u_{j+1} - u_j) - a_{j-1/2} (u_j - u_{j-1}) ) / h^2
//
// with face coefficients a(t, x_j +- h/2).  In two dimensions the diagonal
// entries use the analogous face fluxes per axis and the off-diagonal a_12
// couples the axes through node-centered differences:
//
//   A_h u += -Dc_x(a_12 Dc_y u) - Dc_y(a_12 Dc_x u),
//
// Dc the centered difference.  Both parts are exactly symmetric for the
// discrete L^2 inner product; the flux part is positive semidefinite with
// kernel equal to the constants.
//
// Coefficients are sampled once at construction, so repeated applies inside
// an inner Krylov solve do not re-evaluate the field.
template <typename Scalar>
class StiffnessOperator {
 public:
  StiffnessOperator(const CoefficientField<Scalar>& field,
                    const PeriodicGrid<Scalar>& grid, Scalar t)
      : grid_(grid) {
    if (field.dim != grid.dim)
      throw std::invalid_argument("StiffnessOperator: field/grid dim mismatch");
    const Scalar tol = Scalar(16) * std::numeric_limits<Scalar>::epsilon() *
                       std::max(Scalar(1), field.horizon);
    if (t < -tol || t > field.horizon + tol)
      throw std::invalid_argument("StiffnessOperator: time outside horizon");
    const Index n = grid.points;
    const Scalar h = grid.spacing();
    if (grid.dim == 1) {
      faces_x_.resize(n);
      for (Index i = 0; i < n; ++i)
        faces_x_(i) = field.at(t, {(Scalar(i) + Scalar(0.5)) * h, Scalar(0)})(0, 0);
    } else {
      faces_x_.resize(n * n);
      faces_y_.resize(n * n);
      cross_.resize(n * n);
      for (Index j = 0; j < n; ++j)
        for (Index i = 0; i < n; ++i) {
          const Index f = i + n * j;
          const Scalar xi = Scalar(i) * h, yj = Scalar(j) * h;
          faces_x_(f) = field.at(t, {xi + h / 2, yj})(0, 0);
          faces_y_(f) = field.at(t, {xi, yj + h / 2})(1, 1);
          cross_(f) = field.at(t, {xi, yj})(0, 1);
        }
      has_cross_ = cross_.cwiseAbs().maxCoeff() > Scalar(0);
    }
  }

  const PeriodicGrid<Scalar>& grid() const { return grid_; }

  Vector<Scalar> apply(const Vector<Scalar>& u) const {
    const Scalar h = grid_.spacing();
    const Scalar inv_h2 = Scalar(1) / (h * h);
    // Face flux along x: a_{j+1/2} (u_{j+1} - u_j); divergence of the flux.
    Vector<Scalar> flux =
        faces_x_.cwiseProduct(detail::shift_up(grid_, u, 0) - u);
    Vector<Scalar> out = (flux - detail::shift_down(grid_, flux, 0)) * -inv_h2;
    if (grid_.dim == 2) {
      flux = faces_y_.cwiseProduct(detail::shift_up(grid_, u, 1) - u);
      out -= (flux - detail::shift_down(grid_, flux, 1)) * inv_h2;
      if (has_cross_) {
        const Scalar inv_2h = Scalar(1) / (Scalar(2) * h);
        auto centered = [&](const Vector<Scalar>& v, int d) {
          return ((detail::shift_up(grid_, v, d) -
                   detail::shift_down(grid_, v, d)) *
                  inv_2h)
              .eval();
        };
        const Vector<Scalar> gx = centered(u, 0);
        const Vector<Scalar> gy = centered(u, 1);
        out -= centered(cross_.cwiseProduct(gy), 0);
        out -= centered(cross_.cwiseProduct(gx), 1);
      }
    }
    return out;
  }

 private:
  PeriodicGrid<Scalar> grid_;
  Vector<Scalar> faces_x_;
  Vector<Scalar> faces_y_;
  Vector<Scalar> cross_;
  bool has_cross_ = false;
};

/// A_h(t) u for a one-off application; evaluates the field at the faces.
template <typename Scalar>
StateVector<Scalar> apply_stiffness(const CoefficientField<Scalar>& field,
                                    Scalar t, const StateVector<Scalar>& u) {
  return {u.grid, StiffnessOperator<Scalar>(field, u.grid, t).apply(u.values)};
}

/// a(t; u, v) = <A_h(t) u, v>, equal to the discrete face-flux form.
template <typename Scalar>
Scalar bilinear_a(const CoefficientField<Scalar>& field, Scalar t,
                  const StateVector<Scalar>& u, const StateVector<Scalar>& v) {
  require_same_grid(u, v);
  return l2_inner(apply_stiffness(field, t, u), v);
}

// ---------------------------------------------------------------------------
// State serialization: flat binary and CSV, both with a (dim, N, side)
// header and bit-exact round trips.

inline constexpr std::uint32_t kStateMagic = 0x42525354;  // "BRST"

template <typename Scalar>
void save_binary(const StateVector<Scalar>& s, std::ostream& os) {
  auto put = [&os](const auto& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(v));
  };
  put(kStateMagic);
  put(std::uint32_t{sizeof(Scalar)});
  put(std::int32_t{s.grid.dim});
  put(std::int64_t{s.grid.points});
  put(s.grid.side);
  os.write(reinterpret_cast<const char*>(s.values.data()),
           static_cast<std::streamsize>(sizeof(Scalar) * s.values.size()));
}

template <typename Scalar>
StateVector<Scalar> load_binary(std::istream& is) {
  auto get = [&is](auto& v) {
    is.read(reinterpret_cast<char*>(&v), sizeof(v));
  };
  std::uint32_t magic = 0, ssize = 0;
  std::int32_t dim = 0;
  std::int64_t points = 0;
  Scalar side = 0;
  get(magic);
  get(ssize);
  get(dim);
  get(points);
  get(side);
  if (!is || magic != kStateMagic)
    throw std::runtime_error("load_binary: not a state file");
  if (ssize != sizeof(Scalar))
    throw std::runtime_error("load_binary: scalar width mismatch");
  StateVector<Scalar> s{PeriodicGrid<Scalar>(dim, points, side), {}};
  s.values.resize(s.grid.node_count());
  is.read(reinterpret_cast<char*>(s.values.data()),
          static_cast<std::streamsize>(sizeof(Scalar) * s.values.size()));
  if (!is) throw std::runtime_error("load_binary: truncated state file");
  return s;
}

template <typename Scalar>
void save_csv(const StateVector<Scalar>& s, std::ostream& os) {
  os << "# backrec-state dim=" << s.grid.dim << " points=" << s.grid.points
     << " side=" << std::setprecision(std::numeric_limits<Scalar>::max_digits10)
     << s.grid.side << "\n";
  os << std::setprecision(std::numeric_limits<Scalar>::max_digits10);
  for (Index i = 0; i < s.values.size(); ++i) os << s.values(i) << "\n";
}

template <typename Scalar>
StateVector<Scalar> load_csv(std::istream& is) {
  std::string header;
  std::getline(is, header);
  int dim = 0;
  std::int64_t points = 0;
  Scalar side = 0;
  {
    std::istringstream hs(header);
    std::string tok;
    while (hs >> tok) {
      if (tok.rfind("dim=", 0) == 0) dim = std::stoi(tok.substr(4));
      if (tok.rfind("points=", 0) == 0) points = std::stoll(tok.substr(7));
      if (tok.rfind("side=", 0) == 0)
        side = static_cast<Scalar>(std::stod(tok.substr(5)));
    }
  }
  if (header.rfind("# backrec-state", 0) != 0 || dim == 0 || points == 0)
    throw std::runtime_error("load_csv: not a state file");
  StateVector<Scalar> s{PeriodicGrid<Scalar>(dim, points, side), {}};
  s.values.resize(s.grid.node_count());
  for (Index i = 0; i < s.values.size(); ++i)
    if (!(is >> s.values(i)))
      throw std::runtime_error("load_csv: truncated state file");
  return s;
}

template <typename Scalar>
void save_binary(const StateVector<Scalar>& s, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("save_binary: cannot open " + path);
  save_binary(s, os);
}

template <typename Scalar>
void save_csv(const StateVector<Scalar>& s, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("save_csv: cannot open " + path);
  save_csv(s, os);
}

}  // namespace backrec
