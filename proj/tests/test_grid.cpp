#include "backrec/grid.hpp"

#include <doctest.h>

#include <cmath>
#include <sstream>

#include "test_util.hpp"

using namespace backrec;

TEST_CASE("grid construction guards") {
  CHECK_THROWS_AS(PeriodicGrid<double>(3, 8, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(PeriodicGrid<double>(1, 2, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(PeriodicGrid<double>(1, 8, 0.0), std::invalid_argument);
  const auto g = btest::grid2(8);
  CHECK(g.node_count() == 64);
  CHECK(g.spacing() == doctest::Approx(btest::kTwoPi / 8));
}

TEST_CASE("l2 inner product: weights sum to the box volume") {
  const auto g = btest::grid1(64);
  const auto zero = StateVector<double>::zero(g);
  CHECK(l2_inner(zero, zero) == 0.0);

  const auto ones =
      StateVector<double>::from_function(g, [](const Point2<double>&) { return 1.0; });
  CHECK(l2_inner(ones, ones) == doctest::Approx(btest::kTwoPi).epsilon(1e-14));

  // sum_j sin^2(2 pi j / N) = N / 2 exactly, so ||sin||_2 = sqrt(pi)
  const auto s = sinusoid_state(g, 1);
  CHECK(l2_norm(s) == doctest::Approx(std::sqrt(std::numbers::pi)).epsilon(1e-13));

  const auto other = StateVector<double>::zero(btest::grid1(32));
  CHECK_THROWS_AS(l2_inner(s, other), std::invalid_argument);
}

TEST_CASE("h1 norm: constants and the wavenumber-1 sinusoid") {
  const auto g = btest::grid1(64);
  CHECK(h1_norm(StateVector<double>::zero(g)) == 0.0);

  const auto ones =
      StateVector<double>::from_function(g, [](const Point2<double>&) { return 1.0; });
  CHECK(h1_norm(ones) == doctest::Approx(l2_norm(ones)).epsilon(1e-14));

  // forward-difference symbol at wavenumber 1
  const double lam1 = btest::stencil_eigenvalue(64);
  const auto s = sinusoid_state(g, 1);
  const double expected = std::sqrt(std::numbers::pi * (1.0 + lam1));
  CHECK(h1_norm(s) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("hminus1 norm: zero, constants, and duality with h1") {
  const auto g = btest::grid1(32);
  CHECK(hminus1_norm(StateVector<double>::zero(g)) == 0.0);

  // zero mode has symbol 1, so ||c||_{H^-1} = |c| sqrt(L^dim)
  const auto c3 =
      StateVector<double>::from_function(g, [](const Point2<double>&) { return 3.0; });
  CHECK(hminus1_norm(c3) == doctest::Approx(3.0 * std::sqrt(btest::kTwoPi)).epsilon(1e-12));

  const auto g2 = btest::grid2(8);
  const auto c2 =
      StateVector<double>::from_function(g2, [](const Point2<double>&) { return 3.0; });
  CHECK(hminus1_norm(c2) == doctest::Approx(3.0 * btest::kTwoPi).epsilon(1e-12));

  // dual-norm sampling: <u, w> <= ||u||_{H^-1} ||w||_{H^1} holds exactly
  const auto u = btest::random_state(g, 7);
  const double hm1 = hminus1_norm(u);
  double sampled = 0.0;
  for (std::uint64_t k = 0; k < 20; ++k) {
    const auto w = btest::random_state(g, 100 + k);
    sampled = std::max(sampled, l2_inner(u, w) / h1_norm(w));
  }
  CHECK(sampled <= hm1 * (1.0 + 1e-12));
  CHECK(sampled >= 0.1 * hm1);
}

TEST_CASE("stiffness kills constants and diagonalizes on sinusoids") {
  for (int dim : {1, 2}) {
    const auto g = dim == 1 ? btest::grid1(64) : btest::grid2(16);
    const auto f = constant_field(1.0, dim, 1.0);
    const auto c =
        StateVector<double>::from_function(g, [](const Point2<double>&) { return 4.2; });
    CHECK(apply_stiffness(f, 0.5, c).values.cwiseAbs().maxCoeff() == 0.0);

    const double lam1 = btest::stencil_eigenvalue(g.points);
    const auto s = sinusoid_state(g, 1);
    const auto As = apply_stiffness(f, 0.5, s);
    CHECK(l2_norm(As - lam1 * s) <= 1e-12 * lam1 * l2_norm(s));
  }
}

TEST_CASE("stiffness rejects times outside the horizon") {
  const auto g = btest::grid1(16);
  const auto f = constant_field(1.0, 1, 1.0);
  const auto s = sinusoid_state(g, 1);
  CHECK_THROWS_AS(apply_stiffness(f, 1.5, s), std::invalid_argument);
  CHECK_THROWS_AS(apply_stiffness(f, -0.5, s), std::invalid_argument);
}

TEST_CASE("stiffness is symmetric for every built-in family") {
  const auto g = btest::grid1(32);
  std::uint64_t seed = 1;
  for (const auto& f : btest::builtin_fields(1, 1.0, btest::kTwoPi)) {
    for (int it = 0; it < 10; ++it) {
      const double t = static_cast<double>(it) / 10.0;
      for (int p = 0; p < 10; ++p) {
        const auto u = btest::random_state(g, seed++);
        const auto v = btest::random_state(g, seed++);
        const double d =
            std::abs(l2_inner(apply_stiffness(f, t, u), v) -
                     l2_inner(u, apply_stiffness(f, t, v)));
        CHECK(d <= 1e-12 * l2_norm(u) * l2_norm(v));
      }
    }
  }
}

TEST_CASE("2d stiffness with cross terms stays symmetric") {
  CoefficientField<double> f;
  f.dim = 2;
  f.horizon = 1.0;
  f.kappa = 0.7;
  f.declared_A = 1.3;
  f.entries = [](double, const Point2<double>& x, Mat2<double>& a) {
    a(0, 0) = 1.0;
    a(1, 1) = 1.0;
    a(0, 1) = a(1, 0) = 0.3 * std::cos(x(0)) * std::sin(x(1));
  };
  const auto g = btest::grid2(12);
  for (std::uint64_t k = 0; k < 20; ++k) {
    const auto u = btest::random_state(g, 500 + k);
    const auto v = btest::random_state(g, 900 + k);
    const double d = std::abs(l2_inner(apply_stiffness(f, 0.3, u), v) -
                              l2_inner(u, apply_stiffness(f, 0.3, v)));
    CHECK(d <= 1e-11 * l2_norm(u) * l2_norm(v));
  }
}

TEST_CASE("bilinear form: ellipticity and norm equivalence on samples") {
  const auto g = btest::grid1(32);
  std::uint64_t seed = 77;
  for (const auto& f : btest::builtin_fields(1, 1.0, btest::kTwoPi)) {
    const double kappa = f.kappa;
    for (int it = 0; it < 20; ++it) {
      const double t = static_cast<double>(it % 5) / 5.0;
      const auto u = btest::random_state(g, seed++);
      const double a_uu = bilinear_a(f, t, u, u);
      const double grad2 = h1_seminorm(u) * h1_seminorm(u);
      const double l2u2 = l2_norm(u) * l2_norm(u);
      const double h1u2 = grad2 + l2u2;
      CHECK(a_uu >= kappa * grad2 - 1e-12);
      CHECK(a_uu <= grad2 / kappa + 1e-12);
      CHECK(a_uu + l2u2 >= kappa * h1u2 - 1e-12);
      CHECK(a_uu + l2u2 <= h1u2 / kappa + 1e-12);
    }
  }
}

TEST_CASE("bilinear form: constants and the sinusoid oracle") {
  const auto g = btest::grid1(64);
  const auto f = constant_field(1.0, 1, 1.0);
  const auto c =
      StateVector<double>::from_function(g, [](const Point2<double>&) { return 2.0; });
  const auto v = btest::random_state(g, 5);
  CHECK(bilinear_a(f, 0.0, c, v) == 0.0);

  const auto s = sinusoid_state(g, 1);
  const double lam1 = btest::stencil_eigenvalue(64);
  CHECK(bilinear_a(f, 0.0, s, s) ==
        doctest::Approx(lam1 * std::numbers::pi).epsilon(1e-12));
}

TEST_CASE("stiffness is second-order consistent in h") {
  // For a = 1 and u = sin, A_h u = lambda_1(N) u while the continuum gives u.
  std::vector<double> errs;
  for (Index n : {32, 64, 128}) {
    const auto g = btest::grid1(n);
    const auto f = constant_field(1.0, 1, 1.0);
    const auto s = sinusoid_state(g, 1);
    const auto As = apply_stiffness(f, 0.0, s);
    errs.push_back(l2_norm(As - s) / l2_norm(s));
  }
  for (std::size_t i = 0; i + 1 < errs.size(); ++i) {
    const double order = std::log2(errs[i] / errs[i + 1]);
    CHECK(order >= 1.9);
  }
}

TEST_CASE("state serialization round-trips bit-exactly") {
  for (int dim : {1, 2}) {
    const auto g = dim == 1 ? btest::grid1(16) : btest::grid2(6);
    const auto u = btest::random_state(g, 2024);

    std::stringstream bin(std::ios::in | std::ios::out | std::ios::binary);
    save_binary(u, bin);
    const auto ub = load_binary<double>(bin);
    CHECK(ub.grid == u.grid);
    CHECK((ub.values.array() == u.values.array()).all());

    std::stringstream csv;
    save_csv(u, csv);
    const auto uc = load_csv<double>(csv);
    CHECK(uc.grid == u.grid);
    CHECK((uc.values.array() == u.values.array()).all());
  }
}

TEST_CASE("serialization rejects malformed input") {
  std::stringstream s("not a state file\n1\n2\n");
  CHECK_THROWS(load_csv<double>(s));
  std::stringstream b(std::ios::in | std::ios::out | std::ios::binary);
  b << "junk";
  CHECK_THROWS(load_binary<double>(b));
}
