#pragma once

#include "backrec/types.hpp"

#include <cmath>
#include <functional>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

namespace backrec {

// Log-Lipschitz modulus of continuity
//
//   mu(s) = s (1 + |log s|)   for s in (0, 1],   mu(0) = 0.
//
// mu is strictly increasing and concave on (0, 1], with mu(s)/s = 1 + |log s|
// strictly decreasing.  Coefficient regularity in time is measured against
// this modulus: |a(t,x) - a(s,x)| <= A_LL * mu(|t - s|) for gaps up to 1.
template <typename Scalar>
Scalar log_lip_modulus(Scalar s) {
  if (!(s >= Scalar(0)) || s > Scalar(1))
    throw std::domain_error("log_lip_modulus: argument must lie in [0, 1]");
  if (s == Scalar(0)) return Scalar(0);
  return s * (Scalar(1) + std::abs(std::log(s)));
}

// Symmetric coefficient matrix a_jk(t, x) on [0, horizon] x (periodic box).
//
// The evaluator fills the leading dim x dim block of `a`; it must be pure
// (no internal state), so fields can be shared freely across threads.
template <typename Scalar>
struct CoefficientField {
  using Point = Point2<Scalar>;
  using Entries = Mat2<Scalar>;
  using Evaluator = std::function<void(Scalar t, const Point& x, Entries& a)>;

  int dim = 1;                // spatial dimension, 1 or 2
  Scalar horizon = 1;         // T
  Scalar kappa = 1;           // kappa |xi|^2 <= xi' a xi <= |xi|^2 / kappa
  Scalar declared_A_LL = 0;   // Log-Lipschitz-in-t seminorm bound
  Scalar declared_A = 1;      // amplitude and spatial Lipschitz bound
  Evaluator entries;
  std::optional<Scalar> constant_value;  // set by the constant family only

  Entries at(Scalar t, const Point& x) const {
    Entries a = Entries::Zero();
    entries(t, x, a);
    return a;
  }
};

namespace detail {

// Scalar coefficient c(t,x) promoted to c * I.
template <typename Scalar, typename Fn>
typename CoefficientField<Scalar>::Evaluator isotropic(int dim, Fn c) {
  return [dim, c](Scalar t, const Point2<Scalar>& x, Mat2<Scalar>& a) {
    const Scalar v = c(t, x);
    for (int d = 0; d < dim; ++d) a(d, d) = v;
  };
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Built-in families.  All are isotropic (scalar times identity) and declare
// exact kappa / A_LL / A constants.

/// a(t,x) = c * I with c > 0.
template <typename Scalar>
CoefficientField<Scalar> constant_field(Scalar c, int dim, Scalar horizon) {
  if (!(c > Scalar(0)))
    throw std::invalid_argument("constant_field: coefficient must be positive");
  CoefficientField<Scalar> f;
  f.dim = dim;
  f.horizon = horizon;
  f.kappa = std::min(c, Scalar(1) / c);
  f.declared_A_LL = Scalar(0);
  f.declared_A = c;
  f.entries = detail::isotropic<Scalar>(
      dim, [c](Scalar, const Point2<Scalar>&) { return c; });
  f.constant_value = c;
  return f;
}

/// a(t,x) = (base + amp * prod_d sin(2 pi x_d / side)) * I, time-independent.
template <typename Scalar>
CoefficientField<Scalar> autonomous_field(Scalar base, Scalar amp, int dim,
                                          Scalar horizon, Scalar side) {
  const Scalar lo = base - std::abs(amp);
  const Scalar hi = base + std::abs(amp);
  if (!(lo > Scalar(0)))
    throw std::invalid_argument(
        "autonomous_field: base - |amp| must be positive");
  CoefficientField<Scalar> f;
  f.dim = dim;
  f.horizon = horizon;
  f.kappa = std::min({Scalar(1), lo, Scalar(1) / hi});
  f.declared_A_LL = Scalar(0);
  const Scalar freq = Scalar(2) * std::numbers::pi_v<Scalar> / side;
  f.declared_A = std::max(hi, std::abs(amp) * freq);
  f.entries = detail::isotropic<Scalar>(
      dim, [base, amp, freq, dim](Scalar, const Point2<Scalar>& x) {
        Scalar s = std::sin(freq * x(0));
        if (dim == 2) s *= std::sin(freq * x(1));
        return base + amp * s;
      });
  return f;
}

/// a(t,x) = (1 + gamma * sin(2 pi t / horizon)) * I, Lipschitz in t.
template <typename Scalar>
CoefficientField<Scalar> lipschitz_t_field(Scalar gamma, int dim,
                                           Scalar horizon) {
  if (!(gamma >= Scalar(0)) || gamma >= Scalar(1))
    throw std::invalid_argument("lipschitz_t_field: gamma must lie in [0, 1)");
  CoefficientField<Scalar> f;
  f.dim = dim;
  f.horizon = horizon;
  f.kappa = Scalar(1) - gamma;
  const Scalar freq = Scalar(2) * std::numbers::pi_v<Scalar> / horizon;
  f.declared_A_LL = gamma * freq;  // Lipschitz constant; mu(s) >= s on (0,1]
  f.declared_A = Scalar(1) + gamma;
  f.entries = detail::isotropic<Scalar>(
      dim, [gamma, freq](Scalar t, const Point2<Scalar>&) {
        return Scalar(1) + gamma * std::sin(freq * t);
      });
  return f;
}

// a(t,x) = (1 + beta * mu(min(|t - t0|, 1))) * I.
//
// Log-Lipschitz with seminorm exactly beta (mu is concave with mu(0) = 0,
// hence subadditive), but not Lipschitz at t = t0: the plain difference
// quotient grows like 1 + |log|t - t0|| there.
template <typename Scalar>
CoefficientField<Scalar> loglip_t_field(Scalar beta, Scalar t0, int dim,
                                        Scalar horizon) {
  if (!(beta > Scalar(0)))
    throw std::invalid_argument("loglip_t_field: beta must be positive");
  if (!(t0 >= Scalar(0)) || t0 > horizon)
    throw std::invalid_argument("loglip_t_field: t0 must lie in [0, horizon]");
  CoefficientField<Scalar> f;
  f.dim = dim;
  f.horizon = horizon;
  f.kappa = Scalar(1) / (Scalar(1) + beta);
  f.declared_A_LL = beta;
  f.declared_A = Scalar(1) + beta;
  f.entries = detail::isotropic<Scalar>(
      dim, [beta, t0](Scalar t, const Point2<Scalar>&) {
        const Scalar gap = std::min(std::abs(t - t0), Scalar(1));
        return Scalar(1) + beta * log_lip_modulus(gap);
      });
  return f;
}

enum class BuiltinKind { constant, autonomous, lipschitz_t, loglip_t };

template <typename Scalar>
struct BuiltinParams {
  Scalar value = 1;        // constant
  Scalar base = 1;         // autonomous
  Scalar amplitude = 0.5;  // autonomous
  Scalar gamma = 0.5;      // lipschitz_t
  Scalar beta = 0.1;       // loglip_t
  std::optional<Scalar> t0;  // loglip_t, defaults to horizon / 2
};

template <typename Scalar>
CoefficientField<Scalar> builtin(BuiltinKind kind,
                                 const BuiltinParams<Scalar>& p, int dim,
                                 Scalar horizon, Scalar side) {
  switch (kind) {
    case BuiltinKind::constant:
      return constant_field(p.value, dim, horizon);
    case BuiltinKind::autonomous:
      return autonomous_field(p.base, p.amplitude, dim, horizon, side);
    case BuiltinKind::lipschitz_t:
      return lipschitz_t_field(p.gamma, dim, horizon);
    case BuiltinKind::loglip_t:
      return loglip_t_field(p.beta, p.t0.value_or(horizon / Scalar(2)), dim,
                            horizon);
  }
  throw std::invalid_argument("builtin: unknown family");
}

// Even reflection about t = horizon:
//
//   b(t, x) = a(t, x)            for t in [0, T]
//   b(t, x) = a(2T - t, x)       for t in [T, 2T]
//
// Restricted to [0, T] the reflected field evaluates the original evaluator
// directly, so the restriction is exact.  kappa and the regularity bounds
// carry over unchanged (the reflection is 1-Lipschitz in t).
template <typename Scalar>
CoefficientField<Scalar> reflect_in_time(const CoefficientField<Scalar>& f) {
  CoefficientField<Scalar> r = f;
  r.horizon = Scalar(2) * f.horizon;
  const Scalar t_max = f.horizon;
  typename CoefficientField<Scalar>::Evaluator inner = f.entries;
  r.entries = [inner, t_max](Scalar t, const Point2<Scalar>& x,
                             Mat2<Scalar>& a) {
    inner(t <= t_max ? t : Scalar(2) * t_max - t, x, a);
  };
  return r;
}

// ---------------------------------------------------------------------------
// Sampled validation of the declared constants.

template <typename Scalar>
struct SamplingPlan {
  int time_samples = 64;       // uniform time nodes on [0, T]
  int space_samples = 64;      // points along a deterministic space path
  int direction_samples = 16;  // unit directions in addition to the axes
  int dyadic_depth = 20;       // time gaps g = min(1,T) * 2^-k, k = 0..depth
  Scalar side = Scalar(2) * std::numbers::pi_v<Scalar>;  // sampling box side
};

template <typename Scalar>
struct ValidationReport {
  Scalar symmetry_defect = 0;
  Scalar ellipticity_margin_low = 0;   // min xi'a xi - kappa
  Scalar ellipticity_margin_high = 0;  // 1/kappa - max xi'a xi
  Scalar max_time_quotient = 0;        // |a(t)-a(s)| / mu(|t-s|), |t-s| <= 1
  // Gaps larger than 1 fall outside the Log-Lipschitz supremum; they are
  // checked with the plain Lipschitz quotient against declared_A_LL.
  Scalar max_large_gap_quotient = 0;
  Scalar max_space_quotient = 0;
  Scalar max_amplitude = 0;

  bool symmetry_ok = false;
  bool ellipticity_ok = false;
  bool time_modulus_ok = false;
  bool space_bound_ok = false;

  bool pass() const {
    return symmetry_ok && ellipticity_ok && time_modulus_ok && space_bound_ok;
  }
};

template <typename Scalar>
ValidationReport<Scalar> validate(const CoefficientField<Scalar>& f,
                                  const SamplingPlan<Scalar>& plan = {}) {
  using Point = Point2<Scalar>;
  constexpr Scalar golden = Scalar(0.6180339887498949);
  const Scalar T = f.horizon;
  const Scalar L = plan.side;

  std::vector<Scalar> ts(plan.time_samples + 1);
  for (int i = 0; i <= plan.time_samples; ++i)
    ts[i] = T * Scalar(i) / Scalar(plan.time_samples);

  std::vector<Point> xs(plan.space_samples);
  for (int j = 0; j < plan.space_samples; ++j) {
    const Scalar x0 = L * Scalar(j) / Scalar(plan.space_samples);
    const Scalar frac = Scalar(j) * golden - std::floor(Scalar(j) * golden);
    xs[j] = f.dim == 1 ? Point(x0, Scalar(0)) : Point(x0, L * frac);
  }

  std::vector<Point> dirs;
  dirs.emplace_back(Scalar(1), Scalar(0));
  if (f.dim == 2) {
    dirs.emplace_back(Scalar(0), Scalar(1));
    for (int i = 0; i < plan.direction_samples; ++i) {
      const Scalar ang = Scalar(2) * std::numbers::pi_v<Scalar> * Scalar(i) /
                         Scalar(plan.direction_samples);
      dirs.emplace_back(std::cos(ang), std::sin(ang));
    }
  }

  ValidationReport<Scalar> rep;
  Scalar quad_min = std::numeric_limits<Scalar>::max();
  Scalar quad_max = std::numeric_limits<Scalar>::lowest();

  auto entry_gap = [&](const Mat2<Scalar>& a, const Mat2<Scalar>& b) {
    Scalar g = 0;
    for (int r = 0; r < f.dim; ++r)
      for (int c = 0; c < f.dim; ++c) g = std::max(g, std::abs(a(r, c) - b(r, c)));
    return g;
  };

  for (Scalar t : ts) {
    for (const Point& x : xs) {
      const Mat2<Scalar> a = f.at(t, x);
      if (f.dim == 2)
        rep.symmetry_defect =
            std::max(rep.symmetry_defect, std::abs(a(0, 1) - a(1, 0)));
      for (const Point& xi : dirs) {
        Scalar q = 0;
        for (int r = 0; r < f.dim; ++r)
          for (int c = 0; c < f.dim; ++c) q += xi(r) * a(r, c) * xi(c);
        quad_min = std::min(quad_min, q);
        quad_max = std::max(quad_max, q);
      }
      for (int r = 0; r < f.dim; ++r)
        for (int c = 0; c < f.dim; ++c)
          rep.max_amplitude = std::max(rep.max_amplitude, std::abs(a(r, c)));
    }
  }
  rep.ellipticity_margin_low = quad_min - f.kappa;
  rep.ellipticity_margin_high = Scalar(1) / f.kappa - quad_max;

  // Time modulus: dyadic gaps detect Lipschitz violations that a uniform
  // pair grid would miss near the kink of the loglip family.
  const Scalar g0 = std::min(Scalar(1), T);
  for (Scalar t : ts) {
    for (int k = 0; k <= plan.dyadic_depth; ++k) {
      const Scalar gap = g0 * std::ldexp(Scalar(1), -k);
      const Scalar s = t + gap;
      if (s > T) continue;
      const Scalar mu = log_lip_modulus(gap);
      if (mu == Scalar(0)) continue;
      for (const Point& x : xs) {
        const Scalar d = entry_gap(f.at(t, x), f.at(s, x));
        rep.max_time_quotient = std::max(rep.max_time_quotient, d / mu);
      }
    }
    if (T > Scalar(1)) {
      for (Scalar gap : {Scalar(1.5), Scalar(2), T}) {
        const Scalar s = t + gap;
        if (gap <= Scalar(1) || s > T) continue;
        for (const Point& x : xs) {
          const Scalar d = entry_gap(f.at(t, x), f.at(s, x));
          rep.max_large_gap_quotient =
              std::max(rep.max_large_gap_quotient, d / gap);
        }
      }
    }
  }

  // Spatial difference quotients along each axis.
  const Scalar hx = L / Scalar(plan.space_samples);
  const int nt_space = std::min(8, plan.time_samples);
  for (int i = 0; i <= nt_space; ++i) {
    const Scalar t = T * Scalar(i) / Scalar(std::max(nt_space, 1));
    for (const Point& x : xs) {
      for (int d = 0; d < f.dim; ++d) {
        Point y = x;
        y(d) += hx;
        const Scalar q = entry_gap(f.at(t, x), f.at(t, y)) / hx;
        rep.max_space_quotient = std::max(rep.max_space_quotient, q);
      }
    }
  }

  const Scalar slack = Scalar(1e-12);
  auto within = [slack](Scalar observed, Scalar declared) {
    return observed <= declared * (Scalar(1) + Scalar(1e-9)) + slack;
  };
  rep.symmetry_ok = rep.symmetry_defect <= slack * std::max(Scalar(1), rep.max_amplitude);
  rep.ellipticity_ok =
      rep.ellipticity_margin_low >= -slack && rep.ellipticity_margin_high >= -slack;
  rep.time_modulus_ok = within(rep.max_time_quotient, f.declared_A_LL) &&
                        within(rep.max_large_gap_quotient, f.declared_A_LL);
  rep.space_bound_ok = within(rep.max_space_quotient, f.declared_A) &&
                       within(rep.max_amplitude, f.declared_A);
  return rep;
}

}  // namespace backrec
