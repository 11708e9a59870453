#pragma once

#include "backrec/evolve.hpp"
#include "backrec/grid.hpp"
#include "backrec/reconstruct.hpp"
#include "backrec/spectral.hpp"
#include "backrec/types.hpp"

#include <json.hpp>

#include <atomic>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <istream>
#include <limits>
#include <numbers>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace backrec {

// ---------------------------------------------------------------------------
// Synthetic initial states.

/// amplitude * sin(2 pi mode x / side), constant across the second axis.
template <typename Scalar>
StateVector<Scalar> sinusoid_state(const PeriodicGrid<Scalar>& g, int mode,
                                   Scalar amplitude = Scalar(1)) {
  const Scalar freq = Scalar(2) * std::numbers::pi_v<Scalar> *
                      Scalar(mode) / g.side;
  return StateVector<Scalar>::from_function(
      g, [&](const Point2<Scalar>& x) { return amplitude * std::sin(freq * x(0)); });
}

// Polynomially decaying mode mix with deterministic phases,
//   u0(x) = amplitude * sum_{k=1..modes} cos(2 pi k x / L + phi_k) / (1+k)^decay,
// phi_k generated by golden-ratio rotation.  The slowly decaying spectrum is
// what makes reconstruction sweeps exhibit the logarithmic rate: the number
// of recoverable modes grows only like sqrt(|log delta|).
template <typename Scalar>
StateVector<Scalar> mixed_mode_state(const PeriodicGrid<Scalar>& g,
                                     Scalar amplitude = Scalar(1),
                                     Scalar decay = Scalar(2),
                                     int modes = 16) {
  constexpr Scalar golden = Scalar(0.6180339887498949);
  constexpr Scalar plastic = Scalar(0.7548776662466927);
  const Scalar two_pi = Scalar(2) * std::numbers::pi_v<Scalar>;
  auto frac = [](Scalar v) { return v - std::floor(v); };
  return StateVector<Scalar>::from_function(g, [&](const Point2<Scalar>& x) {
    Scalar acc = 0;
    for (int k = 1; k <= modes; ++k) {
      const Scalar w = two_pi * Scalar(k) / g.side;
      const Scalar phi = two_pi * frac(Scalar(k) * golden);
      Scalar term = std::cos(w * x(0) + phi);
      if (g.dim == 2) {
        const Scalar psi = two_pi * frac(Scalar(k) * plastic);
        term *= std::cos(w * x(1) + psi);
      }
      acc += term / std::pow(Scalar(1 + k), decay);
    }
    return amplitude * acc;
  });
}

// ---------------------------------------------------------------------------
// Manufactured ground truth.

template <typename Scalar>
struct ManufacturedCase {
  CoefficientField<Scalar> field;
  PeriodicGrid<Scalar> grid;
  TimeMesh<Scalar> mesh;
  StateVector<Scalar> u0_true;
  Scheme scheme = Scheme::backward_euler;
  Scalar inner_tolerance = Scalar(1e-12);
};

template <typename Scalar>
struct Manufactured {
  EvolutionFamily<Scalar> family;
  Trajectory<Scalar> trajectory;
  Scalar E;  // h1_norm of the true initial state
};

template <typename Scalar>
Manufactured<Scalar> manufacture(const ManufacturedCase<Scalar>& c) {
  EvolutionFamily<Scalar> family(c.field, c.grid, c.mesh, c.scheme,
                                 c.inner_tolerance);
  Trajectory<Scalar> traj = record(family, c.u0_true);
  return {std::move(family), std::move(traj), h1_norm(c.u0_true)};
}

template <typename Scalar>
struct NoiseSpec {
  std::uint64_t seed = 0;
  Scalar target_delta = 0;
};

/// g = uT + delta * xi / ||xi||_2 with xi seeded standard normal, so that
/// ||g - uT||_2 equals delta exactly (up to roundoff).
template <typename Scalar>
StateVector<Scalar> add_noise(const StateVector<Scalar>& uT,
                              const NoiseSpec<Scalar>& spec) {
  if (!(spec.target_delta > Scalar(0)))
    throw std::invalid_argument("add_noise: delta must be positive");
  for (std::uint64_t attempt = 0;; ++attempt) {
    std::mt19937_64 rng(spec.seed + attempt);
    std::normal_distribution<Scalar> normal(Scalar(0), Scalar(1));
    StateVector<Scalar> xi = StateVector<Scalar>::zero(uT.grid);
    for (Index i = 0; i < xi.values.size(); ++i) xi.values(i) = normal(rng);
    const Scalar n = l2_norm(xi);
    if (n > Scalar(0)) return uT + (spec.target_delta / n) * xi;
  }
}

// ---------------------------------------------------------------------------
// Error metrics and rate fits.

template <typename Scalar>
struct ErrorMetrics {
  std::vector<Scalar> per_node;  // ||u(t_k) - u_bar(t_k)||_2
  Scalar sup_error = 0;          // sup over [0, T]
  Scalar tail_error = 0;         // sup over [t_star, T]
};

template <typename Scalar>
ErrorMetrics<Scalar> error_metrics(const Trajectory<Scalar>& u,
                                   const Trajectory<Scalar>& u_bar,
                                   Scalar t_star) {
  if (!(u.mesh == u_bar.mesh) || u.states.size() != u_bar.states.size())
    throw std::invalid_argument("error_metrics: mesh mismatch");
  ErrorMetrics<Scalar> m;
  m.per_node.resize(u.states.size());
  for (std::size_t k = 0; k < u.states.size(); ++k) {
    m.per_node[k] = l2_norm(u.states[k] - u_bar.states[k]);
    m.sup_error = std::max(m.sup_error, m.per_node[k]);
    if (u.mesh.node(static_cast<int>(k)) >= t_star)
      m.tail_error = std::max(m.tail_error, m.per_node[k]);
  }
  return m;
}

namespace detail {

template <typename Scalar>
struct LineFit {
  Scalar slope = 0;
  Scalar intercept = 0;
  Scalar rms_residual = 0;
};

template <typename Scalar>
LineFit<Scalar> least_squares_line(const std::vector<Scalar>& x,
                                   const std::vector<Scalar>& y) {
  const auto n = static_cast<Scalar>(x.size());
  Scalar mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  Scalar sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  LineFit<Scalar> f;
  f.slope = sxx > Scalar(0) ? sxy / sxx : Scalar(0);
  f.intercept = my - f.slope * mx;
  Scalar ss = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const Scalar r = y[i] - (f.intercept + f.slope * x[i]);
    ss += r * r;
  }
  f.rms_residual = std::sqrt(ss / n);
  return f;
}

template <typename Scalar>
void check_rate_inputs(const std::vector<Scalar>& deltas,
                       const std::vector<Scalar>& errors,
                       std::size_t min_points) {
  if (deltas.size() != errors.size())
    throw std::invalid_argument("rate fit: delta/error length mismatch");
  if (deltas.size() < min_points)
    throw std::invalid_argument("rate fit: not enough sweep points");
  for (std::size_t i = 0; i < deltas.size(); ++i) {
    if (!(deltas[i] > Scalar(0)) || deltas[i] >= Scalar(1))
      throw std::invalid_argument("rate fit: deltas must lie in (0, 1)");
    if (!(errors[i] > Scalar(0)))
      throw std::invalid_argument("rate fit: errors must be positive");
  }
}

}  // namespace detail

template <typename Scalar>
struct LogRateFit {
  Scalar K_prime = 0;
  Scalar theta = 0;
  Scalar residual = 0;
  bool no_decay = false;
};

/// Least squares of log e = log K' - theta log|log delta|.
template <typename Scalar>
LogRateFit<Scalar> fit_log_rate(const std::vector<Scalar>& deltas,
                                const std::vector<Scalar>& errors) {
  detail::check_rate_inputs(deltas, errors, 3);
  std::vector<Scalar> x(deltas.size()), y(deltas.size());
  for (std::size_t i = 0; i < deltas.size(); ++i) {
    x[i] = std::log(-std::log(deltas[i]));
    y[i] = std::log(errors[i]);
  }
  const auto lf = detail::least_squares_line(x, y);
  LogRateFit<Scalar> fit;
  fit.theta = -lf.slope;
  fit.K_prime = std::exp(lf.intercept);
  fit.residual = lf.rms_residual;
  fit.no_decay = !(fit.theta > Scalar(1e-12));
  return fit;
}

template <typename Scalar>
struct HoelderRateFit {
  Scalar C = 0;
  Scalar beta = 0;
  Scalar residual = 0;
};

/// Least squares of log e = log C + beta log delta (the competing model).
template <typename Scalar>
HoelderRateFit<Scalar> fit_hoelder_rate(const std::vector<Scalar>& deltas,
                                        const std::vector<Scalar>& errors) {
  detail::check_rate_inputs(deltas, errors, 3);
  std::vector<Scalar> x(deltas.size()), y(deltas.size());
  for (std::size_t i = 0; i < deltas.size(); ++i) {
    x[i] = std::log(deltas[i]);
    y[i] = std::log(errors[i]);
  }
  const auto lf = detail::least_squares_line(x, y);
  return {std::exp(lf.intercept), lf.slope, lf.rms_residual};
}

template <typename Scalar>
struct IntermediateRateFit {
  Scalar K = 0;
  Scalar N_prime = 0;
  Scalar mu = 0;
  Scalar residual = 0;
  bool non_monotone = false;
};

// Fit of e = K exp(-N' |log delta|^mu).  For fixed K the model linearizes,
//   log(log(K / e)) = log N' + mu log|log delta|,
// and K is refined by a one-dimensional search (coarse log grid plus golden
// section) minimizing the linearized residual.  The search starts above
// 1.5x the maximal error, which keeps every log(K / e) positive.
template <typename Scalar>
IntermediateRateFit<Scalar> fit_intermediate_rate(
    const std::vector<Scalar>& deltas, const std::vector<Scalar>& errors) {
  detail::check_rate_inputs(deltas, errors, 4);

  IntermediateRateFit<Scalar> fit;
  // Monotonicity flag: with deltas ordered decreasingly, errors should not
  // grow by more than 10% as delta shrinks.
  {
    std::vector<std::size_t> order(deltas.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return deltas[a] > deltas[b];
    });
    for (std::size_t i = 1; i < order.size(); ++i)
      if (errors[order[i]] > errors[order[i - 1]] * Scalar(1.1))
        fit.non_monotone = true;
  }

  Scalar max_e = 0;
  for (Scalar e : errors) max_e = std::max(max_e, e);
  std::vector<Scalar> x(deltas.size());
  for (std::size_t i = 0; i < deltas.size(); ++i)
    x[i] = std::log(-std::log(deltas[i]));

  auto fit_for = [&](Scalar K) {
    std::vector<Scalar> z(deltas.size());
    for (std::size_t i = 0; i < deltas.size(); ++i)
      z[i] = std::log(std::log(K / errors[i]));
    return detail::least_squares_line(x, z);
  };

  // Coarse scan of K = max_e + s over a log grid in s, then golden-section
  // refinement around the best bracket.
  const Scalar s_lo = std::log(max_e * Scalar(1e-12));
  const Scalar s_hi = std::log(max_e * Scalar(1e4));
  const int grid_points = 400;
  Scalar best_t = s_lo, best_res = std::numeric_limits<Scalar>::max();
  for (int i = 0; i <= grid_points; ++i) {
    const Scalar t = s_lo + (s_hi - s_lo) * Scalar(i) / Scalar(grid_points);
    const Scalar res = fit_for(max_e + std::exp(t)).rms_residual;
    if (res < best_res) {
      best_res = res;
      best_t = t;
    }
  }
  const Scalar span = (s_hi - s_lo) / Scalar(grid_points);
  Scalar a = best_t - span, b = best_t + span;
  constexpr Scalar inv_phi = Scalar(0.6180339887498949);
  Scalar c1 = b - inv_phi * (b - a), c2 = a + inv_phi * (b - a);
  Scalar f1 = fit_for(max_e + std::exp(c1)).rms_residual;
  Scalar f2 = fit_for(max_e + std::exp(c2)).rms_residual;
  for (int it = 0; it < 90; ++it) {
    if (f1 < f2) {
      b = c2;
      c2 = c1;
      f2 = f1;
      c1 = b - inv_phi * (b - a);
      f1 = fit_for(max_e + std::exp(c1)).rms_residual;
    } else {
      a = c1;
      c1 = c2;
      f1 = f2;
      c2 = a + inv_phi * (b - a);
      f2 = fit_for(max_e + std::exp(c2)).rms_residual;
    }
  }
  fit.K = max_e + std::exp((a + b) / 2);
  const auto lf = fit_for(fit.K);
  fit.N_prime = std::exp(lf.intercept);
  fit.mu = lf.slope;
  fit.residual = lf.rms_residual;
  return fit;
}

// ---------------------------------------------------------------------------
// Constant-coefficient spectral oracle.
//
// For a(t,x) = c I the whole pipeline diagonalizes under the DFT: the
// stiffness symbol is lambda_k = c * (2/h^2) sum_d (1 - cos(2 pi k_d / N)),
// one implicit step multiplies mode k by 1/(1 + dt lambda_k) (backward
// Euler), and the normal equation B_alpha u = U^* g becomes per mode
//
//   u0_k = sigma_k g_k / (alpha (1 + lambda_k) + sigma_k^2),
//
// sigma_k the K-step amplification.  This closed form is the independent
// verification route for the conjugate-gradient solver.
template <typename Scalar>
StateVector<Scalar> spectral_oracle(Scalar alpha, const StateVector<Scalar>& g,
                                    const CoefficientField<Scalar>& field,
                                    const TimeMesh<Scalar>& mesh,
                                    Scheme scheme = Scheme::backward_euler) {
  if (!field.constant_value)
    throw std::invalid_argument("spectral_oracle: field must be constant");
  const Scalar c = *field.constant_value;
  const auto& grid = g.grid;
  const Vector<Scalar> sym =
      c * laplacian_symbols(grid.dim, grid.points, grid.spacing());
  const Scalar dt = mesh.dt();
  const int K = mesh.steps;

  auto spec = dft_forward(grid.dim, grid.points, g.values);
  for (Index k = 0; k < spec.size(); ++k) {
    const Scalar lam = sym(k);
    Scalar sigma;
    if (scheme == Scheme::backward_euler)
      sigma = std::pow(Scalar(1) + dt * lam, Scalar(-K));
    else
      sigma = std::pow((Scalar(1) - dt * lam / 2) / (Scalar(1) + dt * lam / 2),
                       K);
    spec(k) *= sigma / (alpha * (Scalar(1) + lam) + sigma * sigma);
  }
  return {grid, dft_inverse(grid.dim, grid.points, spec)};
}

// ---------------------------------------------------------------------------
// Conditional-stability probe: evolve a base solution and perturbed copies,
// and tabulate sup-vs-final gaps together with sup * |log final|^theta for a
// grid of exponents.

template <typename Scalar>
struct StabilityProbeRow {
  Scalar eps = 0;
  Scalar final_gap = 0;
  Scalar sup_gap = 0;
  std::vector<Scalar> ratio_per_theta;
  bool log_regime = false;  // final gap < 1, where the log estimate applies
};

template <typename Scalar>
std::vector<StabilityProbeRow<Scalar>> stability_probe(
    const ManufacturedCase<Scalar>& base, const StateVector<Scalar>& direction,
    const std::vector<Scalar>& eps_levels,
    const std::vector<Scalar>& theta_grid = {Scalar(0.25), Scalar(0.5),
                                             Scalar(1), Scalar(2)}) {
  const auto man = manufacture(base);
  std::vector<StabilityProbeRow<Scalar>> rows;
  rows.reserve(eps_levels.size());
  for (Scalar eps : eps_levels) {
    ManufacturedCase<Scalar> pert = base;
    pert.u0_true = base.u0_true + eps * direction;
    const auto man_p = manufacture(pert);
    const auto em = error_metrics(man_p.trajectory, man.trajectory,
                                  base.mesh.t_start);
    StabilityProbeRow<Scalar> row;
    row.eps = eps;
    row.sup_gap = em.sup_error;
    row.final_gap = em.per_node.back();
    row.log_regime = row.final_gap < Scalar(1) && row.final_gap > Scalar(0);
    for (Scalar theta : theta_grid)
      row.ratio_per_theta.push_back(
          row.log_regime
              ? row.sup_gap * std::pow(std::abs(std::log(row.final_gap)), theta)
              : Scalar(0));
    rows.push_back(std::move(row));
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Delta sweep: reconstruct across noise levels and seeds, check the
// reconstruction bounds pointwise, and fit the rates.

template <typename Scalar>
struct SweepOptions {
  std::vector<Scalar> deltas = {Scalar(1e-2), Scalar(1e-3), Scalar(1e-4),
                                Scalar(1e-5), Scalar(1e-6), Scalar(1e-7),
                                Scalar(1e-8)};
  int seeds_per_delta = 3;
  std::uint64_t base_seed = 42;
  std::optional<Scalar> t_star;  // default: quarter of the time span
  int jobs = 1;
};

template <typename Scalar>
struct SweepPoint {
  Scalar delta = 0;
  std::uint64_t seed = 0;
  Scalar alpha = 0;
  Scalar sup_error = 0;
  Scalar tail_error = 0;
  Scalar h1_bound_lhs = 0;   // ||u(0) - u_bar(0)||_{H^1}
  Scalar h1_bound_rhs = 0;   // (1 + E) / kappa^2
  Scalar l2T_bound_lhs = 0;  // ||u(T) - u_bar(T)||_2
  Scalar l2T_bound_rhs = 0;  // (M^{1/2} / kappa)(1 + E) delta^{1/2}
  int cg_iterations = 0;
  bool bounds_ok = false;
};

template <typename Scalar>
struct RateFitReport {
  std::vector<Scalar> deltas;
  std::vector<Scalar> errors_sup;   // seed-averaged sup errors
  std::vector<Scalar> errors_tail;  // seed-averaged tail errors
  LogRateFit<Scalar> fitted_log;
  HoelderRateFit<Scalar> fitted_hoelder;
  IntermediateRateFit<Scalar> fitted_intermediate;
  Scalar t_star = 0;
  bool log_fit_beats_hoelder = false;
  Scalar tail_to_sup_first = 0;  // at the largest delta
  Scalar tail_to_sup_last = 0;   // at the smallest delta
};

template <typename Scalar>
struct SweepResult {
  std::vector<SweepPoint<Scalar>> points;
  RateFitReport<Scalar> fits;
  Scalar E = 0;
  Scalar M = 0;
  bool all_bounds_ok = false;
};

template <typename Scalar>
SweepResult<Scalar> run_sweep(const ManufacturedCase<Scalar>& c,
                              const SweepOptions<Scalar>& opts) {
  const auto man = manufacture(c);
  const Scalar kappa = c.field.kappa;
  const Scalar M = operator_norm_constant(man.family);
  const Scalar E = man.E;
  const Scalar span = c.mesh.t_end - c.mesh.t_start;
  const Scalar t_star = opts.t_star.value_or(c.mesh.t_start + span / 4);
  const StateVector<Scalar>& uT = man.trajectory.states.back();
  const StateVector<Scalar>& u0_bar = man.trajectory.states.front();

  const std::size_t n_jobs =
      opts.deltas.size() * static_cast<std::size_t>(opts.seeds_per_delta);
  std::vector<SweepPoint<Scalar>> points(n_jobs);

  auto run_job = [&](std::size_t j) {
    const std::size_t id = j / opts.seeds_per_delta;
    const std::size_t is = j % opts.seeds_per_delta;
    const Scalar delta = opts.deltas[id];
    const std::uint64_t seed = opts.base_seed + 1000003ULL * id + is;

    ReconstructionProblem<Scalar> problem{man.family,
                                          add_noise(uT, {seed, delta}), delta,
                                          E};
    const auto res = solve(problem);
    const auto em = error_metrics(res.trajectory, man.trajectory, t_star);

    SweepPoint<Scalar>& pt = points[j];
    pt.delta = delta;
    pt.seed = seed;
    pt.alpha = res.alpha;
    pt.sup_error = em.sup_error;
    pt.tail_error = em.tail_error;
    pt.h1_bound_lhs = h1_norm(res.u0 - u0_bar);
    pt.h1_bound_rhs = (Scalar(1) + E) / (kappa * kappa);
    pt.l2T_bound_lhs = l2_norm(res.trajectory.states.back() - uT);
    pt.l2T_bound_rhs = std::sqrt(M) / kappa * (Scalar(1) + E) * std::sqrt(delta);
    pt.cg_iterations = res.cg_iterations;
    pt.bounds_ok = pt.h1_bound_lhs <= pt.h1_bound_rhs &&
                   pt.l2T_bound_lhs <= pt.l2T_bound_rhs;
  };

  if (opts.jobs <= 1) {
    for (std::size_t j = 0; j < n_jobs; ++j) run_job(j);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> workers;
    const int nw = std::min<int>(opts.jobs, static_cast<int>(n_jobs));
    workers.reserve(nw);
    for (int w = 0; w < nw; ++w)
      workers.emplace_back([&] {
        for (std::size_t j = next.fetch_add(1); j < n_jobs;
             j = next.fetch_add(1))
          run_job(j);
      });
    for (auto& t : workers) t.join();
  }

  SweepResult<Scalar> out;
  out.E = E;
  out.M = M;
  out.points = std::move(points);
  out.all_bounds_ok = true;
  for (const auto& pt : out.points) out.all_bounds_ok &= pt.bounds_ok;

  RateFitReport<Scalar>& fits = out.fits;
  fits.t_star = t_star;
  fits.deltas = opts.deltas;
  fits.errors_sup.assign(opts.deltas.size(), Scalar(0));
  fits.errors_tail.assign(opts.deltas.size(), Scalar(0));
  for (std::size_t j = 0; j < out.points.size(); ++j) {
    const std::size_t id = j / opts.seeds_per_delta;
    fits.errors_sup[id] += out.points[j].sup_error / opts.seeds_per_delta;
    fits.errors_tail[id] += out.points[j].tail_error / opts.seeds_per_delta;
  }
  fits.fitted_log = fit_log_rate(fits.deltas, fits.errors_sup);
  fits.fitted_hoelder = fit_hoelder_rate(fits.deltas, fits.errors_sup);
  fits.fitted_intermediate =
      fit_intermediate_rate(fits.deltas, fits.errors_tail);
  fits.log_fit_beats_hoelder =
      fits.fitted_log.residual < fits.fitted_hoelder.residual;

  std::size_t i_max = 0, i_min = 0;
  for (std::size_t i = 0; i < fits.deltas.size(); ++i) {
    if (fits.deltas[i] > fits.deltas[i_max]) i_max = i;
    if (fits.deltas[i] < fits.deltas[i_min]) i_min = i;
  }
  fits.tail_to_sup_first = fits.errors_tail[i_max] / fits.errors_sup[i_max];
  fits.tail_to_sup_last = fits.errors_tail[i_min] / fits.errors_sup[i_min];
  return out;
}

// ---------------------------------------------------------------------------
// Report formats.

inline constexpr const char* kSweepCsvHeader =
    "delta,seed,alpha,sup_error,tail_error,h1_bound_lhs,h1_bound_rhs,"
    "l2T_bound_lhs,l2T_bound_rhs,cg_iters";

template <typename Scalar>
void write_sweep_csv(std::ostream& os,
                     const std::vector<SweepPoint<Scalar>>& points,
                     const std::vector<std::string>& provenance = {}) {
  os << std::setprecision(std::numeric_limits<Scalar>::max_digits10);
  for (const auto& line : provenance) os << "# " << line << "\n";
  os << kSweepCsvHeader << "\n";
  for (const auto& p : points)
    os << p.delta << "," << p.seed << "," << p.alpha << "," << p.sup_error
       << "," << p.tail_error << "," << p.h1_bound_lhs << ","
       << p.h1_bound_rhs << "," << p.l2T_bound_lhs << "," << p.l2T_bound_rhs
       << "," << p.cg_iterations << "\n";
}

template <typename Scalar>
std::vector<SweepPoint<Scalar>> read_sweep_csv(std::istream& is) {
  std::vector<SweepPoint<Scalar>> points;
  std::string line;
  bool saw_header = false;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!saw_header) {
      if (line != kSweepCsvHeader)
        throw std::runtime_error("read_sweep_csv: unexpected header: " + line);
      saw_header = true;
      continue;
    }
    std::istringstream row(line);
    SweepPoint<Scalar> p;
    char comma;
    double delta, alpha, se, te, h1l, h1r, l2l, l2r;
    std::uint64_t seed;
    int iters;
    if (!(row >> delta >> comma >> seed >> comma >> alpha >> comma >> se >>
          comma >> te >> comma >> h1l >> comma >> h1r >> comma >> l2l >>
          comma >> l2r >> comma >> iters))
      throw std::runtime_error("read_sweep_csv: malformed row: " + line);
    p.delta = Scalar(delta);
    p.seed = seed;
    p.alpha = Scalar(alpha);
    p.sup_error = Scalar(se);
    p.tail_error = Scalar(te);
    p.h1_bound_lhs = Scalar(h1l);
    p.h1_bound_rhs = Scalar(h1r);
    p.l2T_bound_lhs = Scalar(l2l);
    p.l2T_bound_rhs = Scalar(l2r);
    p.cg_iterations = iters;
    p.bounds_ok = p.h1_bound_lhs <= p.h1_bound_rhs &&
                  p.l2T_bound_lhs <= p.l2T_bound_rhs;
    points.push_back(p);
  }
  if (!saw_header) throw std::runtime_error("read_sweep_csv: empty file");
  return points;
}

template <typename Scalar>
nlohmann::json to_json(const RateFitReport<Scalar>& r) {
  return nlohmann::json{
      {"t_star", r.t_star},
      {"deltas", r.deltas},
      {"errors_sup", r.errors_sup},
      {"errors_tail", r.errors_tail},
      {"fit_log",
       {{"K_prime", r.fitted_log.K_prime},
        {"theta", r.fitted_log.theta},
        {"residual", r.fitted_log.residual},
        {"no_decay", r.fitted_log.no_decay}}},
      {"fit_hoelder",
       {{"C", r.fitted_hoelder.C},
        {"beta", r.fitted_hoelder.beta},
        {"residual", r.fitted_hoelder.residual}}},
      {"fit_intermediate",
       {{"K", r.fitted_intermediate.K},
        {"N_prime", r.fitted_intermediate.N_prime},
        {"mu", r.fitted_intermediate.mu},
        {"residual", r.fitted_intermediate.residual},
        {"non_monotone", r.fitted_intermediate.non_monotone}}},
      {"log_fit_beats_hoelder", r.log_fit_beats_hoelder},
      {"tail_to_sup_first", r.tail_to_sup_first},
      {"tail_to_sup_last", r.tail_to_sup_last},
  };
}

/// Rate report computed from an existing sweep table (the fit-rate path).
template <typename Scalar>
RateFitReport<Scalar> fit_from_points(
    const std::vector<SweepPoint<Scalar>>& points, Scalar t_star) {
  std::vector<Scalar> deltas;
  std::vector<Scalar> sup, tail, counts;
  for (const auto& p : points) {
    std::size_t i = 0;
    for (; i < deltas.size(); ++i)
      if (deltas[i] == p.delta) break;
    if (i == deltas.size()) {
      deltas.push_back(p.delta);
      sup.push_back(0);
      tail.push_back(0);
      counts.push_back(0);
    }
    sup[i] += p.sup_error;
    tail[i] += p.tail_error;
    counts[i] += 1;
  }
  RateFitReport<Scalar> fits;
  fits.t_star = t_star;
  fits.deltas = deltas;
  for (std::size_t i = 0; i < deltas.size(); ++i) {
    fits.errors_sup.push_back(sup[i] / counts[i]);
    fits.errors_tail.push_back(tail[i] / counts[i]);
  }
  fits.fitted_log = fit_log_rate(fits.deltas, fits.errors_sup);
  fits.fitted_hoelder = fit_hoelder_rate(fits.deltas, fits.errors_sup);
  fits.fitted_intermediate =
      fit_intermediate_rate(fits.deltas, fits.errors_tail);
  fits.log_fit_beats_hoelder =
      fits.fitted_log.residual < fits.fitted_hoelder.residual;
  std::size_t i_max = 0, i_min = 0;
  for (std::size_t i = 0; i < deltas.size(); ++i) {
    if (deltas[i] > deltas[i_max]) i_max = i;
    if (deltas[i] < deltas[i_min]) i_min = i;
  }
  fits.tail_to_sup_first = fits.errors_tail[i_max] / fits.errors_sup[i_max];
  fits.tail_to_sup_last = fits.errors_tail[i_min] / fits.errors_sup[i_min];
  return fits;
}

}  // namespace backrec
