// Acceptance suite: one pass/fail line per criterion, desk scale (1D,
// N <= 256, K <= 256).  Criterion 10 drives the CLI binary, whose path is
// expected as argv[1].

#include "backrec/evolve.hpp"
#include "backrec/experiment.hpp"
#include "backrec/field.hpp"
#include "backrec/grid.hpp"
#include "backrec/reconstruct.hpp"

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace backrec;

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

struct Checker {
  bool ok = true;
  std::string detail;

  void expect(bool cond, const std::string& what) {
    if (cond) return;
    if (!ok) {
      detail += "; " + what;
    } else {
      ok = false;
      detail = what;
    }
  }
};

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(3);
  os << std::scientific << v;
  return os.str();
}

StateVector<double> random_state(const PeriodicGrid<double>& g,
                                 std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto s = StateVector<double>::zero(g);
  for (Index i = 0; i < s.values.size(); ++i) s.values(i) = normal(rng);
  return s;
}

std::vector<std::pair<std::string, CoefficientField<double>>> families() {
  return {{"constant", constant_field(1.0, 1, 1.0)},
          {"autonomous", autonomous_field(1.0, 0.5, 1, 1.0, kTwoPi)},
          {"lipschitz_t", lipschitz_t_field(0.5, 1, 1.0)},
          {"loglip_t", loglip_t_field(0.1, 0.5, 1, 1.0)}};
}

// ---------------------------------------------------------------------------

// 1. |<Uu, v> - <u, U*v>| <= 1e-10 ||u|| ||v||, 100 random pairs, all four
//    built-in families, N = 128, K = 128.
void criterion_adjoint(Checker& ck) {
  const PeriodicGrid<double> grid(1, 128, kTwoPi);
  std::uint64_t seed = 1;
  for (const auto& [name, field] : families()) {
    const EvolutionFamily<double> fam(field, grid, TimeMesh<double>(0, 1, 128));
    double worst = 0.0;
    for (int p = 0; p < 100; ++p) {
      const auto u = random_state(grid, seed++);
      const auto v = random_state(grid, seed++);
      const double d = std::abs(l2_inner(apply_forward(fam, u, 0, 128), v) -
                                l2_inner(u, apply_adjoint(fam, v, 0, 128)));
      worst = std::max(worst, d / (l2_norm(u) * l2_norm(v)));
    }
    ck.expect(worst <= 1e-10,
              name + ": adjoint defect " + fmt(worst) + " > 1e-10");
  }
}

// 2. Constant-coefficient reconstruction matches the per-mode closed form
//    to 1e-8 relative, alpha in {1e-2, 1e-4, 1e-6}, N = 128, K = 128.
void criterion_oracle(Checker& ck) {
  ManufacturedCase<double> c{constant_field(1.0, 1, 1.0),
                             PeriodicGrid<double>(1, 128, kTwoPi),
                             TimeMesh<double>(0, 1, 128),
                             StateVector<double>{}};
  c.u0_true = StateVector<double>::from_function(
      c.grid, [](const Point2<double>& x) {
        return std::sin(x(0)) + 0.3 * std::cos(2 * x(0)) +
               0.1 * std::sin(5 * x(0));
      });
  const auto man = manufacture(c);
  const auto& g = man.trajectory.states.back();
  for (double alpha : {1e-2, 1e-4, 1e-6}) {
    // kappa = M = 1, so the alpha rule maps delta = alpha to alpha exactly
    const ReconstructionProblem<double> p{man.family, g, alpha, man.E};
    const auto res = solve(p);
    const auto oracle = spectral_oracle(alpha, g, c.field, c.mesh);
    const double rel = l2_norm(res.u0 - oracle) / l2_norm(oracle);
    ck.expect(res.alpha == alpha, "alpha rule did not reproduce alpha");
    ck.expect(rel <= 1e-8,
              "alpha " + fmt(alpha) + ": oracle gap " + fmt(rel) + " > 1e-8");
  }
}

// 3. Coercivity and boundedness of b_alpha on random vectors.
void criterion_forms(Checker& ck) {
  const PeriodicGrid<double> grid(1, 64, kTwoPi);
  const double alpha = 1e-3;
  std::uint64_t seed = 1000;
  for (const auto& [name, field] : families()) {
    const EvolutionFamily<double> fam(field, grid, TimeMesh<double>(0, 1, 64));
    const ReconstructionProblem<double> p{fam, StateVector<double>::zero(grid),
                                          1e-3, 1.0};
    const double kappa = field.kappa;
    const double M = operator_norm_constant(fam);
    for (int it = 0; it < 20; ++it) {
      const auto u = random_state(grid, seed++);
      const auto v = random_state(grid, seed++);
      const auto Bu = apply_B_alpha(p, alpha, u);
      const double coer = l2_inner(Bu, u);
      const double h1u = h1_norm(u);
      ck.expect(coer >= alpha * kappa * h1u * h1u - 1e-10,
                name + ": coercivity violated by " +
                    fmt(alpha * kappa * h1u * h1u - coer));
      const double buv = std::abs(l2_inner(Bu, v));
      const double bound = alpha / kappa * h1u * h1_norm(v) +
                           M * M * l2_norm(u) * l2_norm(v);
      ck.expect(buv <= bound + 1e-10,
                name + ": boundedness violated by " + fmt(buv - bound));
    }
  }
}

struct SweepData {
  SweepResult<double> result;
  bool ran = false;
};

SweepData& shared_sweep() {
  static SweepData data;
  if (!data.ran) {
    ManufacturedCase<double> c{loglip_t_field(0.1, 0.5, 1, 1.0),
                               PeriodicGrid<double>(1, 128, kTwoPi),
                               TimeMesh<double>(0, 1, 128),
                               StateVector<double>{}};
    c.u0_true = mixed_mode_state(c.grid, 1.0, 2.0, 32);
    SweepOptions<double> opts;  // deltas 1e-2 .. 1e-8, 3 seeds
    opts.jobs = 4;
    data.result = run_sweep(c, opts);
    data.ran = true;
  }
  return data;
}

// 4. ||u(0) - u_bar(0)||_{H^1} <= (1 + E) / kappa^2 at every sweep point.
void criterion_h1_bound(Checker& ck) {
  const auto& r = shared_sweep().result;
  for (const auto& pt : r.points)
    ck.expect(pt.h1_bound_lhs <= pt.h1_bound_rhs,
              "delta " + fmt(pt.delta) + " seed " + std::to_string(pt.seed) +
                  ": " + fmt(pt.h1_bound_lhs) + " > " + fmt(pt.h1_bound_rhs));
}

// 5. ||u(T) - u_bar(T)||_2 <= (M^{1/2}/kappa)(1 + E) delta^{1/2} pointwise.
void criterion_l2T_bound(Checker& ck) {
  const auto& r = shared_sweep().result;
  for (const auto& pt : r.points)
    ck.expect(pt.l2T_bound_lhs <= pt.l2T_bound_rhs,
              "delta " + fmt(pt.delta) + " seed " + std::to_string(pt.seed) +
                  ": " + fmt(pt.l2T_bound_lhs) + " > " + fmt(pt.l2T_bound_rhs));
}

// 6. Quasi-boundary value route coincides with the direct solve on the
//    loglip family, N = 128, K = 128.
void criterion_qbv(Checker& ck) {
  ManufacturedCase<double> c{loglip_t_field(0.1, 0.5, 1, 1.0),
                             PeriodicGrid<double>(1, 128, kTwoPi),
                             TimeMesh<double>(0, 1, 128),
                             StateVector<double>{}};
  c.u0_true = mixed_mode_state(c.grid, 1.0, 2.0, 16);
  const auto man = manufacture(c);
  const ReconstructionProblem<double> p{
      man.family, add_noise(man.trajectory.states.back(), {3, 1e-2}), 1e-2,
      man.E};
  const auto direct = solve(p);
  const auto qbv = qbv_reconstruct(p);
  const double rel = l2_norm(qbv.u0 - direct.u0) / l2_norm(direct.u0);
  ck.expect(rel <= 1e-8, "relative gap " + fmt(rel) + " > 1e-8");
  ck.expect(qbv.qbv_g2_relative_defect.value_or(1.0) <= 1e-11,
            "reflected-leg rhs defect " +
                fmt(qbv.qbv_g2_relative_defect.value_or(1.0)) + " > 1e-11");
}

// 7. Minimizer and gradient checks at the reconstruction.
void criterion_minimizer(Checker& ck) {
  ManufacturedCase<double> c{loglip_t_field(0.1, 0.5, 1, 1.0),
                             PeriodicGrid<double>(1, 64, kTwoPi),
                             TimeMesh<double>(0, 1, 64),
                             StateVector<double>{}};
  c.u0_true = mixed_mode_state(c.grid, 1.0, 2.0, 16);
  const auto man = manufacture(c);
  const ReconstructionProblem<double> p{
      man.family, add_noise(man.trajectory.states.back(), {17, 1e-3}), 1e-3,
      man.E};
  const auto res = solve(p);

  const double grad_norm = l2_norm(tikhonov_gradient(p, res.alpha, res.u0));
  const double scale = 10.0 * p.outer_tolerance * l2_norm(right_hand_side(p));
  ck.expect(grad_norm <= scale, "gradient at the minimizer " + fmt(grad_norm) +
                                    " > " + fmt(scale));

  std::uint64_t seed = 4000;
  for (int it = 0; it < 5; ++it) {
    const auto u = random_state(c.grid, seed++);
    const auto w = random_state(c.grid, seed++);
    const double eps = 1e-5;
    const double fd = (tikhonov_functional(p, res.alpha, u + eps * w) -
                       tikhonov_functional(p, res.alpha, u - eps * w)) /
                      (2 * eps);
    const double dir = l2_inner(tikhonov_gradient(p, res.alpha, u), w);
    ck.expect(std::abs(fd - dir) <= 1e-6 * std::abs(dir),
              "finite-difference gap " + fmt(std::abs(fd - dir) / std::abs(dir)));
  }

  const double at_min = tikhonov_functional(p, res.alpha, res.u0);
  for (int it = 0; it < 20; ++it) {
    auto w = random_state(c.grid, seed++);
    w = (1.0 / l2_norm(w)) * w;
    const double moved = tikhonov_functional(p, res.alpha, res.u0 + 1e-3 * w);
    ck.expect(moved >= at_min - 1e-12 * std::max(1.0, at_min),
              "a perturbation decreased the functional by " +
                  fmt(at_min - moved));
  }
}

// 8. Rate behavior on the loglip sweep: positive fitted theta with the log
//    fit beating the Hoelder fit on sup errors; positive fitted mu with the
//    tail/sup ratio decreasing in delta.
void criterion_rates(Checker& ck) {
  const auto& fits = shared_sweep().result.fits;
  ck.expect(fits.fitted_log.theta > 0,
            "fitted theta " + fmt(fits.fitted_log.theta) + " <= 0");
  ck.expect(fits.log_fit_beats_hoelder,
            "log-fit residual " + fmt(fits.fitted_log.residual) +
                " >= hoelder residual " + fmt(fits.fitted_hoelder.residual));
  ck.expect(fits.fitted_intermediate.mu > 0,
            "fitted mu " + fmt(fits.fitted_intermediate.mu) + " <= 0");
  ck.expect(fits.tail_to_sup_last < fits.tail_to_sup_first,
            "tail/sup ratio did not decrease: " + fmt(fits.tail_to_sup_first) +
                " -> " + fmt(fits.tail_to_sup_last));
}

// 9. Backward Euler power iteration gives M = 1 +- 1e-10 on all families.
void criterion_M(Checker& ck) {
  const PeriodicGrid<double> grid(1, 128, kTwoPi);
  for (const auto& [name, field] : families()) {
    const EvolutionFamily<double> fam(field, grid, TimeMesh<double>(0, 1, 128));
    const double M = estimate_M(fam, 50);
    ck.expect(std::abs(M - 1.0) <= 1e-10,
              name + ": M = 1 " + (M > 1 ? "+ " : "- ") + fmt(std::abs(M - 1)));
  }
}

// 10. Repeated CLI runs with identical config + seed produce byte-identical
//     reports.
void criterion_determinism(Checker& ck, const std::string& cli) {
  if (cli.empty()) {
    ck.expect(false, "no CLI binary path given (argv[1])");
    return;
  }
  const fs::path dir =
      fs::temp_directory_path() / ("backrec_acceptance_" +
                                   std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  {
    std::ofstream cfg(dir / "run.cfg");
    cfg << "[field]\nfamily = loglip_t\nbeta = 0.1\n"
        << "[grid]\npoints = 48\n"
        << "[mesh]\nsteps = 32\n"
        << "[problem]\ndelta = 1e-3\nseed = 21\nu0 = mix\nu0_modes = 12\n"
        << "[sweep]\ndeltas = 1e-2, 1e-3, 1e-4, 1e-5\nseeds = 2\n";
  }
  auto run = [&](const std::string& sub, const std::string& out,
                 const std::string& log) {
    const std::string cmd = cli + " " + sub + " --config " +
                            (dir / "run.cfg").string() + " --out " +
                            (dir / out).string() + " > " +
                            (dir / log).string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  };
  auto slurp = [](const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
  };

  ck.expect(run("reconstruct", "ra", "la.txt") == 0, "reconstruct run 1 failed");
  ck.expect(run("reconstruct", "rb", "lb.txt") == 0, "reconstruct run 2 failed");
  for (const char* f : {"reconstruction.json", "u0.csv", "u0.bin"})
    ck.expect(slurp(dir / "ra" / f) == slurp(dir / "rb" / f),
              std::string(f) + " differs between identical runs");

  ck.expect(run("sweep", "sa", "lc.txt") == 0, "sweep run 1 failed");
  ck.expect(run("sweep", "sb", "ld.txt") == 0, "sweep run 2 failed");
  for (const char* f : {"sweep.csv", "fit.json"})
    ck.expect(slurp(dir / "sa" / f) == slurp(dir / "sb" / f),
              std::string(f) + " differs between identical runs");
}

}  // namespace

int main(int argc, char** argv) {
  const std::string cli = argc > 1 ? argv[1] : "";
  struct Criterion {
    int id;
    std::string name;
    std::function<void(Checker&)> run;
  };
  const std::vector<Criterion> criteria = {
      {1, "adjoint exactness <Uu,v> = <u,U*v>", criterion_adjoint},
      {2, "spectral oracle equivalence", criterion_oracle},
      {3, "coercivity and boundedness of b_alpha", criterion_forms},
      {4, "H1 reconstruction bound (1+E)/kappa^2", criterion_h1_bound},
      {5, "final-time bound (M^1/2/kappa)(1+E) delta^1/2", criterion_l2T_bound},
      {6, "quasi-boundary value equivalence", criterion_qbv},
      {7, "minimizer and gradient checks", criterion_minimizer},
      {8, "logarithmic and intermediate rate fits", criterion_rates},
      {9, "backward Euler operator norm M = 1", criterion_M},
      {10, "CLI determinism", [&cli](Checker& ck) { criterion_determinism(ck, cli); }},
  };

  int failed = 0;
  for (const auto& c : criteria) {
    Checker ck;
    try {
      c.run(ck);
    } catch (const std::exception& e) {
      ck.expect(false, std::string("exception: ") + e.what());
    }
    std::cout << (ck.ok ? "[PASS]" : "[FAIL]") << " criterion " << c.id << ": "
              << c.name;
    if (!ck.ok) std::cout << " -- " << ck.detail;
    std::cout << std::endl;
    failed += ck.ok ? 0 : 1;
  }
  std::cout << (failed == 0 ? "acceptance: all criteria passed"
                            : "acceptance: " + std::to_string(failed) +
                                  " criteria FAILED")
            << std::endl;
  return failed == 0 ? 0 : 1;
}
