// backrec: reconstruct the initial state of a divergence-form parabolic
// equation from a noisy final-time measurement.
//
// Subcommands:
//   validate-field   check a coefficient family against its declared bounds
//   evolve           forward-solve and export the trajectory
//   reconstruct      solve the regularized inverse problem for u(0)
//   sweep            reconstruct across a noise-level sweep and fit rates
//   fit-rate         refit rates from an existing sweep table
//
// Exit codes: 0 success, 1 solver non-convergence, 2 configuration error,
// 3 assertion failure (a bound or invariant was violated).

#include "backrec/config.hpp"
#include "backrec/evolve.hpp"
#include "backrec/experiment.hpp"
#include "backrec/field.hpp"
#include "backrec/grid.hpp"
#include "backrec/reconstruct.hpp"
#include "backrec/version.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct BoundViolation : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << text;
}

void write_json(const fs::path& path, const json& j) {
  write_text(path, j.dump(2) + "\n");
}

json report_skeleton(const backrec::RunConfig& cfg) {
  return json{{"version", backrec::kVersion}, {"config", to_json(cfg)}};
}

int run_validate_field(const backrec::RunConfig& cfg) {
  const auto field = backrec::make_field(cfg);
  backrec::SamplingPlan<double> plan;
  plan.side = cfg.grid.side;
  const auto rep = backrec::validate(field, plan);

  json j = report_skeleton(cfg);
  j["report"] = {{"symmetry_defect", rep.symmetry_defect},
                 {"ellipticity_margin_low", rep.ellipticity_margin_low},
                 {"ellipticity_margin_high", rep.ellipticity_margin_high},
                 {"max_time_quotient", rep.max_time_quotient},
                 {"max_large_gap_quotient", rep.max_large_gap_quotient},
                 {"max_space_quotient", rep.max_space_quotient},
                 {"max_amplitude", rep.max_amplitude},
                 {"symmetry_ok", rep.symmetry_ok},
                 {"ellipticity_ok", rep.ellipticity_ok},
                 {"time_modulus_ok", rep.time_modulus_ok},
                 {"space_bound_ok", rep.space_bound_ok},
                 {"pass", rep.pass()}};
  write_json(fs::path(cfg.output.dir) / "validate_report.json", j);
  std::cout << "validate-field: " << (rep.pass() ? "pass" : "FAIL")
            << " (time quotient " << rep.max_time_quotient << " vs A_LL "
            << field.declared_A_LL << ")\n";
  if (!rep.pass()) throw BoundViolation("field validation failed");
  return 0;
}

int run_evolve(const backrec::RunConfig& cfg) {
  const auto c = backrec::make_case(cfg);
  const auto man = backrec::manufacture(c);
  backrec::TrajectoryColumns columns;
  if (cfg.output.trajectory == "values")
    columns = backrec::TrajectoryColumns::values;
  else if (cfg.output.trajectory == "norms")
    columns = backrec::TrajectoryColumns::norms;
  else
    throw backrec::ConfigError("key 'trajectory' must be 'values' or 'norms'");

  const fs::path out = fs::path(cfg.output.dir) / "trajectory.csv";
  std::ofstream os(out, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + out.string());
  for (const auto& line : backrec::provenance_lines(cfg)) os << "# " << line << "\n";
  backrec::write_trajectory_csv(os, man.trajectory, columns);
  std::cout << "evolve: wrote " << out.string() << " (E = " << man.E << ")\n";
  return 0;
}

int run_reconstruct(const backrec::RunConfig& cfg, bool check_qbv) {
  const auto c = backrec::make_case(cfg);
  const auto man = backrec::manufacture(c);
  const auto& uT = man.trajectory.states.back();
  const auto g =
      backrec::add_noise(uT, {cfg.problem.seed, cfg.problem.delta});
  const double E = cfg.problem.E.value_or(man.E);

  backrec::ReconstructionProblem<double> problem{
      man.family,           g, cfg.problem.delta, E, cfg.problem.alpha_floor,
      cfg.problem.outer_tolerance};
  const auto res = backrec::solve(problem);

  const double t_star =
      cfg.sweep.t_star.value_or(cfg.mesh.horizon / 4);
  const auto em = backrec::error_metrics(res.trajectory, man.trajectory, t_star);
  const double kappa = c.field.kappa;
  const double M = backrec::operator_norm_constant(man.family);
  const double h1_lhs = backrec::h1_norm(res.u0 - man.trajectory.states.front());
  const double h1_rhs = (1.0 + E) / (kappa * kappa);
  const double l2T_lhs = backrec::l2_norm(res.trajectory.states.back() - uT);
  const double l2T_rhs =
      std::sqrt(M) / kappa * (1.0 + E) * std::sqrt(cfg.problem.delta);
  const bool bounds_ok = h1_lhs <= h1_rhs && l2T_lhs <= l2T_rhs;

  json j = report_skeleton(cfg);
  j["result"] = to_json(res);
  j["errors"] = {{"sup", em.sup_error},
                 {"tail", em.tail_error},
                 {"t_star", t_star}};
  j["appr_bounds"] = {{"h1_lhs", h1_lhs},
                      {"h1_rhs", h1_rhs},
                      {"l2T_lhs", l2T_lhs},
                      {"l2T_rhs", l2T_rhs},
                      {"ok", bounds_ok}};

  bool qbv_ok = true;
  if (check_qbv) {
    const auto qres = backrec::qbv_reconstruct(problem);
    const double base = backrec::l2_norm(res.u0);
    const double gap = backrec::l2_norm(qres.u0 - res.u0);
    const double rel = base > 0 ? gap / base : gap;
    const double g2_defect = qres.qbv_g2_relative_defect.value_or(0.0);
    qbv_ok = rel <= 1e-8 && g2_defect <= 10 * c.inner_tolerance;
    j["qbv"] = {{"relative_gap", rel},
                {"g2_relative_defect", g2_defect},
                {"cg_iterations", qres.cg_iterations},
                {"ok", qbv_ok}};
  }

  const fs::path dir(cfg.output.dir);
  write_json(dir / "reconstruction.json", j);
  backrec::save_csv(res.u0, (dir / "u0.csv").string());
  backrec::save_binary(res.u0, (dir / "u0.bin").string());
  std::cout << "reconstruct: alpha = " << res.alpha << ", " << res.cg_iterations
            << " outer iterations, sup error " << em.sup_error << "\n";
  if (!bounds_ok)
    throw BoundViolation("reconstruction error bounds violated");
  if (!qbv_ok)
    throw BoundViolation("quasi-boundary value route disagrees with solve");
  return 0;
}

int run_sweep_cmd(const backrec::RunConfig& cfg, int jobs) {
  if (cfg.sweep.deltas.size() < 4)
    throw backrec::ConfigError(
        "key 'deltas' needs at least 4 noise levels for the rate fits");
  const auto c = backrec::make_case(cfg);
  backrec::SweepOptions<double> opts;
  opts.deltas = cfg.sweep.deltas;
  opts.seeds_per_delta = cfg.sweep.seeds;
  opts.base_seed = cfg.problem.seed;
  if (cfg.sweep.t_star) opts.t_star = *cfg.sweep.t_star;
  opts.jobs = jobs;
  const auto result = backrec::run_sweep(c, opts);

  const fs::path dir(cfg.output.dir);
  {
    std::ofstream os(dir / "sweep.csv", std::ios::binary);
    if (!os) throw std::runtime_error("cannot write sweep.csv");
    backrec::write_sweep_csv(os, result.points, backrec::provenance_lines(cfg));
  }
  json j = report_skeleton(cfg);
  j["E"] = result.E;
  j["M"] = result.M;
  j["all_bounds_ok"] = result.all_bounds_ok;
  j["fits"] = to_json(result.fits);
  write_json(dir / "fit.json", j);
  std::cout << "sweep: " << result.points.size() << " points, theta = "
            << result.fits.fitted_log.theta
            << ", mu = " << result.fits.fitted_intermediate.mu
            << ", bounds " << (result.all_bounds_ok ? "ok" : "VIOLATED")
            << "\n";
  if (!result.all_bounds_ok)
    throw BoundViolation("reconstruction error bounds violated in sweep");
  return 0;
}

int run_fit_rate(const backrec::RunConfig& cfg) {
  const fs::path in = fs::path(cfg.output.dir) / "sweep.csv";
  std::ifstream is(in);
  if (!is)
    throw backrec::ConfigError("fit-rate: cannot open " + in.string() +
                               " (run sweep first)");
  const auto points = backrec::read_sweep_csv<double>(is);
  const double t_star = cfg.sweep.t_star.value_or(cfg.mesh.horizon / 4);
  const auto fits = backrec::fit_from_points(points, t_star);

  json j = report_skeleton(cfg);
  j["fits"] = to_json(fits);
  write_json(fs::path(cfg.output.dir) / "fit.json", j);
  std::cout << "fit-rate: theta = " << fits.fitted_log.theta
            << ", mu = " << fits.fitted_intermediate.mu << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"backward parabolic initial-state reconstruction"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::string> out_dir;
  std::optional<std::string> scheme;
  std::optional<std::uint64_t> seed;
  int jobs = 1;
  bool check_qbv = false;

  app.add_option("--config", config_path, "run configuration file")
      ->required();
  app.add_option("--out", out_dir, "output directory (overrides [output] dir)");
  app.add_option("--scheme", scheme, "time scheme override: be | cn");
  app.add_option("--seed", seed, "noise seed override");
  app.add_option("--jobs", jobs, "parallel jobs for sweep");
  app.add_flag("--check-qbv", check_qbv,
               "also run the quasi-boundary value route and compare");

  auto* cmd_validate = app.add_subcommand("validate-field",
                                          "check field against declared bounds");
  auto* cmd_evolve = app.add_subcommand("evolve", "export a forward trajectory");
  auto* cmd_reconstruct =
      app.add_subcommand("reconstruct", "solve the inverse problem");
  auto* cmd_sweep = app.add_subcommand("sweep", "noise-level sweep + rate fits");
  auto* cmd_fit = app.add_subcommand("fit-rate", "refit rates from sweep.csv");
  for (auto* sub : {cmd_validate, cmd_evolve, cmd_reconstruct, cmd_sweep, cmd_fit})
    sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    backrec::RunConfig cfg = backrec::load_config(config_path);
    if (scheme) {
      if (*scheme != "be" && *scheme != "cn")
        throw backrec::ConfigError("--scheme must be 'be' or 'cn'");
      cfg.mesh.scheme = *scheme;
    }
    if (seed) cfg.problem.seed = *seed;
    if (out_dir) cfg.output.dir = *out_dir;
    fs::create_directories(cfg.output.dir);

    if (cmd_validate->parsed()) return run_validate_field(cfg);
    if (cmd_evolve->parsed()) return run_evolve(cfg);
    if (cmd_reconstruct->parsed()) return run_reconstruct(cfg, check_qbv);
    if (cmd_sweep->parsed()) return run_sweep_cmd(cfg, jobs);
    if (cmd_fit->parsed()) return run_fit_rate(cfg);
    return 2;
  } catch (const backrec::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const BoundViolation& e) {
    std::cerr << "assertion failure: " << e.what() << "\n";
    return 3;
  } catch (const backrec::SolveError& e) {
    std::cerr << "solver failure: " << e.what() << " (iterations "
              << e.iterations() << ", residual " << e.residual() << ")\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
