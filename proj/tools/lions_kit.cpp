// lions-kit: solve, verify and converge subcommands.

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "lions/config.hpp"
#include "lions/io.hpp"
#include "lions/suites.hpp"

namespace {

namespace fs = std::filesystem;
using lions::Index;
using lions::config::Json;
using lions::config::RunConfig;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitInvariant = 3;

// Largest (N+1) n for which the dense stability constant is computed.
constexpr Index kStabilityMaxDim = 600;

void report_error(const std::string& type, const std::string& message, const std::string& path = "", int line = 0) {
  Json e{{"type", type}, {"message", message}};
  if (!path.empty()) e["path"] = path;
  if (line > 0) e["line"] = line;
  std::cerr << Json{{"error", e}}.dump() << "\n";
}

fs::path output_dir(const RunConfig& cfg, const std::string& override_dir) {
  fs::path dir = override_dir.empty() ? fs::path(cfg.output.directory) : fs::path(override_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw lions::Error("cannot create output directory '" + dir.string() + "': " + ec.message());
  return dir;
}

template <class Scalar>
double relative_gap(const lions::DiscreteSolution<Scalar>& a, const lions::DiscreteSolution<Scalar>& b) {
  return (a.values - b.values).norm() / std::max(a.values.norm(), 1e-300);
}

template <class Scalar>
int run_solve(const RunConfig& cfg, const std::string& out, bool timing) {
  const auto start = std::chrono::steady_clock::now();
  const auto built = lions::config::build<Scalar>(cfg.problem);
  const auto& p = built.problem;
  const Index n = p.n(), steps = cfg.steps;
  const double theta = cfg.theta;

  const auto primary = cfg.solver == "shooting" ? lions::solve_shooting(p, steps, theta, cfg.tolerances)
                                                : lions::solve_all_at_once(p, steps, theta, cfg.tolerances);
  const auto other = cfg.solver == "shooting" ? lions::solve_all_at_once(p, steps, theta, cfg.tolerances)
                                              : lions::solve_shooting(p, steps, theta, cfg.tolerances);
  const auto& dg = primary.diagnostics;
  const double prop = lions::propagator_contraction(p, steps, theta, true, cfg.tolerances.propagator);
  const auto fc = lions::sample_form(p.triple, p.form, p.horizon, steps);

  Json stability = nullptr;
  std::string note;
  if (theta != 0.5) {
    note = "computed only for theta = 1/2, where the scheme is the discrete strong problem";
  } else if ((steps + 1) * n > kStabilityMaxDim) {
    note = "skipped: (N+1) n exceeds " + std::to_string(kStabilityMaxDim);
  } else {
    const auto di = lions::discretize(p, steps);
    const auto c = lions::discrete_contraction(p, di);
    stability = lions::io::number(lions::stability_constant(di.inst, lions::discrete_operator(p, di, theta), c));
  }

  Json exact_error = nullptr;
  if (built.exact) {
    double e = 0.0;
    for (Index k = 0; k <= steps; ++k)
      e = std::max(e, p.triple.H().norm(primary.values.col(k) - built.exact(primary.grid[static_cast<std::size_t>(k)])));
    exact_error = e;
  }

  Json diag{{"schema_version", 1},
            {"command", "solve"},
            {"field", cfg.problem.field},
            {"dimension", n},
            {"steps", steps},
            {"theta", theta},
            {"horizon", p.horizon},
            {"solver", cfg.solver},
            {"phi_preset", cfg.problem.phi.preset},
            {"phi_norm", p.phi_norm()},
            {"coercivity_sampled", lions::io::number(fc.alpha)},
            {"continuity_sampled", lions::io::number(fc.bound)},
            {"boundary_residual", dg.boundary_residual},
            {"stepping_residual", dg.stepping_residual},
            {"w_norm", dg.w_norm},
            {"propagator_norm", prop},
            {"coupling_sigma_min", lions::io::number(cfg.solver == "shooting" ? dg.coupling_sigma_min
                                                                               : other.diagnostics.coupling_sigma_min)},
            {"stability_constant", stability},
            {"stability_note", note},
            {"cross_solver_gap", relative_gap(primary, other)},
            {"exact_error", exact_error},
            {"final_state", lions::io::vector_json<Scalar>(primary.values.col(steps))}};
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (timing) diag["wall_time_seconds"] = seconds;

  const fs::path dir = output_dir(cfg, out);
  lions::io::write_file((dir / cfg.output.trajectory).string(), lions::io::trajectory_csv(primary));
  lions::io::write_file((dir / cfg.output.diagnostics).string(), diag.dump(2) + "\n");
  std::printf("solved N=%ld theta=%g n=%ld: boundary_residual=%.3e propagator_norm=%.17g\n", static_cast<long>(steps),
              theta, static_cast<long>(n), dg.boundary_residual, prop);
  std::printf("wrote %s and %s\n", (dir / cfg.output.trajectory).string().c_str(),
              (dir / cfg.output.diagnostics).string().c_str());
  std::fprintf(stderr, "wall time %.3f s\n", seconds);
  return kExitOk;
}

template <class Scalar>
int run_converge(const RunConfig& cfg, const std::string& out) {
  if (!cfg.problem.manufactured())
    throw lions::config::ConfigError("problem.f.preset",
                                     "convergence studies need a manufactured load (closed-form solution)");
  const auto built = lions::config::build<Scalar>(cfg.problem);
  const auto rows = lions::convergence_study(built.problem, built.exact, cfg.convergence_steps, cfg.convergence_thetas);
  const std::string csv = lions::io::convergence_csv(rows);
  const fs::path dir = output_dir(cfg, out);
  lions::io::write_file((dir / cfg.output.convergence).string(), csv);
  std::fputs(csv.c_str(), stdout);
  return kExitOk;
}

int run_verify(const std::string& suite, std::uint64_t seed, std::optional<double> tol, const std::string& out) {
  const auto start = std::chrono::steady_clock::now();
  lions::SuiteOptions opts;
  opts.seed = seed;
  opts.tol = tol;
  const auto results = lions::run_suites(suite, opts);
  int passed = 0;
  Json report = Json::array();
  for (const auto& r : results) {
    const bool ok = r.passed();
    passed += ok;
    std::printf("%s %s/%s count=%d failures=%d worst=%.6e tol=%.3e (%s)\n", ok ? "PASS" : "FAIL", r.suite.c_str(),
                r.name.c_str(), r.count, r.failures, r.worst, r.tol, r.kind.c_str());
    if (!ok && !r.witness.empty()) std::printf("     witness: %s\n", r.witness.c_str());
    report.push_back(Json{{"suite", r.suite},
                          {"name", r.name},
                          {"passed", ok},
                          {"count", r.count},
                          {"failures", r.failures},
                          {"worst", lions::io::number(r.worst)},
                          {"tol", r.tol},
                          {"kind", r.kind},
                          {"witness", r.witness}});
  }
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::printf("%d/%zu checks passed (suite=%s seed=%llu) in %.2f s\n", passed, results.size(), suite.c_str(),
              static_cast<unsigned long long>(seed), seconds);
  if (!out.empty()) {
    std::error_code ec;
    fs::create_directories(out, ec);
    lions::io::write_file((fs::path(out) / "verify.json").string(),
                          Json{{"suite", suite}, {"seed", seed}, {"checks", report}}.dump(2) + "\n");
  }
  return passed == static_cast<int>(results.size()) ? kExitOk : kExitInvariant;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Time-periodic and initial-value evolution problems via derivations and boundary structures"};
  app.require_subcommand(1);

  std::string config_path, out_dir, suite = "all";
  std::uint64_t seed = 7;
  std::optional<double> tol;
  bool timing = false;

  auto* solve = app.add_subcommand("solve", "solve the discretized evolution problem of a config");
  solve->add_option("--config", config_path, "JSON run configuration")->required();
  solve->add_option("--out", out_dir, "output directory (overrides output.directory)");
  solve->add_flag("--timing", timing, "record wall time in the diagnostics JSON");

  auto* converge = app.add_subcommand("converge", "convergence table against the manufactured solution");
  converge->add_option("--config", config_path, "JSON run configuration")->required();
  converge->add_option("--out", out_dir, "output directory (overrides output.directory)");

  auto* verify = app.add_subcommand("verify", "run the randomized property suites");
  verify->add_option("--suite", suite, "rtl | derivation | evolution | all")
      ->check(CLI::IsMember({"rtl", "derivation", "evolution", "all"}));
  verify->add_option("--seed", seed, "random seed");
  verify->add_option("--tol", tol, "override every check's tolerance");
  verify->add_option("--out", out_dir, "directory for verify.json");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*verify) return run_verify(suite, seed, tol, out_dir);
    const RunConfig cfg = lions::config::load(config_path);
    const bool complex = cfg.problem.field == "complex";
    if (*solve) return complex ? run_solve<lions::Complex>(cfg, out_dir, timing) : run_solve<double>(cfg, out_dir, timing);
    return complex ? run_converge<lions::Complex>(cfg, out_dir) : run_converge<double>(cfg, out_dir);
  } catch (const lions::config::ConfigError& e) {
    report_error("config", e.detail(), e.path(), e.line());
    return kExitConfig;
  } catch (const lions::PreconditionError& e) {
    report_error("precondition", e.what());
    return kExitInvariant;
  } catch (const lions::InvariantViolation& e) {
    report_error("invariant", e.what());
    return kExitInvariant;
  } catch (const lions::Error& e) {
    report_error("io", e.what());
    return 1;
  }
}
