#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <iostream>

#include "gridstep/case_io.hpp"
#include "gridstep/errors.hpp"
#include "gridstep/studies.hpp"

namespace fs = std::filesystem;
using namespace gridstep;

namespace {

constexpr int kOk = 0, kUsage = 1, kInput = 2, kSolve = 3;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string case_file;
  std::string warm_start;
  std::string delta_file;
  std::string out_dir = ".";
  std::string method = "cold";
  std::string family = "pf";
  double tol = 1e-8;
  int max_iter = 50;
  int jobs = 1;
};

void add_common(CLI::App* app, Common& c, bool warm) {
  app->add_option("--case", c.case_file, "MATPOWER .m case or network .json")->required()->check(CLI::ExistingFile);
  if (warm) {
    app->add_option("--warm-start", c.warm_start, "solution JSON of the --case network")->check(CLI::ExistingFile);
    app->add_option("--delta", c.delta_file, "delta JSON applied to --case")->check(CLI::ExistingFile);
    app->add_option("--method", c.method, "cold | netstep")->check(CLI::IsMember({"cold", "netstep"}));
  }
  app->add_option("--out", c.out_dir, "output directory");
  app->add_option("--tol", c.tol, "Newton residual tolerance (inf-norm)")->check(CLI::PositiveNumber);
  app->add_option("--max-iter", c.max_iter, "Newton iteration limit per solve")->check(CLI::PositiveNumber);
}

FamilyOptions family_options(const Common& c, Family f) {
  FamilyOptions o;
  o.family = f;
  o.newton.tol = c.tol;
  o.newton.max_iter = c.max_iter;
  return o;
}

void write_out(const Common& c, const std::string& name, const std::string& text) {
  fs::create_directories(c.out_dir);
  write_text_file((fs::path(c.out_dir) / name).string(), text);
}

void print_stats(const StudyResult& r) {
  const auto& s = r.stats;
  std::printf("instances %zu, converged %zu (%.1f%%), iterations mean %.2f median %.1f max %d\n", s.instances,
              s.converged, 100.0 * s.convergence_rate, s.mean_iterations, s.median_iterations, s.max_iterations);
  if (s.mean_cold_iterations)
    std::printf("cold-start iterations mean %.2f median %.1f\n", *s.mean_cold_iterations, *s.median_cold_iterations);
  const double speedup = r.wall_time_s > 0.0 ? s.total_time_s / r.wall_time_s : 0.0;
  std::printf("wall %.3f s, summed instance time %.3f s, jobs %d (speedup %.2fx)\n", r.wall_time_s, s.total_time_s, r.jobs,
              speedup);
}

int run_single_cmd(const Common& c, Family f, bool flow_limits) {
  const auto net = std::make_shared<const Network>(load_network(c.case_file));
  FamilyOptions opts = family_options(c, f);
  opts.flow_limits = flow_limits;
  const Method method = *method_from_string(c.method);
  NetworkDelta delta;
  if (!c.delta_file.empty()) delta = delta_from_json(read_text_file(c.delta_file));
  SolverState warm;
  if (method == Method::NetworkStepping) {
    if (c.warm_start.empty() || c.delta_file.empty()) throw UsageError("--method netstep needs --warm-start and --delta");
    const auto sol = solution_from_json(read_text_file(c.warm_start));
    if (sol.family != f) throw UsageError("warm-start solution was produced by family " + to_string(sol.family));
    warm = sol.state;
  }
  const auto r = run_single(net, opts, method, delta, method == Method::NetworkStepping ? &warm : nullptr);
  write_out(c, "solution.json", solution_to_json(*r.solve.net, r.solve, opts, delta));
  write_out(c, "results.csv", results_csv(r.result));
  const auto& row = r.result.rows[0];
  std::printf("%s %s: %s in %d iterations, residual %.3e", to_string(f).c_str(), c.method.c_str(),
              row.converged ? "converged" : "FAILED", row.iterations, r.solve.report.final_residual());
  if (f == Family::Opf) std::printf(", objective %.6f $/h", row.objective);
  if (f == Family::InfeasibilityPF) std::printf(", slack norm %.3e", row.slack_norm);
  std::printf("\n");
  if (!row.converged) {
    std::fprintf(stderr, "solve failed: %s\n", row.message.c_str());
    return kSolve;
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gridstep: AC power flow, infeasibility power flow and OPF with Network-Stepping warm starts"};
  app.require_subcommand(1);

  Common pf, opf, ctg, mc;
  bool flow_limits = false;
  auto* pf_cmd = app.add_subcommand("pf", "power flow (pf) or infeasibility power flow (ipf)");
  add_common(pf_cmd, pf, true);
  pf_cmd->add_option("--family", pf.family, "pf | ipf")->check(CLI::IsMember({"pf", "ipf"}));

  auto* opf_cmd = app.add_subcommand("opf", "AC optimal power flow");
  add_common(opf_cmd, opf, true);
  opf_cmd->add_flag("--flow-limits", flow_limits, "enforce branch current limits");

  std::string list_file;
  double ramp = 1.0, slack_weight = 1e8;
  bool compare_cold = false;
  auto* ctg_cmd = app.add_subcommand("contingency", "batch of outages warm-started from the base case");
  add_common(ctg_cmd, ctg, false);
  ctg_cmd->add_option("--list", list_file, "contingency list JSON (default: every in-service branch)")
      ->check(CLI::ExistingFile);
  ctg_cmd->add_option("--family", ctg.family, "pf | ipf | opf (contingency OPF)")->check(CLI::IsMember({"pf", "ipf", "opf"}));
  ctg_cmd->add_option("--method", ctg.method, "cold | netstep")->check(CLI::IsMember({"cold", "netstep"}));
  ctg_cmd->add_option("--jobs", ctg.jobs, "worker threads")->check(CLI::PositiveNumber);
  ctg_cmd->add_option("--ramp", ramp, "contingency OPF ramp window, per-unit")->check(CLI::NonNegativeNumber);
  ctg_cmd->add_option("--slack-weight", slack_weight, "contingency OPF slack weight")->check(CLI::PositiveNumber);
  ctg_cmd->add_flag("--compare-cold", compare_cold, "also solve each instance cold");
  ctg.method = "netstep";
  ctg.family = "ipf";

  MonteCarloSpec spec;
  int bins = 20;
  bool mc_compare = false;
  auto* mc_cmd = app.add_subcommand("montecarlo", "Gaussian load / renewable sampling around the ideal case");
  add_common(mc_cmd, mc, false);
  mc_cmd->add_option("--samples", spec.samples, "number of samples")->check(CLI::PositiveNumber);
  mc_cmd->add_option("--sigma", spec.sigma, "relative standard deviation")->check(CLI::NonNegativeNumber);
  mc_cmd->add_option("--seed", spec.seed, "RNG seed");
  mc_cmd->add_option("--jobs", mc.jobs, "worker threads")->check(CLI::PositiveNumber);
  mc_cmd->add_option("--family", mc.family, "pf | ipf | opf")->check(CLI::IsMember({"pf", "ipf", "opf"}));
  mc_cmd->add_option("--method", mc.method, "cold | netstep")->check(CLI::IsMember({"cold", "netstep"}));
  mc_cmd->add_option("--bins", bins, "histogram bins")->check(CLI::PositiveNumber);
  mc_cmd->add_flag("--compare-cold", mc_compare, "also solve each sample cold");
  mc.method = "netstep";

  std::string sol_file;
  Common ver;
  auto* ver_cmd = app.add_subcommand("verify", "re-check a solution file against its case and delta");
  ver_cmd->add_option("--case", ver.case_file, "case the solution's delta applies to")->required()->check(CLI::ExistingFile);
  ver_cmd->add_option("--solution", sol_file, "solution JSON")->required()->check(CLI::ExistingFile);
  ver_cmd->add_option("--tol", ver.tol, "residual tolerance")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (pf_cmd->parsed()) return run_single_cmd(pf, *family_from_string(pf.family), false);
    if (opf_cmd->parsed()) return run_single_cmd(opf, Family::Opf, flow_limits);

    if (ctg_cmd->parsed()) {
      const auto net = std::make_shared<const Network>(load_network(ctg.case_file));
      const ContingencyList list =
          list_file.empty() ? single_branch_outages(*net) : contingency_list_from_json(read_text_file(list_file));
      ContingencyOptions o;
      o.family = family_options(ctg, Family::PowerFlow);
      o.mode = ctg.family == "pf"    ? ContingencyMode::PowerFlow
               : ctg.family == "ipf" ? ContingencyMode::InfeasibilityPF
                                     : ContingencyMode::ContingencyOpf;
      o.method = *method_from_string(ctg.method);
      o.jobs = ctg.jobs;
      o.ramp = ramp;
      o.slack_weight = slack_weight;
      o.compare_cold = compare_cold;
      const auto r = run_contingency_batch(net, list, o);
      write_out(ctg, "results.csv", results_csv(r));
      print_stats(r);
      return kOk;
    }

    if (mc_cmd->parsed()) {
      const auto net = std::make_shared<const Network>(load_network(mc.case_file));
      MonteCarloOptions o;
      o.family = family_options(mc, *family_from_string(mc.family));
      o.method = *method_from_string(mc.method);
      o.jobs = mc.jobs;
      o.bins = bins;
      o.compare_cold = mc_compare;
      const auto r = run_montecarlo(net, spec, o);
      write_out(mc, "results.csv", results_csv(r.result));
      write_out(mc, "histogram_vm.csv", histogram_csv(r.vm));
      write_out(mc, "histogram_va.csv", histogram_csv(r.va_deg));
      print_stats(r.result);
      return kOk;
    }

    if (ver_cmd->parsed()) {
      const Network net = load_network(ver.case_file);
      const auto sol = solution_from_json(read_text_file(sol_file));
      const double res = verify_solution(net, sol);
      std::printf("residual %.3e (tol %.1e): %s\n", res, ver.tol, res <= ver.tol ? "ok" : "FAILED");
      return res <= ver.tol ? kOk : kSolve;
    }
  } catch (const UsageError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return kUsage;
  } catch (const InputError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return kUsage;
  } catch (const ParseError& e) {
    std::fprintf(stderr, "parse error: %s\n", e.what());
    return kInput;
  } catch (const ValidationError& e) {
    std::fprintf(stderr, "validation error: %s\n", e.what());
    return kInput;
  } catch (const StructuralError& e) {
    std::fprintf(stderr, "structural error: %s\n", e.what());
    return kInput;
  } catch (const HomotopyStalled& e) {
    std::fprintf(stderr, "homotopy stalled at gamma %.6g: %s\n", e.gamma(), e.what());
    return kSolve;
  } catch (const StatusError& e) {
    std::fprintf(stderr, "solve failed: %s\n", e.what());
    return kSolve;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kSolve;
  }
  return kUsage;
}
