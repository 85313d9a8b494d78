#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gridstep/solution_io.hpp"
#include "gridstep/warm_start.hpp"

namespace gridstep {

enum class Method { Cold, NetworkStepping };

std::string to_string(Method m);  // "cold", "netstep"
std::optional<Method> method_from_string(const std::string& s);

struct InstanceResult {
  std::string id;
  bool converged = false;
  int iterations = 0;
  double time_s = 0.0;
  double objective = 0.0;   // $/h for OPF, ‖I_slack‖² for IPF, 0 for PF
  double slack_norm = 0.0;  // ‖I_slack‖₂ where the family has slacks
  std::optional<int> cold_iterations;
  std::string message;
  std::vector<double> vm, va_deg;  // bus order; filled by Monte Carlo only
};

struct StudyAggregate {
  std::size_t instances = 0;
  std::size_t converged = 0;
  double convergence_rate = 0.0;
  double mean_iterations = 0.0;
  double median_iterations = 0.0;
  int max_iterations = 0;
  double total_time_s = 0.0;
  double mean_time_s = 0.0;
  std::optional<double> mean_cold_iterations;
  std::optional<double> median_cold_iterations;
};

/// Statistics over every row, converged or not.
StudyAggregate aggregate(const std::vector<InstanceResult>& rows);

struct StudyResult {
  std::vector<InstanceResult> rows;  // sorted by id for batches, sample order for Monte Carlo
  StudyAggregate stats;
  double wall_time_s = 0.0;
  int jobs = 1;
};

/// id, converged, iterations, time_s, objective, slack_norm[, cold_iterations]. Without
/// `with_time` the time_s column is left out, which makes the table reproducible bit for bit.
std::string results_csv(const StudyResult& r, bool with_time = true);

struct SingleStudy {
  StudyResult result;  // one row
  FamilySolve solve;
  NetworkDelta delta;
};

/// Solves apply_delta(case_net, delta). NetworkStepping needs `warm`, the solution of
/// case_net under the same family; a missing warm start is an InputError.
SingleStudy run_single(NetworkPtr case_net, const FamilyOptions& opts, Method method, const NetworkDelta& delta = {},
                       const SolverState* warm = nullptr);
/// run_single restricted to the PowerFlow and InfeasibilityPF families.
SingleStudy run_powerflow(NetworkPtr case_net, const FamilyOptions& opts, Method method,
                          const NetworkDelta& delta = {}, const SolverState* warm = nullptr);
/// run_single with the Opf family.
SingleStudy run_opf(NetworkPtr case_net, FamilyOptions opts, Method method, const NetworkDelta& delta = {},
                    const SolverState* warm = nullptr);

enum class ContingencyMode { PowerFlow, InfeasibilityPF, ContingencyOpf };

struct ContingencyOptions {
  ContingencyMode mode = ContingencyMode::InfeasibilityPF;
  FamilyOptions family;  // Newton, schedule and OPF settings; family itself follows `mode`
  Method method = Method::NetworkStepping;
  int jobs = 1;
  bool compare_cold = false;   // also solve every instance cold and record its iterations
  double ramp = 1.0;           // ContingencyOpf: uniform |Pg − Pg⁰| window, per-unit
  double slack_weight = 1e8;   // ContingencyOpf
};

/// Solves the base case once (cold), then every contingency from it. Per-instance failures
/// (validation, stalls, non-convergence) are recorded in the row and the batch continues.
/// Rows come back sorted by id; the table does not depend on `jobs`.
StudyResult run_contingency_batch(NetworkPtr net, const ContingencyList& list, const ContingencyOptions& opts);

struct MonteCarloSpec {
  int samples = 100;
  double sigma = 0.2;
  std::uint64_t seed = 1;
  bool loads = true;
  bool renewables = true;

  void validate() const;  // throws InputError
};

/// Independent multipliers max(0, 1 + σ·z), z ~ N(0, 1) from mt19937_64(seed): one per load
/// bus (LoadScale) and one per in-service renewable generator (GenSetpoint on p_set).
std::vector<NetworkDelta> draw_samples(const Network& net, const MonteCarloSpec& spec);

struct Histogram {
  int bus = 0;
  std::vector<double> edges;  // bins + 1 ascending edges
  std::vector<int> counts;
};

/// Equal-width bins over [min, max] of the values. A range within solver noise (1e-9
/// relative) gives one bin.
Histogram make_histogram(int bus, const std::vector<double>& values, int bins);
/// bus, bin_low, bin_high, count
std::string histogram_csv(const std::vector<Histogram>& hs);

struct MonteCarloOptions {
  FamilyOptions family;
  Method method = Method::NetworkStepping;
  int jobs = 1;
  bool compare_cold = false;
  int bins = 20;
  std::vector<int> buses;  // histogram buses; empty means all
};

struct MonteCarloResult {
  StudyResult result;
  std::vector<Histogram> vm, va_deg;
  FamilySolve ideal;
};

/// Every sample is warm-started from the ideal-case solution, never from another sample.
MonteCarloResult run_montecarlo(NetworkPtr net, const MonteCarloSpec& spec, const MonteCarloOptions& opts);

}  // namespace gridstep
