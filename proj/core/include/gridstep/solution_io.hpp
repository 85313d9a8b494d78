#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "gridstep/delta.hpp"
#include "gridstep/homotopy.hpp"
#include "gridstep/warm_start.hpp"

namespace gridstep {

std::string delta_to_json(const NetworkDelta& delta);
/// Throws ParseError on malformed JSON or an unknown change type.
NetworkDelta delta_from_json(std::string_view text);

struct Contingency {
  std::string id;
  NetworkDelta delta;
};

using ContingencyList = std::vector<Contingency>;

/// Accepts {"contingencies": [{"id", "delta"} | {"id", "branch"}]}. Throws ParseError on bad
/// JSON and ValidationError on repeated ids.
ContingencyList contingency_list_from_json(std::string_view text);
std::string contingency_list_to_json(const ContingencyList& list);

/// One outage per in-service branch, ids "branch-<id>".
ContingencyList single_branch_outages(const Network& net);

/// Throws ValidationError when an id repeats or a delta references a missing element.
void validate_contingencies(const Network& net, const ContingencyList& list);

std::string report_to_json(const SolveReport& report);
std::string path_to_json(const HomotopyPath& path);

std::string state_to_json(const SolverState& state);
SolverState state_from_json(std::string_view text);

/// Everything needed to re-create and check a solve: the delta applied to the case, the
/// family, and the full unknown vector with its layout.
struct SolutionFile {
  Family family = Family::PowerFlow;
  bool flow_limits = false;
  double epsilon = 0.0;  // Opf only
  NetworkDelta delta;
  SolverState state;
  SolveReport report;
  double objective = 0.0;
};

/// `net` is the solved network, apply_delta(case, delta). Besides the state the file carries
/// per-bus Vm/Va, per-generator Pg/Qg in MW/MVAr, the objective, multiplier extrema, the
/// report and, for warm starts, the homotopy path.
std::string solution_to_json(const Network& net, const FamilySolve& solve, const FamilyOptions& opts,
                             const NetworkDelta& delta);
SolutionFile solution_from_json(std::string_view text);

/// ‖F(X)‖∞ of the stored state against apply_delta(case_net, sol.delta) under the stored
/// family. Throws StructuralError if the layout does not match the rebuilt system.
double verify_solution(const Network& case_net, const SolutionFile& sol);

}  // namespace gridstep
