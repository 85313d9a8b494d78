#pragma once

#include <optional>
#include <string>

#include "gridstep/delta.hpp"
#include "gridstep/feasibility.hpp"
#include "gridstep/homotopy.hpp"
#include "gridstep/opf.hpp"
#include "gridstep/power_flow.hpp"

namespace gridstep {

enum class Family { PowerFlow, InfeasibilityPF, Opf };

std::string to_string(Family f);                             // "pf", "ipf", "opf"
std::optional<Family> family_from_string(const std::string& s);

struct FamilyOptions {
  Family family = Family::PowerFlow;
  PfOptions pf;                                 // PowerFlow, InfeasibilityPF
  bool flow_limits = false;                     // Opf
  std::optional<ContingencyTerms> contingency;  // Opf
  OpfOptions opf;                               // Opf cold solves; epsilon_final also fixes the warm target
  NewtonOptions newton;
  GammaSchedule schedule;
};

struct FamilySolve {
  NetworkPtr net;
  SystemPtr system;
  SolverState state;
  SolveReport report;
  HomotopyPath path;  // empty for cold solves
  double objective = 0.0;  // generation cost ($/h) for Opf, ‖I_slack‖² for InfeasibilityPF
};

/// Validated system of the family on `net`. Opf gives the KKT system at epsilon_final.
SystemPtr build_family_system(NetworkPtr net, const FamilyOptions& opts);

/// Default starting point: flat start (PowerFlow), cold_start of the infeasibility system, or the
/// OPF cold start.
SolverState family_cold_start(const EquationSystem& sys, const FamilyOptions& opts);

/// PowerFlow and InfeasibilityPF: Newton from the cold start. Opf: ε-continuation.
FamilySolve cold_solve(NetworkPtr net, const FamilyOptions& opts);

/// Moves `prev` onto the layout of `target`. Carried entries keep their values. New voltages take
/// the bus's value in `prev` when present, else 1∠0. New Qg, slacks and λ start at 0. For the
/// KKT system a new Pg/Qg starts at its window midpoint, entries are pushed strictly inside
/// their bounds, and every μ that is not positive becomes ε/(−h).
SolverState reconcile_state(const SolverState& prev, const EquationSystem& target, const FamilyOptions& opts);

/// Network-Stepping from a converged solution of `prev_net`: builds the target on
/// apply_delta(prev_net, delta), reconciles the layout and traces γ from 1 to 0.
/// Throws ValidationError for an invalid target and HomotopyStalled when the trace stalls.
FamilySolve warm_start_solve(NetworkPtr prev_net, const SolverState& prev, const NetworkDelta& delta,
                             const FamilyOptions& opts);

/// Trace onto an already-built target from a state of any compatible layout.
FamilySolve warm_start_on(NetworkPtr net, SystemPtr target, const SolverState& prev, const FamilyOptions& opts);

}  // namespace gridstep
