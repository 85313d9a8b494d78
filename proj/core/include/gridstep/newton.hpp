#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gridstep/system.hpp"

namespace gridstep {

enum class Limiting { Off, VoltageClamp };

struct NewtonOptions {
  double tol = 1e-8;  // infinity norm of the residual
  int max_iter = 50;
  Limiting limiting = Limiting::VoltageClamp;
  double delta_max = 0.1;  // per-unit, per Vr/Vi entry and iteration
  /// Divergence is declared once the residual norm exceeds diverge_norm·max(1, ‖F(x0)‖∞).
  double diverge_norm = 1e6;
  double pivot_threshold = 1.0;
  double near_singular_ratio = 1e-13;  // pivot ratio below which the condition flag is raised
};

enum class SolveStatus {
  Converged,
  MaxIterations,
  Diverged,
  SingularJacobian,
  NumericalBreakdown,
  HomotopyStalled,
  InvalidInput,
};

enum class ConditionFlag { Ok, NearSingular, Singular };

std::string to_string(SolveStatus s);
std::string to_string(ConditionFlag c);

struct SolveReport {
  SolveStatus status = SolveStatus::MaxIterations;
  bool converged = false;
  int iterations = 0;
  std::vector<double> residual_history;  // ‖F‖∞ at every iterate, including x0
  ConditionFlag condition = ConditionFlag::Ok;
  double min_pivot_ratio = 1.0;
  Index singular_index = -1;
  double wall_time = 0.0;  // seconds
  std::string message;
  /// Family-specific scalars (objective, block norms, epsilon, slack norm, ...).
  std::map<std::string, double> metrics;

  double final_residual() const { return residual_history.empty() ? INFINITY : residual_history.back(); }
};

struct NewtonResult {
  SolverState state;
  SolveReport report;
};

/// Damped Newton-Raphson: x ← x + α·Δx with J·Δx = −F, Δx clamped per the limiting rule and
/// α = sys.max_step(x, Δx). A singular Jacobian or non-finite values stop the iteration with
/// the last iterate preserved. Throws InputError if x0 does not match the layout or is not finite.
NewtonResult newton_solve(const EquationSystem& sys, const SolverState& x0, const NewtonOptions& opts = {});

/// Clamps Vr/Vi entries of dx to ±delta_max, leaving signs unchanged.
void clamp_voltage_step(const StateLayout& layout, Eigen::VectorXd& dx, double delta_max);

double inf_norm(const Eigen::VectorXd& v);

}  // namespace gridstep
