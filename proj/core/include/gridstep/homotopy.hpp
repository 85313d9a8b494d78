#pragma once

#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "gridstep/newton.hpp"
#include "gridstep/system.hpp"

namespace gridstep {

/// R = F(x_prev) for a state already laid out for `target`. Throws StructuralError on a layout
/// mismatch.
Eigen::VectorXd extract_residual(const EquationSystem& target, const SolverState& x_prev);

/// H(X, γ) = F(X) − γ·R with R fixed. At γ = 0 the target is evaluated untouched.
class HomotopySystem : public EquationSystem {
 public:
  HomotopySystem(SystemPtr target, Eigen::VectorXd r, double gamma);

  const LayoutPtr& layout() const override { return target_->layout(); }
  ResidualJacobian evaluate(const SolverState& x) const override;
  Eigen::VectorXd residual(const SolverState& x) const override;
  double max_step(const SolverState& x, const Eigen::VectorXd& dx) const override { return target_->max_step(x, dx); }
  std::string row_label(Index row) const override { return target_->row_label(row); }

  double gamma() const { return gamma_; }
  const Eigen::VectorXd& injection() const { return r_; }
  const EquationSystem& target() const { return *target_; }

 private:
  SystemPtr target_;
  Eigen::VectorXd r_;
  double gamma_;
};

struct GammaSchedule {
  double initial_step = 0.25;
  double shrink = 0.5;  // on a failed sub-problem
  double grow = 1.5;    // on success
  double max_step = 0.5;
  double min_step = 1e-4;
  /// Residual tolerance for sub-problems with γ > 0; zero means the Newton tolerance. Only the
  /// γ = 0 point has to meet the Newton tolerance.
  double intermediate_tol = 1e-2;
  /// Cap on sub-problem attempts (accepted plus rejected) before the trace is declared stalled.
  int max_stages = 100;

  void validate() const;  // throws InputError
};

struct HomotopyRecord {
  double gamma = 1.0;
  double residual_norm = 0.0;  // ‖H(x, γ)‖∞ at the accepted state
  SolveReport report;
};

/// Accepted points of the path, γ strictly decreasing from 1 to 0. Failed attempts are listed
/// separately; their iterations still count towards the total.
struct HomotopyPath {
  std::vector<HomotopyRecord> records;
  std::vector<HomotopyRecord> rejected;
  double injection_norm = 0.0;  // ‖R‖∞

  int total_iterations() const;
};

struct TraceResult {
  SolverState state;
  HomotopyPath path;
  SolveReport report;
};

/// Raised when the step falls below min_step, when max_stages attempts are used up, or at once when a sub-problem hits a singular
/// Jacobian (the path has lost full rank). Carries the last accepted point.
class HomotopyStalled : public std::runtime_error {
 public:
  HomotopyStalled(const std::string& what, double gamma, SolverState state, HomotopyPath path, SolveReport report)
      : std::runtime_error(what), gamma_(gamma), state_(std::move(state)), path_(std::move(path)), report_(std::move(report)) {}

  double gamma() const noexcept { return gamma_; }
  const SolverState& state() const noexcept { return state_; }
  const HomotopyPath& path() const noexcept { return path_; }
  const SolveReport& report() const noexcept { return report_; }

 private:
  double gamma_;
  SolverState state_;
  HomotopyPath path_;
  SolveReport report_;
};

/// Traces γ: 1 → 0 from x_prev. With ‖R‖∞ ≤ tol the trace collapses to one Newton polish at
/// γ = 0. The report's iterations are summed over every sub-problem attempt.
TraceResult trace(SystemPtr target, const SolverState& x_prev, const GammaSchedule& sched = {},
                  const NewtonOptions& opts = {});

}  // namespace gridstep
