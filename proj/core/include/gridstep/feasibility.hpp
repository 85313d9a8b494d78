#pragma once

#include <memory>
#include <string>
#include <vector>

#include "gridstep/newton.hpp"
#include "gridstep/power_flow.hpp"

namespace gridstep {

/// Least-squares slack-current power flow: minimize ‖I_slack‖² subject to the current balance
/// with a free injection I_slack at every bus that has balance rows.
///
/// Layout: [Vr, Vi, Qg, SlackRe, SlackIm, Lambda]. The slack current is injected into the bus.
/// One multiplier per balance-system row, including pin, magnitude and reference rows.
/// Rows: stationarity in X, stationarity in I_slack (2·I_slack + λ), then the constraints
/// g(X, I_slack) = I_slack − F_pf(X) on balance rows and −F_pf(X) on the others.
///
/// Islands without a slack bus get virtual references (see build_pf_model), so outages that
/// split the network still yield a well-posed problem.
class InfeasibilitySystem : public EquationSystem {
 public:
  InfeasibilitySystem(NetworkPtr net, PfOptions opts = {});

  const LayoutPtr& layout() const override { return layout_; }
  ResidualJacobian evaluate(const SolverState& x) const override;
  std::string row_label(Index row) const override;

  const Network& network() const { return *net_; }
  const NetworkPtr& network_ptr() const { return net_; }
  const PfModel& model() const { return model_; }
  /// Buses carrying a slack injection, in layout order.
  const std::vector<int>& slack_buses() const { return slack_buses_; }

  /// Flat voltages, zero Qg, slack and λ. Buses of an island without a slack bus start at
  /// Vr = |V|, Vi = 0.
  SolverState cold_start() const;
  /// cold_start with the slack taking up the flat-start mismatch and λ = −2·I_slack on the
  /// balance rows. From an all-zero λ the Newton step never moves λ while the power-flow
  /// Jacobian is nonsingular, so the iteration is plain power flow; this start leaves that
  /// subspace.
  SolverState seeded_start() const;

 private:
  void assemble(const Eigen::VectorXd& z, StampAccumulator& acc) const;

  NetworkPtr net_;
  PfOptions opts_;
  PfModel model_;
  LayoutPtr layout_;
  std::vector<int> slack_buses_;
  std::vector<Index> slack_rows_re_, slack_rows_im_;  // constraint-local rows fed by each slack
  Index n_x_ = 0, n_s_ = 0, n_g_ = 0;
  SparsePattern pattern_;
};

/// Tolerates islands without a slack bus; other validation failures throw ValidationError.
std::shared_ptr<const InfeasibilitySystem> build_infeasibility_system(NetworkPtr net, PfOptions opts = {});

/// Newton from cold_start, then once more from seeded_start if that fails. The report covers
/// both attempts.
NewtonResult solve_infeasibility(const InfeasibilitySystem& sys, const NewtonOptions& opts = {});

struct SlackInjection {
  int bus_id = 0;
  double slack_re = 0.0;
  double slack_im = 0.0;
  double magnitude = 0.0;
};

struct InfeasibilityReport {
  std::vector<SlackInjection> buses;  // descending magnitude, ties by bus id
  double total = 0.0;                 // ‖I_slack‖²
};

/// Throws StatusError if the solve did not converge or the state lacks slack segments.
InfeasibilityReport infeasibility_report(const SolverState& state, const SolveReport& report);

std::string infeasibility_report_json(const InfeasibilityReport& r);

}  // namespace gridstep
