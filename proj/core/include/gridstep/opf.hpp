#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "gridstep/delta.hpp"
#include "gridstep/network.hpp"
#include "gridstep/newton.hpp"
#include "gridstep/system.hpp"

namespace gridstep {

/// Extra terms of a per-outage OPF: slack currents priced at `slack_weight`·‖I_slack‖² and
/// ramp windows |Pg − Pg⁰| ≤ r around a base dispatch.
struct ContingencyTerms {
  double slack_weight = 1e8;
  std::map<int, double> base_dispatch;  // Pg⁰ by generator id, per-unit
  std::map<int, double> ramp;           // r by generator id; generators absent here have no ramp rows
};

/// AC OPF over bus voltages and per-generator dispatch. Inequalities: generator P/Q boxes,
/// squared voltage-magnitude bounds, ramp windows (contingency only) and, with
/// `flow_limits`, squared branch-current limits at both ends (rating / 1 p.u. voltage).
struct OpfProblem {
  NetworkPtr net;
  bool flow_limits = false;
  std::optional<ContingencyTerms> contingency;
};

using ContingencyOpfProblem = OpfProblem;

struct KktModel;

struct KktBlockNorms {
  double stationarity = 0.0;
  double equality = 0.0;
  double complementarity = 0.0;  // max |μ_i h_i + ε|
  double max_h = 0.0;            // most positive inequality value
  double min_mu = 0.0;
  double max_mu = 0.0;
};

/// Perturbed KKT system at a fixed ε.
///
/// Layout: [Vr, Vi, Pg, Qg, (SlackRe, SlackIm), Lambda, Mu]; Pg/Qg keyed by generator.
/// Rows: stationarity ∇f + J_gᵀλ + J_hᵀμ per primal unknown, then the equalities g (current
/// balance with I_slack injected, one angle reference per island, fixed-dispatch rows),
/// then μ_i·h_i + ε per inequality. A box narrower than 1e-9 becomes a fixed row.
/// The internal objective is generation cost divided by base_mva, plus the slack penalty.
class KktSystem : public EquationSystem {
 public:
  KktSystem(const OpfProblem& prob, double epsilon, double fraction_to_boundary = 0.995);

  const LayoutPtr& layout() const override;
  ResidualJacobian evaluate(const SolverState& x) const override;
  /// Fraction-to-boundary rule: keeps μ > 0 and h < 0 with margin 1 − τ.
  double max_step(const SolverState& x, const Eigen::VectorXd& dx) const override;
  std::string row_label(Index row) const override;

  double epsilon() const { return epsilon_; }
  /// Weight on ‖I_slack‖² in use; starts at the problem's weight.
  double slack_weight() const { return weight_; }
  KktSystem with_epsilon(double epsilon) const;
  KktSystem with_parameters(double epsilon, double slack_weight) const;
  const OpfProblem& problem() const;
  const Network& network() const;

  Eigen::VectorXd inequalities(const SolverState& x) const;
  /// Generation cost in $/h.
  double generation_cost(const SolverState& x) const;
  /// Slack penalty in the same $/h units (zero without contingency terms).
  double slack_penalty(const SolverState& x) const;
  KktBlockNorms block_norms(const SolverState& x) const;

  /// Flat voltages at |V| = 1 (clipped into the bounds), P/Q at window midpoints,
  /// zero slack and λ, μ = 1.
  SolverState cold_start() const;
  /// True when every h_i(x) < 0 and μ_i > 0.
  bool strictly_interior(const SolverState& x) const;
  /// Moves dispatch and voltage magnitudes that sit on or beyond a bound just inside it, then sets
  /// every μ_i ≤ 0 to ε/(−h_i). Entries already strictly inside are left bit-for-bit alone.
  void make_interior(SolverState& x) const;
  /// Sets every slack current so that its own stationarity row vanishes at the current λ,
  /// I_slack = −λ_row / (2·W). No-op without contingency terms.
  void settle_slacks(SolverState& x) const;

 private:
  std::shared_ptr<const KktModel> model_;
  double epsilon_;
  double weight_ = 0.0;
  double tau_;
};

struct OpfOptions {
  double epsilon_final = 1e-8;
  double sigma = 0.2;             // ε reduction per converged stage
  double initial_fraction = 0.1;  // ε₀ = initial_fraction · mean(−μ_i h_i) at the start
  double fraction_to_boundary = 0.995;
  int max_stages = 80;
  /// ε of the Network-Stepping target when warm-starting; the continuation then carries the
  /// traced point down to epsilon_final.
  double warm_epsilon = 1e-4;
  NewtonOptions newton;
};

/// Slack weight in use at ε during continuation: max(min(W, 100), W·ε_final/ε).
double continuation_slack_weight(double full_weight, double epsilon, double epsilon_final);

struct OpfResult {
  std::shared_ptr<const KktSystem> system;  // at the last attempted ε
  SolverState state;                        // last converged stage (x0 if none converged)
  SolveReport report;
  double objective = 0.0;  // generation cost, $/h
  std::vector<double> stage_epsilons;
  std::vector<double> stage_objectives;  // internal objective per converged stage
};

/// ε-continuation from x0 (cold start when null). With contingency terms the slack weight is
/// raised together with 1/ε and reaches its full value at ε_final. Throws InputError if x0 is
/// not strictly interior. A failed stage is retried with a gentler reduction (σ ← √σ); giving up returns
/// the last converged stage with a non-converged report.
OpfResult solve_opf(const OpfProblem& prob, const SolverState* x0 = nullptr, const OpfOptions& opts = {});

/// Per-outage problem on apply_delta(base.net, delta), anchored at the base dispatch read
/// from `base_solution` (Pg keyed by generator). Ramp windows come from `ramp`.
ContingencyOpfProblem build_contingency_opf(const OpfProblem& base, const SolverState& base_solution,
                                            const NetworkDelta& delta, const std::map<int, double>& ramp,
                                            double slack_weight = 1e8);

/// Same ramp r for every generator of the network.
std::map<int, double> uniform_ramp(const Network& net, double r);

}  // namespace gridstep
