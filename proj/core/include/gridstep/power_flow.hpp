#pragma once

#include <map>
#include <memory>
#include <optional>
#include <vector>

#include "gridstep/network.hpp"
#include "gridstep/newton.hpp"
#include "gridstep/stamps.hpp"
#include "gridstep/system.hpp"

namespace gridstep {

struct PfOptions {
  /// State-independent current drawn at a bus, on top of its devices. Lets a removed device be
  /// represented by the current it carried.
  std::map<int, Complex> fixed_currents;
  /// PV buses held as PQ with total reactive generation fixed at the mapped value.
  std::map<int, double> fixed_q;
  /// Used only by solve_power_flow: switch PV buses to PQ at violated reactive limits.
  bool enforce_q_limits = false;
};

/// Current-balance equations shared by the power-flow and infeasibility systems.
///
/// Columns: Vr for every bus, Vi for every bus, then one Qg per effective PV bus (the bus's
/// in-service generators share it). Rows: two per bus in bus order (balance rows, or pin
/// rows at an effective slack bus), then one magnitude row per PV bus, then any
/// virtual-reference rows.
struct PfModel {
  std::vector<ElementKey> bus_keys;
  std::vector<ElementKey> qg_keys;
  std::vector<ElementKey> row_keys;
  std::vector<BusTerminal> terminals;  // by bus position
  CurrentBalancePlan plan;

  Index columns() const { return static_cast<Index>(2 * bus_keys.size() + qg_keys.size()); }
};

/// With `virtual_references`, an island without a slack bus gets an angle row at its
/// lowest-id PV bus, or, lacking one, Vr = 1 and Vi = 0 rows at its lowest-id bus while its
/// balance rows stay in place. The resulting system is no longer square on its own.
PfModel build_pf_model(const Network& net, const PfOptions& opts, bool virtual_references);

class PowerFlowSystem : public EquationSystem {
 public:
  PowerFlowSystem(NetworkPtr net, PfOptions opts = {});

  const LayoutPtr& layout() const override { return layout_; }
  ResidualJacobian evaluate(const SolverState& x) const override;
  Eigen::VectorXd residual(const SolverState& x) const override;
  std::string row_label(Index row) const override;

  const Network& network() const { return *net_; }
  const NetworkPtr& network_ptr() const { return net_; }
  const PfOptions& options() const { return opts_; }
  const PfModel& model() const { return model_; }

  /// Flat start: |V| = v_set at effective PV/slack buses and 1 elsewhere, angles equal to the
  /// slack angle, Qg = 0.
  SolverState flat_start() const;

 private:
  NetworkPtr net_;
  PfOptions opts_;
  PfModel model_;
  LayoutPtr layout_;
  SparsePattern pattern_;
};

/// Throws ValidationError if the network fails validation (no tolerated diagnostics).
std::shared_ptr<const PowerFlowSystem> build_pf_system(NetworkPtr net, PfOptions opts = {});

/// Flat voltages for a layout holding Vr/Vi segments keyed by bus; other entries are zero.
void fill_flat_voltages(const Network& net, SolverState& state);

Complex bus_voltage(const SolverState& state, int bus_id);

struct BusPower {
  int bus = 0;
  double p_injection = 0.0;  // net power leaving the bus into branches and shunt
  double q_injection = 0.0;
  double p_generation = 0.0;
  double q_generation = 0.0;
  double p_load = 0.0;
  double q_load = 0.0;
  double mismatch = 0.0;  // |injection − (generation − load)|
};

struct PowerSummary {
  std::vector<BusPower> buses;
  double p_generation = 0.0, q_generation = 0.0;
  double p_load = 0.0, q_load = 0.0;
  double p_losses = 0.0, q_losses = 0.0;  // branches plus shunts
  double balance_error = 0.0;             // |generation − load − losses|
  double max_bus_mismatch = 0.0;
  bool balanced = false;
};

/// Generation comes from the state where it is an unknown (Qg, or Pg/Qg in OPF layouts),
/// from set points otherwise, and from the network flows at an effective slack bus.
/// `balanced` requires both the total balance and every per-bus mismatch within `tol`.
PowerSummary bus_power_summary(const Network& net, const SolverState& state, double tol = 1e-8);

struct GeneratorDispatch {
  int gen = 0;
  double p = 0.0;
  double q = 0.0;
};

/// Per-generator output. Bus totals shared by several units are split in proportion to
/// their limit ranges (equally when the ranges are empty).
std::vector<GeneratorDispatch> generator_dispatch(const Network& net, const SolverState& state);

struct PfSolveResult {
  std::shared_ptr<const PowerFlowSystem> system;
  SolverState state;
  SolveReport report;
  std::vector<int> switched_to_pq;  // PV buses held at a reactive limit
};

/// Solves from x0 (flat start when null). With opts.enforce_q_limits, PV buses whose total
/// reactive output leaves [Σq_min, Σq_max] are fixed at the violated limit and the case is
/// re-solved, up to 10 rounds; report iterations accumulate over rounds.
PfSolveResult solve_power_flow(NetworkPtr net, const PfOptions& opts = {}, const NewtonOptions& newton = {},
                               const SolverState* x0 = nullptr);

}  // namespace gridstep
