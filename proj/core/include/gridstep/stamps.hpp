#pragma once

#include <complex>
#include <vector>

#include "gridstep/network.hpp"
#include "gridstep/system.hpp"

namespace gridstep {

using Complex = std::complex<double>;

/// Columns of a bus voltage and the rows receiving its current balance. A negative row means
/// the bus has no balance rows in this system (e.g. a pinned slack bus).
struct BusTerminal {
  Index vr = -1;
  Index vi = -1;
  Index row_re = -1;
  Index row_im = -1;
};

struct BranchAdmittance {
  Complex yff, yft, ytf, ytt;

  static BranchAdmittance of(const Branch& br);
};

/// Power value that is either a constant or read from a state column.
struct PowerValue {
  double constant = 0.0;
  Index col = -1;

  double at(const Eigen::VectorXd& x) const { return col >= 0 ? x[col] : constant; }
};

// Primitive stamps. Currents are written as drawn from the bus into the device.

struct BranchStamp {
  BusTerminal from, to;
  BranchAdmittance y;
};

struct ShuntStamp {
  BusTerminal at;
  Complex y;
};

/// Constant-power device: drawn current sign·conj((P + jQ) / V). Loads use sign +1,
/// generators −1.
struct PowerStamp {
  BusTerminal at;
  PowerValue p, q;
  double sign = 1.0;
};

/// Fixed drawn current, independent of the state.
struct CurrentStamp {
  BusTerminal at;
  Complex current;
};

/// Replaces both balance rows of a bus: Vr − target.re = 0, Vi − target.im = 0.
struct PinStamp {
  Index row_re = -1, row_im = -1, vr = -1, vi = -1;
  Complex target;
};

/// Fixes the voltage angle only: Vi·cos θ − Vr·sin θ = 0.
struct AngleStamp {
  Index row = -1, vr = -1, vi = -1;
  double angle = 0.0;
};

/// Vr² + Vi² − v_set² = 0.
struct MagnitudeStamp {
  Index row = -1, vr = -1, vi = -1;
  double v_set = 1.0;
};

/// Adds a free current (Is_re, Is_im) to the balance rows, with the same sign as device currents.
struct SlackInjectionStamp {
  BusTerminal at;
  Index col_re = -1, col_im = -1;
};

void stamp(const BranchStamp& s, const Eigen::VectorXd& x, StampAccumulator& acc);
void stamp(const ShuntStamp& s, const Eigen::VectorXd& x, StampAccumulator& acc);
void stamp(const PowerStamp& s, const Eigen::VectorXd& x, StampAccumulator& acc);
void stamp(const CurrentStamp& s, const Eigen::VectorXd& x, StampAccumulator& acc);
void stamp(const PinStamp& s, const Eigen::VectorXd& x, StampAccumulator& acc);
void stamp(const AngleStamp& s, const Eigen::VectorXd& x, StampAccumulator& acc);
void stamp(const MagnitudeStamp& s, const Eigen::VectorXd& x, StampAccumulator& acc);
void stamp(const SlackInjectionStamp& s, const Eigen::VectorXd& x, StampAccumulator& acc);

/// Second-order terms Σ_r λ_r ∇²F_r for the nonlinear stamps, emitted into `acc` as
/// (column, column) triplets. `lambda` is indexed by the stamp's own row numbers.
void stamp_hessian(const PowerStamp& s, const Eigen::VectorXd& x, const Eigen::VectorXd& lambda,
                   StampAccumulator& acc);
void stamp_hessian(const MagnitudeStamp& s, const Eigen::VectorXd& lambda, StampAccumulator& acc);

/// Drawn branch currents at the two terminals for complex bus voltages.
std::pair<Complex, Complex> branch_currents(const Branch& br, Complex v_from, Complex v_to);

// Element-level wrappers. Out-of-service elements contribute nothing.

void stamp_branch(const Branch& br, const BusTerminal& from, const BusTerminal& to, const Eigen::VectorXd& x,
                  StampAccumulator& acc);
void stamp_load(const Load& load, const BusTerminal& at, const Eigen::VectorXd& x, StampAccumulator& acc);
/// `p` and `q` select constant or unknown active/reactive output.
void stamp_generator(const Generator& gen, const BusTerminal& at, PowerValue p, PowerValue q,
                     const Eigen::VectorXd& x, StampAccumulator& acc);
void stamp_slack(const Bus& bus, const BusTerminal& at, const Eigen::VectorXd& x, StampAccumulator& acc);

/// Everything that makes up a current-balance system, in a fixed device order.
/// Row numbers are local to the plan; column numbers index the full state vector.
struct CurrentBalancePlan {
  Index rows = 0;
  std::vector<BranchStamp> branches;
  std::vector<ShuntStamp> shunts;
  std::vector<PowerStamp> powers;
  std::vector<CurrentStamp> currents;
  std::vector<PinStamp> pins;
  std::vector<AngleStamp> angles;
  std::vector<MagnitudeStamp> magnitudes;
  std::vector<SlackInjectionStamp> slacks;

  void assemble(const Eigen::VectorXd& x, StampAccumulator& acc) const;
  void assemble_hessian(const Eigen::VectorXd& x, const Eigen::VectorXd& lambda, StampAccumulator& acc) const;
};

}  // namespace gridstep
