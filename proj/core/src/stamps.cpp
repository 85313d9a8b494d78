#include "gridstep/stamps.hpp"

#include <cmath>

namespace gridstep {

namespace {

// Adds y·V to the balance rows of `row` and its derivatives w.r.t. the voltage at `col`.
void stamp_admittance(const BusTerminal& row, const BusTerminal& col, Complex y, const Eigen::VectorXd& x,
                      StampAccumulator& acc) {
  const Complex i = y * Complex(x[col.vr], x[col.vi]);
  acc.add_residual(row.row_re, i.real());
  acc.add_residual(row.row_im, i.imag());
  acc.add_jacobian(row.row_re, col.vr, y.real());
  acc.add_jacobian(row.row_re, col.vi, -y.imag());
  acc.add_jacobian(row.row_im, col.vr, y.imag());
  acc.add_jacobian(row.row_im, col.vi, y.real());
}

double weight(const Eigen::VectorXd& lambda, Index row) { return row >= 0 ? lambda[row] : 0.0; }

// λ_re·Re(d) + λ_im·Im(d) placed symmetrically at (a, b) and (b, a).
void add_weighted(StampAccumulator& acc, Index a, Index b, Complex d, double lr, double li) {
  if (a < 0 || b < 0) return;
  const double v = lr * d.real() + li * d.imag();
  acc.add_jacobian(a, b, v);
  if (a != b) acc.add_jacobian(b, a, v);
}

}  // namespace

BranchAdmittance BranchAdmittance::of(const Branch& br) {
  const Complex ys = 1.0 / Complex(br.series_r, br.series_x);
  const Complex charging(0.0, br.charging_b / 2.0);
  const double t = br.tap_ratio == 0.0 ? 1.0 : br.tap_ratio;
  const Complex tap = std::polar(t, br.phase_shift);
  return {(ys + charging) / (t * t), -ys / std::conj(tap), -ys / tap, ys + charging};
}

std::pair<Complex, Complex> branch_currents(const Branch& br, Complex v_from, Complex v_to) {
  const auto y = BranchAdmittance::of(br);
  return {y.yff * v_from + y.yft * v_to, y.ytf * v_from + y.ytt * v_to};
}

void stamp(const BranchStamp& s, const Eigen::VectorXd& x, StampAccumulator& acc) {
  stamp_admittance(s.from, s.from, s.y.yff, x, acc);
  stamp_admittance(s.from, s.to, s.y.yft, x, acc);
  stamp_admittance(s.to, s.from, s.y.ytf, x, acc);
  stamp_admittance(s.to, s.to, s.y.ytt, x, acc);
}

void stamp(const ShuntStamp& s, const Eigen::VectorXd& x, StampAccumulator& acc) {
  stamp_admittance(s.at, s.at, s.y, x, acc);
}

void stamp(const PowerStamp& s, const Eigen::VectorXd& x, StampAccumulator& acc) {
  const Complex w(x[s.at.vr], -x[s.at.vi]);
  const Complex f = 1.0 / w;
  const Complex f2 = f * f;
  const Complex s_conj = s.sign * Complex(s.p.at(x), -s.q.at(x));
  const Complex j(0.0, 1.0);

  const Complex i = s_conj * f;
  acc.add_residual(s.at.row_re, i.real());
  acc.add_residual(s.at.row_im, i.imag());

  const Complex d_vr = -s_conj * f2;
  const Complex d_vi = j * s_conj * f2;
  acc.add_jacobian(s.at.row_re, s.at.vr, d_vr.real());
  acc.add_jacobian(s.at.row_im, s.at.vr, d_vr.imag());
  acc.add_jacobian(s.at.row_re, s.at.vi, d_vi.real());
  acc.add_jacobian(s.at.row_im, s.at.vi, d_vi.imag());
  if (s.p.col >= 0) {
    const Complex d_p = s.sign * f;
    acc.add_jacobian(s.at.row_re, s.p.col, d_p.real());
    acc.add_jacobian(s.at.row_im, s.p.col, d_p.imag());
  }
  if (s.q.col >= 0) {
    const Complex d_q = -j * s.sign * f;
    acc.add_jacobian(s.at.row_re, s.q.col, d_q.real());
    acc.add_jacobian(s.at.row_im, s.q.col, d_q.imag());
  }
}

void stamp(const CurrentStamp& s, const Eigen::VectorXd& x, StampAccumulator& acc) {
  (void)x;
  acc.add_residual(s.at.row_re, s.current.real());
  acc.add_residual(s.at.row_im, s.current.imag());
}

void stamp(const PinStamp& s, const Eigen::VectorXd& x, StampAccumulator& acc) {
  acc.add_residual(s.row_re, x[s.vr] - s.target.real());
  acc.add_residual(s.row_im, x[s.vi] - s.target.imag());
  acc.add_jacobian(s.row_re, s.vr, 1.0);
  acc.add_jacobian(s.row_im, s.vi, 1.0);
}

void stamp(const AngleStamp& s, const Eigen::VectorXd& x, StampAccumulator& acc) {
  const double c = std::cos(s.angle);
  const double sn = std::sin(s.angle);
  acc.add_residual(s.row, x[s.vi] * c - x[s.vr] * sn);
  acc.add_jacobian(s.row, s.vr, -sn);
  acc.add_jacobian(s.row, s.vi, c);
}

void stamp(const MagnitudeStamp& s, const Eigen::VectorXd& x, StampAccumulator& acc) {
  const double vr = x[s.vr];
  const double vi = x[s.vi];
  acc.add_residual(s.row, vr * vr + vi * vi - s.v_set * s.v_set);
  acc.add_jacobian(s.row, s.vr, 2.0 * vr);
  acc.add_jacobian(s.row, s.vi, 2.0 * vi);
}

void stamp(const SlackInjectionStamp& s, const Eigen::VectorXd& x, StampAccumulator& acc) {
  acc.add_residual(s.at.row_re, x[s.col_re]);
  acc.add_residual(s.at.row_im, x[s.col_im]);
  acc.add_jacobian(s.at.row_re, s.col_re, 1.0);
  acc.add_jacobian(s.at.row_im, s.col_im, 1.0);
}

void stamp_hessian(const PowerStamp& s, const Eigen::VectorXd& x, const Eigen::VectorXd& lambda,
                   StampAccumulator& acc) {
  const double lr = weight(lambda, s.at.row_re);
  const double li = weight(lambda, s.at.row_im);
  const Complex w(x[s.at.vr], -x[s.at.vi]);
  const Complex f = 1.0 / w;
  const Complex f2 = f * f;
  const Complex f3 = f2 * f;
  const Complex s_conj = s.sign * Complex(s.p.at(x), -s.q.at(x));
  const Complex j(0.0, 1.0);

  add_weighted(acc, s.at.vr, s.at.vr, 2.0 * s_conj * f3, lr, li);
  add_weighted(acc, s.at.vr, s.at.vi, -2.0 * j * s_conj * f3, lr, li);
  add_weighted(acc, s.at.vi, s.at.vi, -2.0 * s_conj * f3, lr, li);
  if (s.p.col >= 0) {
    add_weighted(acc, s.at.vr, s.p.col, -s.sign * f2, lr, li);
    add_weighted(acc, s.at.vi, s.p.col, s.sign * j * f2, lr, li);
  }
  if (s.q.col >= 0) {
    add_weighted(acc, s.at.vr, s.q.col, s.sign * j * f2, lr, li);
    add_weighted(acc, s.at.vi, s.q.col, s.sign * f2, lr, li);
  }
}

void stamp_hessian(const MagnitudeStamp& s, const Eigen::VectorXd& lambda, StampAccumulator& acc) {
  const double l = weight(lambda, s.row);
  if (s.row < 0) return;
  acc.add_jacobian(s.vr, s.vr, 2.0 * l);
  acc.add_jacobian(s.vi, s.vi, 2.0 * l);
}

void stamp_branch(const Branch& br, const BusTerminal& from, const BusTerminal& to, const Eigen::VectorXd& x,
                  StampAccumulator& acc) {
  if (br.status != Status::In) return;
  stamp(BranchStamp{from, to, BranchAdmittance::of(br)}, x, acc);
}

void stamp_load(const Load& load, const BusTerminal& at, const Eigen::VectorXd& x, StampAccumulator& acc) {
  stamp(PowerStamp{at, {load.p_eff(), -1}, {load.q_eff(), -1}, 1.0}, x, acc);
}

void stamp_generator(const Generator& gen, const BusTerminal& at, PowerValue p, PowerValue q,
                     const Eigen::VectorXd& x, StampAccumulator& acc) {
  if (gen.status != Status::In) return;
  stamp(PowerStamp{at, p, q, -1.0}, x, acc);
}

void stamp_slack(const Bus& bus, const BusTerminal& at, const Eigen::VectorXd& x, StampAccumulator& acc) {
  stamp(PinStamp{at.row_re, at.row_im, at.vr, at.vi, std::polar(bus.v_set, bus.angle_set)}, x, acc);
}

void CurrentBalancePlan::assemble(const Eigen::VectorXd& x, StampAccumulator& acc) const {
  for (const auto& s : branches) stamp(s, x, acc);
  for (const auto& s : shunts) stamp(s, x, acc);
  for (const auto& s : powers) stamp(s, x, acc);
  for (const auto& s : currents) stamp(s, x, acc);
  for (const auto& s : slacks) stamp(s, x, acc);
  for (const auto& s : pins) stamp(s, x, acc);
  for (const auto& s : angles) stamp(s, x, acc);
  for (const auto& s : magnitudes) stamp(s, x, acc);
}

void CurrentBalancePlan::assemble_hessian(const Eigen::VectorXd& x, const Eigen::VectorXd& lambda,
                                          StampAccumulator& acc) const {
  for (const auto& s : powers) stamp_hessian(s, x, lambda, acc);
  for (const auto& s : magnitudes) stamp_hessian(s, lambda, acc);
}

}  // namespace gridstep
