#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "fixtures.hpp"
#include "gridstep/delta.hpp"
#include "gridstep/errors.hpp"
#include "gridstep/fd_check.hpp"
#include "gridstep/power_flow.hpp"

namespace gridstep {
namespace {

using test::make;

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

TEST(PowerFlowSystem, ZeroInjectionFlatStateHasZeroResidual) {
  const auto sys = build_pf_system(make(test::two_bus(0.01, 0.1, 0.0, 0.0)));
  const auto rj = sys->evaluate(sys->flat_start());
  EXPECT_EQ(rj.residual.lpNorm<Eigen::Infinity>(), 0.0);
}

TEST(PowerFlowSystem, UnitLoadAtFlatStateDrawsUnitCurrent) {
  const auto sys = build_pf_system(make(test::two_bus(0.01, 0.1, 1.0, 0.0)));
  const auto r = sys->residual(sys->flat_start());
  const auto& t = sys->model().terminals[1];
  EXPECT_DOUBLE_EQ(r[t.row_re], 1.0);
  EXPECT_DOUBLE_EQ(r[t.row_im], 0.0);
}

TEST(PowerFlowSystem, LayoutAndSquareness) {
  const auto net = test::load_case("case14");
  const auto sys = build_pf_system(net);
  EXPECT_EQ(sys->layout()->count(Segment::Vr), 14u);
  EXPECT_EQ(sys->layout()->count(Segment::Qg), 4u);  // PV buses 2, 3, 6, 8
  const auto rj = sys->evaluate(sys->flat_start());
  EXPECT_EQ(rj.jacobian.rows(), static_cast<Index>(sys->size()));
  EXPECT_EQ(rj.jacobian.cols(), static_cast<Index>(sys->size()));
}

TEST(PowerFlowSystem, PatternIsStable) {
  const auto sys = build_pf_system(test::load_case("case30"));
  const auto a = sys->evaluate(sys->flat_start()).jacobian;
  const auto b = sys->evaluate(test::random_state(sys->layout(), 3)).jacobian;
  ASSERT_EQ(a.nonZeros(), b.nonZeros());
  EXPECT_TRUE(std::equal(a.innerIndexPtr(), a.innerIndexPtr() + a.nonZeros(), b.innerIndexPtr()));
  EXPECT_TRUE(std::equal(a.outerIndexPtr(), a.outerIndexPtr() + a.cols() + 1, b.outerIndexPtr()));
}

TEST(PowerFlowSystem, RejectsInvalidNetwork) {
  EXPECT_THROW(build_pf_system(make(test::two_bus(0.0, 0.0, 0.5, 0.0))), ValidationError);
}

TEST(PowerFlowSystem, WrongLayoutIsStructuralError) {
  const auto a = build_pf_system(test::load_case("case9"));
  const auto b = build_pf_system(test::load_case("case14"));
  EXPECT_THROW(a->evaluate(b->flat_start()), StructuralError);
}

TEST(Stamps, BranchCurrentMatchesComplexArithmetic) {
  Branch br;
  br.series_r = 0.2;
  br.series_x = 0.4;
  const BusTerminal t1{0, 1, 0, 1}, t2{2, 3, 2, 3};
  StampAccumulator acc(4);
  stamp_branch(br, t1, t2, vec({1.0, 0.0, 0.95, 0.05}), acc);
  // y (V1 - V2) with y = 1/(0.2 + 0.4j), evaluated independently.
  EXPECT_NEAR(acc.residual()[0], -0.04999999999999996, 1e-15);
  EXPECT_NEAR(acc.residual()[1], -0.15000000000000008, 1e-15);
  EXPECT_NEAR(acc.residual()[2], 0.04999999999999996, 1e-15);
  EXPECT_NEAR(acc.residual()[3], 0.15000000000000008, 1e-15);
}

TEST(Stamps, OutOfServiceBranchContributesNothing) {
  Branch br;
  br.series_r = 0.2;
  br.series_x = 0.4;
  br.status = Status::Out;
  StampAccumulator acc(4);
  stamp_branch(br, {0, 1, 0, 1}, {2, 3, 2, 3}, vec({1.0, 0.0, 0.95, 0.05}), acc);
  EXPECT_EQ(acc.triplet_count(), 0u);
  EXPECT_EQ(acc.residual().lpNorm<Eigen::Infinity>(), 0.0);
}

TEST(Stamps, OutOfServiceGeneratorContributesNothing) {
  Generator g;
  g.p_set = 1.0;
  g.status = Status::Out;
  StampAccumulator acc(2);
  stamp_generator(g, {0, 1, 0, 1}, {1.0, -1}, {0.0, -1}, vec({1.0, 0.0}), acc);
  EXPECT_EQ(acc.triplet_count(), 0u);
}

TEST(Stamps, LoadJacobianMatchesFiniteDifferences) {
  const Load load{1, 1, 1.0, 0.5, 1.0};
  const BusTerminal t{0, 1, 0, 1};
  StampAccumulator acc(2);
  stamp_load(load, t, vec({1.0, 0.0}), acc);
  Eigen::Matrix2d analytic = Eigen::Matrix2d::Zero();
  for (std::size_t k = 0; k < acc.triplet_count(); ++k) analytic(acc.rows()[k], acc.cols()[k]) += acc.values()[k];

  // Independent evaluation of conj(S / V) with complex arithmetic.
  auto current = [&](double vr, double vi) { return std::conj(Complex(1.0, 0.5) / Complex(vr, vi)); };
  const double h = 1e-6;
  const Complex d_vr = (current(1.0 + h, 0.0) - current(1.0 - h, 0.0)) / (2 * h);
  const Complex d_vi = (current(1.0, h) - current(1.0, -h)) / (2 * h);
  Eigen::Matrix2d numeric;
  numeric << d_vr.real(), d_vi.real(), d_vr.imag(), d_vi.imag();
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 2; ++c)
      EXPECT_LE(std::abs(analytic(r, c) - numeric(r, c)) / std::max(1.0, std::abs(numeric(r, c))), 1e-6);
  EXPECT_NEAR(acc.residual()[0], 1.0, 1e-15);
  EXPECT_NEAR(acc.residual()[1], -0.5, 1e-15);
}

TEST(Stamps, ParallelBranchesAreAdditive) {
  Branch br;
  br.series_r = 0.03;
  br.series_x = 0.2;
  br.charging_b = 0.05;
  br.tap_ratio = 0.97;
  br.phase_shift = 0.1;
  const BusTerminal t1{0, 1, 0, 1}, t2{2, 3, 2, 3};
  const auto x = vec({1.02, 0.01, 0.97, -0.08});
  StampAccumulator one(4), two(4);
  stamp_branch(br, t1, t2, x, one);
  stamp_branch(br, t1, t2, x, two);
  stamp_branch(br, t1, t2, x, two);
  EXPECT_TRUE(two.residual() == 2.0 * one.residual());
  const SparsePattern p1(4, 4, one.rows(), one.cols()), p2(4, 4, two.rows(), two.cols());
  EXPECT_TRUE(Eigen::MatrixXd(p2.fill(two.values())) == 2.0 * Eigen::MatrixXd(p1.fill(one.values())));
}

TEST(Stamps, StampingOrderIndependence) {
  const auto sys = build_pf_system(test::load_case("case118"));
  const auto x = test::random_state(sys->layout(), 11);
  StampAccumulator base(sys->model().plan.rows, false);
  sys->model().plan.assemble(x.values, base);
  std::mt19937 rng(5);
  for (int trial = 0; trial < 5; ++trial) {
    CurrentBalancePlan plan = sys->model().plan;
    std::shuffle(plan.branches.begin(), plan.branches.end(), rng);
    std::shuffle(plan.powers.begin(), plan.powers.end(), rng);
    std::shuffle(plan.shunts.begin(), plan.shunts.end(), rng);
    StampAccumulator acc(plan.rows, false);
    plan.assemble(x.values, acc);
    EXPECT_LE((acc.residual() - base.residual()).lpNorm<Eigen::Infinity>(), 1e-14);
  }
}

TEST(Stamps, BitwiseReproducibleResidual) {
  const auto sys = build_pf_system(test::load_case("case118"));
  const auto x = test::random_state(sys->layout(), 2);
  EXPECT_TRUE(sys->residual(x) == sys->residual(x));
  EXPECT_TRUE(sys->evaluate(x).residual == sys->residual(x));
}

TEST(PowerFlowSystem, JacobianMatchesFiniteDifferencesAtRandomStates) {
  for (const char* name : {"case9", "case14", "case30"}) {
    const auto sys = build_pf_system(test::load_case(name));
    for (unsigned seed = 0; seed < 10; ++seed)
      EXPECT_LE(fd_jacobian_check(*sys, test::random_state(sys->layout(), seed)), 1e-6) << name << " " << seed;
  }
}

TEST(PowerFlowSolve, MatchesIndependentReference) {
  for (const char* name : {"case9", "case14", "case30", "case118"}) {
    const auto net = test::load_case(name);
    const auto res = solve_power_flow(net);
    ASSERT_TRUE(res.report.converged) << name;
    EXPECT_LE(res.report.final_residual(), 1e-8);
    const auto& ref = test::load_reference(name);
    for (std::size_t k = 0; k < ref.bus.size(); ++k) {
      const Complex v = bus_voltage(res.state, ref.bus[k]);
      EXPECT_NEAR(std::abs(v), ref.vm[k], 1e-6) << name << " bus " << ref.bus[k];
      EXPECT_NEAR(std::arg(v) * 180.0 / std::numbers::pi, ref.va_deg[k], 1e-5) << name << " bus " << ref.bus[k];
    }
    const auto dispatch = generator_dispatch(*net, res.state);
    for (std::size_t k = 0; k < dispatch.size(); ++k) {
      EXPECT_NEAR(dispatch[k].p * net->base_mva(), ref.pg_mw[k], 1e-4) << name << " gen " << dispatch[k].gen;
    }
  }
}

TEST(PowerFlowSolve, ResidualAtSolutionWithinTolerance) {
  const auto res = solve_power_flow(test::load_case("case30"));
  ASSERT_TRUE(res.report.converged);
  EXPECT_LE(res.system->residual(res.state).lpNorm<Eigen::Infinity>(), NewtonOptions{}.tol);
}

TEST(PowerSummary, LosslessBranchGenerationEqualsLoad) {
  const auto net = make(test::two_bus(0.0, 0.1, 0.5, 0.0));
  NewtonOptions tight;
  tight.tol = 1e-13;
  const auto res = solve_power_flow(net, {}, tight);
  ASSERT_TRUE(res.report.converged);
  const auto s = bus_power_summary(*net, res.state);
  EXPECT_NEAR(s.buses[0].p_generation, 0.5, 1e-10);
  EXPECT_NEAR(s.p_losses, 0.0, 1e-12);
  EXPECT_TRUE(s.balanced);
}

TEST(PowerSummary, ConvergedCaseBalances) {
  const auto net = test::load_case("case14");
  const auto res = solve_power_flow(net);
  const auto s = bus_power_summary(*net, res.state);
  EXPECT_LE(s.balance_error, 1e-8);
  EXPECT_TRUE(s.balanced);
  EXPECT_GT(s.p_losses, 0.0);
}

TEST(PowerSummary, FlatStateIsFlaggedUnbalanced) {
  const auto net = test::load_case("case14");
  const auto sys = build_pf_system(net);
  const auto s = bus_power_summary(*net, sys->flat_start());
  EXPECT_FALSE(s.balanced);
  EXPECT_GT(s.max_bus_mismatch, 1e-3);
}

TEST(PowerFlowSolve, ReactiveLimitFlagSwitchesViolatingBuses) {
  const auto net = test::load_case("case118");
  const auto free = solve_power_flow(net);
  PfOptions opts;
  opts.enforce_q_limits = true;
  const auto limited = solve_power_flow(net, opts);
  ASSERT_TRUE(limited.report.converged);
  EXPECT_FALSE(limited.switched_to_pq.empty());
  for (int bus : limited.switched_to_pq) {
    double lo = 0, hi = 0;
    for (const auto* g : net->generators_at(bus)) {
      lo += g->q_min;
      hi += g->q_max;
    }
    const double q = free.state.get(Segment::Qg, {KeyKind::Bus, bus});
    EXPECT_TRUE(q > hi || q < lo);
  }
}

bool keeps_connected(const Network& net, int branch) {
  return find_islands(apply_delta(net, {{BranchStatusChange{branch, Status::Out}}})).size() == 1;
}

// A branch replaced by the currents it carried leaves every bus voltage unchanged.
TEST(SubstitutionTheorem, BranchReplacedByTerminalCurrents) {
  const auto net = test::load_case("case14");
  NewtonOptions tight;
  tight.tol = 1e-11;
  const auto base = solve_power_flow(net, {}, tight);
  ASSERT_TRUE(base.report.converged);
  int checked = 0;
  for (const auto& br : net->branches()) {
    if (!keeps_connected(*net, br.id)) continue;
    const auto [i_f, i_t] = branch_currents(br, bus_voltage(base.state, br.from_bus), bus_voltage(base.state, br.to_bus));
    PfOptions opts;
    opts.fixed_currents[br.from_bus] += i_f;
    opts.fixed_currents[br.to_bus] += i_t;
    const auto cut = std::make_shared<const Network>(apply_delta(*net, {{BranchStatusChange{br.id, Status::Out}}}));
    const auto res = solve_power_flow(cut, opts, tight);
    ASSERT_TRUE(res.report.converged) << "branch " << br.id;
    for (const auto& b : net->buses())
      EXPECT_LE(std::abs(bus_voltage(res.state, b.id) - bus_voltage(base.state, b.id)), 1e-8) << "branch " << br.id;
    ++checked;
  }
  EXPECT_GT(checked, 10);
}

}  // namespace
}  // namespace gridstep
