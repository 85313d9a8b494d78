#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "fixtures.hpp"
#include "gridstep/delta.hpp"
#include "gridstep/errors.hpp"
#include "gridstep/homotopy.hpp"
#include "gridstep/warm_start.hpp"

namespace gridstep {
namespace {

NewtonOptions tight() {
  NewtonOptions o;
  o.tol = 1e-10;
  return o;
}

FamilyOptions family(Family f) {
  FamilyOptions o;
  o.family = f;
  o.newton = tight();
  return o;
}

NetworkDelta outage(int branch) { return {{BranchStatusChange{branch, Status::Out}}}; }

Index row_of(const PfModel& m, KeyKind kind, int bus) {
  const auto it = std::find(m.row_keys.begin(), m.row_keys.end(), ElementKey{kind, bus});
  return static_cast<Index>(it - m.row_keys.begin());
}

TEST(ExtractResidual, EmptyDeltaGivesZero) {
  const auto net = test::load_case("case14");
  const auto base = cold_solve(net, family(Family::PowerFlow));
  ASSERT_TRUE(base.report.converged);
  const auto target = build_family_system(std::make_shared<const Network>(apply_delta(*net, {})), family(Family::PowerFlow));
  EXPECT_LE(extract_residual(*target, base.state).lpNorm<Eigen::Infinity>(), 1e-10);
}

TEST(ExtractResidual, LoadScaleAtUnitVoltage) {
  // Bus 4 of case14 draws 0.478 − 0.039j p.u.; at V = 1 the extra 10% adds conj(0.1·S).
  const auto net = test::load_case("case14");
  const auto prev = build_pf_system(net);
  const auto next = build_pf_system(
      std::make_shared<const Network>(apply_delta(*net, {{LoadScaleChange{4, 1.1}}})));
  SolverState x = prev->flat_start();
  x.segment(Segment::Vr).setOnes();
  x.segment(Segment::Vi).setZero();
  Eigen::VectorXd r = extract_residual(*next, x) - prev->residual(x);
  const Index re = row_of(next->model(), KeyKind::KclRe, 4), im = row_of(next->model(), KeyKind::KclIm, 4);
  EXPECT_NEAR(r[re], 0.0478, 1e-15);
  EXPECT_NEAR(r[im], 0.0039, 1e-15);
  r[re] = r[im] = 0.0;
  EXPECT_EQ(r.lpNorm<Eigen::Infinity>(), 0.0);
}

TEST(ExtractResidual, BranchOutageGivesTerminalCurrents) {
  // Terminal currents drawn into the branch at the reference solution, from a separate
  // complex-arithmetic evaluation of the π model.
  struct Oracle {
    int branch, from, to;
    double if_re, if_im, it_re, it_im;
  };
  const Oracle cases[] = {
      {7, 4, 5, -0.6190902645472254, -0.045390230045686764, 0.6190902645472254, 0.045390230045686764},
      {10, 5, 6, 0.40871638285521805, -0.1868498602255162, -0.38092366882106343, 0.17414406973017993},
  };
  const auto net = test::load_case("case14");
  NewtonOptions o;
  o.tol = 1e-12;
  const auto base = solve_power_flow(net, {}, o);
  ASSERT_TRUE(base.report.converged);
  for (const auto& c : cases) {
    const auto next = build_pf_system(std::make_shared<const Network>(apply_delta(*net, outage(c.branch))));
    const Eigen::VectorXd r = extract_residual(*next, base.state);
    const auto& m = next->model();
    EXPECT_NEAR(r[row_of(m, KeyKind::KclRe, c.from)], -c.if_re, 1e-9) << c.branch;
    EXPECT_NEAR(r[row_of(m, KeyKind::KclIm, c.from)], -c.if_im, 1e-9) << c.branch;
    EXPECT_NEAR(r[row_of(m, KeyKind::KclRe, c.to)], -c.it_re, 1e-9) << c.branch;
    EXPECT_NEAR(r[row_of(m, KeyKind::KclIm, c.to)], -c.it_im, 1e-9) << c.branch;
    Eigen::VectorXd rest = r;
    for (int bus : {c.from, c.to})
      for (KeyKind k : {KeyKind::KclRe, KeyKind::KclIm}) rest[row_of(m, k, bus)] = 0.0;
    EXPECT_LE(rest.lpNorm<Eigen::Infinity>(), 1e-11) << c.branch;
  }
}

TEST(ExtractResidual, LayoutMismatchIsStructural) {
  const auto pf = build_pf_system(test::load_case("case14"));
  const auto other = build_pf_system(test::load_case("case9"));
  EXPECT_THROW(extract_residual(*pf, other->flat_start()), StructuralError);
}

TEST(HomotopySystem, EndpointsAndLinearity) {
  const auto net = test::load_case("case30");
  const auto prev = cold_solve(net, family(Family::PowerFlow));
  ASSERT_TRUE(prev.report.converged);
  const auto target = build_family_system(std::make_shared<const Network>(apply_delta(*net, outage(5))),
                                          family(Family::PowerFlow));
  const Eigen::VectorXd r = extract_residual(*target, prev.state);
  const HomotopySystem h0(target, r, 0.0), h1(target, r, 1.0), half(target, r, 0.5);
  EXPECT_LE(h1.residual(prev.state).lpNorm<Eigen::Infinity>(), 1e-14);
  for (unsigned seed = 0; seed < 10; ++seed) {
    const SolverState x = test::random_state(target->layout(), seed);
    const auto a = h0.evaluate(x), b = target->evaluate(x);
    EXPECT_EQ((a.residual - b.residual).lpNorm<Eigen::Infinity>(), 0.0);
    EXPECT_EQ(Eigen::MatrixXd(a.jacobian - b.jacobian).lpNorm<Eigen::Infinity>(), 0.0);
    const Eigen::VectorXd mid = 0.5 * (h0.residual(x) + h1.residual(x));
    EXPECT_LE((half.residual(x) - mid).lpNorm<Eigen::Infinity>(), 1e-14);
  }
}

TEST(HomotopySystem, RejectsBadArguments) {
  const auto target = build_pf_system(test::load_case("case9"));
  EXPECT_THROW(HomotopySystem(target, Eigen::VectorXd::Zero(3), 0.5), StructuralError);
  EXPECT_THROW(HomotopySystem(target, Eigen::VectorXd::Zero(static_cast<Index>(target->size())), 1.5), InputError);
  GammaSchedule bad;
  bad.min_step = 0.0;
  EXPECT_THROW(bad.validate(), InputError);
}

TEST(Trace, ZeroInjectionIsAPolish) {
  const auto net = test::load_case("case14");
  const auto prev = cold_solve(net, family(Family::PowerFlow));
  const auto res = warm_start_solve(net, prev.state, {}, family(Family::PowerFlow));
  ASSERT_TRUE(res.report.converged);
  EXPECT_LE(res.report.iterations, 1);
  ASSERT_EQ(res.path.records.size(), 2u);
  EXPECT_EQ(res.path.records.back().gamma, 0.0);
  EXPECT_LE((res.state.values - prev.state.values).lpNorm<Eigen::Infinity>(), 1e-10);
}

TEST(Trace, PathIsMonotoneAndEndsAtZero) {
  const auto net = test::load_case("case30");
  const auto prev = cold_solve(net, family(Family::PowerFlow));
  const auto res = warm_start_solve(net, prev.state, outage(10), family(Family::PowerFlow));
  ASSERT_TRUE(res.report.converged);
  const auto& rec = res.path.records;
  ASSERT_GE(rec.size(), 3u);
  EXPECT_EQ(rec.front().gamma, 1.0);
  EXPECT_EQ(rec.back().gamma, 0.0);
  for (std::size_t i = 1; i < rec.size(); ++i) {
    EXPECT_LT(rec[i].gamma, rec[i - 1].gamma);
    EXPECT_TRUE(rec[i].report.converged);
    EXPECT_EQ(rec[i].report.condition, ConditionFlag::Ok);
  }
  EXPECT_LE(res.system->residual(res.state).lpNorm<Eigen::Infinity>(), 1e-10);
  EXPECT_EQ(res.report.iterations, res.path.total_iterations());
}

TEST(Trace, Case14OutageNoWorseThanColdStart) {
  const auto net = test::load_case("case14");
  const auto prev = cold_solve(net, family(Family::PowerFlow));
  for (int branch : {3, 7, 10, 15}) {
    const auto warm = warm_start_solve(net, prev.state, outage(branch), family(Family::PowerFlow));
    const auto cold = cold_solve(std::make_shared<const Network>(apply_delta(*net, outage(branch))),
                                 family(Family::PowerFlow));
    ASSERT_TRUE(warm.report.converged) << branch;
    ASSERT_TRUE(cold.report.converged) << branch;
    EXPECT_LE(warm.report.iterations, cold.report.iterations) << branch;
    EXPECT_LE((warm.state.values - cold.state.values).lpNorm<Eigen::Infinity>(), 1e-8) << branch;
  }
}

TEST(Trace, InfeasibilityFamilyThroughIslandingOutage) {
  // Branches 17 (9-14) and 20 (13-14) feed bus 14; without them its 0.149 + 0.05j p.u. load
  // can only be met by the slack at the island's unit-voltage virtual reference.
  const auto net = test::load_case("case14");
  const auto opts = family(Family::InfeasibilityPF);
  const auto prev = cold_solve(net, opts);
  ASSERT_TRUE(prev.report.converged);
  const NetworkDelta delta{{BranchStatusChange{17, Status::Out}, BranchStatusChange{20, Status::Out}}};
  const auto res = warm_start_solve(net, prev.state, delta, opts);
  ASSERT_TRUE(res.report.converged);
  const auto rep = infeasibility_report(res.state, res.report);
  ASSERT_FALSE(rep.buses.empty());
  EXPECT_EQ(rep.buses.front().bus_id, 14);
  EXPECT_NEAR(rep.buses.front().magnitude, std::hypot(0.149, 0.05), 1e-8);
  EXPECT_GT(std::sqrt(res.objective), 0.1);
}

TEST(WarmStart, OpfCostPerturbationBeatsColdStart) {
  const auto net = test::load_case("case14");
  auto opts = family(Family::Opf);
  opts.newton.tol = 1e-9;
  const auto prev = cold_solve(net, opts);
  ASSERT_TRUE(prev.report.converged);
  CostModel c = net->generator(2).cost;
  c.c1 *= 1.05;
  const NetworkDelta delta{{GenCostChange{2, c}}};
  const auto warm = warm_start_solve(net, prev.state, delta, opts);
  const auto cold = cold_solve(std::make_shared<const Network>(apply_delta(*net, delta)), opts);
  ASSERT_TRUE(warm.report.converged);
  ASSERT_TRUE(cold.report.converged);
  EXPECT_LT(warm.report.iterations, cold.report.iterations);
  EXPECT_NEAR(warm.objective, cold.objective, 1e-6 * cold.objective);
}

TEST(WarmStart, OpfEmptyDeltaKeepsDispatch) {
  const auto net = test::load_case("case14");
  auto opts = family(Family::Opf);
  opts.newton.tol = 1e-9;
  const auto prev = cold_solve(net, opts);
  ASSERT_TRUE(prev.report.converged);
  const auto res = warm_start_solve(net, prev.state, {}, opts);
  ASSERT_TRUE(res.report.converged);
  EXPECT_LE((res.state.segment(Segment::Pg) - prev.state.segment(Segment::Pg)).lpNorm<Eigen::Infinity>(), 1e-8);
}

TEST(WarmStart, DisablingTheSlackGeneratorIsRejected) {
  const auto net = test::load_case("case14");
  const auto prev = cold_solve(net, family(Family::PowerFlow));
  EXPECT_THROW(warm_start_solve(net, prev.state, {{GenStatusChange{1, Status::Out}}}, family(Family::PowerFlow)),
               ValidationError);
}

TEST(WarmStart, GeneratorOutageChangesLayout) {
  const auto net = test::load_case("case14");
  const auto prev = cold_solve(net, family(Family::PowerFlow));
  const auto res = warm_start_solve(net, prev.state, {{GenStatusChange{3, Status::Out}}}, family(Family::PowerFlow));
  ASSERT_TRUE(res.report.converged);
  EXPECT_EQ(res.state.layout->count(Segment::Qg) + 1, prev.state.layout->count(Segment::Qg));
}

TEST(WarmStart, Case118OutagesBeatColdStartInMedian) {
  const auto net = test::load_case("case118");
  const auto opts = family(Family::InfeasibilityPF);
  const auto prev = cold_solve(net, opts);
  ASSERT_TRUE(prev.report.converged);
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> pick(1, static_cast<int>(net->branches().size()));
  std::vector<int> warm, cold;
  for (int i = 0; i < 50; ++i) {
    const auto delta = outage(pick(rng));
    const auto w = warm_start_solve(net, prev.state, delta, opts);
    const auto c = cold_solve(std::make_shared<const Network>(apply_delta(*net, delta)), opts);
    ASSERT_TRUE(w.report.converged);
    warm.push_back(w.report.iterations);
    cold.push_back(c.report.iterations);
  }
  std::sort(warm.begin(), warm.end());
  std::sort(cold.begin(), cold.end());
  EXPECT_LT(warm[warm.size() / 2], cold[cold.size() / 2]);
}

}  // namespace
}  // namespace gridstep
