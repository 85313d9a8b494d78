#include <gtest/gtest.h>

#include <cmath>

#include "fixtures.hpp"
#include "gridstep/case_io.hpp"
#include "gridstep/errors.hpp"
#include "gridstep/studies.hpp"

namespace gridstep {
namespace {

FamilyOptions family(Family f, double tol = 1e-10) {
  FamilyOptions o;
  o.family = f;
  o.newton.tol = tol;
  return o;
}

NetworkDelta scale_all_loads(const Network& net, double s) {
  NetworkDelta d;
  for (const auto& l : net.loads()) d.changes.push_back(LoadScaleChange{l.bus, s});
  return d;
}

TEST(RunPowerflow, Case14ColdWithinVoltageLimits) {
  const auto net = test::load_case("case14");
  const auto r = run_powerflow(net, family(Family::PowerFlow), Method::Cold);
  ASSERT_TRUE(r.result.rows.at(0).converged);
  for (const auto& b : net->buses()) {
    const double vm = std::abs(bus_voltage(r.solve.state, b.id));
    EXPECT_GE(vm, 0.9);
    EXPECT_LE(vm, 1.1);
  }
}

TEST(RunPowerflow, OwnSolutionAsWarmStartIsAFixedPoint) {
  const auto net = test::load_case("case14");
  const auto cold = run_powerflow(net, family(Family::PowerFlow), Method::Cold);
  const auto warm = run_powerflow(net, family(Family::PowerFlow), Method::NetworkStepping, {}, &cold.solve.state);
  ASSERT_TRUE(warm.result.rows[0].converged);
  EXPECT_LE(warm.result.rows[0].iterations, 1);
}

TEST(RunPowerflow, NetworkSteppingWithoutWarmStartIsUsageError) {
  const auto net = test::load_case("case14");
  EXPECT_THROW(run_powerflow(net, family(Family::PowerFlow), Method::NetworkStepping), InputError);
  EXPECT_THROW(run_powerflow(net, family(Family::Opf), Method::Cold), InputError);
}

TEST(RunPowerflow, SyntaxErrorIsParseError) {
  EXPECT_THROW(parse_case("function mpc = broken\nmpc.baseMVA = 100;\nmpc.bus = [1 3 0 0;\n"), ParseError);
}

TEST(RunOpf, Case14ColdNearReferenceOptimum) {
  const auto net = test::load_case("case14");
  const auto r = run_opf(net, family(Family::Opf, 1e-9), Method::Cold);
  ASSERT_TRUE(r.result.rows[0].converged);
  const double ref = test::load_reference("case14").opf_objective;
  EXPECT_LE(std::abs(r.result.rows[0].objective - ref), 0.005 * ref);
}

TEST(RunOpf, LoadScalingWarmStartBeatsCold) {
  const auto net = test::load_case("case14");
  const auto opts = family(Family::Opf, 1e-9);
  const auto base = run_opf(net, opts, Method::Cold);
  const auto delta = scale_all_loads(*net, 1.01);
  const auto warm = run_opf(net, opts, Method::NetworkStepping, delta, &base.solve.state);
  const auto cold = run_opf(net, opts, Method::Cold, delta);
  ASSERT_TRUE(warm.result.rows[0].converged);
  ASSERT_TRUE(cold.result.rows[0].converged);
  EXPECT_LT(warm.result.rows[0].iterations, cold.result.rows[0].iterations);
  EXPECT_NEAR(warm.result.rows[0].objective, cold.result.rows[0].objective, 1e-6 * cold.result.rows[0].objective);
}

TEST(ContingencyBatch, EmptyListIsEmptyTable) {
  const auto r = run_contingency_batch(test::load_case("case14"), {}, {});
  EXPECT_TRUE(r.rows.empty());
  EXPECT_EQ(results_csv(r), "id,converged,iterations,time_s,objective,slack_norm\n");
}

TEST(ContingencyBatch, Case118AllLinesInfeasibilityModeCompletes) {
  const auto net = test::load_case("case118");
  ContingencyOptions o;
  o.family.newton.tol = 1e-9;
  o.jobs = 4;
  const auto r = run_contingency_batch(net, single_branch_outages(*net), o);
  ASSERT_EQ(r.rows.size(), net->branches().size());
  EXPECT_EQ(r.stats.converged, r.rows.size());
}

TEST(ContingencyBatch, JobsDoNotChangeTheTable) {
  const auto net = test::load_case("case30");
  ContingencyOptions o;
  o.compare_cold = true;
  const auto list = single_branch_outages(*net);
  o.jobs = 1;
  const auto a = run_contingency_batch(net, list, o);
  o.jobs = 8;
  const auto b = run_contingency_batch(net, list, o);
  EXPECT_EQ(results_csv(a, false), results_csv(b, false));
  EXPECT_EQ(b.jobs, 8);
}

TEST(ContingencyBatch, PerInstanceFailuresAreRecorded) {
  // Branch 14 (7-8) alone feeds bus 8: plain power flow rejects the islanded target.
  const auto net = test::load_case("case14");
  ContingencyOptions o;
  o.mode = ContingencyMode::PowerFlow;
  const ContingencyList list{{"a", {{BranchStatusChange{14, Status::Out}}}}, {"b", {{BranchStatusChange{3, Status::Out}}}}};
  const auto r = run_contingency_batch(net, list, o);
  ASSERT_EQ(r.rows.size(), 2u);
  EXPECT_FALSE(r.rows[0].converged);
  EXPECT_NE(r.rows[0].message.find("island"), std::string::npos);
  EXPECT_TRUE(r.rows[1].converged);
}

TEST(ContingencyBatch, ContingencyOpfCase14) {
  const auto net = test::load_case("case14");
  ContingencyOptions o;
  o.mode = ContingencyMode::ContingencyOpf;
  o.family.newton.tol = 1e-9;
  const ContingencyList list{{"b3", {{BranchStatusChange{3, Status::Out}}}},
                             {"b10", {{BranchStatusChange{10, Status::Out}}}}};
  const auto r = run_contingency_batch(net, list, o);
  for (const auto& row : r.rows) {
    EXPECT_TRUE(row.converged) << row.id << " " << row.message;
    EXPECT_LE(row.slack_norm, 1e-6) << row.id;
  }
}

TEST(ContingencyBatch, InvalidListIsRejected) {
  const auto net = test::load_case("case14");
  EXPECT_THROW(run_contingency_batch(net, {{"x", {{BranchStatusChange{999, Status::Out}}}}}, {}), ValidationError);
  EXPECT_THROW(contingency_list_from_json(R"({"contingencies":[{"id":"a","branch":1},{"id":"a","branch":2}]})"),
               ValidationError);
}

TEST(Aggregate, MatchesRowRecomputation) {
  std::vector<InstanceResult> rows(4);
  const int it[] = {3, 7, 5, 9};
  for (int k = 0; k < 4; ++k) {
    rows[static_cast<std::size_t>(k)].iterations = it[k];
    rows[static_cast<std::size_t>(k)].converged = k != 1;
    rows[static_cast<std::size_t>(k)].time_s = 0.5;
  }
  const auto a = aggregate(rows);
  EXPECT_EQ(a.instances, 4u);
  EXPECT_EQ(a.converged, 3u);
  EXPECT_DOUBLE_EQ(a.convergence_rate, 0.75);
  EXPECT_DOUBLE_EQ(a.mean_iterations, 6.0);
  EXPECT_DOUBLE_EQ(a.median_iterations, 6.0);
  EXPECT_EQ(a.max_iterations, 9);
  EXPECT_DOUBLE_EQ(a.total_time_s, 2.0);
}

TEST(MonteCarlo, ZeroSigmaReproducesTheIdealCase) {
  const auto net = test::load_case("case14");
  MonteCarloSpec spec;
  spec.samples = 5;
  spec.sigma = 0.0;
  MonteCarloOptions o;
  o.family = family(Family::PowerFlow);
  const auto r = run_montecarlo(net, spec, o);
  for (const auto& row : r.result.rows) {
    ASSERT_TRUE(row.converged);
    for (std::size_t k = 0; k < net->buses().size(); ++k)
      EXPECT_EQ(row.vm[k], std::abs(bus_voltage(r.ideal.state, net->buses()[k].id)));
  }
  for (const auto& h : r.vm) EXPECT_EQ(h.counts, std::vector<int>{5});
}

TEST(MonteCarlo, SeededRunsAreReproducible) {
  const auto net = test::load_case("case30");
  MonteCarloSpec spec;
  spec.samples = 20;
  spec.seed = 99;
  MonteCarloOptions o;
  o.family = family(Family::PowerFlow);
  const auto a = run_montecarlo(net, spec, o);
  o.jobs = 8;
  const auto b = run_montecarlo(net, spec, o);
  EXPECT_EQ(results_csv(a.result, false), results_csv(b.result, false));
  EXPECT_EQ(histogram_csv(a.vm), histogram_csv(b.vm));
  EXPECT_EQ(histogram_csv(a.va_deg), histogram_csv(b.va_deg));
  spec.seed = 100;
  EXPECT_NE(results_csv(run_montecarlo(net, spec, o).result, false), results_csv(a.result, false));
}

TEST(MonteCarlo, SamplesAreClippedAtZero) {
  const auto net = test::load_case("case14");
  MonteCarloSpec spec;
  spec.samples = 200;
  spec.sigma = 2.0;
  bool clipped = false;
  for (const auto& d : draw_samples(*net, spec))
    for (const auto& c : d.changes) {
      const double s = std::get<LoadScaleChange>(c).scale;
      EXPECT_GE(s, 0.0);
      clipped |= s == 0.0;
    }
  EXPECT_TRUE(clipped);
  spec.samples = 0;
  EXPECT_THROW(draw_samples(*net, spec), InputError);
}

TEST(MonteCarlo, Case118WarmMeanBelowCold) {
  const auto net = test::load_case("case118");
  MonteCarloSpec spec;
  spec.samples = 100;
  spec.sigma = 0.2;
  spec.seed = 2024;
  MonteCarloOptions o;
  o.family = family(Family::PowerFlow);
  o.compare_cold = true;
  const auto r = run_montecarlo(net, spec, o);
  EXPECT_EQ(r.result.stats.converged, 100u);
  EXPECT_LT(r.result.stats.mean_iterations, *r.result.stats.mean_cold_iterations);
}

TEST(Histogram, BinsCoverTheRange) {
  const auto h = make_histogram(3, {1.0, 2.0, 2.5, 3.0}, 4);
  ASSERT_EQ(h.edges.size(), 5u);
  EXPECT_EQ(h.edges.front(), 1.0);
  EXPECT_EQ(h.edges.back(), 3.0);
  EXPECT_EQ(h.counts, (std::vector<int>{1, 0, 1, 2}));
  EXPECT_EQ(histogram_csv({h}).substr(0, 27), "bus,bin_low,bin_high,count\n");
}

TEST(SolutionFile, RoundTripAndVerification) {
  const auto net = test::load_case("case14");
  for (Family f : {Family::PowerFlow, Family::InfeasibilityPF, Family::Opf}) {
    const auto opts = family(f, 1e-9);
    const NetworkDelta delta{{BranchStatusChange{3, Status::Out}}};
    const auto r = run_single(net, opts, Method::Cold, delta);
    ASSERT_TRUE(r.solve.report.converged) << to_string(f);
    const auto text = solution_to_json(*r.solve.net, r.solve, opts, delta);
    const auto sol = solution_from_json(text);
    EXPECT_EQ(sol.state.values, r.solve.state.values);
    EXPECT_EQ(sol.report.iterations, r.solve.report.iterations);
    EXPECT_LE(verify_solution(*net, sol), 1e-9) << to_string(f);
    // Against the wrong network the layout or the residual gives it away.
    SolutionFile wrong = sol;
    wrong.delta = {};
    bool rejected = false;
    try {
      rejected = verify_solution(*net, wrong) > 1e-6;
    } catch (const StructuralError&) {
      rejected = true;
    }
    EXPECT_TRUE(rejected) << to_string(f);
  }
}

TEST(SolutionFile, DeltaJsonRoundTrip) {
  const NetworkDelta d{{BranchStatusChange{2, Status::Out}, LoadScaleChange{4, 1.25}, GenSetpointChange{2, 0.3},
                        GenStatusChange{3, Status::In}, ShuntChange{9, 0.0, 0.19}, GenCostChange{1, {0.01, 20.0, 5.0}}}};
  const auto back = delta_from_json(delta_to_json(d));
  ASSERT_EQ(back.changes.size(), d.changes.size());
  for (std::size_t k = 0; k < d.changes.size(); ++k) EXPECT_EQ(describe(back.changes[k]), describe(d.changes[k]));
  EXPECT_THROW(delta_from_json(R"({"changes":[{"type":"teleport"}]})"), ParseError);
  EXPECT_THROW(delta_from_json("{"), ParseError);
}

}  // namespace
}  // namespace gridstep
