#include <gtest/gtest.h>

#include <algorithm>
#include <queue>
#include <random>
#include <set>

#include "fixtures.hpp"
#include "gridstep/case_io.hpp"
#include "gridstep/delta.hpp"
#include "gridstep/errors.hpp"

namespace gridstep {
namespace {

const char* kTwoBus = R"(function mpc = two
mpc.baseMVA = 100;
mpc.bus = [
  1 3 0  0  0 0 1 1 0 138 1 1.1 0.9;
  2 1 50 20 0 0 1 1 0 138 1 1.1 0.9;
];
mpc.gen = [
  1 0 0 100 -100 1.02 100 1 200 0;
];
mpc.branch = [
  1 2 0.01 0.1 0.02 0 0 0 0 0 1 -360 360;
];
mpc.gencost = [
  2 0 0 3 0.01 20 5;
];
)";

std::string with_replaced(std::string text, const std::string& from, const std::string& to) {
  text.replace(text.find(from), from.size(), to);
  return text;
}

TEST(ParseCase, MinimalTwoBusFixture) {
  const Network net = parse_case(kTwoBus);
  ASSERT_EQ(net.buses().size(), 2u);
  ASSERT_EQ(net.branches().size(), 1u);
  ASSERT_EQ(net.generators().size(), 1u);
  EXPECT_EQ(net.bus(1).kind, BusKind::Slack);
  EXPECT_EQ(net.bus(2).kind, BusKind::PQ);
  EXPECT_DOUBLE_EQ(net.branch(1).series_r, 0.01);
  EXPECT_DOUBLE_EQ(net.branch(1).series_x, 0.1);
  EXPECT_DOUBLE_EQ(net.bus(1).v_set, 1.02);
  ASSERT_EQ(net.loads().size(), 1u);
  EXPECT_DOUBLE_EQ(net.loads()[0].p, 0.5);
  EXPECT_DOUBLE_EQ(net.loads()[0].q, 0.2);
  EXPECT_DOUBLE_EQ(net.generator(1).p_max, 2.0);
  EXPECT_DOUBLE_EQ(net.generator(1).cost.c1, 20.0);
  EXPECT_EQ(net.branch(1).status, Status::In);
}

TEST(ParseCase, BranchStatusZeroIsOut) {
  const auto text = with_replaced(kTwoBus, "0 0 1 -360 360", "0 0 0 -360 360");
  EXPECT_EQ(parse_case(text).branch(1).status, Status::Out);
}

TEST(ParseCase, DuplicateBusIdIsValidationError) {
  const auto text = with_replaced(kTwoBus, "  2 1 50", "  1 1 50");
  EXPECT_THROW(parse_case(text), ValidationError);
}

TEST(ParseCase, MalformedTokenNamesLineAndColumn) {
  const auto text = with_replaced(kTwoBus, "0.01 0.1", "0.01 0.x1");
  try {
    parse_case(text);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 11u);
    EXPECT_EQ(e.column(), 12u);
  }
}

TEST(ParseCase, MissingMatrixIsStructuralError) {
  std::string text = kTwoBus;
  const auto a = text.find("mpc.branch");
  const auto b = text.find("];", a);
  text.erase(a, b + 2 - a);
  EXPECT_THROW(parse_case(text), StructuralError);
}

TEST(ParseCase, NarrowRowIsParseError) { EXPECT_THROW(parse_case(with_replaced(kTwoBus, " 1.02 100 1 200 0;", ";")), ParseError); }

TEST(ParseCase, UnsupportedFieldsWarn) {
  std::vector<std::string> warnings;
  parse_case(std::string(kTwoBus) + "mpc.areas = [1 1];\n", &warnings);
  EXPECT_FALSE(warnings.empty());
}

TEST(ParseCase, WriterRoundTripsStandardCases) {
  for (const char* name : {"case9", "case14", "case30", "case118"}) {
    const auto net = test::load_case(name);
    const Network back = parse_case(write_case(*net));
    EXPECT_TRUE(structurally_equal(*net, back)) << name;
  }
}

TEST(ParseCase, JsonMirrorRoundTrips) {
  const auto net = test::load_case("case30");
  EXPECT_TRUE(structurally_equal(*net, network_from_json(network_to_json(*net))));
}

TEST(ParseCase, JsonMirrorErrors) {
  EXPECT_THROW(network_from_json("{not json"), ParseError);
  EXPECT_THROW(network_from_json(R"({"base_mva": 100, "buses": []})"), StructuralError);
}

TEST(Validate, StandardCasesAreValid) {
  for (const char* name : {"case9", "case14", "case30", "case118"})
    EXPECT_TRUE(validate(*test::load_case(name)).empty()) << name;
}

TEST(Validate, SlackDeletedReportsIslandWithoutSlack) {
  NetworkData d = test::load_case("case14")->data();
  for (auto& b : d.buses)
    if (b.kind == BusKind::Slack) b.kind = BusKind::PV;
  const auto diags = validate(Network(d));
  const bool found = std::any_of(diags.begin(), diags.end(), [](const Diagnostic& x) {
    return x.rule == Rule::IslandWithoutSlack && x.message.find("island without slack") != std::string::npos;
  });
  EXPECT_TRUE(found);
}

TEST(Validate, ZeroImpedanceBranch) {
  const auto diags = validate(Network(test::two_bus(0.0, 0.0, 0.5, 0.0)));
  ASSERT_EQ(diags.size(), 1u);
  EXPECT_EQ(diags[0].rule, Rule::ZeroImpedance);
  EXPECT_EQ(diags[0].element, "branch 1");
  EXPECT_NE(diags[0].message.find("zero series impedance"), std::string::npos);
}

TEST(Validate, InvertedLimitsAndNegativeScale) {
  NetworkData d = test::two_bus(0.01, 0.1, 0.5, 0.0);
  d.generators[0].q_min = 1.0;
  d.generators[0].q_max = -1.0;
  d.loads[0].scale = -1.0;
  const auto diags = validate(Network(d));
  std::set<Rule> rules;
  for (const auto& x : diags) rules.insert(x.rule);
  EXPECT_TRUE(rules.count(Rule::ReactiveLimitsInverted));
  EXPECT_TRUE(rules.count(Rule::NegativeLoadScale));
}

TEST(ApplyDelta, EmptyDeltaIsIdentity) {
  const auto net = test::load_case("case14");
  EXPECT_TRUE(structurally_equal(*net, apply_delta(*net, {})));
}

TEST(ApplyDelta, BranchOutChangesOnlyThatBranch) {
  const auto net = test::load_case("case14");
  const Network out = apply_delta(*net, {{BranchStatusChange{3, Status::Out}}});
  EXPECT_EQ(out.branch(3).status, Status::Out);
  EXPECT_EQ(net->branch(3).status, Status::In);
  NetworkData d = out.data();
  d.branches[*out.branch_index(3)].status = Status::In;
  EXPECT_TRUE(structurally_equal(*net, Network(d)));
  EXPECT_DOUBLE_EQ(out.base_mva(), net->base_mva());
}

TEST(ApplyDelta, LoadScaleInversePair) {
  const auto net = test::load_case("case14");
  const Network up = apply_delta(*net, {{LoadScaleChange{2, 1.1}}});
  const double back = up.loads_at(2)[0]->scale * (1.0 / 1.1);
  const Network down = apply_delta(up, {{LoadScaleChange{2, back}}});
  const auto* l0 = net->loads_at(2)[0];
  const auto* l1 = down.loads_at(2)[0];
  EXPECT_NEAR(l1->p_eff(), l0->p_eff(), 1e-15);
  EXPECT_NEAR(l1->q_eff(), l0->q_eff(), 1e-15);
}

TEST(ApplyDelta, MissingElementIsValidationError) {
  const auto net = test::load_case("case14");
  EXPECT_THROW(apply_delta(*net, {{BranchStatusChange{999, Status::Out}}}), ValidationError);
  EXPECT_THROW(apply_delta(*net, {{GenSetpointChange{99, 1.0}}}), ValidationError);
  EXPECT_THROW(apply_delta(*net, {{ShuntChange{99, 0.0, 0.1}}}), ValidationError);
  EXPECT_THROW(apply_delta(*net, {{LoadScaleChange{7, 1.2}}}), ValidationError);  // bus 7 has no load
}

TEST(ApplyDelta, InvertRestoresExactly) {
  const auto net = test::load_case("case30");
  const NetworkDelta delta{{BranchStatusChange{5, Status::Out}, LoadScaleChange{7, 1.37}, GenSetpointChange{2, 0.123},
                            GenStatusChange{3, Status::Out}, ShuntChange{10, 0.01, 0.2},
                            GenCostChange{1, CostModel{0.5, 1.0, 2.0}}, LoadScaleChange{7, 0.4}}};
  const Network changed = apply_delta(*net, delta);
  EXPECT_FALSE(structurally_equal(*net, changed));
  EXPECT_TRUE(structurally_equal(*net, apply_delta(changed, invert_delta(*net, delta))));
}

TEST(ApplyDelta, IsPure) {
  const auto net = test::load_case("case30");
  const NetworkDelta delta{{BranchStatusChange{5, Status::Out}, LoadScaleChange{7, 1.37}}};
  EXPECT_TRUE(structurally_equal(apply_delta(*net, delta), apply_delta(*net, delta)));
}

// Island detection against a breadth-first search on random graphs.
TEST(Islands, UnionFindAgreesWithBfs) {
  std::mt19937_64 rng(12345);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = std::uniform_int_distribution<int>(1, 12)(rng);
    const int m = std::uniform_int_distribution<int>(0, 2 * n)(rng);
    NetworkData d;
    for (int i = 1; i <= n; ++i) {
      Bus b;
      b.id = i * 3;
      d.buses.push_back(b);
    }
    std::uniform_int_distribution<int> pick(1, n);
    for (int k = 1; k <= m; ++k) {
      Branch br;
      br.id = k;
      br.from_bus = pick(rng) * 3;
      br.to_bus = pick(rng) * 3;
      br.series_x = 0.1;
      br.status = (rng() % 4 == 0) ? Status::Out : Status::In;
      d.branches.push_back(br);
    }
    const Network net(d);

    std::map<int, std::vector<int>> adj;
    for (const auto& br : net.branches())
      if (br.status == Status::In) {
        adj[br.from_bus].push_back(br.to_bus);
        adj[br.to_bus].push_back(br.from_bus);
      }
    std::set<std::vector<int>> expected;
    std::set<int> seen;
    for (const auto& b : net.buses()) {
      if (seen.count(b.id)) continue;
      std::vector<int> comp;
      std::queue<int> q;
      q.push(b.id);
      seen.insert(b.id);
      while (!q.empty()) {
        const int u = q.front();
        q.pop();
        comp.push_back(u);
        for (int v : adj[u])
          if (seen.insert(v).second) q.push(v);
      }
      std::sort(comp.begin(), comp.end());
      expected.insert(comp);
    }
    std::set<std::vector<int>> got;
    for (const auto& island : find_islands(net)) got.insert(island.bus_ids);
    EXPECT_EQ(got, expected) << "trial " << trial;
  }
}

TEST(Islands, OutageCanIslandABus) {
  auto d = test::two_bus(0.01, 0.1, 0.5, 0.0);
  d.branches[0].status = Status::Out;
  const auto islands = find_islands(Network(d));
  ASSERT_EQ(islands.size(), 2u);
  EXPECT_TRUE(islands[0].has_slack);
  EXPECT_FALSE(islands[1].has_slack);
  EXPECT_FALSE(islands[1].has_generator);
}

}  // namespace
}  // namespace gridstep
