#include "gridstep/solution_io.hpp"

#include <cmath>
#include <json.hpp>
#include <numbers>
#include <set>

#include "gridstep/errors.hpp"
#include "gridstep/power_flow.hpp"

namespace gridstep {

using nlohmann::json;

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};

json parse_json(std::string_view text, const char* what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string(what) + ": " + e.what());
  }
}

Status status_from(const std::string& s) {
  if (s == "in") return Status::In;
  if (s == "out") return Status::Out;
  throw ParseError("unknown status '" + s + "'");
}

// "in" / "out", or a boolean in-service flag; absent means out.
Status status_field(const json& c) {
  if (!c.contains("status")) return Status::Out;
  const auto& v = c.at("status");
  if (v.is_boolean()) return v.get<bool>() ? Status::In : Status::Out;
  return status_from(v.get<std::string>());
}

json delta_json(const NetworkDelta& delta) {
  json changes = json::array();
  for (const auto& change : delta.changes) {
    std::visit(overloaded{
                   [&](const BranchStatusChange& c) {
                     changes.push_back({{"type", "branch_status"}, {"branch", c.branch}, {"status", to_string(c.status)}});
                   },
                   [&](const LoadScaleChange& c) {
                     changes.push_back({{"type", "load_scale"}, {"bus", c.bus}, {"scale", c.scale}});
                   },
                   [&](const GenSetpointChange& c) {
                     changes.push_back({{"type", "gen_setpoint"}, {"gen", c.gen}, {"p_set", c.p_set}});
                   },
                   [&](const GenStatusChange& c) {
                     changes.push_back({{"type", "gen_status"}, {"gen", c.gen}, {"status", to_string(c.status)}});
                   },
                   [&](const ShuntChange& c) {
                     changes.push_back({{"type", "shunt"}, {"bus", c.bus}, {"g", c.g}, {"b", c.b}});
                   },
                   [&](const GenCostChange& c) {
                     changes.push_back({{"type", "gen_cost"},
                                        {"gen", c.gen},
                                        {"c2", c.cost.c2},
                                        {"c1", c.cost.c1},
                                        {"c0", c.cost.c0}});
                   },
               },
               change);
  }
  return {{"changes", changes}};
}

NetworkDelta delta_from(const json& j) {
  NetworkDelta d;
  if (!j.is_object() || !j.contains("changes")) throw ParseError("delta needs a 'changes' array");
  for (const auto& c : j.at("changes")) {
    const std::string type = c.at("type").get<std::string>();
    if (type == "branch_status")
      d.changes.push_back(BranchStatusChange{c.at("branch").get<int>(), status_field(c)});
    else if (type == "load_scale")
      d.changes.push_back(LoadScaleChange{c.at("bus").get<int>(), c.at("scale").get<double>()});
    else if (type == "gen_setpoint")
      d.changes.push_back(GenSetpointChange{c.at("gen").get<int>(), c.at("p_set").get<double>()});
    else if (type == "gen_status")
      d.changes.push_back(GenStatusChange{c.at("gen").get<int>(), status_field(c)});
    else if (type == "shunt")
      d.changes.push_back(ShuntChange{c.at("bus").get<int>(), c.value("g", 0.0), c.value("b", 0.0)});
    else if (type == "gen_cost")
      d.changes.push_back(
          GenCostChange{c.at("gen").get<int>(), CostModel{c.value("c2", 0.0), c.value("c1", 0.0), c.value("c0", 0.0)}});
    else
      throw ParseError("unknown change type '" + type + "'");
  }
  return d;
}

// Wraps nlohmann's type errors so every malformed input surfaces as ParseError.
template <class F>
auto guarded(const char* what, F&& f) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw ParseError(std::string(what) + ": " + e.what());
  }
}

json report_json(const SolveReport& r) {
  json j = {{"status", to_string(r.status)},
            {"converged", r.converged},
            {"iterations", r.iterations},
            {"residual_history", r.residual_history},
            {"condition", to_string(r.condition)},
            {"min_pivot_ratio", r.min_pivot_ratio},
            {"singular_index", r.singular_index},
            {"wall_time", r.wall_time},
            {"message", r.message}};
  j["metrics"] = json::object();
  for (const auto& [k, v] : r.metrics) j["metrics"][k] = v;
  return j;
}

SolveReport report_from(const json& j) {
  SolveReport r;
  const std::string status = j.at("status").get<std::string>();
  for (auto s : {SolveStatus::Converged, SolveStatus::MaxIterations, SolveStatus::Diverged, SolveStatus::SingularJacobian,
                 SolveStatus::NumericalBreakdown, SolveStatus::HomotopyStalled, SolveStatus::InvalidInput})
    if (to_string(s) == status) r.status = s;
  const std::string cond = j.value("condition", std::string("ok"));
  for (auto c : {ConditionFlag::Ok, ConditionFlag::NearSingular, ConditionFlag::Singular})
    if (to_string(c) == cond) r.condition = c;
  r.converged = j.at("converged").get<bool>();
  r.iterations = j.at("iterations").get<int>();
  r.residual_history = j.value("residual_history", std::vector<double>{});
  r.min_pivot_ratio = j.value("min_pivot_ratio", 1.0);
  r.singular_index = j.value("singular_index", static_cast<Index>(-1));
  r.wall_time = j.value("wall_time", 0.0);
  r.message = j.value("message", std::string());
  if (j.contains("metrics"))
    for (const auto& [k, v] : j.at("metrics").items()) r.metrics[k] = v.get<double>();
  return r;
}

json path_json(const HomotopyPath& p) {
  auto records = [](const std::vector<HomotopyRecord>& rs) {
    json a = json::array();
    for (const auto& r : rs)
      a.push_back({{"gamma", r.gamma},
                   {"residual_norm", r.residual_norm},
                   {"iterations", r.report.iterations},
                   {"converged", r.report.converged},
                   {"residual_history", r.report.residual_history}});
    return a;
  };
  return {{"injection_norm", p.injection_norm},
          {"total_iterations", p.total_iterations()},
          {"records", records(p.records)},
          {"rejected", records(p.rejected)}};
}

json state_json(const SolverState& s) {
  json segs = json::array();
  for (const auto& info : s.layout->segments()) {
    json keys = json::array();
    for (const auto& k : info.keys) keys.push_back(json::array({to_string(k.kind), k.id}));
    std::vector<double> values(s.values.data() + info.offset, s.values.data() + info.offset + info.size());
    segs.push_back({{"segment", to_string(info.segment)}, {"keys", keys}, {"values", values}});
  }
  return {{"segments", segs}};
}

SolverState state_from(const json& j) {
  auto layout = std::make_shared<StateLayout>();
  std::vector<double> values;
  for (const auto& seg : j.at("segments")) {
    const auto s = segment_from_string(seg.at("segment").get<std::string>());
    if (!s) throw ParseError("unknown segment '" + seg.at("segment").get<std::string>() + "'");
    std::vector<ElementKey> keys;
    for (const auto& k : seg.at("keys")) {
      const auto kind = key_kind_from_string(k.at(0).get<std::string>());
      if (!kind) throw ParseError("unknown key kind '" + k.at(0).get<std::string>() + "'");
      keys.push_back({*kind, k.at(1).get<int>()});
    }
    const auto v = seg.at("values").get<std::vector<double>>();
    if (v.size() != keys.size()) throw StructuralError("segment " + to_string(*s) + " has mismatched keys and values");
    layout->append(*s, std::move(keys));
    values.insert(values.end(), v.begin(), v.end());
  }
  return SolverState(layout, Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Index>(values.size())));
}

}  // namespace

std::string delta_to_json(const NetworkDelta& delta) { return delta_json(delta).dump(1); }

NetworkDelta delta_from_json(std::string_view text) {
  const json j = parse_json(text, "delta JSON");
  return guarded("delta JSON", [&] { return delta_from(j); });
}

ContingencyList contingency_list_from_json(std::string_view text) {
  const json j = parse_json(text, "contingency list JSON");
  ContingencyList list = guarded("contingency list JSON", [&] {
    ContingencyList out;
    const json& arr = j.is_array() ? j : j.at("contingencies");
    for (const auto& e : arr) {
      Contingency c;
      c.id = e.at("id").is_string() ? e.at("id").get<std::string>() : std::to_string(e.at("id").get<long long>());
      if (e.contains("delta"))
        c.delta = delta_from(e.at("delta"));
      else if (e.contains("branch"))
        c.delta.changes.push_back(BranchStatusChange{e.at("branch").get<int>(), Status::Out});
      else
        throw ParseError("contingency '" + c.id + "' has neither 'delta' nor 'branch'");
      out.push_back(std::move(c));
    }
    return out;
  });
  std::set<std::string> ids;
  for (const auto& c : list)
    if (!ids.insert(c.id).second) throw ValidationError("repeated contingency id '" + c.id + "'");
  return list;
}

std::string contingency_list_to_json(const ContingencyList& list) {
  json arr = json::array();
  for (const auto& c : list) arr.push_back({{"id", c.id}, {"delta", delta_json(c.delta)}});
  return json{{"contingencies", arr}}.dump(1);
}

ContingencyList single_branch_outages(const Network& net) {
  ContingencyList out;
  for (const auto& br : net.branches())
    if (br.status == Status::In)
      out.push_back({"branch-" + std::to_string(br.id), {{BranchStatusChange{br.id, Status::Out}}}});
  return out;
}

void validate_contingencies(const Network& net, const ContingencyList& list) {
  std::set<std::string> ids;
  for (const auto& c : list) {
    if (!ids.insert(c.id).second) throw ValidationError("repeated contingency id '" + c.id + "'");
    try {
      (void)apply_delta(net, c.delta);
    } catch (const ValidationError& e) {
      throw ValidationError("contingency '" + c.id + "': " + e.what());
    }
  }
}

std::string report_to_json(const SolveReport& report) { return report_json(report).dump(1); }
std::string path_to_json(const HomotopyPath& path) { return path_json(path).dump(1); }
std::string state_to_json(const SolverState& state) { return state_json(state).dump(1); }

SolverState state_from_json(std::string_view text) {
  const json j = parse_json(text, "state JSON");
  return guarded("state JSON", [&] { return state_from(j); });
}

std::string solution_to_json(const Network& net, const FamilySolve& solve, const FamilyOptions& opts,
                             const NetworkDelta& delta) {
  const SolverState& x = solve.state;
  json j;
  j["format"] = "gridstep-solution/1";
  j["family"] = to_string(opts.family);
  j["flow_limits"] = opts.flow_limits;
  if (opts.family == Family::Opf) j["epsilon"] = dynamic_cast<const KktSystem&>(*solve.system).epsilon();
  j["converged"] = solve.report.converged;
  j["objective"] = solve.objective;
  j["delta"] = delta_json(delta);

  j["buses"] = json::array();
  for (const auto& b : net.buses()) {
    const Complex v = bus_voltage(x, b.id);
    j["buses"].push_back({{"id", b.id}, {"vm", std::abs(v)}, {"va_deg", std::arg(v) * 180.0 / std::numbers::pi}});
  }
  j["generators"] = json::array();
  for (const auto& g : generator_dispatch(net, x))
    j["generators"].push_back({{"id", g.gen}, {"pg_mw", g.p * net.base_mva()}, {"qg_mvar", g.q * net.base_mva()}});

  json mult = json::object();
  for (const auto seg : {Segment::Lambda, Segment::Mu}) {
    if (!x.layout->has(seg) || x.layout->count(seg) == 0) continue;
    const auto v = x.segment(seg);
    mult[to_string(seg)] = {{"min", v.minCoeff()}, {"max", v.maxCoeff()}};
  }
  j["multipliers"] = mult;
  if (x.layout->has(Segment::SlackRe))
    j["slack_norm"] = std::sqrt(x.segment(Segment::SlackRe).squaredNorm() + x.segment(Segment::SlackIm).squaredNorm());
  j["report"] = report_json(solve.report);
  if (!solve.path.records.empty()) j["path"] = path_json(solve.path);
  j["state"] = state_json(x);
  return j.dump(1);
}

SolutionFile solution_from_json(std::string_view text) {
  const json j = parse_json(text, "solution JSON");
  return guarded("solution JSON", [&] {
    SolutionFile s;
    const auto fam = family_from_string(j.at("family").get<std::string>());
    if (!fam) throw ParseError("unknown family '" + j.at("family").get<std::string>() + "'");
    s.family = *fam;
    s.flow_limits = j.value("flow_limits", false);
    s.epsilon = j.value("epsilon", 0.0);
    s.delta = j.contains("delta") ? delta_from(j.at("delta")) : NetworkDelta{};
    s.state = state_from(j.at("state"));
    s.report = report_from(j.at("report"));
    s.objective = j.value("objective", 0.0);
    return s;
  });
}

double verify_solution(const Network& case_net, const SolutionFile& sol) {
  FamilyOptions opts;
  opts.family = sol.family;
  opts.flow_limits = sol.flow_limits;
  if (sol.family == Family::Opf && sol.epsilon > 0.0) opts.opf.epsilon_final = sol.epsilon;
  const auto net = std::make_shared<const Network>(apply_delta(case_net, sol.delta));
  const auto sys = build_family_system(net, opts);
  if (!sol.state.layout || !(*sol.state.layout == *sys->layout()))
    throw StructuralError("stored state does not match the rebuilt system layout");
  return sys->residual(SolverState(sys->layout(), sol.state.values)).lpNorm<Eigen::Infinity>();
}

}  // namespace gridstep
