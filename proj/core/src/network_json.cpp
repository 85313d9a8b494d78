#include <json.hpp>

#include "gridstep/case_io.hpp"
#include "gridstep/errors.hpp"

namespace gridstep {

using nlohmann::json;

namespace {

BusKind kind_from(const std::string& s) {
  if (s == "PQ") return BusKind::PQ;
  if (s == "PV") return BusKind::PV;
  if (s == "Slack") return BusKind::Slack;
  throw ParseError("unknown bus kind '" + s + "'");
}

Status status_from(const std::string& s) {
  if (s == "in") return Status::In;
  if (s == "out") return Status::Out;
  throw ParseError("unknown status '" + s + "'");
}

}  // namespace

std::string network_to_json(const Network& net) {
  json j;
  j["format"] = "gridstep-network/1";
  j["name"] = net.name();
  j["base_mva"] = net.base_mva();
  j["buses"] = json::array();
  for (const auto& b : net.buses()) {
    j["buses"].push_back({{"id", b.id},           {"kind", to_string(b.kind)}, {"base_kv", b.base_kv},
                          {"v_set", b.v_set},     {"angle_set", b.angle_set},  {"shunt_g", b.shunt_g},
                          {"shunt_b", b.shunt_b}, {"v_min", b.v_min},          {"v_max", b.v_max},
                          {"vm_init", b.vm_init}, {"va_init", b.va_init},      {"area", b.area}});
  }
  j["branches"] = json::array();
  for (const auto& br : net.branches()) {
    json e = {{"id", br.id},
              {"from_bus", br.from_bus},
              {"to_bus", br.to_bus},
              {"r", br.series_r},
              {"x", br.series_x},
              {"b", br.charging_b},
              {"tap_ratio", br.tap_ratio},
              {"phase_shift", br.phase_shift},
              {"status", to_string(br.status)}};
    e["flow_limit"] = br.flow_limit ? json(*br.flow_limit) : json(nullptr);
    j["branches"].push_back(std::move(e));
  }
  j["generators"] = json::array();
  for (const auto& g : net.generators()) {
    j["generators"].push_back({{"id", g.id},
                               {"bus", g.bus},
                               {"p_set", g.p_set},
                               {"q_set", g.q_set},
                               {"q_min", g.q_min},
                               {"q_max", g.q_max},
                               {"p_min", g.p_min},
                               {"p_max", g.p_max},
                               {"v_set", g.v_set},
                               {"cost", {{"c2", g.cost.c2}, {"c1", g.cost.c1}, {"c0", g.cost.c0}}},
                               {"status", to_string(g.status)},
                               {"renewable", g.renewable}});
  }
  j["loads"] = json::array();
  for (const auto& l : net.loads())
    j["loads"].push_back({{"id", l.id}, {"bus", l.bus}, {"p", l.p}, {"q", l.q}, {"scale", l.scale}});
  return j.dump(1);
}

Network network_from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("network JSON: ") + e.what());
  }
  try {
    NetworkData d;
    d.name = j.value("name", std::string());
    if (!j.contains("base_mva")) throw StructuralError("network JSON has no base_mva");
    for (const char* key : {"buses", "branches", "generators"})
      if (!j.contains(key)) throw StructuralError(std::string("network JSON has no ") + key);
    d.base_mva = j.at("base_mva").get<double>();
    for (const auto& e : j.at("buses")) {
      Bus b;
      b.id = e.at("id").get<int>();
      b.kind = kind_from(e.at("kind").get<std::string>());
      b.base_kv = e.value("base_kv", 0.0);
      b.v_set = e.value("v_set", 1.0);
      b.angle_set = e.value("angle_set", 0.0);
      b.shunt_g = e.value("shunt_g", 0.0);
      b.shunt_b = e.value("shunt_b", 0.0);
      b.v_min = e.value("v_min", 0.9);
      b.v_max = e.value("v_max", 1.1);
      b.vm_init = e.value("vm_init", b.v_set);
      b.va_init = e.value("va_init", b.angle_set);
      b.area = e.value("area", 1);
      d.buses.push_back(b);
    }
    for (const auto& e : j.at("branches")) {
      Branch br;
      br.id = e.at("id").get<int>();
      br.from_bus = e.at("from_bus").get<int>();
      br.to_bus = e.at("to_bus").get<int>();
      br.series_r = e.at("r").get<double>();
      br.series_x = e.at("x").get<double>();
      br.charging_b = e.value("b", 0.0);
      br.tap_ratio = e.value("tap_ratio", 1.0);
      br.phase_shift = e.value("phase_shift", 0.0);
      br.status = status_from(e.value("status", std::string("in")));
      if (e.contains("flow_limit") && !e.at("flow_limit").is_null()) br.flow_limit = e.at("flow_limit").get<double>();
      d.branches.push_back(br);
    }
    for (const auto& e : j.at("generators")) {
      Generator g;
      g.id = e.at("id").get<int>();
      g.bus = e.at("bus").get<int>();
      g.p_set = e.value("p_set", 0.0);
      g.q_set = e.value("q_set", 0.0);
      g.q_min = e.value("q_min", 0.0);
      g.q_max = e.value("q_max", 0.0);
      g.p_min = e.value("p_min", 0.0);
      g.p_max = e.value("p_max", 0.0);
      g.v_set = e.value("v_set", 1.0);
      if (e.contains("cost")) {
        const auto& c = e.at("cost");
        g.cost = CostModel{c.value("c2", 0.0), c.value("c1", 0.0), c.value("c0", 0.0)};
      }
      g.status = status_from(e.value("status", std::string("in")));
      g.renewable = e.value("renewable", false);
      d.generators.push_back(g);
    }
    if (j.contains("loads"))
      for (const auto& e : j.at("loads"))
        d.loads.push_back(Load{e.at("id").get<int>(), e.at("bus").get<int>(), e.value("p", 0.0), e.value("q", 0.0),
                               e.value("scale", 1.0)});
    Network net(std::move(d));
    for (const auto& diag : validate(net))
      if (diag.rule == Rule::DuplicateId) throw ValidationError(diag.element + ": duplicate id");
    return net;
  } catch (const json::exception& e) {
    throw ParseError(std::string("network JSON: ") + e.what());
  }
}

}  // namespace gridstep
