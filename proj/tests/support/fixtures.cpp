#include "fixtures.hpp"

#include <map>
#include <cmath>
#include <mutex>
#include <random>

#include <json.hpp>

#include "gridstep/case_io.hpp"

namespace gridstep::test {

std::string data_path(const std::string& file) { return std::string(GRIDSTEP_DATA_DIR) + "/" + file; }

NetworkPtr load_case(const std::string& name) {
  static std::mutex mu;
  static std::map<std::string, NetworkPtr> cache;
  std::lock_guard lock(mu);
  auto& slot = cache[name];
  if (!slot) slot = std::make_shared<const Network>(load_case_file(data_path(name + ".m")));
  return slot;
}

const Reference& load_reference(const std::string& name) {
  static std::mutex mu;
  static std::map<std::string, Reference> cache;
  std::lock_guard lock(mu);
  auto it = cache.find(name);
  if (it != cache.end()) return it->second;
  const auto j = nlohmann::json::parse(read_text_file(data_path("reference/" + name + ".json")));
  Reference r;
  r.bus = j.at("bus").get<std::vector<int>>();
  r.vm = j.at("vm").get<std::vector<double>>();
  r.va_deg = j.at("va_deg").get<std::vector<double>>();
  r.pg_mw = j.at("pg_mw").get<std::vector<double>>();
  r.qg_mvar = j.at("qg_mvar").get<std::vector<double>>();
  r.opf_pg_mw = j.at("opf_pg_mw").get<std::vector<double>>();
  r.opf_objective = j.at("opf_objective").get<double>();
  return cache.emplace(name, std::move(r)).first->second;
}

SolverState random_state(const LayoutPtr& layout, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> mag(0.9, 1.1), ang(-0.3, 0.3), other(-1.0, 1.0);
  SolverState s(layout);
  for (std::size_t i = 0; i < s.size(); ++i) s.values[static_cast<Eigen::Index>(i)] = other(rng);
  const auto* vr = layout->find(Segment::Vr);
  const auto* vi = layout->find(Segment::Vi);
  if (vr && vi) {
    for (std::size_t k = 0; k < vr->size(); ++k) {
      const double m = mag(rng), a = ang(rng);
      s.values[static_cast<Eigen::Index>(vr->offset + k)] = m * std::cos(a);
      s.values[static_cast<Eigen::Index>(vi->offset + k)] = m * std::sin(a);
    }
  }
  return s;
}

NetworkData two_bus(double r, double x, double p_load, double q_load) {
  NetworkData d;
  d.name = "two_bus";
  d.base_mva = 100.0;
  Bus b1;
  b1.id = 1;
  b1.kind = BusKind::Slack;
  Bus b2;
  b2.id = 2;
  d.buses = {b1, b2};
  Branch br;
  br.id = 1;
  br.from_bus = 1;
  br.to_bus = 2;
  br.series_r = r;
  br.series_x = x;
  d.branches = {br};
  Generator g;
  g.id = 1;
  g.bus = 1;
  g.q_min = -10.0;
  g.q_max = 10.0;
  g.p_max = 10.0;
  d.generators = {g};
  if (p_load != 0.0 || q_load != 0.0) d.loads = {Load{2, 2, p_load, q_load, 1.0}};
  return d;
}

}  // namespace gridstep::test
