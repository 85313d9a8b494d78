#include "gridstep/network.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include "gridstep/errors.hpp"

namespace gridstep {

std::string to_string(BusKind kind) {
  switch (kind) {
    case BusKind::PQ: return "PQ";
    case BusKind::PV: return "PV";
    case BusKind::Slack: return "Slack";
  }
  return "?";
}

std::string to_string(Status status) { return status == Status::In ? "in" : "out"; }

std::string to_string(Rule rule) {
  switch (rule) {
    case Rule::DuplicateId: return "duplicate id";
    case Rule::DanglingReference: return "dangling reference";
    case Rule::SelfLoop: return "branch connects a bus to itself";
    case Rule::ZeroImpedance: return "zero series impedance";
    case Rule::NonPositiveVoltageSetpoint: return "non-positive voltage setpoint";
    case Rule::ReactiveLimitsInverted: return "q_min > q_max";
    case Rule::ActiveLimitsInverted: return "p_min > p_max";
    case Rule::NegativeLoadScale: return "negative load scale";
    case Rule::NonConvexCost: return "negative quadratic cost coefficient";
    case Rule::SlackWithoutGenerator: return "slack bus without in-service generator";
    case Rule::MultipleSlack: return "multiple slack buses in island";
    case Rule::IslandWithoutSlack: return "island without slack";
    case Rule::IslandWithoutGenerator: return "island without generator";
    case Rule::NoReference: return "no island holds a voltage reference";
  }
  return "?";
}

namespace {

template <typename T>
void sort_by_id(std::vector<T>& items) {
  std::stable_sort(items.begin(), items.end(), [](const T& a, const T& b) { return a.id < b.id; });
}

template <typename T>
std::unordered_map<int, std::size_t> index_by_id(const std::vector<T>& items) {
  std::unordered_map<int, std::size_t> pos;
  pos.reserve(items.size());
  for (std::size_t i = 0; i < items.size(); ++i) pos.emplace(items[i].id, i);  // first wins
  return pos;
}

std::optional<std::size_t> lookup(const std::unordered_map<int, std::size_t>& m, int id) {
  auto it = m.find(id);
  if (it == m.end()) return std::nullopt;
  return it->second;
}

// Union-find with path halving; small and allocation-free after construction.
class DisjointSets {
 public:
  explicit DisjointSets(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0); }

  std::size_t find(std::size_t a) {
    while (parent_[a] != a) {
      parent_[a] = parent_[parent_[a]];
      a = parent_[a];
    }
    return a;
  }

  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (b < a) std::swap(a, b);
    parent_[b] = a;
  }

 private:
  std::vector<std::size_t> parent_;
};

}  // namespace

Network::Network(NetworkData data) : data_(std::move(data)) {
  sort_by_id(data_.buses);
  sort_by_id(data_.branches);
  sort_by_id(data_.generators);
  sort_by_id(data_.loads);
  bus_pos_ = index_by_id(data_.buses);
  branch_pos_ = index_by_id(data_.branches);
  gen_pos_ = index_by_id(data_.generators);
  for (std::size_t i = 0; i < data_.generators.size(); ++i) gens_by_bus_[data_.generators[i].bus].push_back(i);
  for (std::size_t i = 0; i < data_.loads.size(); ++i) loads_by_bus_[data_.loads[i].bus].push_back(i);
}

std::optional<std::size_t> Network::bus_index(int bus_id) const { return lookup(bus_pos_, bus_id); }
std::optional<std::size_t> Network::branch_index(int branch_id) const { return lookup(branch_pos_, branch_id); }
std::optional<std::size_t> Network::generator_index(int gen_id) const { return lookup(gen_pos_, gen_id); }

const Bus& Network::bus(int bus_id) const {
  auto i = bus_index(bus_id);
  if (!i) throw ValidationError("no bus with id " + std::to_string(bus_id));
  return data_.buses[*i];
}

const Branch& Network::branch(int branch_id) const {
  auto i = branch_index(branch_id);
  if (!i) throw ValidationError("no branch with id " + std::to_string(branch_id));
  return data_.branches[*i];
}

const Generator& Network::generator(int gen_id) const {
  auto i = generator_index(gen_id);
  if (!i) throw ValidationError("no generator with id " + std::to_string(gen_id));
  return data_.generators[*i];
}

std::vector<const Generator*> Network::generators_at(int bus_id) const {
  std::vector<const Generator*> out;
  auto it = gens_by_bus_.find(bus_id);
  if (it == gens_by_bus_.end()) return out;
  for (auto i : it->second)
    if (data_.generators[i].status == Status::In) out.push_back(&data_.generators[i]);
  return out;
}

std::vector<const Load*> Network::loads_at(int bus_id) const {
  std::vector<const Load*> out;
  auto it = loads_by_bus_.find(bus_id);
  if (it == loads_by_bus_.end()) return out;
  for (auto i : it->second) out.push_back(&data_.loads[i]);
  return out;
}

namespace {

struct FieldCompare {
  double rel_tol;

  bool operator()(double a, double b) const {
    if (a == b) return true;
    return std::abs(a - b) <= rel_tol * std::max({1.0, std::abs(a), std::abs(b)});
  }
  bool operator()(const std::optional<double>& a, const std::optional<double>& b) const {
    if (a.has_value() != b.has_value()) return false;
    return !a || (*this)(*a, *b);
  }
};

bool same(const Bus& a, const Bus& b, const FieldCompare& eq) {
  return a.id == b.id && a.kind == b.kind && a.area == b.area && eq(a.base_kv, b.base_kv) && eq(a.v_set, b.v_set) &&
         eq(a.angle_set, b.angle_set) && eq(a.shunt_g, b.shunt_g) && eq(a.shunt_b, b.shunt_b) &&
         eq(a.v_min, b.v_min) && eq(a.v_max, b.v_max) && eq(a.vm_init, b.vm_init) && eq(a.va_init, b.va_init);
}

bool same(const Branch& a, const Branch& b, const FieldCompare& eq) {
  return a.id == b.id && a.from_bus == b.from_bus && a.to_bus == b.to_bus && a.status == b.status &&
         eq(a.series_r, b.series_r) && eq(a.series_x, b.series_x) && eq(a.charging_b, b.charging_b) &&
         eq(a.tap_ratio, b.tap_ratio) && eq(a.phase_shift, b.phase_shift) && eq(a.flow_limit, b.flow_limit);
}

bool same(const Generator& a, const Generator& b, const FieldCompare& eq) {
  return a.id == b.id && a.bus == b.bus && a.status == b.status && a.renewable == b.renewable &&
         eq(a.p_set, b.p_set) && eq(a.q_set, b.q_set) && eq(a.q_min, b.q_min) && eq(a.q_max, b.q_max) &&
         eq(a.p_min, b.p_min) && eq(a.p_max, b.p_max) && eq(a.v_set, b.v_set) && eq(a.cost.c2, b.cost.c2) &&
         eq(a.cost.c1, b.cost.c1) && eq(a.cost.c0, b.cost.c0);
}

bool same(const Load& a, const Load& b, const FieldCompare& eq) {
  return a.id == b.id && a.bus == b.bus && eq(a.p, b.p) && eq(a.q, b.q) && eq(a.scale, b.scale);
}

template <typename T>
bool all_same(const std::vector<T>& a, const std::vector<T>& b, const FieldCompare& eq) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (!same(a[i], b[i], eq)) return false;
  return true;
}

}  // namespace

bool structurally_equal(const Network& a, const Network& b, double rel_tol) {
  FieldCompare eq{rel_tol};
  return eq(a.base_mva(), b.base_mva()) && all_same(a.buses(), b.buses(), eq) &&
         all_same(a.branches(), b.branches(), eq) && all_same(a.generators(), b.generators(), eq) &&
         all_same(a.loads(), b.loads(), eq);
}

bool is_effective_slack(const Network& net, const Bus& bus) {
  return bus.kind == BusKind::Slack && !net.generators_at(bus.id).empty();
}

bool is_effective_pv(const Network& net, const Bus& bus) {
  return bus.kind == BusKind::PV && !net.generators_at(bus.id).empty();
}

std::vector<Island> find_islands(const Network& net) {
  const auto& buses = net.buses();
  DisjointSets sets(buses.size());
  for (const auto& br : net.branches()) {
    if (br.status != Status::In) continue;
    auto f = net.bus_index(br.from_bus);
    auto t = net.bus_index(br.to_bus);
    if (f && t) sets.unite(*f, *t);
  }

  std::vector<Island> islands;
  std::unordered_map<std::size_t, std::size_t> root_to_island;
  for (std::size_t i = 0; i < buses.size(); ++i) {
    auto root = sets.find(i);
    auto [it, inserted] = root_to_island.emplace(root, islands.size());
    if (inserted) islands.emplace_back();
    auto& island = islands[it->second];
    island.bus_ids.push_back(buses[i].id);
    if (is_effective_slack(net, buses[i])) island.has_slack = true;
    if (!net.generators_at(buses[i].id).empty()) island.has_generator = true;
  }
  // Buses are id-sorted, so islands are created in order of their smallest bus id.
  return islands;
}

std::vector<Diagnostic> validate(const Network& net) {
  std::vector<Diagnostic> out;
  auto add = [&](Rule rule, std::string element, std::string message) {
    out.push_back({rule, std::move(element), std::move(message)});
  };
  auto name = [](const char* kind, int id) { return std::string(kind) + " " + std::to_string(id); };

  auto check_dups = [&](const char* kind, auto const& items) {
    std::set<int> seen;
    for (const auto& item : items)
      if (!seen.insert(item.id).second) add(Rule::DuplicateId, name(kind, item.id), "repeated id");
  };
  check_dups("bus", net.buses());
  check_dups("branch", net.branches());
  check_dups("generator", net.generators());
  check_dups("load", net.loads());

  for (const auto& b : net.buses()) {
    if ((b.kind == BusKind::PV || b.kind == BusKind::Slack) && !(b.v_set > 0.0))
      add(Rule::NonPositiveVoltageSetpoint, name("bus", b.id), "v_set must be positive");
    if (b.kind == BusKind::Slack && net.generators_at(b.id).empty())
      add(Rule::SlackWithoutGenerator, name("bus", b.id), "slack bus has no in-service generator");
  }

  for (const auto& br : net.branches()) {
    if (!net.bus_index(br.from_bus))
      add(Rule::DanglingReference, name("branch", br.id), "from bus " + std::to_string(br.from_bus) + " missing");
    if (!net.bus_index(br.to_bus))
      add(Rule::DanglingReference, name("branch", br.id), "to bus " + std::to_string(br.to_bus) + " missing");
    if (br.from_bus == br.to_bus) add(Rule::SelfLoop, name("branch", br.id), "from_bus equals to_bus");
    if (std::abs(br.series_r) + std::abs(br.series_x) <= 0.0)
      add(Rule::ZeroImpedance, name("branch", br.id), "zero series impedance");
  }

  for (const auto& g : net.generators()) {
    if (!net.bus_index(g.bus))
      add(Rule::DanglingReference, name("generator", g.id), "bus " + std::to_string(g.bus) + " missing");
    if (g.q_min > g.q_max) add(Rule::ReactiveLimitsInverted, name("generator", g.id), "q_min > q_max");
    if (g.p_min > g.p_max) add(Rule::ActiveLimitsInverted, name("generator", g.id), "p_min > p_max");
    if (g.cost.c2 < 0.0) add(Rule::NonConvexCost, name("generator", g.id), "c2 < 0");
  }

  for (const auto& l : net.loads()) {
    if (!net.bus_index(l.bus))
      add(Rule::DanglingReference, name("load", l.id), "bus " + std::to_string(l.bus) + " missing");
    if (l.scale < 0.0) add(Rule::NegativeLoadScale, name("load", l.id), "scale < 0");
  }

  bool any_reference = false;
  for (const auto& island : find_islands(net)) {
    std::size_t slacks = 0;
    for (int id : island.bus_ids)
      if (is_effective_slack(net, net.bus(id))) ++slacks;
    std::string label = "island at bus " + std::to_string(island.bus_ids.front());
    if (slacks == 0) {
      add(Rule::IslandWithoutSlack, label, "island without slack (" + std::to_string(island.bus_ids.size()) + " buses)");
    } else {
      any_reference = true;
    }
    if (slacks > 1) add(Rule::MultipleSlack, label, std::to_string(slacks) + " slack buses");
    if (!island.has_generator) add(Rule::IslandWithoutGenerator, label, "island without generator");
  }
  if (!net.buses().empty() && !any_reference) add(Rule::NoReference, "network", "no island holds a slack bus");
  return out;
}

bool tolerable_with_slack_injection(const Diagnostic& d) {
  return d.rule == Rule::IslandWithoutSlack || d.rule == Rule::IslandWithoutGenerator;
}

void require_valid(const Network& net, bool allow_unreferenced_islands) {
  std::ostringstream msg;
  std::size_t blocking = 0;
  for (const auto& d : validate(net)) {
    if (allow_unreferenced_islands && tolerable_with_slack_injection(d)) continue;
    if (blocking++ > 0) msg << "; ";
    msg << d.element << ": " << d.message;
  }
  if (blocking > 0) throw ValidationError("invalid network: " + msg.str());
}

}  // namespace gridstep
