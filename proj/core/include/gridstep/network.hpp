#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace gridstep {

enum class BusKind { PQ, PV, Slack };
enum class Status { In, Out };

std::string to_string(BusKind kind);
std::string to_string(Status status);

// All electrical quantities below are per-unit on Network::base_mva unless noted.

struct Bus {
  int id = 0;
  BusKind kind = BusKind::PQ;
  double base_kv = 0.0;
  double v_set = 1.0;      // PV/Slack voltage magnitude target
  double angle_set = 0.0;  // radians, Slack only
  double shunt_g = 0.0;
  double shunt_b = 0.0;
  double v_min = 0.9;
  double v_max = 1.1;
  double vm_init = 1.0;  // case-file operating point, used for reporting only
  double va_init = 0.0;
  int area = 1;
};

struct Branch {
  int id = 0;
  int from_bus = 0;
  int to_bus = 0;
  double series_r = 0.0;
  double series_x = 0.0;
  double charging_b = 0.0;
  double tap_ratio = 1.0;    // off-nominal turns ratio at the from end
  double phase_shift = 0.0;  // radians
  Status status = Status::In;
  std::optional<double> flow_limit;  // MVA rating in per-unit
};

/// Quadratic generation cost in physical units: c2·P² + c1·P + c0 with P in MW, result in $/h.
struct CostModel {
  double c2 = 0.0;
  double c1 = 0.0;
  double c0 = 0.0;

  double evaluate_mw(double p_mw) const { return (c2 * p_mw + c1) * p_mw + c0; }
};

struct Generator {
  int id = 0;
  int bus = 0;
  double p_set = 0.0;
  double q_set = 0.0;  // case-file reactive output, used as the initial Qg guess
  double q_min = 0.0;
  double q_max = 0.0;
  double p_min = 0.0;
  double p_max = 0.0;
  double v_set = 1.0;
  CostModel cost;
  Status status = Status::In;
  bool renewable = false;
};

/// Constant-power load; the effective demand is (p, q) * scale.
struct Load {
  int id = 0;
  int bus = 0;
  double p = 0.0;
  double q = 0.0;
  double scale = 1.0;

  double p_eff() const { return p * scale; }
  double q_eff() const { return q * scale; }
};

/// Mutable aggregate used to assemble a Network.
struct NetworkData {
  std::string name;
  double base_mva = 100.0;
  std::vector<Bus> buses;
  std::vector<Branch> branches;
  std::vector<Generator> generators;
  std::vector<Load> loads;
};

/// Immutable grid description. Elements are kept sorted by id, which fixes the device
/// iteration order used by every assembler.
class Network {
 public:
  explicit Network(NetworkData data);

  const std::string& name() const noexcept { return data_.name; }
  double base_mva() const noexcept { return data_.base_mva; }
  const std::vector<Bus>& buses() const noexcept { return data_.buses; }
  const std::vector<Branch>& branches() const noexcept { return data_.branches; }
  const std::vector<Generator>& generators() const noexcept { return data_.generators; }
  const std::vector<Load>& loads() const noexcept { return data_.loads; }
  const NetworkData& data() const noexcept { return data_; }

  std::optional<std::size_t> bus_index(int bus_id) const;
  std::optional<std::size_t> branch_index(int branch_id) const;
  std::optional<std::size_t> generator_index(int gen_id) const;

  const Bus& bus(int bus_id) const;  // throws ValidationError if absent
  const Branch& branch(int branch_id) const;
  const Generator& generator(int gen_id) const;

  /// In-service generators connected to a bus, in id order.
  std::vector<const Generator*> generators_at(int bus_id) const;
  std::vector<const Load*> loads_at(int bus_id) const;

 private:
  NetworkData data_;
  std::unordered_map<int, std::size_t> bus_pos_;
  std::unordered_map<int, std::size_t> branch_pos_;
  std::unordered_map<int, std::size_t> gen_pos_;
  std::unordered_map<int, std::vector<std::size_t>> gens_by_bus_;
  std::unordered_map<int, std::vector<std::size_t>> loads_by_bus_;
};

using NetworkPtr = std::shared_ptr<const Network>;

/// Field-by-field comparison. With rel_tol > 0 real fields may differ by rel_tol·max(1, |a|, |b|).
bool structurally_equal(const Network& a, const Network& b, double rel_tol = 0.0);

/// A bus counts as a voltage reference when it is typed Slack and has an in-service generator.
bool is_effective_slack(const Network& net, const Bus& bus);
/// Typed PV with at least one in-service generator; other PV buses behave as PQ.
bool is_effective_pv(const Network& net, const Bus& bus);

struct Island {
  std::vector<int> bus_ids;  // ascending
  bool has_slack = false;
  bool has_generator = false;
};

/// Connected components over in-service branches, ordered by smallest bus id.
std::vector<Island> find_islands(const Network& net);

enum class Rule {
  DuplicateId,
  DanglingReference,
  SelfLoop,
  ZeroImpedance,
  NonPositiveVoltageSetpoint,
  ReactiveLimitsInverted,
  ActiveLimitsInverted,
  NegativeLoadScale,
  NonConvexCost,
  SlackWithoutGenerator,
  MultipleSlack,
  IslandWithoutSlack,
  IslandWithoutGenerator,
  NoReference,
};

std::string to_string(Rule rule);

struct Diagnostic {
  Rule rule;
  std::string element;  // e.g. "bus 4", "branch 7"
  std::string message;
};

/// Checks every Network invariant. An empty result means the network is valid for power flow.
std::vector<Diagnostic> validate(const Network& net);

/// Diagnostics that slack-injection formulations can absorb (islands lacking a reference or
/// generation), provided some island still holds a slack bus.
bool tolerable_with_slack_injection(const Diagnostic& d);

/// Throws ValidationError listing the diagnostics that are not tolerated.
void require_valid(const Network& net, bool allow_unreferenced_islands);

}  // namespace gridstep
