#include "gridstep/delta.hpp"

#include <algorithm>
#include <sstream>

#include "gridstep/errors.hpp"

namespace gridstep {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

Branch& branch_ref(NetworkData& d, int id) {
  auto it = std::find_if(d.branches.begin(), d.branches.end(), [&](const Branch& b) { return b.id == id; });
  if (it == d.branches.end()) throw ValidationError("delta references missing branch " + std::to_string(id));
  return *it;
}

Generator& gen_ref(NetworkData& d, int id) {
  auto it = std::find_if(d.generators.begin(), d.generators.end(), [&](const Generator& g) { return g.id == id; });
  if (it == d.generators.end()) throw ValidationError("delta references missing generator " + std::to_string(id));
  return *it;
}

Bus& bus_ref(NetworkData& d, int id) {
  auto it = std::find_if(d.buses.begin(), d.buses.end(), [&](const Bus& b) { return b.id == id; });
  if (it == d.buses.end()) throw ValidationError("delta references missing bus " + std::to_string(id));
  return *it;
}

void apply_one(NetworkData& d, const Change& change) {
  std::visit(overloaded{
                 [&](const BranchStatusChange& c) { branch_ref(d, c.branch).status = c.status; },
                 [&](const LoadScaleChange& c) {
                   bus_ref(d, c.bus);
                   if (c.scale < 0.0) throw ValidationError("load scale must be non-negative");
                   bool any = false;
                   for (auto& l : d.loads)
                     if (l.bus == c.bus) {
                       l.scale = c.scale;
                       any = true;
                     }
                   if (!any) throw ValidationError("delta scales bus " + std::to_string(c.bus) + " which has no load");
                 },
                 [&](const GenSetpointChange& c) { gen_ref(d, c.gen).p_set = c.p_set; },
                 [&](const GenStatusChange& c) { gen_ref(d, c.gen).status = c.status; },
                 [&](const ShuntChange& c) {
                   auto& b = bus_ref(d, c.bus);
                   b.shunt_g = c.g;
                   b.shunt_b = c.b;
                 },
                 [&](const GenCostChange& c) { gen_ref(d, c.gen).cost = c.cost; },
             },
             change);
}

}  // namespace

std::string describe(const Change& change) {
  std::ostringstream out;
  std::visit(overloaded{
                 [&](const BranchStatusChange& c) { out << "branch " << c.branch << " " << to_string(c.status); },
                 [&](const LoadScaleChange& c) { out << "load scale at bus " << c.bus << " = " << c.scale; },
                 [&](const GenSetpointChange& c) { out << "generator " << c.gen << " p_set = " << c.p_set; },
                 [&](const GenStatusChange& c) { out << "generator " << c.gen << " " << to_string(c.status); },
                 [&](const ShuntChange& c) { out << "shunt at bus " << c.bus << " = " << c.g << "+j" << c.b; },
                 [&](const GenCostChange& c) {
                   out << "generator " << c.gen << " cost = (" << c.cost.c2 << ", " << c.cost.c1 << ", " << c.cost.c0
                       << ")";
                 },
             },
             change);
  return out.str();
}

Network apply_delta(const Network& net, const NetworkDelta& delta) {
  NetworkData d = net.data();
  for (const auto& change : delta.changes) apply_one(d, change);
  return Network(std::move(d));
}

NetworkDelta invert_delta(const Network& net, const NetworkDelta& delta) {
  // Record the prior value of every touched field while replaying the delta forward.
  NetworkData d = net.data();
  NetworkDelta inverse;
  for (const auto& change : delta.changes) {
    std::visit(overloaded{
                   [&](const BranchStatusChange& c) {
                     inverse.changes.push_back(BranchStatusChange{c.branch, branch_ref(d, c.branch).status});
                   },
                   [&](const LoadScaleChange& c) {
                     auto it = std::find_if(d.loads.begin(), d.loads.end(), [&](const Load& l) { return l.bus == c.bus; });
                     if (it == d.loads.end())
                       throw ValidationError("delta scales bus " + std::to_string(c.bus) + " which has no load");
                     inverse.changes.push_back(LoadScaleChange{c.bus, it->scale});
                   },
                   [&](const GenSetpointChange& c) {
                     inverse.changes.push_back(GenSetpointChange{c.gen, gen_ref(d, c.gen).p_set});
                   },
                   [&](const GenStatusChange& c) {
                     inverse.changes.push_back(GenStatusChange{c.gen, gen_ref(d, c.gen).status});
                   },
                   [&](const ShuntChange& c) {
                     const auto& b = bus_ref(d, c.bus);
                     inverse.changes.push_back(ShuntChange{c.bus, b.shunt_g, b.shunt_b});
                   },
                   [&](const GenCostChange& c) { inverse.changes.push_back(GenCostChange{c.gen, gen_ref(d, c.gen).cost}); },
               },
               change);
    apply_one(d, change);
  }
  std::reverse(inverse.changes.begin(), inverse.changes.end());
  return inverse;
}

}  // namespace gridstep
