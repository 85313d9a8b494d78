#pragma once

#include <string>
#include <variant>
#include <vector>

#include "gridstep/network.hpp"

namespace gridstep {

struct BranchStatusChange {
  int branch = 0;
  Status status = Status::Out;
};

/// Sets the absolute scale of every load at a bus.
struct LoadScaleChange {
  int bus = 0;
  double scale = 1.0;
};

struct GenSetpointChange {
  int gen = 0;
  double p_set = 0.0;
};

struct GenStatusChange {
  int gen = 0;
  Status status = Status::Out;
};

struct ShuntChange {
  int bus = 0;
  double g = 0.0;
  double b = 0.0;
};

struct GenCostChange {
  int gen = 0;
  CostModel cost;
};

using Change = std::variant<BranchStatusChange, LoadScaleChange, GenSetpointChange, GenStatusChange, ShuntChange,
                            GenCostChange>;

/// Ordered list of atomic changes that turn one network into the next.
struct NetworkDelta {
  std::vector<Change> changes;

  bool empty() const noexcept { return changes.empty(); }
};

std::string describe(const Change& change);

/// Applies the changes in order and returns a fresh network; `net` is untouched.
/// Throws ValidationError when a change references a missing element.
Network apply_delta(const Network& net, const NetworkDelta& delta);

/// Delta that undoes `delta` when applied to apply_delta(net, delta).
NetworkDelta invert_delta(const Network& net, const NetworkDelta& delta);

}  // namespace gridstep
