#pragma once

#include <memory>
#include <string>
#include <vector>

#include "gridstep/layout.hpp"
#include "gridstep/network.hpp"

namespace gridstep::test {

std::string data_path(const std::string& file);

/// Loads data/<name>.m, cached per process.
NetworkPtr load_case(const std::string& name);

/// Two buses joined by one branch: slack generator at bus 1, optional load at bus 2.
NetworkData two_bus(double r, double x, double p_load, double q_load);

/// Frozen power-flow and OPF results from an independent solver (data/reference/<name>.json).
struct Reference {
  std::vector<int> bus;
  std::vector<double> vm, va_deg, pg_mw, qg_mvar, opf_pg_mw;
  double opf_objective = 0.0;
};

const Reference& load_reference(const std::string& name);

/// Random voltages (|V| in [0.9, 1.1], angle in ±0.3 rad) and other entries uniform in [-1, 1].
SolverState random_state(const LayoutPtr& layout, unsigned seed);

inline NetworkPtr make(NetworkData d) { return std::make_shared<const Network>(std::move(d)); }

}  // namespace gridstep::test
