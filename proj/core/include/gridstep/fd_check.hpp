#pragma once

#include "gridstep/system.hpp"

namespace gridstep {

struct FdCheckResult {
  double max_discrepancy = 0.0;  // max |A − D| / max(1, |A|)
  Index row = -1;
  Index col = -1;
  double analytic = 0.0;
  double numeric = 0.0;
};

/// Central-difference Jacobian of sys at x, compared entry by entry against the analytic one.
/// Every entry of every column is scanned, so entries missing from the analytic pattern are
/// caught as well.
FdCheckResult fd_jacobian_check_detail(const EquationSystem& sys, const SolverState& x, double step = 1e-6);

inline double fd_jacobian_check(const EquationSystem& sys, const SolverState& x, double step = 1e-6) {
  return fd_jacobian_check_detail(sys, x, step).max_discrepancy;
}

}  // namespace gridstep
