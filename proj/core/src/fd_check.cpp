#include "gridstep/fd_check.hpp"

#include <cmath>

namespace gridstep {

FdCheckResult fd_jacobian_check_detail(const EquationSystem& sys, const SolverState& x, double step) {
  FdCheckResult out;
  const Eigen::MatrixXd analytic = Eigen::MatrixXd(sys.evaluate(x).jacobian);
  SolverState probe = x;
  for (Index c = 0; c < analytic.cols(); ++c) {
    const double saved = probe.values[c];
    const volatile double up_value = saved + step;
    const double h = up_value - saved;  // the step actually representable at this entry
    probe.values[c] = saved + h;
    const Eigen::VectorXd up = sys.residual(probe);
    probe.values[c] = saved - h;
    const Eigen::VectorXd down = sys.residual(probe);
    probe.values[c] = saved;
    for (Index r = 0; r < analytic.rows(); ++r) {
      const double d = (up[r] - down[r]) / (2.0 * h);
      const double a = analytic(r, c);
      const double err = std::abs(a - d) / std::max(1.0, std::abs(a));
      if (!(err <= out.max_discrepancy)) {
        out = {err, r, c, a, d};
        if (std::isnan(err)) return out;
      }
    }
  }
  return out;
}

}  // namespace gridstep
