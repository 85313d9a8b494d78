#include "gridstep/newton.hpp"

#include <algorithm>
#include <chrono>

#include "gridstep/errors.hpp"
#include "gridstep/sparse_lu.hpp"

namespace gridstep {

std::string to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::Converged: return "converged";
    case SolveStatus::MaxIterations: return "max_iterations";
    case SolveStatus::Diverged: return "diverged";
    case SolveStatus::SingularJacobian: return "singular_jacobian";
    case SolveStatus::NumericalBreakdown: return "numerical_breakdown";
    case SolveStatus::HomotopyStalled: return "homotopy_stalled";
    case SolveStatus::InvalidInput: return "invalid_input";
  }
  return "?";
}

std::string to_string(ConditionFlag c) {
  switch (c) {
    case ConditionFlag::Ok: return "ok";
    case ConditionFlag::NearSingular: return "near_singular";
    case ConditionFlag::Singular: return "singular";
  }
  return "?";
}

double inf_norm(const Eigen::VectorXd& v) { return v.size() == 0 ? 0.0 : v.lpNorm<Eigen::Infinity>(); }

void clamp_voltage_step(const StateLayout& layout, Eigen::VectorXd& dx, double delta_max) {
  for (Segment s : {Segment::Vr, Segment::Vi}) {
    const auto* seg = layout.find(s);
    if (!seg) continue;
    for (std::size_t k = 0; k < seg->size(); ++k) {
      double& d = dx[static_cast<Index>(seg->offset + k)];
      d = std::clamp(d, -delta_max, delta_max);
    }
  }
}

NewtonResult newton_solve(const EquationSystem& sys, const SolverState& x0, const NewtonOptions& opts) {
  const auto start = std::chrono::steady_clock::now();
  if (!(opts.tol > 0.0) || opts.max_iter < 1) throw InputError("Newton options need tol > 0 and max_iter >= 1");
  if (!x0.layout || x0.size() != sys.size() || !(*x0.layout == *sys.layout()))
    throw InputError("initial state does not match the system layout");
  if (!x0.finite()) throw InputError("initial state has non-finite entries");

  NewtonResult out{SolverState(sys.layout(), x0.values), {}};
  SolveReport& rep = out.report;
  SparseLu lu(opts.pivot_threshold);

  auto rj = sys.evaluate(out.state);
  double norm = inf_norm(rj.residual);
  rep.residual_history.push_back(norm);
  const double limit = opts.diverge_norm * std::max(1.0, norm);

  while (true) {
    if (!std::isfinite(norm)) {
      rep.status = SolveStatus::NumericalBreakdown;
      rep.message = "non-finite residual";
      break;
    }
    if (norm <= opts.tol) {
      rep.status = SolveStatus::Converged;
      break;
    }
    if (rep.iterations >= opts.max_iter) {
      rep.status = SolveStatus::MaxIterations;
      break;
    }
    if (!lu.factorize(rj.jacobian)) {
      const auto& d = lu.diagnostics();
      rep.status = SolveStatus::SingularJacobian;
      rep.condition = ConditionFlag::Singular;
      rep.singular_index = d.index;
      std::string where = "index " + std::to_string(d.index);
      if (d.index >= 0 && d.index < static_cast<Index>(sys.size())) {
        if (d.singularity == Singularity::ZeroRow) {
          where = sys.row_label(d.index);
        } else {
          auto [seg, key] = sys.layout()->element_at(static_cast<std::size_t>(d.index));
          where = "column " + std::to_string(d.index) + " (" + to_string(seg) + " " + to_string(key.kind) + " " +
                  std::to_string(key.id) + ")";
        }
      }
      rep.message = "singular Jacobian: " + to_string(d.singularity) + " at " + where;
      break;
    }
    rep.min_pivot_ratio = std::min(rep.min_pivot_ratio, lu.diagnostics().pivot_ratio);
    if (lu.diagnostics().pivot_ratio < opts.near_singular_ratio) rep.condition = ConditionFlag::NearSingular;

    Eigen::VectorXd dx = lu.solve(-rj.residual);
    if (!dx.allFinite()) {
      rep.status = SolveStatus::NumericalBreakdown;
      rep.message = "non-finite Newton step";
      break;
    }
    if (opts.limiting == Limiting::VoltageClamp) clamp_voltage_step(*sys.layout(), dx, opts.delta_max);
    const double alpha = sys.max_step(out.state, dx);
    if (!(alpha > 0.0)) {
      rep.status = SolveStatus::NumericalBreakdown;
      rep.message = "no admissible step length";
      break;
    }
    out.state.values += alpha * dx;
    ++rep.iterations;

    rj = sys.evaluate(out.state);
    norm = inf_norm(rj.residual);
    rep.residual_history.push_back(norm);
    if (std::isfinite(norm) && norm > limit) {
      rep.status = SolveStatus::Diverged;
      rep.message = "residual norm exceeded divergence threshold";
      break;
    }
  }
  rep.converged = rep.status == SolveStatus::Converged;
  rep.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

}  // namespace gridstep
