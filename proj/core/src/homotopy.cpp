#include "gridstep/homotopy.hpp"

#include <chrono>
#include <cmath>

#include "gridstep/errors.hpp"

namespace gridstep {

Eigen::VectorXd extract_residual(const EquationSystem& target, const SolverState& x_prev) {
  if (!x_prev.layout || !(*x_prev.layout == *target.layout()))
    throw StructuralError("previous solution does not match the target layout");
  return target.residual(x_prev);
}

HomotopySystem::HomotopySystem(SystemPtr target, Eigen::VectorXd r, double gamma)
    : target_(std::move(target)), r_(std::move(r)), gamma_(gamma) {
  if (!target_) throw InputError("homotopy needs a target system");
  if (r_.size() != static_cast<Index>(target_->size())) throw StructuralError("injection length does not match the target");
  if (!(gamma_ >= 0.0 && gamma_ <= 1.0)) throw InputError("homotopy factor must lie in [0, 1]");
}

ResidualJacobian HomotopySystem::evaluate(const SolverState& x) const {
  auto rj = target_->evaluate(x);
  if (gamma_ != 0.0) rj.residual -= gamma_ * r_;
  return rj;
}

Eigen::VectorXd HomotopySystem::residual(const SolverState& x) const {
  Eigen::VectorXd f = target_->residual(x);
  if (gamma_ != 0.0) f -= gamma_ * r_;
  return f;
}

void GammaSchedule::validate() const {
  const bool ok = min_step > 0.0 && min_step <= initial_step && initial_step <= 1.0 && max_step >= initial_step &&
                  max_step <= 1.0 && shrink > 0.0 && shrink < 1.0 && grow >= 1.0 && intermediate_tol >= 0.0 &&
                  max_stages >= 1;
  if (!ok) throw InputError("invalid gamma schedule");
}

int HomotopyPath::total_iterations() const {
  int n = 0;
  for (const auto& r : records) n += r.report.iterations;
  for (const auto& r : rejected) n += r.report.iterations;
  return n;
}

TraceResult trace(SystemPtr target, const SolverState& x_prev, const GammaSchedule& sched, const NewtonOptions& opts) {
  sched.validate();
  const auto start = std::chrono::steady_clock::now();
  const Eigen::VectorXd r = extract_residual(*target, x_prev);
  if (!r.allFinite()) throw InputError("non-finite residual at the previous solution");

  TraceResult out{x_prev, {}, {}};
  out.path.injection_norm = r.lpNorm<Eigen::Infinity>();
  auto finish = [&](SolveStatus status, std::string message) {
    auto& rep = out.report;
    rep.status = status;
    rep.converged = status == SolveStatus::Converged;
    rep.message = std::move(message);
    rep.iterations = out.path.total_iterations();
    rep.residual_history.clear();
    rep.residual_history.push_back(out.path.injection_norm);
    for (const auto& rec : out.path.records) {
      const auto& h = rec.report.residual_history;
      if (h.size() > 1) rep.residual_history.insert(rep.residual_history.end(), h.begin() + 1, h.end());
      rep.min_pivot_ratio = std::min(rep.min_pivot_ratio, rec.report.min_pivot_ratio);
      if (rec.report.condition > rep.condition) rep.condition = rec.report.condition;
    }
    for (const auto& rec : out.path.rejected) {
      const auto& h = rec.report.residual_history;
      if (h.size() > 1) rep.residual_history.insert(rep.residual_history.end(), h.begin() + 1, h.end());
    }
    rep.metrics["gamma_stages"] = static_cast<double>(out.path.records.size());
    rep.metrics["rejected_stages"] = static_cast<double>(out.path.rejected.size());
    rep.metrics["injection_norm"] = out.path.injection_norm;
    rep.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  };

  // γ = 1: x_prev is the trivial root; nothing to iterate.
  HomotopyRecord first;
  first.gamma = 1.0;
  first.residual_norm = (target->residual(x_prev) - r).lpNorm<Eigen::Infinity>();
  first.report.status = SolveStatus::Converged;
  first.report.converged = first.residual_norm <= opts.tol;
  first.report.residual_history = {first.residual_norm};
  out.path.records.push_back(first);

  if (out.path.injection_norm <= opts.tol) {
    const auto res = newton_solve(*target, x_prev, opts);
    out.path.records.push_back({0.0, res.report.final_residual(), res.report});
    out.state = res.state;
    finish(res.report.status, res.report.message);
    if (!res.report.converged) throw HomotopyStalled("polish at gamma 0 failed: " + res.report.message, 1.0, x_prev, out.path, out.report);
    return out;
  }

  double gamma = 1.0, step = sched.initial_step;
  while (gamma > 0.0) {
    if (static_cast<int>(out.path.records.size() + out.path.rejected.size()) - 1 >= sched.max_stages) {
      finish(SolveStatus::HomotopyStalled, "gamma schedule used up " + std::to_string(sched.max_stages) +
                                               " sub-problems at gamma " + std::to_string(gamma));
      throw HomotopyStalled(out.report.message, gamma, out.state, out.path, out.report);
    }
    const double next = gamma - step <= sched.min_step * 0.5 ? 0.0 : gamma - step;
    NewtonOptions sub_opts = opts;
    if (next > 0.0 && sched.intermediate_tol > 0.0) sub_opts.tol = sched.intermediate_tol;
    const HomotopySystem sub(target, r, next);
    const auto res = newton_solve(sub, out.state, sub_opts);
    HomotopyRecord rec{next, res.report.final_residual(), res.report};

    if (res.report.converged) {
      out.path.records.push_back(std::move(rec));
      out.state = res.state;
      gamma = next;
      step = std::min(sched.max_step, step * sched.grow);
      continue;
    }
    out.path.rejected.push_back(std::move(rec));
    if (res.report.status == SolveStatus::SingularJacobian) {
      finish(SolveStatus::HomotopyStalled, "singular Jacobian at gamma " + std::to_string(next) +
                                               ": the path loses full rank (" + res.report.message + ")");
      throw HomotopyStalled(out.report.message, gamma, out.state, out.path, out.report);
    }
    step *= sched.shrink;
    if (step < sched.min_step) {
      finish(SolveStatus::HomotopyStalled, "gamma step fell below " + std::to_string(sched.min_step) + " at gamma " +
                                               std::to_string(gamma) + " (" + res.report.message + ")");
      throw HomotopyStalled(out.report.message, gamma, out.state, out.path, out.report);
    }
  }
  finish(SolveStatus::Converged, "");
  return out;
}

}  // namespace gridstep
