#include "gridstep/warm_start.hpp"

#include <cmath>

#include "gridstep/errors.hpp"

namespace gridstep {

std::string to_string(Family f) {
  switch (f) {
    case Family::PowerFlow:
      return "pf";
    case Family::InfeasibilityPF:
      return "ipf";
    case Family::Opf:
      return "opf";
  }
  return "?";
}

std::optional<Family> family_from_string(const std::string& s) {
  if (s == "pf") return Family::PowerFlow;
  if (s == "ipf") return Family::InfeasibilityPF;
  if (s == "opf") return Family::Opf;
  return std::nullopt;
}

namespace {

OpfProblem opf_problem(NetworkPtr net, const FamilyOptions& opts) {
  return {std::move(net), opts.flow_limits, opts.contingency};
}

double slack_objective(const SolverState& x) {
  double s = 0.0;
  for (const Segment seg : {Segment::SlackRe, Segment::SlackIm})
    if (x.layout->has(seg)) s += x.segment(seg).squaredNorm();
  return s;
}

// Objective and block norms of a solved state, matching what the cold solvers report.
void annotate(FamilySolve& out, const FamilyOptions& opts) {
  auto& m = out.report.metrics;
  if (opts.family == Family::InfeasibilityPF) {
    out.objective = slack_objective(out.state);
    m["objective"] = out.objective;
    m["slack_norm"] = std::sqrt(out.objective);
  } else if (opts.family == Family::Opf) {
    const auto& kkt = dynamic_cast<const KktSystem&>(*out.system);
    const auto n = kkt.block_norms(out.state);
    out.objective = kkt.generation_cost(out.state);
    m["objective"] = out.objective;
    m["slack_penalty"] = kkt.slack_penalty(out.state);
    m["epsilon"] = kkt.epsilon();
    m["stationarity_norm"] = n.stationarity;
    m["equality_norm"] = n.equality;
    m["complementarity_norm"] = n.complementarity;
    m["max_h"] = n.max_h;
    m["min_mu"] = n.min_mu;
    m["max_mu"] = n.max_mu;
    m["slack_norm"] = std::sqrt(slack_objective(out.state));
  }
}

}  // namespace

SystemPtr build_family_system(NetworkPtr net, const FamilyOptions& opts) {
  if (!net) throw InputError("no network");
  switch (opts.family) {
    case Family::PowerFlow:
      return build_pf_system(std::move(net), opts.pf);
    case Family::InfeasibilityPF:
      return build_infeasibility_system(std::move(net), opts.pf);
    case Family::Opf:
      return std::make_shared<const KktSystem>(opf_problem(std::move(net), opts), opts.opf.epsilon_final,
                                               opts.opf.fraction_to_boundary);
  }
  throw InputError("unknown family");
}

SolverState family_cold_start(const EquationSystem& sys, const FamilyOptions& opts) {
  switch (opts.family) {
    case Family::PowerFlow:
      return dynamic_cast<const PowerFlowSystem&>(sys).flat_start();
    case Family::InfeasibilityPF:
      return dynamic_cast<const InfeasibilitySystem&>(sys).cold_start();
    case Family::Opf:
      return dynamic_cast<const KktSystem&>(sys).cold_start();
  }
  throw InputError("unknown family");
}

FamilySolve cold_solve(NetworkPtr net, const FamilyOptions& opts) {
  FamilySolve out;
  out.net = net;
  switch (opts.family) {
    case Family::PowerFlow: {
      auto res = solve_power_flow(net, opts.pf, opts.newton);
      out.system = res.system;
      out.state = std::move(res.state);
      out.report = std::move(res.report);
      break;
    }
    case Family::InfeasibilityPF: {
      auto sys = build_infeasibility_system(net, opts.pf);
      auto res = solve_infeasibility(*sys, opts.newton);
      out.system = sys;
      out.state = std::move(res.state);
      out.report = std::move(res.report);
      break;
    }
    case Family::Opf: {
      OpfOptions o = opts.opf;
      o.newton = opts.newton;
      auto res = solve_opf(opf_problem(net, opts), nullptr, o);
      out.system = res.system;
      out.state = std::move(res.state);
      out.report = std::move(res.report);
      break;
    }
  }
  annotate(out, opts);
  return out;
}

SolverState reconcile_state(const SolverState& prev, const EquationSystem& target, const FamilyOptions& opts) {
  if (!prev.layout) throw InputError("previous state has no layout");
  if (*prev.layout == *target.layout()) {
    SolverState x(target.layout(), prev.values);
    if (opts.family == Family::Opf) dynamic_cast<const KktSystem&>(target).make_interior(x);
    return x;
  }
  const KktSystem* kkt = opts.family == Family::Opf ? &dynamic_cast<const KktSystem&>(target) : nullptr;
  const SolverState cold = kkt ? kkt->cold_start() : SolverState{};

  auto fill = [&](Segment seg, ElementKey key) -> double {
    if (kkt && (seg == Segment::Pg || seg == Segment::Qg)) return cold.get(seg, key);
    if (seg == Segment::Vr && key.kind == KeyKind::Bus) return 1.0;
    return 0.0;
  };
  SolverState x = carry_over(prev, target.layout(), fill);
  if (kkt) {
    if (!prev.layout->has(Segment::SlackRe)) kkt->settle_slacks(x);
    kkt->make_interior(x);
  }
  return x;
}

namespace {

FamilySolve from_trace(NetworkPtr net, SystemPtr target, TraceResult tr) {
  FamilySolve out;
  out.net = std::move(net);
  out.system = std::move(target);
  out.state = std::move(tr.state);
  out.report = std::move(tr.report);
  out.path = std::move(tr.path);
  return out;
}

// Trace onto the KKT system at the relaxed warm_epsilon, then continue ε down to epsilon_final.
// Tracing straight at a tiny ε crawls: every active bound sits within ε/μ of its limit and the
// fraction-to-boundary rule cuts each step short.
FamilySolve warm_opf(NetworkPtr net, const KktSystem& kkt, const SolverState& prev, const FamilyOptions& opts) {
  const double e_final = opts.opf.epsilon_final;
  const double e_warm = std::max(e_final, opts.opf.warm_epsilon);
  auto relaxed = std::make_shared<const KktSystem>(
      kkt.with_parameters(e_warm, continuation_slack_weight(kkt.slack_weight(), e_warm, e_final)));
  const SolverState x = reconcile_state(prev, *relaxed, opts);
  auto out = from_trace(net, relaxed, trace(relaxed, x, opts.schedule, opts.newton));

  OpfOptions o = opts.opf;
  o.newton = opts.newton;
  auto cont = solve_opf(kkt.problem(), &out.state, o);
  auto& rep = out.report;
  const auto& hist = cont.report.residual_history;
  if (hist.size() > 1) rep.residual_history.insert(rep.residual_history.end(), hist.begin() + 1, hist.end());
  rep.iterations += cont.report.iterations;
  rep.wall_time += cont.report.wall_time;
  rep.min_pivot_ratio = std::min(rep.min_pivot_ratio, cont.report.min_pivot_ratio);
  rep.status = cont.report.status;
  rep.converged = cont.report.converged;
  rep.message = cont.report.message;
  for (const auto& [k, v] : cont.report.metrics) rep.metrics[k] = v;
  rep.metrics["warm_epsilon"] = e_warm;
  out.system = cont.system;
  out.state = std::move(cont.state);
  return out;
}

}  // namespace

FamilySolve warm_start_on(NetworkPtr net, SystemPtr target, const SolverState& prev, const FamilyOptions& opts) {
  const SolverState x = reconcile_state(prev, *target, opts);
  FamilySolve out;
  if (opts.family == Family::Opf && extract_residual(*target, x).lpNorm<Eigen::Infinity>() > opts.newton.tol)
    out = warm_opf(std::move(net), dynamic_cast<const KktSystem&>(*target), prev, opts);
  else
    out = from_trace(std::move(net), target, trace(target, x, opts.schedule, opts.newton));
  annotate(out, opts);
  return out;
}

FamilySolve warm_start_solve(NetworkPtr prev_net, const SolverState& prev, const NetworkDelta& delta,
                             const FamilyOptions& opts) {
  if (!prev_net) throw InputError("no previous network");
  auto net = std::make_shared<const Network>(apply_delta(*prev_net, delta));
  auto target = build_family_system(net, opts);
  return warm_start_on(std::move(net), std::move(target), prev, opts);
}

}  // namespace gridstep
