#include "gridstep/feasibility.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>

#include "gridstep/errors.hpp"

namespace gridstep {

InfeasibilitySystem::InfeasibilitySystem(NetworkPtr net, PfOptions opts)
    : net_(std::move(net)), opts_(std::move(opts)), model_(build_pf_model(*net_, opts_, true)) {
  n_x_ = model_.columns();
  n_g_ = model_.plan.rows;

  std::vector<ElementKey> slack_keys;
  for (std::size_t i = 0; i < model_.terminals.size(); ++i) {
    const auto& t = model_.terminals[i];
    if (t.row_re < 0) continue;
    slack_keys.push_back(model_.bus_keys[i]);
    slack_buses_.push_back(model_.bus_keys[i].id);
    slack_rows_re_.push_back(t.row_re);
    slack_rows_im_.push_back(t.row_im);
  }
  n_s_ = static_cast<Index>(slack_rows_re_.size());

  std::vector<ElementKey> lambda_keys = model_.row_keys;
  auto layout = std::make_shared<StateLayout>();
  layout->append(Segment::Vr, model_.bus_keys);
  layout->append(Segment::Vi, model_.bus_keys);
  layout->append(Segment::Qg, model_.qg_keys);
  layout->append(Segment::SlackRe, slack_keys);
  layout->append(Segment::SlackIm, slack_keys);
  layout->append(Segment::Lambda, lambda_keys);
  layout_ = layout;

  StampAccumulator acc(static_cast<Index>(layout_->size()));
  assemble(cold_start().values, acc);
  pattern_ = SparsePattern(acc.residual().size(), acc.residual().size(), acc.rows(), acc.cols());
}

// z = [X | Is_re | Is_im | λ]; rows = [∇_X | ∇_Is re | ∇_Is im | g].
void InfeasibilitySystem::assemble(const Eigen::VectorXd& z, StampAccumulator& acc) const {
  const Index off_s = n_x_;
  const Index off_l = n_x_ + 2 * n_s_;
  const Index off_g = off_l;
  const Eigen::VectorXd lambda = z.segment(off_l, n_g_);

  StampAccumulator f(n_g_);
  model_.plan.assemble(z, f);
  const Eigen::VectorXd fr = f.residual();

  // λᵀ∇²g with g = −F on the X part.
  StampAccumulator h(n_x_);
  model_.plan.assemble_hessian(z, -lambda, h);
  for (std::size_t k = 0; k < h.triplet_count(); ++k) acc.add_jacobian(h.rows()[k], h.cols()[k], h.values()[k]);

  for (std::size_t k = 0; k < f.triplet_count(); ++k) {
    const Index r = f.rows()[k], c = f.cols()[k];
    const double v = -f.values()[k];
    acc.add_residual(c, v * lambda[r]);
    acc.add_jacobian(c, off_l + r, v);
    acc.add_jacobian(off_g + r, c, v);
  }
  for (Index k = 0; k < 2 * n_s_; ++k) {
    const Index row = k < n_s_ ? slack_rows_re_[k] : slack_rows_im_[k - n_s_];
    const double is = z[off_s + k];
    acc.add_residual(off_s + k, 2.0 * is + lambda[row]);
    acc.add_jacobian(off_s + k, off_s + k, 2.0);
    acc.add_jacobian(off_s + k, off_l + row, 1.0);
    acc.add_residual(off_g + row, is);
    acc.add_jacobian(off_g + row, off_s + k, 1.0);
  }
  for (Index r = 0; r < n_g_; ++r) acc.add_residual(off_g + r, -fr[r]);
}

ResidualJacobian InfeasibilitySystem::evaluate(const SolverState& x) const {
  check_state(x);
  StampAccumulator acc(static_cast<Index>(layout_->size()));
  acc.reserve(pattern_.triplet_count());
  assemble(x.values, acc);
  return {acc.residual(), pattern_.fill(acc.values())};
}

std::string InfeasibilitySystem::row_label(Index row) const {
  if (row < n_x_) {
    const auto [seg, key] = layout_->element_at(static_cast<std::size_t>(row));
    return "row " + std::to_string(row) + " (stationarity " + to_string(seg) + " bus " + std::to_string(key.id) + ")";
  }
  if (row < n_x_ + 2 * n_s_) {
    const Index k = row - n_x_;
    const int bus = slack_buses_[static_cast<std::size_t>(k % n_s_)];
    return "row " + std::to_string(row) + " (stationarity " + (k < n_s_ ? "slack_re" : "slack_im") + " bus " +
           std::to_string(bus) + ")";
  }
  const auto& key = model_.row_keys.at(static_cast<std::size_t>(row - n_x_ - 2 * n_s_));
  return "row " + std::to_string(row) + " (" + to_string(key.kind) + " bus " + std::to_string(key.id) + ")";
}

SolverState InfeasibilitySystem::cold_start() const {
  SolverState s(layout_);
  fill_flat_voltages(*net_, s);
  for (const auto& island : find_islands(*net_)) {
    if (island.has_slack) continue;
    // Virtual pins sit at Vr = 1, Vi = 0; start the whole island there.
    for (int id : island.bus_ids) {
      const double vm = std::abs(bus_voltage(s, id));
      s.set(Segment::Vr, {KeyKind::Bus, id}, vm);
      s.set(Segment::Vi, {KeyKind::Bus, id}, 0.0);
    }
  }
  return s;
}

SolverState InfeasibilitySystem::seeded_start() const {
  SolverState s = cold_start();
  StampAccumulator f(n_g_, false);
  model_.plan.assemble(s.values, f);
  const Eigen::VectorXd mismatch = f.residual();
  const Index off_l = n_x_ + 2 * n_s_;
  for (Index k = 0; k < 2 * n_s_; ++k) {
    const Index row = k < n_s_ ? slack_rows_re_[k] : slack_rows_im_[k - n_s_];
    s.values[n_x_ + k] = mismatch[row];
    s.values[off_l + row] = -2.0 * mismatch[row];
  }
  return s;
}

NewtonResult solve_infeasibility(const InfeasibilitySystem& sys, const NewtonOptions& opts) {
  auto first = newton_solve(sys, sys.cold_start(), opts);
  if (first.report.converged) return first;
  auto second = newton_solve(sys, sys.seeded_start(), opts);
  auto& rep = second.report;
  rep.iterations += first.report.iterations;
  rep.residual_history.insert(rep.residual_history.begin(), first.report.residual_history.begin(),
                              first.report.residual_history.end());
  rep.wall_time += first.report.wall_time;
  rep.metrics["restarts"] = 1.0;
  return second;
}

std::shared_ptr<const InfeasibilitySystem> build_infeasibility_system(NetworkPtr net, PfOptions opts) {
  require_valid(*net, true);
  return std::make_shared<InfeasibilitySystem>(std::move(net), std::move(opts));
}

InfeasibilityReport infeasibility_report(const SolverState& state, const SolveReport& report) {
  if (!report.converged) throw StatusError("infeasibility report needs a converged solve: " + report.message);
  if (!state.layout || !state.layout->has(Segment::SlackRe) || !state.layout->has(Segment::SlackIm))
    throw StatusError("state has no slack-injection segments");
  const auto* re = state.layout->find(Segment::SlackRe);
  InfeasibilityReport out;
  for (const auto& key : re->keys) {
    SlackInjection s;
    s.bus_id = key.id;
    s.slack_re = state.get(Segment::SlackRe, key);
    s.slack_im = state.get(Segment::SlackIm, key);
    s.magnitude = std::hypot(s.slack_re, s.slack_im);
    out.total += s.slack_re * s.slack_re + s.slack_im * s.slack_im;
    out.buses.push_back(s);
  }
  std::stable_sort(out.buses.begin(), out.buses.end(),
                   [](const SlackInjection& a, const SlackInjection& b) { return a.magnitude > b.magnitude; });
  return out;
}

std::string infeasibility_report_json(const InfeasibilityReport& r) {
  nlohmann::json j;
  j["buses"] = nlohmann::json::array();
  for (const auto& b : r.buses)
    j["buses"].push_back({{"bus_id", b.bus_id}, {"slack_re", b.slack_re}, {"slack_im", b.slack_im}, {"magnitude", b.magnitude}});
  j["total"] = r.total;
  return j.dump(2);
}

}  // namespace gridstep
