#include "gridstep/power_flow.hpp"

#include <cmath>
#include <numeric>

#include "gridstep/errors.hpp"

namespace gridstep {

namespace {

bool holds_pv_column(const Network& net, const Bus& b, const PfOptions& opts) {
  return is_effective_pv(net, b) && !is_effective_slack(net, b) && !opts.fixed_q.count(b.id);
}

}  // namespace

PfModel build_pf_model(const Network& net, const PfOptions& opts, bool virtual_references) {
  PfModel m;
  const auto& buses = net.buses();
  const Index n = static_cast<Index>(buses.size());

  std::vector<Index> qg_col(buses.size(), -1);
  for (std::size_t i = 0; i < buses.size(); ++i) {
    m.bus_keys.push_back({KeyKind::Bus, buses[i].id});
    if (holds_pv_column(net, buses[i], opts)) {
      qg_col[i] = 2 * n + static_cast<Index>(m.qg_keys.size());
      m.qg_keys.push_back({KeyKind::Bus, buses[i].id});
    }
  }

  m.terminals.resize(buses.size());
  for (std::size_t i = 0; i < buses.size(); ++i) {
    const Index k = static_cast<Index>(i);
    const bool slack = is_effective_slack(net, buses[i]);
    m.terminals[i] = {k, n + k, slack ? -1 : 2 * k, slack ? -1 : 2 * k + 1};
    m.row_keys.push_back({slack ? KeyKind::PinRe : KeyKind::KclRe, buses[i].id});
    m.row_keys.push_back({slack ? KeyKind::PinIm : KeyKind::KclIm, buses[i].id});
    if (slack) m.plan.pins.push_back({2 * k, 2 * k + 1, k, n + k, std::polar(buses[i].v_set, buses[i].angle_set)});
  }
  Index next_row = 2 * n;
  for (std::size_t i = 0; i < buses.size(); ++i) {
    if (qg_col[i] < 0) continue;
    const Index k = static_cast<Index>(i);
    m.plan.magnitudes.push_back({next_row++, k, n + k, buses[i].v_set});
    m.row_keys.push_back({KeyKind::VoltageMagnitude, buses[i].id});
  }

  auto term = [&](int bus_id) { return m.terminals[*net.bus_index(bus_id)]; };

  for (const auto& br : net.branches())
    if (br.status == Status::In) m.plan.branches.push_back({term(br.from_bus), term(br.to_bus), BranchAdmittance::of(br)});
  for (std::size_t i = 0; i < buses.size(); ++i)
    if (buses[i].shunt_g != 0.0 || buses[i].shunt_b != 0.0)
      m.plan.shunts.push_back({m.terminals[i], Complex(buses[i].shunt_g, buses[i].shunt_b)});
  for (const auto& l : net.loads()) m.plan.powers.push_back({term(l.bus), {l.p_eff(), -1}, {l.q_eff(), -1}, 1.0});

  for (std::size_t i = 0; i < buses.size(); ++i) {
    const Bus& b = buses[i];
    const auto gens = net.generators_at(b.id);
    if (gens.empty() || is_effective_slack(net, b)) continue;
    if (qg_col[i] >= 0) {
      double p = 0.0;
      for (const auto* g : gens) p += g->p_set;
      m.plan.powers.push_back({m.terminals[i], {p, -1}, {0.0, qg_col[i]}, -1.0});
      continue;
    }
    auto fixed = opts.fixed_q.find(b.id);
    for (const auto* g : gens)
      m.plan.powers.push_back({m.terminals[i], {g->p_set, -1}, {fixed == opts.fixed_q.end() ? g->q_set : 0.0, -1}, -1.0});
    if (fixed != opts.fixed_q.end()) m.plan.powers.push_back({m.terminals[i], {0.0, -1}, {fixed->second, -1}, -1.0});
  }

  for (const auto& [bus_id, current] : opts.fixed_currents) {
    if (!net.bus_index(bus_id)) throw ValidationError("fixed current at missing bus " + std::to_string(bus_id));
    m.plan.currents.push_back({term(bus_id), current});
  }

  if (virtual_references) {
    for (const auto& island : find_islands(net)) {
      if (island.has_slack) continue;
      std::optional<std::size_t> pv;
      for (int id : island.bus_ids) {
        const auto pos = *net.bus_index(id);
        if (qg_col[pos] >= 0) {
          pv = pos;
          break;
        }
      }
      if (pv) {
        const Index k = static_cast<Index>(*pv);
        m.plan.angles.push_back({next_row++, k, n + k, 0.0});
        m.row_keys.push_back({KeyKind::AngleReference, buses[*pv].id});
      } else {
        const Index k = static_cast<Index>(*net.bus_index(island.bus_ids.front()));
        m.plan.pins.push_back({next_row, next_row + 1, k, n + k, Complex(1.0, 0.0)});
        next_row += 2;
        m.row_keys.push_back({KeyKind::PinRe, buses[k].id});
        m.row_keys.push_back({KeyKind::PinIm, buses[k].id});
      }
    }
  }
  m.plan.rows = next_row;
  return m;
}

PowerFlowSystem::PowerFlowSystem(NetworkPtr net, PfOptions opts)
    : net_(std::move(net)), opts_(std::move(opts)), model_(build_pf_model(*net_, opts_, false)) {
  if (model_.plan.rows != model_.columns())
    throw StructuralError("power-flow system is not square: " + std::to_string(model_.plan.rows) + " rows, " +
                          std::to_string(model_.columns()) + " unknowns");
  auto layout = std::make_shared<StateLayout>();
  layout->append(Segment::Vr, model_.bus_keys);
  layout->append(Segment::Vi, model_.bus_keys);
  layout->append(Segment::Qg, model_.qg_keys);
  layout_ = layout;

  StampAccumulator acc(model_.plan.rows);
  model_.plan.assemble(flat_start().values, acc);
  pattern_ = SparsePattern(model_.plan.rows, model_.columns(), acc.rows(), acc.cols());
}

ResidualJacobian PowerFlowSystem::evaluate(const SolverState& x) const {
  check_state(x);
  StampAccumulator acc(model_.plan.rows);
  acc.reserve(pattern_.triplet_count());
  model_.plan.assemble(x.values, acc);
  return {acc.residual(), pattern_.fill(acc.values())};
}

Eigen::VectorXd PowerFlowSystem::residual(const SolverState& x) const {
  check_state(x);
  StampAccumulator acc(model_.plan.rows, false);
  model_.plan.assemble(x.values, acc);
  return acc.residual();
}

std::string PowerFlowSystem::row_label(Index row) const {
  const auto& k = model_.row_keys.at(static_cast<std::size_t>(row));
  return "row " + std::to_string(row) + " (" + to_string(k.kind) + " bus " + std::to_string(k.id) + ")";
}

SolverState PowerFlowSystem::flat_start() const {
  SolverState s(layout_);
  fill_flat_voltages(*net_, s);
  return s;
}

std::shared_ptr<const PowerFlowSystem> build_pf_system(NetworkPtr net, PfOptions opts) {
  require_valid(*net, false);
  return std::make_shared<PowerFlowSystem>(std::move(net), std::move(opts));
}

void fill_flat_voltages(const Network& net, SolverState& state) {
  for (const auto& island : find_islands(net)) {
    double angle = 0.0;
    for (int id : island.bus_ids)
      if (is_effective_slack(net, net.bus(id))) angle = net.bus(id).angle_set;
    for (int id : island.bus_ids) {
      const Bus& b = net.bus(id);
      const double vm = (is_effective_slack(net, b) || is_effective_pv(net, b)) ? b.v_set : 1.0;
      const ElementKey key{KeyKind::Bus, id};
      if (auto i = state.layout->index_of(Segment::Vr, key)) state.values[static_cast<Index>(*i)] = vm * std::cos(angle);
      if (auto i = state.layout->index_of(Segment::Vi, key)) state.values[static_cast<Index>(*i)] = vm * std::sin(angle);
    }
  }
}

Complex bus_voltage(const SolverState& state, int bus_id) {
  const ElementKey key{KeyKind::Bus, bus_id};
  return {state.get(Segment::Vr, key), state.get(Segment::Vi, key)};
}

PowerSummary bus_power_summary(const Network& net, const SolverState& state, double tol) {
  PowerSummary out;
  const auto& buses = net.buses();
  std::vector<Complex> inj(buses.size()), gen(buses.size()), load(buses.size());
  std::vector<Complex> v(buses.size());
  for (std::size_t i = 0; i < buses.size(); ++i) v[i] = bus_voltage(state, buses[i].id);

  Complex losses;
  for (const auto& br : net.branches()) {
    if (br.status != Status::In) continue;
    const auto f = *net.bus_index(br.from_bus);
    const auto t = *net.bus_index(br.to_bus);
    const auto [i_f, i_t] = branch_currents(br, v[f], v[t]);
    const Complex s_f = v[f] * std::conj(i_f);
    const Complex s_t = v[t] * std::conj(i_t);
    inj[f] += s_f;
    inj[t] += s_t;
    losses += s_f + s_t;
  }
  for (std::size_t i = 0; i < buses.size(); ++i) {
    const Complex s = v[i] * std::conj(Complex(buses[i].shunt_g, buses[i].shunt_b) * v[i]);
    inj[i] += s;
    losses += s;
  }
  for (const auto& l : net.loads()) load[*net.bus_index(l.bus)] += Complex(l.p_eff(), l.q_eff());

  const bool dispatch_in_state = state.layout->has(Segment::Pg);
  for (std::size_t i = 0; i < buses.size(); ++i) {
    const Bus& b = buses[i];
    const auto gens = net.generators_at(b.id);
    if (dispatch_in_state) {
      for (const auto* g : gens)
        gen[i] += Complex(state.get(Segment::Pg, {KeyKind::Generator, g->id}),
                          state.get(Segment::Qg, {KeyKind::Generator, g->id}));
    } else if (is_effective_slack(net, b)) {
      gen[i] = inj[i] + load[i];
    } else if (auto q = state.layout->index_of(Segment::Qg, {KeyKind::Bus, b.id})) {
      double p = 0.0;
      for (const auto* g : gens) p += g->p_set;
      gen[i] = Complex(p, state.values[static_cast<Index>(*q)]);
    } else {
      for (const auto* g : gens) gen[i] += Complex(g->p_set, g->q_set);
    }
  }

  Complex total_gen, total_load;
  for (std::size_t i = 0; i < buses.size(); ++i) {
    BusPower bp;
    bp.bus = buses[i].id;
    bp.p_injection = inj[i].real();
    bp.q_injection = inj[i].imag();
    bp.p_generation = gen[i].real();
    bp.q_generation = gen[i].imag();
    bp.p_load = load[i].real();
    bp.q_load = load[i].imag();
    bp.mismatch = std::abs(inj[i] - (gen[i] - load[i]));
    out.max_bus_mismatch = std::max(out.max_bus_mismatch, bp.mismatch);
    total_gen += gen[i];
    total_load += load[i];
    out.buses.push_back(bp);
  }
  out.p_generation = total_gen.real();
  out.q_generation = total_gen.imag();
  out.p_load = total_load.real();
  out.q_load = total_load.imag();
  out.p_losses = losses.real();
  out.q_losses = losses.imag();
  out.balance_error = std::abs(total_gen - total_load - losses);
  out.balanced = out.balance_error <= tol && out.max_bus_mismatch <= tol && std::isfinite(out.balance_error);
  return out;
}

std::vector<GeneratorDispatch> generator_dispatch(const Network& net, const SolverState& state) {
  std::vector<GeneratorDispatch> out;
  if (state.layout->has(Segment::Pg)) {
    for (const auto& g : net.generators()) {
      if (g.status != Status::In) {
        out.push_back({g.id, 0.0, 0.0});
        continue;
      }
      out.push_back({g.id, state.get(Segment::Pg, {KeyKind::Generator, g.id}),
                     state.get(Segment::Qg, {KeyKind::Generator, g.id})});
    }
    return out;
  }

  const auto summary = bus_power_summary(net, state);
  auto split = [](const std::vector<const Generator*>& gens, double total, auto range) {
    std::vector<double> share(gens.size());
    double sum = 0.0;
    for (std::size_t k = 0; k < gens.size(); ++k) sum += std::max(0.0, range(*gens[k]));
    for (std::size_t k = 0; k < gens.size(); ++k)
      share[k] = sum > 0.0 ? total * std::max(0.0, range(*gens[k])) / sum : total / static_cast<double>(gens.size());
    return share;
  };

  std::map<int, GeneratorDispatch> by_id;
  for (const auto& g : net.generators()) by_id[g.id] = {g.id, 0.0, 0.0};
  for (std::size_t i = 0; i < net.buses().size(); ++i) {
    const Bus& b = net.buses()[i];
    const auto gens = net.generators_at(b.id);
    if (gens.empty()) continue;
    const bool slack = is_effective_slack(net, b);
    const bool pv = state.layout->index_of(Segment::Qg, {KeyKind::Bus, b.id}).has_value();
    const auto p_share = split(gens, summary.buses[i].p_generation, [](const Generator& g) { return g.p_max; });
    const auto q_share =
        split(gens, summary.buses[i].q_generation, [](const Generator& g) { return g.q_max - g.q_min; });
    for (std::size_t k = 0; k < gens.size(); ++k) {
      auto& d = by_id[gens[k]->id];
      d.p = slack ? p_share[k] : gens[k]->p_set;
      d.q = (slack || pv) ? q_share[k] : gens[k]->q_set;
    }
  }
  for (const auto& [id, d] : by_id) out.push_back(d);
  return out;
}

}  // namespace gridstep

namespace gridstep {

PfSolveResult solve_power_flow(NetworkPtr net, const PfOptions& opts, const NewtonOptions& newton,
                               const SolverState* x0) {
  PfSolveResult out;
  PfOptions current = opts;
  out.system = build_pf_system(net, current);
  SolverState start = x0 ? carry_over(*x0, out.system->layout(), [](Segment, ElementKey) { return 0.0; })
                         : out.system->flat_start();
  auto res = newton_solve(*out.system, start, newton);
  out.state = res.state;
  out.report = res.report;
  if (!opts.enforce_q_limits) return out;

  for (int round = 0; round < 10 && out.report.converged; ++round) {
    bool changed = false;
    for (const auto& b : net->buses()) {
      auto q = out.state.layout->index_of(Segment::Qg, {KeyKind::Bus, b.id});
      if (!q) continue;
      double lo = 0.0, hi = 0.0;
      for (const auto* g : net->generators_at(b.id)) {
        lo += g->q_min;
        hi += g->q_max;
      }
      const double value = out.state.values[static_cast<Index>(*q)];
      if (value > hi + 1e-9 || value < lo - 1e-9) {
        current.fixed_q[b.id] = value > hi ? hi : lo;
        out.switched_to_pq.push_back(b.id);
        changed = true;
      }
    }
    if (!changed) break;
    out.system = build_pf_system(net, current);
    auto next = newton_solve(*out.system,
                             carry_over(out.state, out.system->layout(), [](Segment, ElementKey) { return 0.0; }),
                             newton);
    const int total = out.report.iterations + next.report.iterations;
    const double time = out.report.wall_time + next.report.wall_time;
    out.state = next.state;
    out.report = next.report;
    out.report.iterations = total;
    out.report.wall_time = time;
  }
  return out;
}

}  // namespace gridstep
