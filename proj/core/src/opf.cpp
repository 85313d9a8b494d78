#include "gridstep/opf.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <limits>

#include "gridstep/errors.hpp"
#include "gridstep/power_flow.hpp"
#include "gridstep/stamps.hpp"

namespace gridstep {

namespace {

constexpr double kFixedWidth = 1e-9;

enum class IneqForm { Linear, Magnitude, Flow };

// h(x) ≤ 0 in one of three shapes:
//   Linear:    a·x[col] + b
//   Magnitude: s·(Vr² + Vi²) + b
//   Flow:      |Σ_k d_k·x[c_k]|² + b, d_k complex, over four columns
struct Inequality {
  ElementKey key;
  IneqForm form = IneqForm::Linear;
  Index col = -1, vr = -1, vi = -1;
  double a = 0.0, s = 0.0, b = 0.0;
  std::array<Index, 4> cols{};
  std::array<Complex, 4> d{};
};

struct FixedRow {
  ElementKey key;
  Index col = -1;
  double value = 0.0;
};

struct GenVars {
  int id = 0;
  Index p = -1, q = -1;
  double hess = 0.0;  // 2·c2·base
  double c1 = 0.0;
  double c0 = 0.0;  // per base
  double p_lo = 0.0, p_hi = 0.0, q_lo = 0.0, q_hi = 0.0;
  bool p_fixed = false, q_fixed = false;
  double p_value = 0.0, q_value = 0.0;
};

double h_value(const Inequality& h, const Eigen::VectorXd& x) {
  switch (h.form) {
    case IneqForm::Linear:
      return h.a * x[h.col] + h.b;
    case IneqForm::Magnitude:
      return h.s * (x[h.vr] * x[h.vr] + x[h.vi] * x[h.vi]) + h.b;
    case IneqForm::Flow: {
      Complex i;
      for (int k = 0; k < 4; ++k) i += h.d[static_cast<std::size_t>(k)] * x[h.cols[static_cast<std::size_t>(k)]];
      return std::norm(i) + h.b;
    }
  }
  return 0.0;
}

}  // namespace

struct KktModel {
  OpfProblem prob;
  CurrentBalancePlan plan;  // 2n balance rows, then one angle row per island
  std::vector<ElementKey> plan_row_keys;
  std::vector<GenVars> gens;
  std::vector<Index> slack_rows_re, slack_rows_im;
  std::vector<FixedRow> fixed;
  std::vector<Inequality> ineqs;
  std::vector<std::pair<Index, double>> initial_angles;  // (bus position, angle)
  double weight = 0.0;
  double base = 100.0;
  Index n_bus = 0, n_p = 0, n_s = 0, n_l = 0, n_m = 0;
  Index off_s = 0, off_l = 0, off_m = 0;
  LayoutPtr layout;
  SparsePattern pattern;

  void assemble(const Eigen::VectorXd& z, double eps, double w, StampAccumulator& acc) const;
};

namespace {

std::shared_ptr<KktModel> build_model(const OpfProblem& prob) {
  if (!prob.net) throw InputError("OPF problem has no network");
  const Network& net = *prob.net;
  require_valid(net, prob.contingency.has_value());

  auto m = std::make_shared<KktModel>();
  m->prob = prob;
  m->base = net.base_mva();
  const auto& buses = net.buses();
  const Index n = static_cast<Index>(buses.size());
  m->n_bus = n;

  std::vector<ElementKey> bus_keys, gen_keys;
  for (const auto& b : buses) bus_keys.push_back({KeyKind::Bus, b.id});
  for (const auto& g : net.generators())
    if (g.status == Status::In) gen_keys.push_back({KeyKind::Generator, g.id});
  const Index ng = static_cast<Index>(gen_keys.size());
  const bool slack = prob.contingency.has_value();
  m->n_s = slack ? n : 0;
  m->n_p = 2 * n + 2 * ng + 2 * m->n_s;
  m->off_s = 2 * n + 2 * ng;
  m->weight = slack ? prob.contingency->slack_weight : 0.0;
  if (slack && !(m->weight > 0.0)) throw InputError("slack weight must be positive");

  std::vector<BusTerminal> term(buses.size());
  for (Index k = 0; k < n; ++k) {
    term[static_cast<std::size_t>(k)] = {k, n + k, 2 * k, 2 * k + 1};
    m->plan_row_keys.push_back({KeyKind::KclRe, buses[static_cast<std::size_t>(k)].id});
    m->plan_row_keys.push_back({KeyKind::KclIm, buses[static_cast<std::size_t>(k)].id});
    if (slack) {
      m->slack_rows_re.push_back(2 * k);
      m->slack_rows_im.push_back(2 * k + 1);
    }
  }
  auto at = [&](int bus_id) { return term[*net.bus_index(bus_id)]; };

  for (const auto& br : net.branches())
    if (br.status == Status::In) m->plan.branches.push_back({at(br.from_bus), at(br.to_bus), BranchAdmittance::of(br)});
  for (std::size_t i = 0; i < buses.size(); ++i)
    if (buses[i].shunt_g != 0.0 || buses[i].shunt_b != 0.0)
      m->plan.shunts.push_back({term[i], Complex(buses[i].shunt_g, buses[i].shunt_b)});
  for (const auto& l : net.loads()) m->plan.powers.push_back({at(l.bus), {l.p_eff(), -1}, {l.q_eff(), -1}, 1.0});

  Index gi = 0;
  for (const auto& g : net.generators()) {
    if (g.status != Status::In) continue;
    GenVars v;
    v.id = g.id;
    v.p = 2 * n + gi;
    v.q = 2 * n + ng + gi;
    v.hess = 2.0 * g.cost.c2 * m->base;
    v.c1 = g.cost.c1;
    v.c0 = g.cost.c0 / m->base;
    v.p_lo = g.p_min;
    v.p_hi = g.p_max;
    v.q_lo = g.q_min;
    v.q_hi = g.q_max;
    m->plan.powers.push_back({at(g.bus), {0.0, v.p}, {0.0, v.q}, -1.0});
    m->gens.push_back(v);
    ++gi;
  }

  Index row = 2 * n;
  for (const auto& island : find_islands(net)) {
    std::optional<int> ref;
    double angle = 0.0;
    for (int id : island.bus_ids)
      if (is_effective_slack(net, net.bus(id))) {
        ref = id;
        angle = net.bus(id).angle_set;
        break;
      }
    if (!ref)
      for (int id : island.bus_ids)
        if (!net.generators_at(id).empty()) {
          ref = id;
          break;
        }
    if (!ref) ref = island.bus_ids.front();
    const Index k = static_cast<Index>(*net.bus_index(*ref));
    m->plan.angles.push_back({row++, k, n + k, angle});
    m->plan_row_keys.push_back({KeyKind::AngleReference, *ref});
    for (int id : island.bus_ids) m->initial_angles.push_back({static_cast<Index>(*net.bus_index(id)), angle});
  }
  m->plan.rows = row;

  auto linear = [&](KeyKind kind, int id, Index col, double a, double b) {
    Inequality h;
    h.key = {kind, id};
    h.col = col;
    h.a = a;
    h.b = b;
    m->ineqs.push_back(h);
  };

  for (auto& v : m->gens) {
    double lo = v.p_lo, hi = v.p_hi;
    bool ramped = false;
    if (slack) {
      const auto& c = *prob.contingency;
      auto r = c.ramp.find(v.id);
      auto p0 = c.base_dispatch.find(v.id);
      if (r != c.ramp.end() && p0 != c.base_dispatch.end()) {
        if (!(r->second >= 0.0)) throw InputError("ramp limit of generator " + std::to_string(v.id) + " is negative");
        ramped = true;
        if (r->second <= kFixedWidth) {
          v.p_fixed = true;
          v.p_value = p0->second;
        } else {
          lo = std::max(lo, p0->second - r->second);
          hi = std::min(hi, p0->second + r->second);
          linear(KeyKind::RampUp, v.id, v.p, 1.0, -(p0->second + r->second));
          linear(KeyKind::RampDown, v.id, v.p, -1.0, p0->second - r->second);
        }
      }
    }
    v.p_lo = lo;
    v.p_hi = hi;
    if (!v.p_fixed && hi - lo <= kFixedWidth && hi >= lo) {
      v.p_fixed = true;
      v.p_value = 0.5 * (lo + hi);
    }
    if (v.p_fixed) {
      // Ramp rows of a fixed generator are redundant.
      if (ramped) {
        auto& hs = m->ineqs;
        hs.erase(std::remove_if(hs.begin(), hs.end(),
                                [&](const Inequality& h) {
                                  return h.key.id == v.id &&
                                         (h.key.kind == KeyKind::RampUp || h.key.kind == KeyKind::RampDown);
                                }),
                 hs.end());
      }
      m->fixed.push_back({{KeyKind::PgFixed, v.id}, v.p, v.p_value});
    } else {
      linear(KeyKind::PgMin, v.id, v.p, -1.0, net.generator(v.id).p_min);
      linear(KeyKind::PgMax, v.id, v.p, 1.0, -net.generator(v.id).p_max);
    }
    if (v.q_hi - v.q_lo <= kFixedWidth) {
      v.q_fixed = true;
      v.q_value = 0.5 * (v.q_lo + v.q_hi);
      m->fixed.push_back({{KeyKind::QgFixed, v.id}, v.q, v.q_value});
    } else {
      linear(KeyKind::QgMin, v.id, v.q, -1.0, v.q_lo);
      linear(KeyKind::QgMax, v.id, v.q, 1.0, -v.q_hi);
    }
  }

  for (Index k = 0; k < n; ++k) {
    const Bus& b = buses[static_cast<std::size_t>(k)];
    Inequality lo, hi;
    lo.key = {KeyKind::VmMin, b.id};
    lo.form = IneqForm::Magnitude;
    lo.vr = k;
    lo.vi = n + k;
    lo.s = -1.0;
    lo.b = b.v_min * b.v_min;
    hi = lo;
    hi.key = {KeyKind::VmMax, b.id};
    hi.s = 1.0;
    hi.b = -b.v_max * b.v_max;
    m->ineqs.push_back(lo);
    m->ineqs.push_back(hi);
  }

  if (prob.flow_limits) {
    const Complex j(0.0, 1.0);
    for (const auto& br : net.branches()) {
      if (br.status != Status::In || !br.flow_limit || !(*br.flow_limit > 0.0)) continue;
      const auto y = BranchAdmittance::of(br);
      const auto f = at(br.from_bus), t = at(br.to_bus);
      Inequality h;
      h.form = IneqForm::Flow;
      h.cols = {f.vr, f.vi, t.vr, t.vi};
      h.b = -(*br.flow_limit) * (*br.flow_limit);
      h.key = {KeyKind::FlowFrom, br.id};
      h.d = {y.yff, j * y.yff, y.yft, j * y.yft};
      m->ineqs.push_back(h);
      h.key = {KeyKind::FlowTo, br.id};
      h.d = {y.ytf, j * y.ytf, y.ytt, j * y.ytt};
      m->ineqs.push_back(h);
    }
  }

  for (const auto& g : m->gens)
    if (g.p_fixed && (g.p_value < net.generator(g.id).p_min - kFixedWidth || g.p_value > net.generator(g.id).p_max + kFixedWidth))
      throw InputError("fixed dispatch of generator " + std::to_string(g.id) + " lies outside its limits");

  m->n_l = m->plan.rows + static_cast<Index>(m->fixed.size());
  m->n_m = static_cast<Index>(m->ineqs.size());
  m->off_l = m->n_p;
  m->off_m = m->n_p + m->n_l;

  std::vector<ElementKey> lambda_keys = m->plan_row_keys, mu_keys;
  for (const auto& f : m->fixed) lambda_keys.push_back(f.key);
  for (const auto& h : m->ineqs) mu_keys.push_back(h.key);
  std::vector<ElementKey> slack_keys;
  if (slack) slack_keys = bus_keys;

  auto layout = std::make_shared<StateLayout>();
  layout->append(Segment::Vr, bus_keys);
  layout->append(Segment::Vi, bus_keys);
  layout->append(Segment::Pg, gen_keys);
  layout->append(Segment::Qg, gen_keys);
  if (slack) {
    layout->append(Segment::SlackRe, slack_keys);
    layout->append(Segment::SlackIm, slack_keys);
  }
  layout->append(Segment::Lambda, lambda_keys);
  layout->append(Segment::Mu, mu_keys);
  m->layout = layout;
  return m;
}

// Gradient entries (col, ∂h/∂x) and Hessian entries (a, b, ∂²h/∂a∂b) of one inequality.
template <typename Grad, typename Hess>
void differentiate(const Inequality& h, const Eigen::VectorXd& x, Grad&& grad, Hess&& hess) {
  switch (h.form) {
    case IneqForm::Linear:
      grad(h.col, h.a);
      break;
    case IneqForm::Magnitude:
      grad(h.vr, 2.0 * h.s * x[h.vr]);
      grad(h.vi, 2.0 * h.s * x[h.vi]);
      hess(h.vr, h.vr, 2.0 * h.s);
      hess(h.vi, h.vi, 2.0 * h.s);
      break;
    case IneqForm::Flow: {
      Complex i;
      for (std::size_t k = 0; k < 4; ++k) i += h.d[k] * x[h.cols[k]];
      for (std::size_t k = 0; k < 4; ++k) grad(h.cols[k], 2.0 * (i.real() * h.d[k].real() + i.imag() * h.d[k].imag()));
      for (std::size_t a = 0; a < 4; ++a)
        for (std::size_t b = 0; b < 4; ++b)
          hess(h.cols[a], h.cols[b], 2.0 * (h.d[a].real() * h.d[b].real() + h.d[a].imag() * h.d[b].imag()));
      break;
    }
  }
}

}  // namespace

// z = [primal | λ | μ]; rows = [stationarity | g | μ∘h + ε]. g = I_slack − F_pf on balance
// rows, −F_pf on angle rows, x − value on fixed rows.
void KktModel::assemble(const Eigen::VectorXd& z, double eps, double w, StampAccumulator& acc) const {
  const Index n_plan = plan.rows;
  const Eigen::VectorXd lambda = z.segment(off_l, n_l);

  for (const auto& g : gens) {
    acc.add_residual(g.p, g.hess * z[g.p] + g.c1);
    acc.add_jacobian(g.p, g.p, g.hess);
  }
  for (Index k = 0; k < 2 * n_s; ++k) {
    acc.add_residual(off_s + k, 2.0 * w * z[off_s + k]);
    acc.add_jacobian(off_s + k, off_s + k, 2.0 * w);
  }

  StampAccumulator f(n_plan);
  plan.assemble(z, f);
  const Eigen::VectorXd fr = f.residual();
  StampAccumulator h(n_p);
  plan.assemble_hessian(z, -lambda.head(n_plan), h);
  for (std::size_t k = 0; k < h.triplet_count(); ++k) acc.add_jacobian(h.rows()[k], h.cols()[k], h.values()[k]);

  for (std::size_t k = 0; k < f.triplet_count(); ++k) {
    const Index r = f.rows()[k], c = f.cols()[k];
    const double v = -f.values()[k];
    acc.add_residual(c, v * lambda[r]);
    acc.add_jacobian(c, off_l + r, v);
    acc.add_jacobian(off_l + r, c, v);
  }
  for (Index r = 0; r < n_plan; ++r) acc.add_residual(off_l + r, -fr[r]);
  for (Index k = 0; k < 2 * n_s; ++k) {
    const Index r = k < n_s ? slack_rows_re[static_cast<std::size_t>(k)] : slack_rows_im[static_cast<std::size_t>(k - n_s)];
    acc.add_residual(off_s + k, lambda[r]);
    acc.add_jacobian(off_s + k, off_l + r, 1.0);
    acc.add_residual(off_l + r, z[off_s + k]);
    acc.add_jacobian(off_l + r, off_s + k, 1.0);
  }
  for (std::size_t j = 0; j < fixed.size(); ++j) {
    const Index r = n_plan + static_cast<Index>(j);
    const auto& fx = fixed[j];
    acc.add_residual(fx.col, lambda[r]);
    acc.add_jacobian(fx.col, off_l + r, 1.0);
    acc.add_residual(off_l + r, z[fx.col] - fx.value);
    acc.add_jacobian(off_l + r, fx.col, 1.0);
  }

  for (Index i = 0; i < n_m; ++i) {
    const auto& hi = ineqs[static_cast<std::size_t>(i)];
    const double mu = z[off_m + i];
    const double hv = h_value(hi, z);
    const Index crow = off_m + i;
    differentiate(
        hi, z,
        [&](Index c, double d) {
          acc.add_residual(c, mu * d);
          acc.add_jacobian(c, crow, d);
          acc.add_jacobian(crow, c, mu * d);
        },
        [&](Index a, Index b, double v) { acc.add_jacobian(a, b, mu * v); });
    acc.add_residual(crow, mu * hv + eps);
    acc.add_jacobian(crow, crow, hv);
  }
}

KktSystem::KktSystem(const OpfProblem& prob, double epsilon, double fraction_to_boundary)
    : epsilon_(epsilon), tau_(fraction_to_boundary) {
  if (!(epsilon > 0.0)) throw InputError("OPF perturbation epsilon must be positive");
  if (!(tau_ > 0.0 && tau_ < 1.0)) throw InputError("fraction-to-boundary must lie in (0, 1)");
  auto m = build_model(prob);
  model_ = m;
  weight_ = m->weight;
  StampAccumulator acc(static_cast<Index>(m->layout->size()));
  m->assemble(cold_start().values, epsilon_, weight_, acc);
  m->pattern = SparsePattern(acc.residual().size(), acc.residual().size(), acc.rows(), acc.cols());
}

const LayoutPtr& KktSystem::layout() const { return model_->layout; }
const OpfProblem& KktSystem::problem() const { return model_->prob; }
const Network& KktSystem::network() const { return *model_->prob.net; }

KktSystem KktSystem::with_epsilon(double epsilon) const { return with_parameters(epsilon, weight_); }

KktSystem KktSystem::with_parameters(double epsilon, double slack_weight) const {
  if (!(epsilon > 0.0)) throw InputError("OPF perturbation epsilon must be positive");
  if (model_->n_s > 0 && !(slack_weight > 0.0)) throw InputError("slack weight must be positive");
  KktSystem out(*this);
  out.epsilon_ = epsilon;
  out.weight_ = model_->n_s > 0 ? slack_weight : 0.0;
  return out;
}

ResidualJacobian KktSystem::evaluate(const SolverState& x) const {
  check_state(x);
  StampAccumulator acc(static_cast<Index>(model_->layout->size()));
  acc.reserve(model_->pattern.triplet_count());
  model_->assemble(x.values, epsilon_, weight_, acc);
  return {acc.residual(), model_->pattern.fill(acc.values())};
}

double KktSystem::max_step(const SolverState& x, const Eigen::VectorXd& dx) const {
  const auto& m = *model_;
  double alpha = 1.0;
  for (Index i = 0; i < m.n_m; ++i) {
    const double mu = x.values[m.off_m + i], dmu = dx[m.off_m + i];
    if (dmu < 0.0 && mu > 0.0) alpha = std::min(alpha, -tau_ * mu / dmu);
    const auto& h = m.ineqs[static_cast<std::size_t>(i)];
    if (h.form != IneqForm::Linear) continue;
    const double hv = h_value(h, x.values), dh = h.a * dx[h.col];
    if (dh > 0.0 && hv < 0.0) alpha = std::min(alpha, -tau_ * hv / dh);
  }
  // Quadratic rows: back off until each keeps h ≤ (1 − τ)·h_now.
  for (int halving = 0; halving < 60; ++halving) {
    const Eigen::VectorXd trial = x.values + alpha * dx;
    bool ok = true;
    for (const auto& h : m.ineqs) {
      if (h.form == IneqForm::Linear) continue;
      const double now = h_value(h, x.values);
      if (now < 0.0 && h_value(h, trial) > (1.0 - tau_) * now) {
        ok = false;
        break;
      }
    }
    if (ok) return alpha;
    alpha *= 0.5;
  }
  return 0.0;
}

std::string KktSystem::row_label(Index row) const {
  const auto& m = *model_;
  const auto [seg, key] = m.layout->element_at(static_cast<std::size_t>(row));
  std::string what;
  if (row < m.n_p)
    what = "stationarity " + to_string(seg) + " " + to_string(key.kind);
  else if (row < m.off_m)
    what = "equality " + to_string(key.kind);
  else
    what = "complementarity " + to_string(key.kind);
  return "row " + std::to_string(row) + " (" + what + " " + std::to_string(key.id) + ")";
}

Eigen::VectorXd KktSystem::inequalities(const SolverState& x) const {
  check_state(x);
  Eigen::VectorXd out(model_->n_m);
  for (Index i = 0; i < model_->n_m; ++i) out[i] = h_value(model_->ineqs[static_cast<std::size_t>(i)], x.values);
  return out;
}

double KktSystem::generation_cost(const SolverState& x) const {
  check_state(x);
  double cost = 0.0;
  for (const auto& g : model_->gens)
    cost += network().generator(g.id).cost.evaluate_mw(x.values[g.p] * model_->base);
  return cost;
}

double KktSystem::slack_penalty(const SolverState& x) const {
  check_state(x);
  const auto& m = *model_;
  return weight_ * m.base * x.values.segment(m.off_s, 2 * m.n_s).squaredNorm();
}

KktBlockNorms KktSystem::block_norms(const SolverState& x) const {
  const auto& m = *model_;
  const Eigen::VectorXd r = evaluate(x).residual;
  KktBlockNorms out;
  out.stationarity = r.head(m.n_p).lpNorm<Eigen::Infinity>();
  out.equality = m.n_l > 0 ? r.segment(m.off_l, m.n_l).lpNorm<Eigen::Infinity>() : 0.0;
  out.complementarity = m.n_m > 0 ? r.tail(m.n_m).lpNorm<Eigen::Infinity>() : 0.0;
  if (m.n_m > 0) {
    out.max_h = inequalities(x).maxCoeff();
    out.min_mu = x.values.tail(m.n_m).minCoeff();
    out.max_mu = x.values.tail(m.n_m).maxCoeff();
  }
  return out;
}

SolverState KktSystem::cold_start() const {
  const auto& m = *model_;
  SolverState s(m.layout);
  const auto& buses = network().buses();
  for (const auto& [k, angle] : m.initial_angles) {
    const Bus& b = buses[static_cast<std::size_t>(k)];
    const double vm = (b.v_min < 1.0 && 1.0 < b.v_max) ? 1.0 : 0.5 * (b.v_min + b.v_max);
    s.values[k] = vm * std::cos(angle);
    s.values[m.n_bus + k] = vm * std::sin(angle);
  }
  for (const auto& g : m.gens) {
    s.values[g.p] = g.p_fixed ? g.p_value : 0.5 * (g.p_lo + g.p_hi);
    s.values[g.q] = g.q_fixed ? g.q_value : 0.5 * (g.q_lo + g.q_hi);
  }
  s.values.tail(m.n_m).setOnes();
  return s;
}

bool KktSystem::strictly_interior(const SolverState& x) const {
  if (!x.layout || !(*x.layout == *layout())) return false;
  const Eigen::VectorXd h = inequalities(x);
  for (Index i = 0; i < model_->n_m; ++i)
    if (!(h[i] < 0.0) || !(x.values[model_->off_m + i] > 0.0)) return false;
  return true;
}

void KktSystem::make_interior(SolverState& x) const {
  check_state(x);
  const auto& m = *model_;
  auto margin = [](double lo, double hi) { return std::min(1e-4, 0.01 * (hi - lo)); };
  for (const auto& g : m.gens) {
    if (!g.p_fixed) {
      const double d = margin(g.p_lo, g.p_hi);
      if (!(x.values[g.p] > g.p_lo)) x.values[g.p] = g.p_lo + d;
      if (!(x.values[g.p] < g.p_hi)) x.values[g.p] = g.p_hi - d;
    }
    if (!g.q_fixed) {
      const double d = margin(g.q_lo, g.q_hi);
      if (!(x.values[g.q] > g.q_lo)) x.values[g.q] = g.q_lo + d;
      if (!(x.values[g.q] < g.q_hi)) x.values[g.q] = g.q_hi - d;
    }
  }
  const auto& buses = network().buses();
  for (Index k = 0; k < m.n_bus; ++k) {
    const Bus& b = buses[static_cast<std::size_t>(k)];
    const double vm = std::hypot(x.values[k], x.values[m.n_bus + k]);
    const double d = margin(b.v_min, b.v_max);
    double target = vm;
    if (!(vm > b.v_min)) target = b.v_min + d;
    if (!(vm < b.v_max)) target = b.v_max - d;
    if (target == vm) continue;
    if (vm > 0.0) {
      x.values[k] *= target / vm;
      x.values[m.n_bus + k] *= target / vm;
    } else {
      x.values[k] = target;
    }
  }
  const Eigen::VectorXd h = inequalities(x);
  for (Index i = 0; i < m.n_m; ++i) {
    double& mu = x.values[m.off_m + i];
    if (!(mu > 0.0) && h[i] < 0.0) mu = epsilon_ / -h[i];
  }
}

double continuation_slack_weight(double full_weight, double epsilon, double epsilon_final) {
  return std::max(std::min(full_weight, 1e2), full_weight * epsilon_final / epsilon);
}

void KktSystem::settle_slacks(SolverState& x) const {
  check_state(x);
  const auto& m = *model_;
  if (m.n_s == 0) return;
  // The stationarity row of a slack entry is linear in that entry alone.
  const auto rj = evaluate(x);
  for (Index k = 0; k < 2 * m.n_s; ++k) {
    const Index c = m.off_s + k;
    const double d = rj.jacobian.coeff(c, c);
    if (d != 0.0) x.values[c] -= rj.residual[c] / d;
  }
}

OpfResult solve_opf(const OpfProblem& prob, const SolverState* x0, const OpfOptions& opts) {
  if (!(opts.epsilon_final > 0.0) || !(opts.sigma > 0.0 && opts.sigma < 1.0) || opts.max_stages < 1)
    throw InputError("OPF options need epsilon_final > 0, 0 < sigma < 1, max_stages >= 1");
  const auto start = std::chrono::steady_clock::now();
  const KktSystem base(prob, opts.epsilon_final, opts.fraction_to_boundary);

  OpfResult out;
  out.state = x0 ? *x0 : base.cold_start();
  if (!out.state.layout || !(*out.state.layout == *base.layout()))
    throw InputError("OPF start does not match the problem layout");
  if (!out.state.finite()) throw InputError("OPF start has non-finite entries");
  if (!base.strictly_interior(out.state))
    throw InputError("OPF start is not strictly interior (needs h(x0) < 0 and mu > 0)");

  const Eigen::VectorXd h0 = base.inequalities(out.state);
  const Index n_m = h0.size();
  double eps = opts.epsilon_final;
  if (n_m > 0) {
    const Eigen::VectorXd mu = out.state.segment(Segment::Mu);
    const double mean = -(mu.array() * h0.array()).mean();
    eps = std::max(opts.epsilon_final, opts.initial_fraction * mean);
  }

  SolveReport& rep = out.report;
  rep.residual_history.clear();
  double reduction = opts.sigma;
  double last_good = std::numeric_limits<double>::infinity();
  int stages = 0, retries = 0;
  SolveReport last_stage;
  // The slack weight follows ε (W_k ∝ 1/ε_k) and reaches its full value at ε_final. Starting at
  // the full weight from a cold point forces λ ~ W·mismatch and the steps collapse.
  const double w_full = base.slack_weight();
  auto weight_at = [&](double e) { return continuation_slack_weight(w_full, e, opts.epsilon_final); };
  while (true) {
    auto sys = std::make_shared<const KktSystem>(base.with_parameters(eps, weight_at(eps)));
    out.system = sys;
    const auto res = newton_solve(*sys, out.state, opts.newton);
    ++stages;
    const auto& hist = res.report.residual_history;
    rep.residual_history.insert(rep.residual_history.end(), hist.begin() + (rep.residual_history.empty() ? 0 : 1),
                                hist.end());
    rep.iterations += res.report.iterations;
    rep.min_pivot_ratio = std::min(rep.min_pivot_ratio, res.report.min_pivot_ratio);
    if (res.report.condition != ConditionFlag::Ok) rep.condition = std::max(rep.condition, res.report.condition);
    last_stage = res.report;

    if (res.report.converged) {
      out.state = res.state;
      last_good = eps;
      out.stage_epsilons.push_back(eps);
      const double penalty = sys->slack_penalty(out.state);
      out.stage_objectives.push_back((sys->generation_cost(out.state) + penalty) / sys->network().base_mva());
      if (eps <= opts.epsilon_final) {
        rep.status = SolveStatus::Converged;
        break;
      }
      eps = std::max(opts.epsilon_final, eps * reduction);
    } else {
      // A failure at the first ε cannot be softened further.
      if (!std::isfinite(last_good) || reduction > 0.99 || ++retries > 8) {
        rep.status = res.report.status;
        rep.message = "OPF stage at epsilon " + std::to_string(eps) + " failed: " + res.report.message;
        break;
      }
      reduction = std::sqrt(reduction);
      eps = std::max(opts.epsilon_final, last_good * reduction);
    }
    if (stages >= opts.max_stages) {
      rep.status = SolveStatus::MaxIterations;
      rep.message = "epsilon continuation exceeded " + std::to_string(opts.max_stages) + " stages";
      break;
    }
  }
  if (rep.status == SolveStatus::Converged && out.system->epsilon() != opts.epsilon_final)
    rep.status = SolveStatus::MaxIterations;
  rep.converged = rep.status == SolveStatus::Converged;
  if (rep.converged) rep.message.clear();
  if (!rep.converged && rep.message.empty()) rep.message = last_stage.message;

  out.objective = base.generation_cost(out.state);
  const auto norms = out.system->block_norms(out.state);
  rep.metrics["objective"] = out.objective;
  rep.metrics["slack_penalty"] = base.slack_penalty(out.state);
  rep.metrics["epsilon"] = out.system->epsilon();
  rep.metrics["stages"] = stages;
  rep.metrics["stationarity_norm"] = norms.stationarity;
  rep.metrics["equality_norm"] = norms.equality;
  rep.metrics["complementarity_norm"] = norms.complementarity;
  rep.metrics["max_h"] = norms.max_h;
  rep.metrics["min_mu"] = norms.min_mu;
  rep.metrics["max_mu"] = norms.max_mu;
  if (out.state.layout->has(Segment::SlackRe))
    rep.metrics["slack_norm"] = std::sqrt(out.state.segment(Segment::SlackRe).squaredNorm() +
                                          out.state.segment(Segment::SlackIm).squaredNorm());
  rep.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

ContingencyOpfProblem build_contingency_opf(const OpfProblem& base, const SolverState& base_solution,
                                            const NetworkDelta& delta, const std::map<int, double>& ramp,
                                            double slack_weight) {
  if (!base.net) throw InputError("base OPF problem has no network");
  if (!base_solution.layout || !base_solution.layout->has(Segment::Pg))
    throw StatusError("base solution carries no generator dispatch");
  ContingencyOpfProblem out;
  out.net = std::make_shared<const Network>(apply_delta(*base.net, delta));
  out.flow_limits = base.flow_limits;
  ContingencyTerms terms;
  terms.slack_weight = slack_weight;
  for (const auto& key : base_solution.layout->find(Segment::Pg)->keys)
    terms.base_dispatch[key.id] = base_solution.get(Segment::Pg, key);
  terms.ramp = ramp;
  out.contingency = std::move(terms);
  return out;
}

std::map<int, double> uniform_ramp(const Network& net, double r) {
  std::map<int, double> out;
  for (const auto& g : net.generators()) out[g.id] = r;
  return out;
}

}  // namespace gridstep
