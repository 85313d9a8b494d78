#include "gridstep/studies.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>
#include <thread>

#include "gridstep/errors.hpp"
#include "gridstep/power_flow.hpp"

namespace gridstep {

std::string to_string(Method m) { return m == Method::Cold ? "cold" : "netstep"; }

std::optional<Method> method_from_string(const std::string& s) {
  if (s == "cold") return Method::Cold;
  if (s == "netstep") return Method::NetworkStepping;
  return std::nullopt;
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

void fill_row(InstanceResult& row, const FamilySolve& s) {
  row.converged = s.report.converged;
  row.iterations = s.report.iterations;
  row.objective = s.objective;
  const auto it = s.report.metrics.find("slack_norm");
  row.slack_norm = it == s.report.metrics.end() ? 0.0 : it->second;
  row.message = s.report.message;
}

// Runs task(i) for i in [0, n) on `jobs` threads; every task writes only its own slot.
template <class F>
void parallel_for(std::size_t n, int jobs, F&& task) {
  const std::size_t width = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, jobs)));
  if (width <= 1) {
    for (std::size_t i = 0; i < n; ++i) task(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::jthread> pool;
  pool.reserve(width);
  for (std::size_t w = 0; w < width; ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) task(i);
    });
}

template <class F>
void guarded_row(InstanceResult& row, F&& body) {
  const auto t0 = Clock::now();
  try {
    body();
  } catch (const std::exception& e) {
    row.converged = false;
    row.message = e.what();
  }
  row.time_s = seconds_since(t0);
}

StudyResult finish(std::vector<InstanceResult> rows, Clock::time_point t0, int jobs) {
  StudyResult r;
  r.rows = std::move(rows);
  r.stats = aggregate(r.rows);
  r.wall_time_s = seconds_since(t0);
  r.jobs = jobs;
  return r;
}

}  // namespace

StudyAggregate aggregate(const std::vector<InstanceResult>& rows) {
  StudyAggregate a;
  a.instances = rows.size();
  if (rows.empty()) return a;
  std::vector<double> it, cold;
  for (const auto& r : rows) {
    a.converged += r.converged ? 1 : 0;
    it.push_back(r.iterations);
    a.max_iterations = std::max(a.max_iterations, r.iterations);
    a.total_time_s += r.time_s;
    if (r.cold_iterations) cold.push_back(*r.cold_iterations);
  }
  const double n = static_cast<double>(rows.size());
  a.convergence_rate = static_cast<double>(a.converged) / n;
  double sum = 0.0;
  for (double v : it) sum += v;
  a.mean_iterations = sum / n;
  a.median_iterations = median(it);
  a.mean_time_s = a.total_time_s / n;
  if (!cold.empty()) {
    double s = 0.0;
    for (double v : cold) s += v;
    a.mean_cold_iterations = s / static_cast<double>(cold.size());
    a.median_cold_iterations = median(cold);
  }
  return a;
}

std::string results_csv(const StudyResult& r, bool with_time) {
  const bool cold = std::any_of(r.rows.begin(), r.rows.end(), [](const auto& x) { return x.cold_iterations.has_value(); });
  std::string out = "id,converged,iterations";
  if (with_time) out += ",time_s";
  out += ",objective,slack_norm";
  if (cold) out += ",cold_iterations";
  out += "\n";
  for (const auto& x : r.rows) {
    out += x.id + "," + (x.converged ? "1" : "0") + "," + std::to_string(x.iterations);
    if (with_time) out += "," + num(x.time_s);
    out += "," + num(x.objective) + "," + num(x.slack_norm);
    if (cold) out += "," + (x.cold_iterations ? std::to_string(*x.cold_iterations) : std::string());
    out += "\n";
  }
  return out;
}

SingleStudy run_single(NetworkPtr case_net, const FamilyOptions& opts, Method method, const NetworkDelta& delta,
                       const SolverState* warm) {
  if (!case_net) throw InputError("no case network");
  if (method == Method::NetworkStepping && !warm)
    throw InputError("Network-Stepping needs a warm-start solution of the source network");
  const auto t0 = Clock::now();
  SingleStudy out;
  out.delta = delta;
  if (method == Method::Cold)
    out.solve = cold_solve(std::make_shared<const Network>(apply_delta(*case_net, delta)), opts);
  else
    out.solve = warm_start_solve(case_net, *warm, delta, opts);
  InstanceResult row;
  row.id = case_net->name().empty() ? "case" : case_net->name();
  fill_row(row, out.solve);
  row.time_s = seconds_since(t0);
  out.result = finish({row}, t0, 1);
  return out;
}

SingleStudy run_powerflow(NetworkPtr case_net, const FamilyOptions& opts, Method method, const NetworkDelta& delta,
                          const SolverState* warm) {
  if (opts.family == Family::Opf) throw InputError("run_powerflow takes the pf or ipf family");
  return run_single(std::move(case_net), opts, method, delta, warm);
}

SingleStudy run_opf(NetworkPtr case_net, FamilyOptions opts, Method method, const NetworkDelta& delta,
                    const SolverState* warm) {
  opts.family = Family::Opf;
  return run_single(std::move(case_net), opts, method, delta, warm);
}

StudyResult run_contingency_batch(NetworkPtr net, const ContingencyList& list, const ContingencyOptions& opts) {
  if (!net) throw InputError("no case network");
  const auto t0 = Clock::now();
  validate_contingencies(*net, list);

  FamilyOptions fam = opts.family;
  fam.contingency.reset();
  switch (opts.mode) {
    case ContingencyMode::PowerFlow: fam.family = Family::PowerFlow; break;
    case ContingencyMode::InfeasibilityPF: fam.family = Family::InfeasibilityPF; break;
    case ContingencyMode::ContingencyOpf: fam.family = Family::Opf; break;
  }
  if (list.empty()) return finish({}, t0, opts.jobs);

  const FamilySolve base = cold_solve(net, fam);
  if (!base.report.converged) throw StatusError("base case did not converge: " + base.report.message);
  const OpfProblem base_problem{net, fam.flow_limits, std::nullopt};
  const auto ramp = uniform_ramp(*net, opts.ramp);

  std::vector<InstanceResult> rows(list.size());
  parallel_for(list.size(), opts.jobs, [&](std::size_t i) {
    const Contingency& c = list[i];
    InstanceResult& row = rows[i];
    row.id = c.id;
    guarded_row(row, [&] {
      if (opts.mode == ContingencyMode::ContingencyOpf) {
        const auto prob = build_contingency_opf(base_problem, base.state, c.delta, ramp, opts.slack_weight);
        FamilyOptions f = fam;
        f.contingency = prob.contingency;
        if (opts.method == Method::NetworkStepping) {
          auto target = std::make_shared<const KktSystem>(prob, f.opf.epsilon_final, f.opf.fraction_to_boundary);
          fill_row(row, warm_start_on(prob.net, target, base.state, f));
        } else {
          fill_row(row, cold_solve(prob.net, f));
        }
        if (opts.compare_cold) row.cold_iterations = cold_solve(prob.net, f).report.iterations;
        return;
      }
      if (opts.method == Method::NetworkStepping)
        fill_row(row, warm_start_solve(net, base.state, c.delta, fam));
      else
        fill_row(row, cold_solve(std::make_shared<const Network>(apply_delta(*net, c.delta)), fam));
      if (opts.compare_cold)
        row.cold_iterations = cold_solve(std::make_shared<const Network>(apply_delta(*net, c.delta)), fam).report.iterations;
    });
  });
  std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  return finish(std::move(rows), t0, opts.jobs);
}

void MonteCarloSpec::validate() const {
  if (samples < 1) throw InputError("Monte Carlo needs at least one sample");
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw InputError("Monte Carlo sigma must be finite and >= 0");
}

std::vector<NetworkDelta> draw_samples(const Network& net, const MonteCarloSpec& spec) {
  spec.validate();
  std::vector<int> load_buses;
  for (const auto& l : net.loads())
    if (std::find(load_buses.begin(), load_buses.end(), l.bus) == load_buses.end()) load_buses.push_back(l.bus);
  std::vector<const Generator*> renewables;
  for (const auto& g : net.generators())
    if (g.renewable && g.status == Status::In) renewables.push_back(&g);

  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> z(0.0, 1.0);
  auto multiplier = [&] { return std::max(0.0, 1.0 + spec.sigma * z(rng)); };
  std::vector<NetworkDelta> out(static_cast<std::size_t>(spec.samples));
  for (auto& d : out) {
    if (spec.loads)
      for (int bus : load_buses) d.changes.push_back(LoadScaleChange{bus, multiplier()});
    if (spec.renewables)
      for (const Generator* g : renewables) d.changes.push_back(GenSetpointChange{g->id, g->p_set * multiplier()});
  }
  return out;
}

Histogram make_histogram(int bus, const std::vector<double>& values, int bins) {
  Histogram h;
  h.bus = bus;
  if (values.empty()) return h;
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const double lo = *lo_it, hi = *hi_it;
  if (!(hi - lo > 1e-9 * std::max(1.0, std::abs(lo))) || bins < 2) {
    h.edges = {lo, hi};
    h.counts = {static_cast<int>(values.size())};
    return h;
  }
  h.counts.assign(static_cast<std::size_t>(bins), 0);
  const double w = (hi - lo) / bins;
  for (int k = 0; k <= bins; ++k) h.edges.push_back(k == bins ? hi : lo + k * w);
  for (double v : values) {
    int k = static_cast<int>((v - lo) / w);
    h.counts[static_cast<std::size_t>(std::clamp(k, 0, bins - 1))]++;
  }
  return h;
}

std::string histogram_csv(const std::vector<Histogram>& hs) {
  std::string out = "bus,bin_low,bin_high,count\n";
  for (const auto& h : hs)
    for (std::size_t k = 0; k < h.counts.size(); ++k)
      out += std::to_string(h.bus) + "," + num(h.edges[k]) + "," + num(h.edges[k + 1]) + "," +
             std::to_string(h.counts[k]) + "\n";
  return out;
}

MonteCarloResult run_montecarlo(NetworkPtr net, const MonteCarloSpec& spec, const MonteCarloOptions& opts) {
  if (!net) throw InputError("no case network");
  const auto t0 = Clock::now();
  const auto samples = draw_samples(*net, spec);
  MonteCarloResult out;
  out.ideal = cold_solve(net, opts.family);
  if (!out.ideal.report.converged) throw StatusError("ideal case did not converge: " + out.ideal.report.message);

  const int width = static_cast<int>(std::to_string(samples.size()).size());
  std::vector<InstanceResult> rows(samples.size());
  parallel_for(samples.size(), opts.jobs, [&](std::size_t i) {
    InstanceResult& row = rows[i];
    char id[32];
    std::snprintf(id, sizeof id, "sample-%0*zu", width, i);
    row.id = id;
    guarded_row(row, [&] {
      const auto target = std::make_shared<const Network>(apply_delta(*net, samples[i]));
      const FamilySolve s = opts.method == Method::NetworkStepping
                                ? warm_start_solve(net, out.ideal.state, samples[i], opts.family)
                                : cold_solve(target, opts.family);
      fill_row(row, s);
      if (row.converged)
        for (const auto& b : net->buses()) {
          const Complex v = bus_voltage(s.state, b.id);
          row.vm.push_back(std::abs(v));
          row.va_deg.push_back(std::arg(v) * 180.0 / std::numbers::pi);
        }
      if (opts.compare_cold) row.cold_iterations = cold_solve(target, opts.family).report.iterations;
    });
  });

  const auto& buses = net->buses();
  for (std::size_t k = 0; k < buses.size(); ++k) {
    const int id = buses[k].id;
    if (!opts.buses.empty() && std::find(opts.buses.begin(), opts.buses.end(), id) == opts.buses.end()) continue;
    std::vector<double> vm, va;
    for (const auto& r : rows)
      if (r.converged) {
        vm.push_back(r.vm[k]);
        va.push_back(r.va_deg[k]);
      }
    out.vm.push_back(make_histogram(id, vm, opts.bins));
    out.va_deg.push_back(make_histogram(id, va, opts.bins));
  }
  out.result = finish(std::move(rows), t0, opts.jobs);
  return out;
}

}  // namespace gridstep
