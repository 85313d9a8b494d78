// Cold start vs Network-Stepping on case118. Besides wall time every benchmark reports the
// Newton iteration count as a counter, since that is what the warm start is meant to cut.
#include <benchmark/benchmark.h>

#include <algorithm>

#include "gridstep/case_io.hpp"
#include "gridstep/studies.hpp"

using namespace gridstep;

namespace {

NetworkPtr case118() {
  static const NetworkPtr net = std::make_shared<const Network>(load_network(GRIDSTEP_DATA_DIR "/case118.m"));
  return net;
}

FamilyOptions family(Family f) {
  FamilyOptions o;
  o.family = f;
  return o;
}

const FamilySolve& base(Family f) {
  static FamilySolve pf = cold_solve(case118(), family(Family::PowerFlow));
  static FamilySolve ipf = cold_solve(case118(), family(Family::InfeasibilityPF));
  static FamilySolve opf = cold_solve(case118(), family(Family::Opf));
  return f == Family::PowerFlow ? pf : f == Family::InfeasibilityPF ? ipf : opf;
}

NetworkDelta outage(int branch) { return {{BranchStatusChange{branch, Status::Out}}}; }

NetworkDelta load_step(double scale) {
  NetworkDelta d;
  std::vector<int> buses;
  for (const auto& l : case118()->loads()) buses.push_back(l.bus);
  std::sort(buses.begin(), buses.end());
  buses.erase(std::unique(buses.begin(), buses.end()), buses.end());
  for (int bus : buses) d.changes.push_back(LoadScaleChange{bus, scale});
  return d;
}

void run(benchmark::State& st, Family f, const NetworkDelta& delta, bool warm) {
  const auto opts = family(f);
  const auto& b = base(f);
  int iters = 0, n = 0;
  for (auto _ : st) {
    const auto r = warm ? warm_start_solve(case118(), b.state, delta, opts)
                        : cold_solve(std::make_shared<const Network>(apply_delta(*case118(), delta)), opts);
    benchmark::DoNotOptimize(r.state.values.data());
    iters += r.report.iterations;
    ++n;
  }
  st.counters["newton_iters"] = static_cast<double>(iters) / std::max(n, 1);
}

void BM_PfOutage(benchmark::State& st) { run(st, Family::PowerFlow, outage(static_cast<int>(st.range(0))), st.range(1)); }
void BM_IpfOutage(benchmark::State& st) {
  run(st, Family::InfeasibilityPF, outage(static_cast<int>(st.range(0))), st.range(1));
}
void BM_PfLoadStep(benchmark::State& st) { run(st, Family::PowerFlow, load_step(1.05), st.range(0)); }
void BM_OpfLoadStep(benchmark::State& st) { run(st, Family::Opf, load_step(1.01), st.range(0)); }

void BM_ContingencyBatch(benchmark::State& st) {
  ContingencyOptions o;
  o.method = st.range(0) ? Method::NetworkStepping : Method::Cold;
  o.jobs = static_cast<int>(st.range(1));
  const auto list = single_branch_outages(*case118());
  double iters = 0.0;
  for (auto _ : st) {
    const auto r = run_contingency_batch(case118(), list, o);
    iters = r.stats.mean_iterations;
  }
  st.counters["mean_newton_iters"] = iters;
  st.counters["instances"] = static_cast<double>(list.size());
}

}  // namespace

// {branch, warm}
BENCHMARK(BM_PfOutage)->ArgsProduct({{3, 38, 120}, {0, 1}})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_IpfOutage)->ArgsProduct({{3, 38, 120}, {0, 1}})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_PfLoadStep)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_OpfLoadStep)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
// {warm, jobs}
BENCHMARK(BM_ContingencyBatch)->ArgsProduct({{0, 1}, {1, 4}})->Unit(benchmark::kMillisecond)->Iterations(1);

BENCHMARK_MAIN();
