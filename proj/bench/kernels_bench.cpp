// Copyright 2026 The ZOFC Authors
// SPDX-License-Identifier: Apache-2.0
//
// Serial reference vs OpenMP kernels. Arguments are (examples, dim).

#include <benchmark/benchmark.h>

#include <numeric>

#include "zofc/kernels.hpp"
#include "zofc/optim.hpp"
#include "zofc/rng.hpp"

namespace {

using namespace zofc;

struct Workload {
  Matrix features;
  std::vector<int> labels;
  std::vector<std::size_t> rows, targets;
  Adapter adapter;
  ClassifierHead head;

  Workload(std::size_t n, std::size_t d, std::size_t classes = 10, std::size_t rank = 5) {
    RngStream s("bench", 1);
    features = Matrix(n, d);
    for (double& v : features.flat()) v = s.next_gaussian();
    adapter = Adapter(d, rank);
    adapter.init_lora(s, 1.0);
    for (double& v : adapter.params().values()) v += 0.01 * s.next_gaussian();
    head = ClassifierHead(HeadFamily::cosine, d);
    std::vector<int> ids(classes);
    std::iota(ids.begin(), ids.end(), 0);
    head.register_classes(ids, s);
    for (std::size_t i = 0; i < n; ++i) {
      labels.push_back(static_cast<int>(s.next_below(classes)));
      rows.push_back(i);
      targets.push_back(static_cast<std::size_t>(labels.back()));
    }
  }
  BatchView batch() const { return {&features, rows, targets}; }
};

void BM_BatchLossSerial(benchmark::State& st) {
  const Workload w(static_cast<std::size_t>(st.range(0)), static_cast<std::size_t>(st.range(1)));
  for (auto _ : st) benchmark::DoNotOptimize(batch_loss_serial(w.batch(), w.adapter.view(), w.head.view()));
  st.SetItemsProcessed(st.iterations() * st.range(0));
}

void BM_BatchLossOmp(benchmark::State& st) {
  const Workload w(static_cast<std::size_t>(st.range(0)), static_cast<std::size_t>(st.range(1)));
  for (auto _ : st) benchmark::DoNotOptimize(batch_loss_omp(w.batch(), w.adapter.view(), w.head.view()));
  st.SetItemsProcessed(st.iterations() * st.range(0));
}

void BM_CountCorrectSerial(benchmark::State& st) {
  const Workload w(static_cast<std::size_t>(st.range(0)), static_cast<std::size_t>(st.range(1)));
  for (auto _ : st) benchmark::DoNotOptimize(count_correct_serial(w.features, w.labels, w.adapter.view(), w.head));
  st.SetItemsProcessed(st.iterations() * st.range(0));
}

void BM_CountCorrectOmp(benchmark::State& st) {
  const Workload w(static_cast<std::size_t>(st.range(0)), static_cast<std::size_t>(st.range(1)));
  for (auto _ : st) benchmark::DoNotOptimize(count_correct_omp(w.features, w.labels, w.adapter.view(), w.head));
  st.SetItemsProcessed(st.iterations() * st.range(0));
}

// One Q=4 adapter step against a batch loss, the inner loop of training.
void zo_step(benchmark::State& st, Exec exec) {
  Workload w(static_cast<std::size_t>(st.range(0)), static_cast<std::size_t>(st.range(1)));
  const BatchView batch = w.batch();
  const HeadView hv = w.head.view();
  const AdapterView av = w.adapter.view();
  const auto loss = [&batch, av, hv](std::span<const double> p) {
    AdapterView probe = av;
    probe.params = p;
    return batch_loss_serial(batch, probe, hv);
  };
  Vector params = w.adapter.params().values();
  RngStream stream("bench-zo", 2);
  SpsaConfig cfg;
  for (auto _ : st) {
    const auto r = zo_sgd_step(loss, params, cfg, 1e-6, stream, exec);
    benchmark::DoNotOptimize(r.mean_loss);
  }
  st.SetItemsProcessed(st.iterations() * 2 * static_cast<std::int64_t>(cfg.queries) * st.range(0));
}

void BM_ZoStepSerial(benchmark::State& st) { zo_step(st, Exec::serial); }
void BM_ZoStepOmp(benchmark::State& st) { zo_step(st, Exec::parallel); }

void shapes(benchmark::internal::Benchmark* b) {
  b->Args({48, 64})->Args({512, 64})->Args({4096, 128})->Unit(benchmark::kMicrosecond);
}

}  // namespace

BENCHMARK(BM_BatchLossSerial)->Apply(shapes);
BENCHMARK(BM_BatchLossOmp)->Apply(shapes);
BENCHMARK(BM_CountCorrectSerial)->Apply(shapes);
BENCHMARK(BM_CountCorrectOmp)->Apply(shapes);
BENCHMARK(BM_ZoStepSerial)->Apply(shapes);
BENCHMARK(BM_ZoStepOmp)->Apply(shapes);

BENCHMARK_MAIN();
