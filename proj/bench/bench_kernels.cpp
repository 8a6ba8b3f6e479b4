/* Copyright 2026 The ct2ctpa Authors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/


// OpenMP kernels against the serial reference loops. Run with
// OMP_NUM_THREADS set to compare thread counts.

#include <benchmark/benchmark.h>
#include <omp.h>

#include <vector>

#include "ct2ctpa/kernels.hpp"
#include "ct2ctpa/rng.hpp"

using namespace ct2ctpa;

namespace {

Tensor random_tensor(Shape s, std::uint64_t seed) {
  Rng rng(seed);
  Tensor t(s);
  for (float& v : t.span()) v = static_cast<float>(rng.normal(0.0, 1.0));
  return t;
}

// args: channels, side
struct ConvCase {
  Tensor x, w, dy;
  std::vector<float> b;
  explicit ConvCase(const benchmark::State& st, int stride = 1) {
    const int c = static_cast<int>(st.range(0));
    const int side = static_cast<int>(st.range(1));
    x = random_tensor({1, c, side, side}, 1);
    w = random_tensor({c, c, 3, 3}, 2);
    b.assign(c, 0.1f);
    const int out = (side + 2 - 3) / stride + 1;
    dy = random_tensor({1, c, out, out}, 3);
  }
};

void set_counters(benchmark::State& st) {
  const double c = st.range(0), side = st.range(1);
  st.counters["GFLOP/s"] = benchmark::Counter(2.0 * c * c * 9 * side * side * st.iterations() * 1e-9,
                                              benchmark::Counter::kIsRate);
  st.counters["threads"] = omp_get_max_threads();
}

void BM_conv_forward(benchmark::State& st) {
  ConvCase k(st);
  for (auto _ : st) benchmark::DoNotOptimize(kernels::conv2d_forward(k.x, k.w, k.b, 1, 1));
  set_counters(st);
}

void BM_conv_forward_reference(benchmark::State& st) {
  ConvCase k(st);
  for (auto _ : st) benchmark::DoNotOptimize(kernels::reference::conv2d_forward(k.x, k.w, k.b, 1, 1));
  set_counters(st);
}

void BM_conv_backward(benchmark::State& st) {
  ConvCase k(st);
  Tensor dx(k.x.shape()), dw(k.w.shape());
  std::vector<float> db(k.b.size());
  for (auto _ : st) {
    kernels::conv2d_backward(k.x, k.w, k.dy, 1, 1, &dx, dw, db);
    benchmark::ClobberMemory();
  }
  set_counters(st);
}

void BM_conv_backward_reference(benchmark::State& st) {
  ConvCase k(st);
  Tensor dx(k.x.shape()), dw(k.w.shape());
  std::vector<float> db(k.b.size());
  for (auto _ : st) {
    kernels::reference::conv2d_backward(k.x, k.w, k.dy, 1, 1, &dx, dw, db);
    benchmark::ClobberMemory();
  }
  set_counters(st);
}

// Upsampling by 2, as in the generator decoders.
void BM_conv_transpose(benchmark::State& st) {
  ConvCase k(st);
  for (auto _ : st) benchmark::DoNotOptimize(kernels::conv_transpose2d_forward(k.x, k.w, k.b, 2, 1, 1));
  st.counters["threads"] = omp_get_max_threads();
}

void BM_conv_transpose_reference(benchmark::State& st) {
  ConvCase k(st);
  for (auto _ : st) {
    benchmark::DoNotOptimize(kernels::reference::conv_transpose2d_forward(k.x, k.w, k.b, 2, 1, 1));
  }
  st.counters["threads"] = omp_get_max_threads();
}

void BM_instance_norm(benchmark::State& st) {
  ConvCase k(st);
  std::vector<float> mean, inv_std;
  for (auto _ : st) benchmark::DoNotOptimize(kernels::instance_norm_forward(k.x, 1e-5f, mean, inv_std));
}

void BM_instance_norm_reference(benchmark::State& st) {
  ConvCase k(st);
  for (auto _ : st) benchmark::DoNotOptimize(kernels::reference::instance_norm_forward(k.x, 1e-5f));
}

void conv_sizes(benchmark::internal::Benchmark* b) {
  b->Args({16, 64})->Args({64, 64})->Args({64, 128})->Unit(benchmark::kMillisecond);
}

}  // namespace

BENCHMARK(BM_conv_forward)->Apply(conv_sizes);
BENCHMARK(BM_conv_forward_reference)->Apply(conv_sizes);
BENCHMARK(BM_conv_backward)->Apply(conv_sizes);
BENCHMARK(BM_conv_backward_reference)->Apply(conv_sizes);
BENCHMARK(BM_conv_transpose)->Apply(conv_sizes);
BENCHMARK(BM_conv_transpose_reference)->Apply(conv_sizes);
BENCHMARK(BM_instance_norm)->Args({64, 128})->Args({256, 64});
BENCHMARK(BM_instance_norm_reference)->Args({64, 128})->Args({256, 64});

BENCHMARK_MAIN();
