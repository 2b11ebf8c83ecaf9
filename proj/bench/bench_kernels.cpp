// Serial reference kernels vs the blocked OpenMP kernels, plus a full forward pass
// at one thread vs all threads.
// Usage: bench_kernels [repeats]

#include <omp.h>

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <vector>

#include "tabicl/kernels.hpp"
#include "tabicl/model.hpp"
#include "tabicl/rng.hpp"

using namespace tabicl;

namespace {

double median_seconds(int repeats, const std::function<void()>& f) {
  f();
  std::vector<double> t;
  for (int r = 0; r < repeats; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    f();
    t.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  std::sort(t.begin(), t.end());
  return t[t.size() / 2];
}

std::vector<Real> random_buffer(std::size_t n, Rng& rng) {
  std::vector<Real> v(n);
  for (auto& x : v) x = static_cast<Real>(rng.normal());
  return v;
}

double max_abs_diff(const std::vector<Real>& a, const std::vector<Real>& b) {
  double d = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(static_cast<double>(a[i]) - b[i]));
  return d;
}

void row(const char* name, double serial, double parallel, double diff) {
  std::printf("%-34s %10.3f ms %10.3f ms %7.2fx   max|diff| %.2e\n", name, serial * 1e3, parallel * 1e3, serial / parallel, diff);
}

}  // namespace

int main(int argc, char** argv) {
  const int repeats = argc > 1 ? std::max(1, std::atoi(argv[1])) : 5;
  Rng rng(1);
  std::printf("threads: %d, repeats: %d (median)\n", omp_get_max_threads(), repeats);
  std::printf("%-34s %13s %13s %8s\n", "kernel", "reference", "openmp", "speedup");

  for (const auto [rows, in, out] : {std::array<std::size_t, 3>{4096, 64, 64}, {16384, 128, 256}, {1024, 512, 512}}) {
    const auto x = random_buffer(rows * in, rng), w = random_buffer(out * in, rng), b = random_buffer(out, rng);
    std::vector<Real> ys(rows * out), yp(rows * out);
    const double ts = median_seconds(repeats, [&] { kernels::reference::linear_forward(x.data(), rows, in, w.data(), b.data(), out, ys.data()); });
    const double tp = median_seconds(repeats, [&] { kernels::linear_forward(x.data(), rows, in, w.data(), b.data(), out, yp.data()); });
    char name[64];
    std::snprintf(name, sizeof name, "linear %zux%zu -> %zu", rows, in, out);
    row(name, ts, tp, max_abs_diff(ys, yp));
  }

  for (const auto [batch, n, dim, heads] : {std::array<std::size_t, 4>{16, 256, 64, 4}, {4, 1024, 64, 4}, {64, 128, 16, 2}}) {
    const AttentionDims dims{batch, n, n, dim, heads};
    const auto q = random_buffer(batch * n * dim, rng), k = random_buffer(batch * n * dim, rng), v = random_buffer(batch * n * dim, rng);
    std::vector<Real> os(batch * n * dim), op(batch * n * dim), lse(batch * heads * n);
    const auto mask = AttentionMask::keys_restricted_to(n * 4 / 5);
    const double ts = median_seconds(repeats, [&] { kernels::reference::attention_forward(q.data(), k.data(), v.data(), dims, mask, os.data()); });
    const double tp = median_seconds(repeats, [&] { kernels::attention_forward(q.data(), k.data(), v.data(), dims, mask, op.data(), lse.data()); });
    char name[64];
    std::snprintf(name, sizeof name, "attention b%zu n%zu d%zu h%zu", batch, n, dim, heads);
    row(name, ts, tp, max_abs_diff(os, op));
  }

  // End-to-end forward at 1 thread vs all threads. Outputs must match bitwise.
  const TabIclModel model(ModelConfig::desk(), 3);
  const std::size_t n = 1024, m = 16, n_train = 800;
  const auto xv = random_buffer(n * m, rng);
  const Tensor x = Tensor::from_data({n, m}, xv);
  std::vector<int> y(n_train);
  for (std::size_t i = 0; i < n_train; ++i) y[i] = static_cast<int>(i % 3);
  const int threads = omp_get_max_threads();
  ClassProbabilities p1, pn;
  omp_set_num_threads(1);
  const double t1 = median_seconds(repeats, [&] { p1 = model.predict_dataset(x, y, 3); });
  omp_set_num_threads(threads);
  const double tn = median_seconds(repeats, [&] { pn = model.predict_dataset(x, y, 3); });
  double diff = 0;
  for (std::size_t i = 0; i < p1.values.size(); ++i) diff = std::max(diff, std::abs(p1.values[i] - pn.values[i]));
  row("desk forward 1024x16 (1 vs N thr)", t1, tn, diff);
  return 0;
}
