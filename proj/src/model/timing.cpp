#include "tabicl/timing.hpp"

#include <algorithm>
#include <chrono>

TABICL_NS_BEGIN

TimingRecord time_forward(const TabIclModel& model, std::size_t n, std::size_t m, std::uint64_t seed, std::size_t runs) {
  Rng rng(seed);
  std::vector<Real> v(n * m);
  for (auto& x : v) x = static_cast<Real>(rng.normal());
  const Tensor x = Tensor::from_data({n, m}, std::move(v));
  const std::size_t n_train = std::max<std::size_t>(1, std::min(n - 1, n * 4 / 5));
  std::vector<int> y(n_train);
  for (std::size_t i = 0; i < n_train; ++i) y[i] = static_cast<int>(i % 2);
  auto once = [&] {
    const auto t0 = std::chrono::steady_clock::now();
    const auto p = model.predict_dataset(x, y, 2);
    const auto t1 = std::chrono::steady_clock::now();
    (void)p;
    return std::chrono::duration<double>(t1 - t0).count();
  };
  once();
  std::vector<double> times;
  for (std::size_t r = 0; r < std::max<std::size_t>(1, runs); ++r) times.push_back(once());
  std::sort(times.begin(), times.end());
  return {n, m, timing_x(n, m), times[times.size() / 2]};
}

TABICL_NS_END
