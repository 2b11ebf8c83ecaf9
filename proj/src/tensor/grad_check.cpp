#include "tabicl/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "tabicl/ops.hpp"
#include "tabicl/rng.hpp"

TABICL_NS_BEGIN

double grad_check(const std::function<Tensor()>& f, std::vector<Tensor> inputs, double step, std::uint64_t seed) {
  if constexpr (sizeof(Real) < sizeof(double)) {
    throw std::logic_error("grad_check requires the 64-bit build");
  }
  Tensor probe_out = f();
  Rng rng(seed);
  std::vector<Real> weights(probe_out.numel());
  for (auto& w : weights) w = static_cast<Real>(rng.uniform(-1.0, 1.0));
  const Tensor projection = Tensor::from_data(probe_out.shape(), weights);

  auto loss = [&]() { return ops::sum(ops::mul(f(), projection)); };

  for (auto& t : inputs) t.zero_grad();
  loss().backward();

  double worst = 0;
  for (auto& t : inputs) {
    std::vector<Real> analytic(t.numel(), Real(0));
    if (!t.grad().empty()) std::copy(t.grad().begin(), t.grad().end(), analytic.begin());
    auto data = t.mutable_data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const Real saved = data[i];
      data[i] = saved + static_cast<Real>(step);
      double up;
      double down;
      {
        NoGradGuard guard;
        up = loss().item();
        data[i] = saved - static_cast<Real>(step);
        down = loss().item();
      }
      data[i] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double g = analytic[i];
      const double err = std::abs(g - numeric) / std::max({1.0, std::abs(g), std::abs(numeric)});
      worst = std::max(worst, err);
    }
  }
  return worst;
}

TABICL_NS_END
