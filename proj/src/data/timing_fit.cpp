#include <algorithm>
#include <cmath>
#include <limits>

#include "tabicl/errors.hpp"
#include "tabicl/timing.hpp"

namespace tabicl {

std::uint64_t timing_x(std::uint64_t n, std::uint64_t m) { return n * m * (n + m); }

double timing_msle(std::span<const double> x, std::span<const double> seconds, double alpha, double beta, double gamma) {
  double s = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = std::log(seconds[i]) - std::log(alpha + beta * std::pow(x[i], gamma));
    s += d * d;
  }
  return s / static_cast<double>(x.size());
}

TimingFit fit_time_law(std::span<const double> x, std::span<const double> seconds, double gamma) {
  if (x.size() != seconds.size() || x.size() < 4) throw DataError("time law fit needs at least 4 (x, seconds) points");
  for (std::size_t i = 0; i < x.size(); ++i)
    if (!(x[i] > 0 && seconds[i] > 0)) throw DataError("time law fit needs positive sizes and times");
  const double t_min = *std::min_element(seconds.begin(), seconds.end());
  double r_lo = std::numeric_limits<double>::infinity(), r_hi = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = seconds[i] / std::pow(x[i], gamma);
    r_lo = std::min(r_lo, r);
    r_hi = std::max(r_hi, r);
  }
  auto loss = [&](double u, double v) { return timing_msle(x, seconds, std::exp(u), std::exp(v), gamma); };
  // alpha in [t_min e^-14, t_min], beta around the per-point ratios.
  const double u0 = std::log(t_min) - 14, u1 = std::log(t_min);
  const double v0 = std::log(r_lo) - 4, v1 = std::log(r_hi) + 1;
  constexpr int kCoarse = 80;
  double best_u = u1, best_v = v1, best = std::numeric_limits<double>::infinity();
  for (int i = 0; i <= kCoarse; ++i)
    for (int j = 0; j <= kCoarse; ++j) {
      const double u = u0 + (u1 - u0) * i / kCoarse, v = v0 + (v1 - v0) * j / kCoarse;
      const double l = loss(u, v);
      if (l < best) best = l, best_u = u, best_v = v;
    }
  double du = (u1 - u0) / kCoarse, dv = (v1 - v0) / kCoarse;
  // Pattern search: move while a neighbour improves, shrink the step otherwise.
  for (int round = 0; round < 5000 && (du > 1e-9 || dv > 1e-9); ++round) {
    const double cu = best_u, cv = best_v;
    for (int i = -5; i <= 5; ++i)
      for (int j = -5; j <= 5; ++j) {
        const double u = cu + du * i / 5, v = cv + dv * j / 5;
        const double l = loss(u, v);
        if (l < best) best = l, best_u = u, best_v = v;
      }
    if (best_u == cu && best_v == cv) {
      du *= 0.5;
      dv *= 0.5;
    }
  }
  return {std::exp(best_u), std::exp(best_v), gamma, best};
}

}  // namespace tabicl
