#pragma once

// Runtime scaling law time = alpha + beta * x^gamma with x = n*m*(n+m).

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "tabicl/model.hpp"

namespace tabicl {

/// n * m * (n + m), computed exactly in 64-bit integers.
std::uint64_t timing_x(std::uint64_t n, std::uint64_t m);

struct TimingFit {
  double alpha = 0;
  double beta = 0;
  double gamma = 0.8;
  double msle = 0;  // mean of (log t - log(alpha + beta x^gamma))^2
};

double timing_msle(std::span<const double> x, std::span<const double> seconds, double alpha, double beta, double gamma);

/// Minimizes the MSLE over (log alpha, log beta): coarse grid, then repeated
/// local grids with shrinking step. Needs at least 4 points with positive times.
TimingFit fit_time_law(std::span<const double> x, std::span<const double> seconds, double gamma = 0.8);

}  // namespace tabicl

TABICL_NS_BEGIN

struct TimingRecord {
  std::size_t n = 0;
  std::size_t m = 0;
  std::uint64_t x = 0;
  double seconds = 0;  // median of the timed runs
};

/// Wall-clock time of one forward prediction on a random n x m table (80%
/// context rows): one discarded warm-up run, then the median of `runs`.
TimingRecord time_forward(const TabIclModel& model, std::size_t n, std::size_t m, std::uint64_t seed, std::size_t runs = 3);

TABICL_NS_END
