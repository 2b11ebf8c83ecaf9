#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "tabicl/tensor.hpp"

TABICL_NS_BEGIN

/// Compares reverse-mode gradients of `f` against central finite differences.
///
/// The output of `f` is contracted with a fixed random tensor so any output
/// shape works. Every element of every tensor in `inputs` is perturbed by
/// +/- `step`. Returns max |g - g_fd| / max(1, |g|, |g_fd|). Requires the
/// 64-bit build; throws std::logic_error otherwise.
double grad_check(const std::function<Tensor()>& f, std::vector<Tensor> inputs, double step = 1e-5,
                  std::uint64_t seed = 7);

TABICL_NS_END
