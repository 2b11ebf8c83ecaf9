#pragma once

#include <string>

namespace acceptance {

struct Outcome {
  bool pass = false;
  std::string detail;
};

/// Finite differences in 64-bit; lives in its own translation unit built against tabicl_f64.
Outcome gradient_checks();

}  // namespace acceptance
