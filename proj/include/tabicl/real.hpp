#pragma once

// Floating-point type of the numerical core. The default build uses 32-bit
// floats; the tabicl_f64 library variant is compiled with TABICL_DOUBLE for
// gradient checks. The inline namespace keeps the two variants ODR-distinct.

#ifdef TABICL_DOUBLE
#define TABICL_REAL_NS f64
#else
#define TABICL_REAL_NS f32
#endif

#define TABICL_NS_BEGIN \
  namespace tabicl {    \
  inline namespace TABICL_REAL_NS {
#define TABICL_NS_END \
  }                   \
  }

TABICL_NS_BEGIN
#ifdef TABICL_DOUBLE
using Real = double;
#else
using Real = float;
#endif
TABICL_NS_END
