#pragma once

// Compute kernels behind the differentiable ops.
//
// The top-level functions are OpenMP-parallel. Each output element is written
// by exactly one thread and reduced in a fixed order, so results are bitwise
// independent of the thread count and of how rows are batched. The functions
// in kernels::reference are plain serial loops kept as test oracles.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "tabicl/real.hpp"

TABICL_NS_BEGIN

/// Which keys each query may attend to.
struct AttentionMask {
  enum class Kind { full, key_prefix, dense };

  Kind kind = Kind::full;
  std::size_t prefix_len = 0;
  std::size_t rows = 0;  // dense only: n_q
  std::size_t cols = 0;  // dense only: n_k
  std::vector<std::uint8_t> allowed;

  static AttentionMask full_mask() { return {}; }
  static AttentionMask keys_restricted_to(std::size_t prefix) {
    AttentionMask m;
    m.kind = Kind::key_prefix;
    m.prefix_len = prefix;
    return m;
  }
  static AttentionMask dense_mask(std::size_t n_q, std::size_t n_k, std::vector<std::uint8_t> allowed);

  bool permits(std::size_t q, std::size_t k) const {
    switch (kind) {
      case Kind::full: return true;
      case Kind::key_prefix: return k < prefix_len;
      case Kind::dense: return allowed[q * cols + k] != 0;
    }
    return false;
  }
  /// Throws ShapeError unless every query row keeps at least one key.
  void validate(std::size_t n_q, std::size_t n_k) const;
};

struct AttentionDims {
  std::size_t batch = 1;
  std::size_t n_q = 1;
  std::size_t n_k = 1;
  std::size_t model_dim = 1;
  std::size_t heads = 1;
  std::size_t head_dim() const { return model_dim / heads; }
};

namespace kernels {

/// y[M,N] = x[M,K] * w[N,K]^T + b[N]   (b may be null)
void linear_forward(const Real* x, std::size_t rows, std::size_t in, const Real* w, const Real* b,
                    std::size_t out, Real* y);
/// dx[M,K] += dy[M,N] * w[N,K]
void linear_backward_input(const Real* dy, std::size_t rows, std::size_t out, const Real* w,
                           std::size_t in, Real* dx);
/// dw[N,K] += dy^T x ; db[N] += column sums of dy   (db may be null)
void linear_backward_params(const Real* dy, std::size_t rows, std::size_t out, const Real* x,
                            std::size_t in, Real* dw, Real* db);

/// Scaled dot-product attention per head over [B, L, D] buffers. Writes the
/// concatenated head outputs and the per-(b,h,q) log-sum-exp used by backward.
void attention_forward(const Real* q, const Real* k, const Real* v, const AttentionDims& dims,
                       const AttentionMask& mask, Real* out, Real* lse);
/// Accumulates into dq, dk, dv (any may be null). Recomputes probabilities from lse.
void attention_backward(const Real* q, const Real* k, const Real* v, const Real* out,
                        const Real* lse, const Real* dout, const AttentionDims& dims,
                        const AttentionMask& mask, Real* dq, Real* dk, Real* dv);

namespace reference {
void linear_forward(const Real* x, std::size_t rows, std::size_t in, const Real* w, const Real* b,
                    std::size_t out, Real* y);
void linear_backward_input(const Real* dy, std::size_t rows, std::size_t out, const Real* w,
                           std::size_t in, Real* dx);
void linear_backward_params(const Real* dy, std::size_t rows, std::size_t out, const Real* x,
                            std::size_t in, Real* dw, Real* db);
/// Materializes the full probability matrix; numerically equal to the fast path
/// up to summation order.
void attention_forward(const Real* q, const Real* k, const Real* v, const AttentionDims& dims,
                       const AttentionMask& mask, Real* out);
}  // namespace reference

}  // namespace kernels
TABICL_NS_END
