#pragma once

// Differentiable primitives. Every op is a pure function of its inputs and
// records a backward closure when gradient recording is on.

#include <cstddef>
#include <span>
#include <vector>

#include "tabicl/kernels.hpp"
#include "tabicl/tensor.hpp"

TABICL_NS_BEGIN
namespace ops {

/// y = x W^T + b over the trailing axis. `bias` may be undefined.
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, Real factor);
/// x[..., d] * s[..., 1], s broadcast along the trailing axis.
Tensor mul_trailing_scalar(const Tensor& x, const Tensor& s);

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& shift, Real eps = Real(1e-5));
Tensor gelu(const Tensor& x);

/// Softmax over the trailing axis.
Tensor softmax(const Tensor& x);
/// Softmax over the first `active` entries of the trailing axis; the rest are exactly 0.
Tensor softmax_active(const Tensor& x, std::size_t active);
/// Mean negative log-likelihood of `labels` under softmax_active(logits, active).
Tensor cross_entropy(const Tensor& logits, std::span<const int> labels, std::size_t active);

/// Multi-head scaled dot-product attention on already-projected q [B,Lq,D],
/// k [B,Lk,D], v [B,Lk,D]. Heads split D into contiguous slices.
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads,
                 const AttentionMask& mask);

/// Rotary embedding of x [B,L,D] per head; token l sits at position offset + l.
Tensor rope(const Tensor& x, std::size_t heads, double base, std::size_t position_offset = 0);
/// Rotates one head vector (even length) to position p.
std::vector<Real> rope_rotate(std::span<const Real> x, double position, double base);

Tensor reshape(const Tensor& x, Shape shape);
/// [A, B, ...] -> [B, A, ...]
Tensor swap_leading(const Tensor& x);
/// Rows [start, start+len) along axis 1 of a rank>=2 tensor.
Tensor slice_rows(const Tensor& x, std::size_t start, std::size_t len);
/// [L, D] -> [B, L, D] by repetition.
Tensor broadcast_batch(const Tensor& x, std::size_t batch);
/// [B, L, D] with tokens [T, D] prepended to every batch entry -> [B, T+L, D].
Tensor prepend_tokens(const Tensor& x, const Tensor& tokens);
/// x [B, L, D] with y [B, P, D] added to its first P rows (P <= L).
Tensor add_leading_rows(const Tensor& x, const Tensor& y);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

}  // namespace ops
TABICL_NS_END
