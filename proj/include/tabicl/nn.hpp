#pragma once

// Transformer building blocks shared by the three model stages.

#include <cstddef>
#include <string>
#include <vector>

#include "tabicl/kernels.hpp"
#include "tabicl/rng.hpp"
#include "tabicl/tensor.hpp"

TABICL_NS_BEGIN

struct NamedParameter {
  std::string name;
  Tensor tensor;
};
using ParameterList = std::vector<NamedParameter>;

/// Learnable leaf with N(0, stddev) entries.
Tensor normal_parameter(Shape shape, double stddev, Rng& rng);

class Linear {
 public:
  Linear() = default;
  /// Weights ~ U[-1/sqrt(in), 1/sqrt(in)], bias zero.
  Linear(std::size_t in, std::size_t out, Rng& rng, bool with_bias = true);

  Tensor operator()(const Tensor& x) const;
  void collect(const std::string& prefix, ParameterList& out) const;

  Tensor weight;  // [out, in]
  Tensor bias;    // [out], may be undefined
};

class LayerNorm {
 public:
  LayerNorm() = default;
  explicit LayerNorm(std::size_t dim);

  Tensor operator()(const Tensor& x) const;
  void collect(const std::string& prefix, ParameterList& out) const;

  Tensor gain;
  Tensor shift;
};

/// Two-layer GELU MLP, hidden width = 2 x model width.
class FeedForward {
 public:
  FeedForward() = default;
  FeedForward(std::size_t dim, Rng& rng);

  Tensor operator()(const Tensor& x) const;
  void collect(const std::string& prefix, ParameterList& out) const;

  Linear up;
  Linear down;
};

struct RopeSettings {
  double base = 100000.0;
  bool enabled = true;
};

class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(std::size_t dim, std::size_t heads, Rng& rng);

  /// q_in [B,Lq,D], kv_in [B,Lk,D]. With `rope`, queries and keys are rotated
  /// to their sequence positions before the dot product.
  Tensor operator()(const Tensor& q_in, const Tensor& kv_in, const AttentionMask& mask,
                    const RopeSettings* rope = nullptr) const;
  void collect(const std::string& prefix, ParameterList& out) const;

  std::size_t heads = 1;
  Linear q_proj, k_proj, v_proj, out_proj;
};

/// Pre-norm multi-head attention block:
///   h = x + MHA(LN(x), LN(y), LN(y));  out = h + FFN(LN(h)).
class AttentionBlock {
 public:
  AttentionBlock() = default;
  /// `cross` adds a separate norm for the context (key/value) input.
  AttentionBlock(std::size_t dim, std::size_t heads, Rng& rng, bool cross);

  Tensor cross(const Tensor& x, const Tensor& context, const AttentionMask& mask = {},
               const RopeSettings* rope = nullptr) const;
  /// Self-attention; keys/values are the first `key_rows` rows of x (0 = all).
  Tensor self(const Tensor& x, std::size_t key_rows = 0, const RopeSettings* rope = nullptr) const;
  void collect(const std::string& prefix, ParameterList& out) const;

  LayerNorm norm_q, norm_kv, norm_ff;  // norm_kv is undefined for self-attention blocks
  MultiHeadAttention attn;
  FeedForward ff;
};

TABICL_NS_END
