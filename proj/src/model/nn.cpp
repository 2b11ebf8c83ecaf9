#include "tabicl/nn.hpp"

#include <cmath>

#include "tabicl/errors.hpp"
#include "tabicl/ops.hpp"

TABICL_NS_BEGIN

Tensor normal_parameter(Shape shape, double stddev, Rng& rng) {
  std::vector<Real> data(shape_numel(shape));
  for (auto& v : data) v = static_cast<Real>(rng.normal(0.0, stddev));
  return Tensor::from_data(std::move(shape), std::move(data), true);
}

Linear::Linear(std::size_t in, std::size_t out, Rng& rng, bool with_bias) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  std::vector<Real> w(in * out);
  for (auto& v : w) v = static_cast<Real>(rng.uniform(-bound, bound));
  weight = Tensor::from_data({out, in}, std::move(w), true);
  if (with_bias) bias = Tensor::zeros({out}, true);
}

Tensor Linear::operator()(const Tensor& x) const { return ops::linear(x, weight, bias); }

void Linear::collect(const std::string& prefix, ParameterList& out) const {
  out.push_back({prefix + ".weight", weight});
  if (bias.defined()) out.push_back({prefix + ".bias", bias});
}

LayerNorm::LayerNorm(std::size_t dim)
    : gain(Tensor::full({dim}, Real(1), true)), shift(Tensor::zeros({dim}, true)) {}

Tensor LayerNorm::operator()(const Tensor& x) const { return ops::layer_norm(x, gain, shift); }

void LayerNorm::collect(const std::string& prefix, ParameterList& out) const {
  out.push_back({prefix + ".gain", gain});
  out.push_back({prefix + ".shift", shift});
}

FeedForward::FeedForward(std::size_t dim, Rng& rng) : up(dim, 2 * dim, rng), down(2 * dim, dim, rng) {}

Tensor FeedForward::operator()(const Tensor& x) const { return down(ops::gelu(up(x))); }

void FeedForward::collect(const std::string& prefix, ParameterList& out) const {
  up.collect(prefix + ".up", out);
  down.collect(prefix + ".down", out);
}

MultiHeadAttention::MultiHeadAttention(std::size_t dim, std::size_t heads_, Rng& rng)
    : heads(heads_), q_proj(dim, dim, rng), k_proj(dim, dim, rng), v_proj(dim, dim, rng), out_proj(dim, dim, rng) {
  if (heads == 0 || dim % heads != 0) {
    throw ShapeError("model dim " + std::to_string(dim) + " not divisible by " + std::to_string(heads) + " heads");
  }
}

Tensor MultiHeadAttention::operator()(const Tensor& q_in, const Tensor& kv_in, const AttentionMask& mask,
                                      const RopeSettings* rope) const {
  Tensor q = q_proj(q_in);
  Tensor k = k_proj(kv_in);
  Tensor v = v_proj(kv_in);
  if (rope && rope->enabled) {
    q = ops::rope(q, heads, rope->base);
    k = ops::rope(k, heads, rope->base);
  }
  return out_proj(ops::attention(q, k, v, heads, mask));
}

void MultiHeadAttention::collect(const std::string& prefix, ParameterList& out) const {
  q_proj.collect(prefix + ".q", out);
  k_proj.collect(prefix + ".k", out);
  v_proj.collect(prefix + ".v", out);
  out_proj.collect(prefix + ".o", out);
}

AttentionBlock::AttentionBlock(std::size_t dim, std::size_t heads, Rng& rng, bool cross)
    : norm_q(dim), norm_ff(dim), attn(dim, heads, rng), ff(dim, rng) {
  if (cross) norm_kv = LayerNorm(dim);
}

Tensor AttentionBlock::cross(const Tensor& x, const Tensor& context, const AttentionMask& mask,
                             const RopeSettings* rope) const {
  if (!norm_kv.gain.defined()) throw ShapeError("cross() on a self-attention block");
  Tensor h = ops::add(x, attn(norm_q(x), norm_kv(context), mask, rope));
  return ops::add(h, ff(norm_ff(h)));
}

Tensor AttentionBlock::self(const Tensor& x, std::size_t key_rows, const RopeSettings* rope) const {
  Tensor xn = norm_q(x);
  Tensor kv = key_rows ? ops::slice_rows(xn, 0, key_rows) : xn;
  Tensor h = ops::add(x, attn(xn, kv, AttentionMask::full_mask(), rope));
  return ops::add(h, ff(norm_ff(h)));
}

void AttentionBlock::collect(const std::string& prefix, ParameterList& out) const {
  norm_q.collect(prefix + ".norm_q", out);
  if (norm_kv.gain.defined()) norm_kv.collect(prefix + ".norm_kv", out);
  norm_ff.collect(prefix + ".norm_ff", out);
  attn.collect(prefix + ".attn", out);
  ff.collect(prefix + ".ff", out);
}

TABICL_NS_END
