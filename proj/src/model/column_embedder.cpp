#include "tabicl/column_embedder.hpp"

#include <cmath>
#include <string>

#include "tabicl/errors.hpp"
#include "tabicl/ops.hpp"

TABICL_NS_BEGIN

void ColumnEmbedderConfig::validate() const {
  if (d == 0 || heads == 0 || d % heads != 0) throw ShapeError("column embedder: d must be divisible by heads");
  if (k_inducing == 0) throw ShapeError("column embedder: need at least one inducing vector");
  if (n_isab == 0) throw ShapeError("column embedder: need at least one ISAB block");
}

InducedSetAttention::InducedSetAttention(std::size_t dim, std::size_t k_inducing, std::size_t heads, Rng& rng)
    : inducing(normal_parameter({k_inducing, dim}, 1.0 / std::sqrt(static_cast<double>(dim)), rng)),
      to_inducing(dim, heads, rng, true),
      from_inducing(dim, heads, rng, true) {}

InducedSetAttention::Output InducedSetAttention::operator()(const Tensor& u, std::size_t n_train) const {
  if (u.rank() != 3) throw ShapeError("ISAB expects [B, n, d]");
  if (n_train == 0 || n_train > u.dim(1)) {
    throw ShapeError("ISAB needs 1 <= n_train <= n, got n_train=" + std::to_string(n_train));
  }
  const Tensor queries = ops::broadcast_batch(inducing, u.dim(0));
  const Tensor train = n_train == u.dim(1) ? u : ops::slice_rows(u, 0, n_train);
  Tensor induced = to_inducing.cross(queries, train);
  Tensor out = from_inducing.cross(u, induced);
  return {std::move(out), std::move(induced)};
}

void InducedSetAttention::collect(const std::string& prefix, ParameterList& out) const {
  out.push_back({prefix + ".inducing", inducing});
  to_inducing.collect(prefix + ".mab1", out);
  from_inducing.collect(prefix + ".mab2", out);
}

ColumnEmbedder::ColumnEmbedder(const ColumnEmbedderConfig& config, Rng& rng) : config_(config) {
  config_.validate();
  input_ = Linear(1, config_.d, rng);
  for (std::size_t i = 0; i < config_.n_isab; ++i) {
    blocks_.emplace_back(config_.d, config_.k_inducing, config_.heads, rng);
  }
  weight_head_ = Linear(config_.d, config_.d, rng);
  bias_head_ = Linear(config_.d, config_.d, rng);
}

ColumnEmbedding ColumnEmbedder::embed_table(const Tensor& x, std::size_t n_train) const {
  if (x.rank() != 2 || x.dim(0) == 0 || x.dim(1) == 0) throw ShapeError("embed_table expects a non-empty [n, m] table");
  const std::size_t n = x.dim(0), m = x.dim(1);
  // [m, n, 1]: one set per column.
  const Tensor cells = ops::reshape(ops::swap_leading(ops::reshape(x, {n, m, 1})), {m, n, 1});
  Tensor u = input_(cells);
  Tensor induced;
  for (const auto& block : blocks_) {
    auto out = block(u, n_train);
    u = std::move(out.out);
    induced = std::move(out.induced);
  }
  const Tensor w = weight_head_(u);
  const Tensor b = bias_head_(u);
  const Tensor e = ops::add(ops::mul_trailing_scalar(w, cells), b);
  return {ops::swap_leading(e), ops::swap_leading(w), ops::swap_leading(b), induced};
}

ColumnEmbedding ColumnEmbedder::embed_column(std::span<const Real> column, std::size_t n_train) const {
  const std::size_t n = column.size();
  auto emb = embed_table(Tensor::from_data({n, 1}, std::vector<Real>(column.begin(), column.end())), n_train);
  const std::size_t d = config_.d;
  return {ops::reshape(emb.E, {n, d}), ops::reshape(emb.W, {n, d}), ops::reshape(emb.B, {n, d}), emb.induced};
}

void ColumnEmbedder::collect(const std::string& prefix, ParameterList& out) const {
  input_.collect(prefix + ".input", out);
  for (std::size_t i = 0; i < blocks_.size(); ++i) blocks_[i].collect(prefix + ".isab" + std::to_string(i), out);
  weight_head_.collect(prefix + ".w_head", out);
  bias_head_.collect(prefix + ".b_head", out);
}

std::vector<Real> summarize_column(const Tensor& induced) {
  if (induced.rank() != 2) throw ShapeError("summarize_column expects [k, d]");
  const std::size_t k = induced.dim(0), d = induced.dim(1);
  std::vector<Real> s(d, Real(0));
  const auto v = induced.data();
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < d; ++j) s[j] += v[i * d + j];
  return s;
}

std::vector<std::vector<Real>> summarize_columns(const ColumnEmbedding& embedding) {
  const Tensor& m = embedding.induced;
  const std::size_t cols = m.dim(0), k = m.dim(1), d = m.dim(2);
  std::vector<std::vector<Real>> out;
  out.reserve(cols);
  for (std::size_t c = 0; c < cols; ++c) {
    const auto first = m.data().begin() + static_cast<std::ptrdiff_t>(c * k * d);
    out.push_back(summarize_column(Tensor::from_data({k, d}, std::vector<Real>(first, first + static_cast<std::ptrdiff_t>(k * d)))));
  }
  return out;
}

TABICL_NS_END
