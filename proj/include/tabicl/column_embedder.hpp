#pragma once

// Column-wise set embedding: every column is treated as a set of scalars and
// mapped, through induced self-attention, to per-cell weights and biases.

#include <cstddef>
#include <span>
#include <vector>

#include "tabicl/model_config.hpp"
#include "tabicl/nn.hpp"

TABICL_NS_BEGIN

/// E, W, B all [n, m, d]; E = W * x + B cell by cell.
struct ColumnEmbedding {
  Tensor E;
  Tensor W;
  Tensor B;
  /// Output of the final ISAB's first attention for each column, [m, k, d].
  Tensor induced;
};

/// Two chained attention blocks through learnable inducing vectors.
class InducedSetAttention {
 public:
  InducedSetAttention() = default;
  InducedSetAttention(std::size_t dim, std::size_t k_inducing, std::size_t heads, Rng& rng);

  struct Output {
    Tensor out;      // [B, n, d]
    Tensor induced;  // [B, k, d]
  };
  /// u [B, n, d]. Only rows [0, n_train) serve as keys/values of the first
  /// block, so the induced set never sees test rows.
  Output operator()(const Tensor& u, std::size_t n_train) const;
  void collect(const std::string& prefix, ParameterList& out) const;

  Tensor inducing;  // [k, d]
  AttentionBlock to_inducing;
  AttentionBlock from_inducing;
};

class ColumnEmbedder {
 public:
  ColumnEmbedder() = default;
  ColumnEmbedder(const ColumnEmbedderConfig& config, Rng& rng);

  /// x [n, m] (constant input). Columns share every weight and are processed independently.
  ColumnEmbedding embed_table(const Tensor& x, std::size_t n_train) const;
  /// Single column convenience: returns W, B, e as [n, d].
  ColumnEmbedding embed_column(std::span<const Real> column, std::size_t n_train) const;
  void collect(const std::string& prefix, ParameterList& out) const;

  const ColumnEmbedderConfig& config() const { return config_; }

 private:
  ColumnEmbedderConfig config_{};
  Linear input_;
  std::vector<InducedSetAttention> blocks_;
  Linear weight_head_;
  Linear bias_head_;
};

/// Sum of the induced representations over the inducing axis: [k, d] -> d.
std::vector<Real> summarize_column(const Tensor& induced);
/// Summaries for every column of an embedding, [m][d].
std::vector<std::vector<Real>> summarize_columns(const ColumnEmbedding& embedding);

TABICL_NS_END
