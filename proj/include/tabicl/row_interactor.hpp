#pragma once

// Row-wise interaction: a per-row transformer over the feature embeddings with
// learnable [CLS] tokens in front and rotary position encoding.

#include <cstddef>

#include "tabicl/model_config.hpp"
#include "tabicl/nn.hpp"

TABICL_NS_BEGIN

class RowInteractor {
 public:
  RowInteractor() = default;
  RowInteractor(const RowInteractorConfig& config, Rng& rng);

  /// e [n, m, d] -> H [n, n_cls * d]. Row i of H depends on row i of e only.
  Tensor operator()(const Tensor& e) const;
  void collect(const std::string& prefix, ParameterList& out) const;

  const RowInteractorConfig& config() const { return config_; }
  /// Switches rotary encoding on or off without touching weights.
  void set_rope_enabled(bool enabled) { config_.rope.enabled = enabled; }

 private:
  RowInteractorConfig config_{};
  Tensor cls_;  // [n_cls, d]
  std::vector<AttentionBlock> layers_;
  LayerNorm final_norm_;
};

/// Number of rows of H that remain distinguishable at max-abs tolerance `tol`
/// (greedy representatives, in row order).
std::size_t count_distinct_rows(const Tensor& h, double tol = 1e-4);

TABICL_NS_END
