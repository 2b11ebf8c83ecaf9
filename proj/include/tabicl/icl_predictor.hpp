#pragma once

// Dataset-wise in-context learning over row embeddings.

#include <cstddef>
#include <span>

#include "tabicl/model_config.hpp"
#include "tabicl/nn.hpp"

TABICL_NS_BEGIN

class IclPredictor {
 public:
  IclPredictor() = default;
  IclPredictor(const IclConfig& config, Rng& rng);

  /// H [n, D]; adds the projected one-hot label to each of the first
  /// y_train.size() rows. Test rows are passed through untouched.
  Tensor fuse_labels(const Tensor& h, std::span<const int> y_train, std::size_t n_classes) const;
  /// Raw head outputs for the test rows, [n - n_train, c_max].
  Tensor logits(const Tensor& fused, std::size_t n_train) const;
  /// Class probabilities [n_test, c_max]; entries at index >= n_classes are exactly 0.
  Tensor forward(const Tensor& fused, std::size_t n_train, std::size_t n_classes) const;
  void collect(const std::string& prefix, ParameterList& out) const;

  const IclConfig& config() const { return config_; }

  Linear label_proj;  // c_max -> D
  std::vector<AttentionBlock> layers;
  LayerNorm final_norm;
  Linear head_hidden;  // D -> hidden
  Linear head_out;     // hidden -> c_max

 private:
  IclConfig config_{};
};

TABICL_NS_END
