#include "tabicl/icl_predictor.hpp"

#include <string>

#include "tabicl/errors.hpp"
#include "tabicl/ops.hpp"

TABICL_NS_BEGIN

void IclConfig::validate() const {
  if (model_dim == 0 || heads == 0 || model_dim % heads != 0) throw ShapeError("icl: model_dim must be divisible by heads");
  if (c_max < 2) throw ShapeError("icl: c_max must be at least 2");
  if (layers == 0 || head_hidden == 0) throw ShapeError("icl: need layers and a hidden head width");
}

IclPredictor::IclPredictor(const IclConfig& config, Rng& rng) : config_(config) {
  config_.validate();
  label_proj = Linear(config_.c_max, config_.model_dim, rng);
  // one-hot inputs: unit-variance weights put label embeddings on the scale of the row embeddings
  label_proj.weight = normal_parameter({config_.model_dim, config_.c_max}, 1.0, rng);
  for (std::size_t i = 0; i < config_.layers; ++i) layers.emplace_back(config_.model_dim, config_.heads, rng, false);
  final_norm = LayerNorm(config_.model_dim);
  head_hidden = Linear(config_.model_dim, config_.head_hidden, rng);
  head_out = Linear(config_.head_hidden, config_.c_max, rng);
}

Tensor IclPredictor::fuse_labels(const Tensor& h, std::span<const int> y_train, std::size_t n_classes) const {
  if (h.rank() != 2 || h.dim(1) != config_.model_dim) throw ShapeError("fuse_labels expects H as [n, model_dim]");
  if (n_classes > config_.c_max) {
    throw ShapeError(std::to_string(n_classes) + " classes exceed the native limit of " +
                     std::to_string(config_.c_max) + "; use the class tree");
  }
  if (n_classes < 2) throw ShapeError("fuse_labels needs at least 2 classes");
  const std::size_t n = h.dim(0), n_train = y_train.size(), D = config_.model_dim;
  if (n_train == 0 || n_train > n) throw ShapeError("fuse_labels: train row count out of range");
  std::vector<Real> onehot(n_train * config_.c_max, Real(0));
  for (std::size_t i = 0; i < n_train; ++i) {
    const int y = y_train[i];
    if (y < 0 || static_cast<std::size_t>(y) >= n_classes) {
      throw ShapeError("label " + std::to_string(y) + " outside [0, " + std::to_string(n_classes) + ")");
    }
    onehot[i * config_.c_max + static_cast<std::size_t>(y)] = Real(1);
  }
  const Tensor label_emb = label_proj(Tensor::from_data({1, n_train, config_.c_max}, std::move(onehot)));
  return ops::reshape(ops::add_leading_rows(ops::reshape(h, {1, n, D}), label_emb), {n, D});
}

Tensor IclPredictor::logits(const Tensor& fused, std::size_t n_train) const {
  if (fused.rank() != 2 || fused.dim(1) != config_.model_dim) throw ShapeError("icl expects [n, model_dim]");
  const std::size_t n = fused.dim(0), D = config_.model_dim;
  if (n_train == 0) throw ShapeError("icl: empty train set");
  if (n_train >= n) throw ShapeError("icl: no test rows");
  Tensor x = ops::reshape(fused, {1, n, D});
  for (const auto& layer : layers) x = layer.self(x, n_train);
  const std::size_t n_test = n - n_train;
  x = ops::reshape(final_norm(ops::slice_rows(x, n_train, n_test)), {n_test, D});
  return head_out(ops::gelu(head_hidden(x)));
}

Tensor IclPredictor::forward(const Tensor& fused, std::size_t n_train, std::size_t n_classes) const {
  if (n_classes < 1 || n_classes > config_.c_max) throw ShapeError("icl: class count out of range");
  return ops::softmax_active(logits(fused, n_train), n_classes);
}

void IclPredictor::collect(const std::string& prefix, ParameterList& out) const {
  label_proj.collect(prefix + ".label_proj", out);
  for (std::size_t i = 0; i < layers.size(); ++i) layers[i].collect(prefix + ".layer" + std::to_string(i), out);
  final_norm.collect(prefix + ".final_norm", out);
  head_hidden.collect(prefix + ".head_hidden", out);
  head_out.collect(prefix + ".head_out", out);
}

TABICL_NS_END
