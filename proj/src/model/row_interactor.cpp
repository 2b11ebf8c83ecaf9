#include "tabicl/row_interactor.hpp"

#include <algorithm>
#include <cmath>

#include "tabicl/errors.hpp"
#include "tabicl/ops.hpp"

TABICL_NS_BEGIN

void RowInteractorConfig::validate() const {
  if (d == 0 || heads == 0 || d % heads != 0) throw ShapeError("row interactor: d must be divisible by heads");
  if ((d / heads) % 2 != 0) throw ShapeError("row interactor: head dim must be even for rotary encoding");
  if (n_cls == 0 || layers == 0) throw ShapeError("row interactor: need CLS tokens and layers");
  if (!(rope.base > 1.0)) throw ShapeError("row interactor: rope base must exceed 1");
}

RowInteractor::RowInteractor(const RowInteractorConfig& config, Rng& rng) : config_(config) {
  config_.validate();
  cls_ = normal_parameter({config_.n_cls, config_.d}, 1.0 / std::sqrt(static_cast<double>(config_.d)), rng);
  for (std::size_t i = 0; i < config_.layers; ++i) layers_.emplace_back(config_.d, config_.heads, rng, false);
  final_norm_ = LayerNorm(config_.d);
}

Tensor RowInteractor::operator()(const Tensor& e) const {
  if (e.rank() != 3 || e.dim(2) != config_.d || e.dim(1) == 0) throw ShapeError("row interactor expects [n, m>=1, d]");
  const std::size_t n = e.dim(0);
  Tensor x = ops::prepend_tokens(e, cls_);
  for (const auto& layer : layers_) x = layer.self(x, 0, &config_.rope);
  x = final_norm_(ops::slice_rows(x, 0, config_.n_cls));
  return ops::reshape(x, {n, config_.output_dim()});
}

void RowInteractor::collect(const std::string& prefix, ParameterList& out) const {
  out.push_back({prefix + ".cls", cls_});
  for (std::size_t i = 0; i < layers_.size(); ++i) layers_[i].collect(prefix + ".layer" + std::to_string(i), out);
  final_norm_.collect(prefix + ".final_norm", out);
}

std::size_t count_distinct_rows(const Tensor& h, double tol) {
  if (h.rank() != 2) throw ShapeError("count_distinct_rows expects [n, D]");
  const std::size_t n = h.dim(0), d = h.dim(1);
  const auto v = h.data();
  std::vector<std::size_t> reps;
  for (std::size_t i = 0; i < n; ++i) {
    const bool seen = std::any_of(reps.begin(), reps.end(), [&](std::size_t r) {
      for (std::size_t j = 0; j < d; ++j)
        if (std::abs(double(v[i * d + j]) - double(v[r * d + j])) > tol) return false;
      return true;
    });
    if (!seen) reps.push_back(i);
  }
  return reps.size();
}

TABICL_NS_END
