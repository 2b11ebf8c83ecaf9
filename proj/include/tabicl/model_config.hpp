#pragma once

#include <cstddef>

#include "tabicl/nn.hpp"

TABICL_NS_BEGIN

struct ColumnEmbedderConfig {
  std::size_t d = 128;
  std::size_t k_inducing = 128;
  std::size_t n_isab = 3;
  std::size_t heads = 4;
  void validate() const;
};

struct RowInteractorConfig {
  std::size_t layers = 3;
  std::size_t heads = 8;
  std::size_t d = 128;
  std::size_t n_cls = 4;
  RopeSettings rope{};
  std::size_t output_dim() const { return n_cls * d; }
  void validate() const;
};

struct IclConfig {
  std::size_t layers = 12;
  std::size_t heads = 4;
  std::size_t model_dim = 512;
  std::size_t c_max = 10;
  std::size_t head_hidden = 512;
  void validate() const;
};

struct ModelConfig {
  ColumnEmbedderConfig col{};
  RowInteractorConfig row{};
  IclConfig icl{};

  /// Full-size architecture: d=128, 128 inducing vectors, 3 ISAB blocks,
  /// 3 row layers x 8 heads, 12 ICL layers x 4 heads at width 512.
  static ModelConfig paper();
  /// Workstation-sized variant used by the desk curriculum.
  static ModelConfig desk();
  /// Throws ShapeError when the three stages do not fit together.
  void validate() const;
};

TABICL_NS_END
