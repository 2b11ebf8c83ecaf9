#include "tabicl/model_config.hpp"

#include "tabicl/errors.hpp"

TABICL_NS_BEGIN

ModelConfig ModelConfig::paper() { return ModelConfig{}; }

ModelConfig ModelConfig::desk() {
  ModelConfig c;
  c.col = {.d = 16, .k_inducing = 16, .n_isab = 2, .heads = 2};
  c.row = {.layers = 2, .heads = 2, .d = 16, .n_cls = 4, .rope = {}};
  c.icl = {.layers = 4, .heads = 4, .model_dim = 64, .c_max = 10, .head_hidden = 64};
  return c;
}

void ModelConfig::validate() const {
  col.validate();
  row.validate();
  icl.validate();
  if (col.d != row.d) throw ShapeError("column and row embedding widths differ");
  if (row.output_dim() != icl.model_dim) throw ShapeError("row output width must equal the icl model width");
}

TABICL_NS_END
