#pragma once

// The full three-stage classifier and its checkpoint format.

#include <atomic>
#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "tabicl/column_embedder.hpp"
#include "tabicl/icl_predictor.hpp"
#include "tabicl/model_config.hpp"
#include "tabicl/row_interactor.hpp"

TABICL_NS_BEGIN

/// Row-major [rows, classes] probability table.
struct ClassProbabilities {
  std::size_t rows = 0;
  std::size_t classes = 0;
  std::vector<double> values;

  double at(std::size_t r, std::size_t c) const { return values[r * classes + c]; }
  double& at(std::size_t r, std::size_t c) { return values[r * classes + c]; }
  std::size_t argmax(std::size_t r) const;
};

/// First `classes` columns of a [rows, width] probability tensor.
ClassProbabilities to_probabilities(const Tensor& p, std::size_t classes);

/// How often each stage ran; lets callers check that embeddings are reused.
struct CallCounters {
  std::atomic<std::size_t> embed_table{0};
  std::atomic<std::size_t> row_interact{0};
  std::atomic<std::size_t> icl_forward{0};
  void reset() {
    embed_table = 0;
    row_interact = 0;
    icl_forward = 0;
  }
};

class TabIclModel {
 public:
  explicit TabIclModel(const ModelConfig& config, std::uint64_t seed = 0);

  /// x [n, m] -> H [n, row.output_dim()].
  Tensor row_embeddings(const Tensor& x, std::size_t n_train) const;
  /// Class probabilities from precomputed row embeddings, [n - n_train, n_classes].
  ClassProbabilities predict_from_embeddings(const Tensor& h, std::span<const int> y_train,
                                             std::size_t n_classes) const;
  /// Raw logits from row embeddings; used by training.
  Tensor logits_from_embeddings(const Tensor& h, std::span<const int> y_train, std::size_t n_classes) const;
  /// Full pipeline for one table whose first y_train.size() rows are the context.
  ClassProbabilities predict_dataset(const Tensor& x, std::span<const int> y_train, std::size_t n_classes) const;

  ParameterList parameters() const;
  /// Parameters of the column and row stages (frozen in the last curriculum stage).
  ParameterList embedding_parameters() const;
  ParameterList icl_parameters() const;
  std::size_t parameter_count() const;

  const ModelConfig& config() const { return config_; }
  CallCounters& counters() const { return *counters_; }

  ColumnEmbedder col;
  RowInteractor row;
  IclPredictor icl;

 private:
  ModelConfig config_;
  std::shared_ptr<CallCounters> counters_ = std::make_shared<CallCounters>();
};

/// Writes weights as: u64 little-endian header length, JSON header mapping each
/// parameter name to {dtype, shape, offsets} plus a "__metadata__" object, then
/// the raw little-endian f32 blobs.
void save_checkpoint(const std::string& path, const TabIclModel& model, const std::string& metadata_json = "{}");
/// Rebuilds the model from the stored config and copies every tensor in.
TabIclModel load_checkpoint(const std::string& path);
/// The "__metadata__" object of a checkpoint as a JSON string.
std::string checkpoint_metadata(const std::string& path);

TABICL_NS_END
