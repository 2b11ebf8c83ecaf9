#pragma once

// Prediction pipeline: preprocessing, batch planning, ensembling and file IO.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tabicl/class_tree.hpp"
#include "tabicl/csv.hpp"
#include "tabicl/memory_model.hpp"
#include "tabicl/model.hpp"
#include "tabicl/preprocess.hpp"

TABICL_NS_BEGIN

struct EnsembleConfig {
  std::size_t members = 32;
  std::uint64_t seed = 0;
  bool shuffle_columns = true;
  bool shuffle_classes = true;
  /// Members cycle through these, so each kind gets members / size of them.
  std::vector<PreprocessKind> preprocessors{PreprocessKind::znorm, PreprocessKind::power_then_znorm};
  void validate() const;
};

/// What one ensemble member does to the table.
struct MemberPlan {
  std::vector<std::size_t> column_order;  // member column j reads source column column_order[j]
  std::vector<int> class_map;             // source class -> label seen by the model
  PreprocessKind preprocess = PreprocessKind::znorm;
};

/// Member plans for a table with m columns whose context labels are y_train.
/// With class shuffling on, classes are first renumbered by first appearance in
/// y_train (absent ones last, ascending), then permuted per member.
std::vector<MemberPlan> plan_members(const EnsembleConfig& config, std::size_t m, std::size_t n_classes,
                                     std::span<const int> y_train);

struct InferenceOptions {
  /// 0 disables batch planning (each stage runs in one batch).
  double memory_budget_mb = 0;
  MemoryModel memory{};
};

struct BatchPlan {
  std::size_t col_batch = 0;  // columns per column-embedding call
  std::size_t row_batch = 0;  // rows per row-interaction call
};

BatchPlan plan_inference(std::size_t n, std::size_t m, const InferenceOptions& options);

/// Row embeddings computed in column and row chunks; identical to
/// model.row_embeddings when the plan covers the whole table.
Tensor planned_row_embeddings(const TabIclModel& model, const Tensor& x, std::size_t n_train, const BatchPlan& plan);

/// Float tensor [rows, cols] from a table without missing values.
Tensor table_tensor(const Table& table);

/// Preprocess with one kind, embed, then predict flat or through the class tree.
ClassProbabilities predict_plain(const TabIclModel& model, const Table& table, std::size_t n_classes,
                                 PreprocessKind kind = PreprocessKind::znorm, const InferenceOptions& options = {});

/// Probability average over the ensemble members, in source class order.
ClassProbabilities ensemble_predict(const TabIclModel& model, const Table& table, std::size_t n_classes,
                                    const EnsembleConfig& config = {}, const InferenceOptions& options = {});

/// `row_id,pred_label,p_0..p_{C-1}` preceded by a '#' comment line when `comment` is non-empty.
void write_predictions(const std::string& path, const std::vector<std::size_t>& row_ids,
                       const std::vector<std::string>& class_names, const ClassProbabilities& probs,
                       const std::string& comment = "");

struct PredictionTable {
  std::vector<std::size_t> row_ids;
  std::vector<std::string> labels;
  std::size_t classes = 0;
  std::vector<double> probs;
};
PredictionTable read_predictions(const std::string& path);

struct PredictResult {
  LabeledData data;
  ClassProbabilities probs;
  std::vector<std::size_t> test_row_ids;
};

struct PredictOptions {
  std::string target = "target";
  std::string output;  // empty: no file
  EnsembleConfig ensemble{};
  InferenceOptions inference{};
  std::string comment;
};

PredictResult predict_file(const std::string& input, const TabIclModel& model, const PredictOptions& options);

struct Metrics {
  double accuracy = 0;
  std::optional<double> auc_ovr;
  double log_loss = 0;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  std::size_t classes = 0;
  std::string to_json() const;
};

Metrics evaluate(const ClassProbabilities& probs, std::span<const int> labels);
Metrics evaluate_file(const std::string& input, const TabIclModel& model, const std::string& target,
                      double train_fraction, std::uint64_t seed, const EnsembleConfig& ensemble,
                      const InferenceOptions& inference = {});

TABICL_NS_END
