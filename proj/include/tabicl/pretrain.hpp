#pragma once

// Curriculum pretraining on synthetic prior datasets.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "tabicl/model.hpp"
#include "tabicl/preprocess.hpp"
#include "tabicl/prior.hpp"

TABICL_NS_BEGIN

enum class LrKind { cosine_restarts, polynomial, constant };

const char* lr_kind_name(LrKind kind);

struct LrSchedule {
  LrKind kind = LrKind::constant;
  // polynomial: (lr_init - lr_end)(1 - step/T)^2 + lr_end, lr_end after T.
  double lr_init = 2e-5;
  double lr_end = 5e-6;
  std::size_t total_steps = 2000;
  // cosine_restarts: half-cosine from peak to floor every `period` steps,
  // the peak shrinking by `restart_decay` at each restart.
  double peak = 2e-4;
  double floor = 1e-5;
  double restart_decay = 0.8;
  std::size_t period = 2000;
  // constant
  double value = 5e-6;

  static LrSchedule cosine_restarts(std::size_t period, double peak = 2e-4, double floor = 1e-5, double decay = 0.8);
  static LrSchedule polynomial(double lr_init = 2e-5, double lr_end = 5e-6, std::size_t total_steps = 2000);
  static LrSchedule constant(double value);
};

double lr_at(const LrSchedule& schedule, std::size_t step);

double global_grad_norm(const ParameterList& params);
/// Scales every gradient so that the global norm is at most `max_norm`; returns the norm before clipping.
double clip_grad_norm(const ParameterList& params, double max_norm);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 1.0;
};

class Adam {
 public:
  Adam(ParameterList params, AdamConfig config = {});
  /// One update from the accumulated gradients (clipped first); returns the pre-clip norm.
  double step(double lr);
  void zero_grad();
  std::size_t steps() const { return steps_; }
  const ParameterList& params() const { return params_; }

 private:
  ParameterList params_;
  AdamConfig config_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t steps_ = 0;
};

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Random train/test split with train fraction ~ U[0.3, 0.9]; both parts are
/// resampled (up to 10 times) until each contains every class. Throws DataError
/// for n < 10 or when coverage is not reached.
SplitIndices split_dataset(const SyntheticDataset& ds, Rng& rng);

/// One pretraining example: preprocessed features with the train rows first.
struct TrainingTask {
  Tensor x;  // [n, m]
  std::vector<int> y_train;
  std::vector<int> y_test;
  std::size_t n_classes = 0;
};

/// Splits the dataset and applies a preprocessor fitted on its train rows.
TrainingTask make_task(const SyntheticDataset& ds, PreprocessKind kind, Rng& rng);

/// Mean cross-entropy over the test rows.
Tensor task_loss(const TabIclModel& model, const TrainingTask& task);
/// Average held-out loss without recording gradients.
double evaluate_loss(const TabIclModel& model, const std::vector<TrainingTask>& tasks);

struct StepResult {
  double loss = 0;
  double grad_norm = 0;  // before clipping
  std::size_t micro_steps = 0;
  bool skipped = false;
  std::string skip_reason;
};

/// Mean loss over all tasks; one backward per micro-batch of `micro_batch`
/// tasks, then one clipped Adam update. A non-finite loss skips the update.
StepResult train_step(Adam& optimizer, const TabIclModel& model, const std::vector<TrainingTask>& tasks,
                      std::size_t micro_batch, double lr);

enum class SizeLaw { fixed, log_uniform, uniform };

struct StageConfig {
  int id = 1;
  std::size_t micro_batch = 4;
  SizeLaw size_law = SizeLaw::fixed;
  std::size_t size_min = 1024;
  std::size_t size_max = 1024;
  std::size_t steps = 0;
  std::size_t datasets_per_step = 512;
  bool icl_only = false;
  LrSchedule lr{};

  /// Dataset size for one micro-batch.
  std::size_t sample_size(Rng& rng) const;
};

struct CurriculumProfile {
  std::string name;
  ModelConfig model;
  PriorConfig prior;
  std::vector<StageConfig> stages;
  /// Held-out prior tasks scored before training and after each stage.
  std::size_t eval_tasks = 32;

  static CurriculumProfile paper();
  static CurriculumProfile desk();
  static CurriculumProfile by_name(const std::string& name);
};

struct StepLog {
  std::size_t step = 0;  // global, counted across stages
  int stage = 0;
  double lr = 0;
  double loss = 0;
  double grad_norm = 0;
  bool skipped = false;
  double seconds = 0;
};

struct CurriculumResult {
  std::vector<std::string> stage_checkpoints;
  std::string final_checkpoint;
  std::string loss_csv;
  double initial_eval_loss = 0;
  std::vector<double> stage_eval_loss;
  std::size_t steps = 0;
  std::size_t skipped_steps = 0;
  double seconds = 0;  // wall clock, whole run
};

struct CurriculumOptions {
  std::string out_dir = ".";
  std::uint64_t seed = 0;
  /// JSON object stored in every checkpoint's metadata.
  std::string run_config_json = "{}";
  std::function<void(const StepLog&)> on_step;
};

/// Trains a fresh model through every stage; writes stage<k>.ckpt, model.ckpt,
/// losses.csv (`step,stage,lr,loss`) and summary.json into out_dir.
CurriculumResult run_curriculum(const CurriculumProfile& profile, const CurriculumOptions& options);

TABICL_NS_END
