#include "tabicl/pretrain.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numbers>

#include <json.hpp>

#include "tabicl/errors.hpp"
#include "tabicl/ops.hpp"

TABICL_NS_BEGIN

namespace {

constexpr std::size_t kSplitTries = 10;
constexpr double kMinTrainFraction = 0.3;
constexpr double kMaxTrainFraction = 0.9;

bool covers_all(const SyntheticDataset& ds, const std::vector<std::size_t>& rows) {
  std::vector<char> seen(ds.n_classes, 0);
  for (auto r : rows) seen[static_cast<std::size_t>(ds.y[r])] = 1;
  return std::all_of(seen.begin(), seen.end(), [](char c) { return c != 0; });
}

}  // namespace

const char* lr_kind_name(LrKind kind) {
  switch (kind) {
    case LrKind::cosine_restarts: return "cosine_restarts";
    case LrKind::polynomial: return "polynomial";
    case LrKind::constant: return "constant";
  }
  return "?";
}

LrSchedule LrSchedule::cosine_restarts(std::size_t period, double peak, double floor, double decay) {
  LrSchedule s;
  s.kind = LrKind::cosine_restarts;
  s.period = period;
  s.peak = peak;
  s.floor = floor;
  s.restart_decay = decay;
  return s;
}

LrSchedule LrSchedule::polynomial(double lr_init, double lr_end, std::size_t total_steps) {
  LrSchedule s;
  s.kind = LrKind::polynomial;
  s.lr_init = lr_init;
  s.lr_end = lr_end;
  s.total_steps = total_steps;
  return s;
}

LrSchedule LrSchedule::constant(double value) {
  LrSchedule s;
  s.kind = LrKind::constant;
  s.value = value;
  return s;
}

double lr_at(const LrSchedule& s, std::size_t step) {
  switch (s.kind) {
    case LrKind::polynomial: {
      if (step >= s.total_steps) return s.lr_end;
      const double frac = 1.0 - static_cast<double>(step) / static_cast<double>(s.total_steps);
      return (s.lr_init - s.lr_end) * frac * frac + s.lr_end;
    }
    case LrKind::cosine_restarts: {
      const std::size_t cycle = step / s.period;
      const double t = static_cast<double>(step % s.period) / static_cast<double>(s.period);
      const double peak = s.peak * std::pow(s.restart_decay, static_cast<double>(cycle));
      return s.floor + (peak - s.floor) * 0.5 * (1 + std::cos(std::numbers::pi * t));
    }
    case LrKind::constant: return s.value;
  }
  return 0;
}

double global_grad_norm(const ParameterList& params) {
  double sq = 0;
  for (const auto& p : params)
    for (Real g : p.tensor.grad()) sq += double(g) * double(g);
  return std::sqrt(sq);
}

double clip_grad_norm(const ParameterList& params, double max_norm) {
  const double norm = global_grad_norm(params);
  if (norm > max_norm) {
    const double factor = max_norm / norm;
    for (const auto& p : params) {
      auto t = p.tensor;
      if (t.grad().empty()) continue;
      for (Real& g : t.mutable_grad()) g = static_cast<Real>(double(g) * factor);
    }
  }
  return norm;
}

Adam::Adam(ParameterList params, AdamConfig config) : params_(std::move(params)), config_(config) {
  for (const auto& p : params_) {
    m_.emplace_back(p.tensor.numel(), 0.0);
    v_.emplace_back(p.tensor.numel(), 0.0);
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) {
    auto t = p.tensor;
    t.zero_grad();
  }
}

double Adam::step(double lr) {
  const double norm = clip_grad_norm(params_, config_.clip_norm);
  ++steps_;
  const double bc1 = 1 - std::pow(config_.beta1, static_cast<double>(steps_));
  const double bc2 = 1 - std::pow(config_.beta2, static_cast<double>(steps_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto t = params_[i].tensor;
    const auto g = t.grad();
    if (g.empty()) continue;
    auto w = t.mutable_data();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double gj = g[j];
      m[j] = config_.beta1 * m[j] + (1 - config_.beta1) * gj;
      v[j] = config_.beta2 * v[j] + (1 - config_.beta2) * gj * gj;
      const double update = lr * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + config_.eps);
      w[j] = static_cast<Real>(double(w[j]) - update);
    }
  }
  return norm;
}

SplitIndices split_dataset(const SyntheticDataset& ds, Rng& rng) {
  if (ds.n < 10) throw DataError("split needs at least 10 rows, got " + std::to_string(ds.n));
  for (std::size_t attempt = 0; attempt < kSplitTries; ++attempt) {
    const double frac = rng.uniform(kMinTrainFraction, kMaxTrainFraction);
    const auto n_train = std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(frac * static_cast<double>(ds.n))),
                                                 1, ds.n - 1);
    const auto order = rng.permutation(ds.n);
    SplitIndices s;
    s.train.assign(order.begin(), order.begin() + static_cast<long>(n_train));
    s.test.assign(order.begin() + static_cast<long>(n_train), order.end());
    if (covers_all(ds, s.train) && covers_all(ds, s.test)) return s;
  }
  throw DataError("could not split the dataset so that both parts contain all " + std::to_string(ds.n_classes) +
                  " classes");
}

TrainingTask make_task(const SyntheticDataset& ds, PreprocessKind kind, Rng& rng) {
  const auto split = split_dataset(ds, rng);
  Table table;
  table.rows = ds.n;
  table.cols = ds.m;
  table.n_train = split.train.size();
  table.values.resize(ds.n * ds.m);
  TrainingTask task;
  task.n_classes = ds.n_classes;
  std::size_t r = 0;
  for (const auto* part : {&split.train, &split.test})
    for (auto i : *part) {
      std::copy_n(ds.x.begin() + static_cast<long>(i * ds.m), ds.m, table.values.begin() + static_cast<long>(r * ds.m));
      (part == &split.train ? task.y_train : task.y_test).push_back(ds.y[i]);
      ++r;
    }
  const auto pre = Preprocessor::fit(table, kind);
  const auto z = pre.transform(table);
  std::vector<Real> values(z.values.begin(), z.values.end());
  task.x = Tensor::from_data({ds.n, ds.m}, std::move(values));
  return task;
}

Tensor task_loss(const TabIclModel& model, const TrainingTask& task) {
  const Tensor h = model.row_embeddings(task.x, task.y_train.size());
  const Tensor logits = model.logits_from_embeddings(h, task.y_train, task.n_classes);
  return ops::cross_entropy(logits, task.y_test, task.n_classes);
}

double evaluate_loss(const TabIclModel& model, const std::vector<TrainingTask>& tasks) {
  NoGradGuard guard;
  double total = 0;
  for (const auto& t : tasks) total += task_loss(model, t).item();
  return tasks.empty() ? 0.0 : total / static_cast<double>(tasks.size());
}

StepResult train_step(Adam& optimizer, const TabIclModel& model, const std::vector<TrainingTask>& tasks,
                      std::size_t micro_batch, double lr) {
  if (tasks.empty() || micro_batch == 0 || tasks.size() % micro_batch != 0) {
    throw ShapeError("train_step: " + std::to_string(tasks.size()) + " tasks do not split into micro-batches of " +
                     std::to_string(micro_batch));
  }
  StepResult result;
  optimizer.zero_grad();
  const auto weight = static_cast<Real>(1.0 / static_cast<double>(tasks.size()));
  double total = 0;
  try {
    for (std::size_t start = 0; start < tasks.size(); start += micro_batch) {
      Tensor micro_loss;
      for (std::size_t i = start; i < start + micro_batch; ++i) {
        const Tensor l = task_loss(model, tasks[i]);
        total += l.item();
        micro_loss = micro_loss.defined() ? ops::add(micro_loss, l) : l;
      }
      ops::scale(micro_loss, weight).backward();
      ++result.micro_steps;
    }
  } catch (const NumericError& e) {
    result.skipped = true;
    result.skip_reason = e.what();
  }
  result.loss = total / static_cast<double>(tasks.size());
  if (!result.skipped && !std::isfinite(result.loss)) {
    result.skipped = true;
    result.skip_reason = "non-finite loss";
  }
  if (!result.skipped) {
    const double norm = global_grad_norm(optimizer.params());
    if (!std::isfinite(norm)) {
      result.skipped = true;
      result.skip_reason = "non-finite gradient";
    }
  }
  if (result.skipped) {
    optimizer.zero_grad();
    return result;
  }
  result.grad_norm = optimizer.step(lr);
  return result;
}

std::size_t StageConfig::sample_size(Rng& rng) const {
  switch (size_law) {
    case SizeLaw::fixed: return size_min;
    case SizeLaw::uniform: return static_cast<std::size_t>(rng.uniform_int(static_cast<long>(size_min), static_cast<long>(size_max)));
    case SizeLaw::log_uniform: {
      const double v = std::exp(rng.uniform(std::log(double(size_min)), std::log(double(size_max))));
      return std::clamp(static_cast<std::size_t>(std::lround(v)), size_min, size_max);
    }
  }
  return size_min;
}

CurriculumProfile CurriculumProfile::paper() {
  CurriculumProfile p;
  p.name = "paper";
  p.model = ModelConfig::paper();
  p.prior.max_features = 100;
  p.prior.max_classes = 10;
  p.stages = {
      {1, 4, SizeLaw::fixed, 1024, 1024, 160000, 512, false, LrSchedule::cosine_restarts(20000)},
      {2, 1, SizeLaw::log_uniform, 1000, 40000, 2000, 512, false, LrSchedule::polynomial(2e-5, 5e-6, 2000)},
      {3, 1, SizeLaw::uniform, 40000, 60000, 50, 512, true, LrSchedule::constant(5e-6)},
  };
  return p;
}

CurriculumProfile CurriculumProfile::desk() {
  CurriculumProfile p;
  p.name = "desk";
  p.model = ModelConfig::desk();
  p.stages = {
      {1, 4, SizeLaw::fixed, 128, 128, 6000, 8, false, LrSchedule::cosine_restarts(6000, 1e-3)},
      {2, 1, SizeLaw::log_uniform, 256, 2048, 50, 8, false, LrSchedule::polynomial(2e-5, 5e-6, 50)},
      {3, 1, SizeLaw::uniform, 2048, 4096, 10, 4, true, LrSchedule::constant(5e-6)},
  };
  return p;
}

CurriculumProfile CurriculumProfile::by_name(const std::string& name) {
  if (name == "paper") return paper();
  if (name == "desk") return desk();
  throw ShapeError("unknown profile '" + name + "' (expected paper or desk)");
}

namespace {

std::vector<TrainingTask> make_tasks(const PriorConfig& prior, std::size_t n_rows, std::size_t count,
                                     std::uint64_t seed, std::uint64_t first_index) {
  PriorConfig sized = prior;
  sized.min_samples = sized.max_samples = n_rows;
  const auto datasets = sample_prior_batch(count, sized, seed, first_index);
  std::vector<TrainingTask> tasks;
  tasks.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Rng rng(derive_seed(seed ^ 0x5157u, first_index + i));
    const auto kind = rng.bernoulli(0.5) ? PreprocessKind::znorm : PreprocessKind::power_then_znorm;
    try {
      tasks.push_back(make_task(datasets[i], kind, rng));
    } catch (const DataError&) {
      // Class coverage failed for every split; use a replacement dataset.
      const auto spare = sample_prior_dataset(sized, derive_seed(seed ^ 0x5BA2Eu, first_index + i));
      tasks.push_back(make_task(spare, kind, rng));
    }
  }
  return tasks;
}

}  // namespace

CurriculumResult run_curriculum(const CurriculumProfile& profile, const CurriculumOptions& options) {
  profile.model.validate();
  profile.prior.validate();
  namespace fs = std::filesystem;
  fs::create_directories(options.out_dir);
  const fs::path dir(options.out_dir);

  const auto started = std::chrono::steady_clock::now();
  CurriculumResult result;
  result.loss_csv = (dir / "losses.csv").string();
  std::ofstream csv(result.loss_csv, std::ios::trunc);
  if (!csv) throw DataError("cannot write " + result.loss_csv);
  csv << "step,stage,lr,loss\n" << std::setprecision(9);

  TabIclModel model(profile.model, derive_seed(options.seed, 0));
  const std::uint64_t data_seed = derive_seed(options.seed, 1);
  const std::uint64_t eval_seed = derive_seed(options.seed, 2);
  const auto eval_size = profile.stages.empty() ? profile.prior.min_samples : profile.stages.front().size_min;
  const auto held_out = make_tasks(profile.prior, eval_size, profile.eval_tasks, eval_seed, 0);
  result.initial_eval_loss = evaluate_loss(model, held_out);

  std::uint64_t dataset_index = 0;
  std::size_t global_step = 0;
  for (const auto& stage : profile.stages) {
    if (stage.datasets_per_step % stage.micro_batch != 0) throw ShapeError("datasets per step must be a multiple of the micro-batch");
    Adam optimizer(stage.icl_only ? model.icl_parameters() : model.parameters());
    Rng size_rng(derive_seed(data_seed, 1000 + static_cast<std::uint64_t>(stage.id)));
    for (std::size_t s = 0; s < stage.steps; ++s) {
      const auto t0 = std::chrono::steady_clock::now();
      std::vector<TrainingTask> tasks;
      for (std::size_t start = 0; start < stage.datasets_per_step; start += stage.micro_batch) {
        // Every dataset of a micro-batch has the same number of rows.
        const auto n_rows = stage.sample_size(size_rng);
        auto part = make_tasks(profile.prior, n_rows, stage.micro_batch, data_seed, dataset_index);
        dataset_index += stage.micro_batch;
        for (auto& t : part) tasks.push_back(std::move(t));
      }
      const double lr = lr_at(stage.lr, s);
      const auto r = train_step(optimizer, model, tasks, stage.micro_batch, lr);
      result.skipped_steps += r.skipped;
      csv << global_step << ',' << stage.id << ',' << lr << ',' << r.loss << '\n';
      if (options.on_step) {
        StepLog log{global_step, stage.id, lr, r.loss, r.grad_norm, r.skipped,
                    std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()};
        options.on_step(log);
      }
      ++global_step;
    }
    csv.flush();
    result.stage_eval_loss.push_back(evaluate_loss(model, held_out));
    nlohmann::json meta = {{"profile", profile.name},
                           {"stage", stage.id},
                           {"steps", global_step},
                           {"seed", options.seed},
                           {"run_config", nlohmann::json::parse(options.run_config_json)}};
    const auto path = (dir / ("stage" + std::to_string(stage.id) + ".ckpt")).string();
    save_checkpoint(path, model, meta.dump());
    result.stage_checkpoints.push_back(path);
  }
  result.steps = global_step;
  result.final_checkpoint = (dir / "model.ckpt").string();
  nlohmann::json meta = {{"profile", profile.name},
                         {"stage", profile.stages.empty() ? 0 : profile.stages.back().id},
                         {"steps", global_step},
                         {"seed", options.seed},
                         {"run_config", nlohmann::json::parse(options.run_config_json)}};
  save_checkpoint(result.final_checkpoint, model, meta.dump());
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

  nlohmann::json summary = {{"profile", profile.name},
                            {"seed", options.seed},
                            {"steps", result.steps},
                            {"skipped_steps", result.skipped_steps},
                            {"seconds", result.seconds},
                            {"initial_eval_loss", result.initial_eval_loss},
                            {"stage_eval_loss", result.stage_eval_loss},
                            {"checkpoints", result.stage_checkpoints},
                            {"run_config", nlohmann::json::parse(options.run_config_json)}};
  std::ofstream((dir / "summary.json").string()) << summary.dump(2) << '\n';
  return result;
}

TABICL_NS_END
