#include "tabicl/infer.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "tabicl/errors.hpp"

TABICL_NS_BEGIN

void EnsembleConfig::validate() const {
  if (members == 0) throw ShapeError("ensemble needs at least one member");
  if (preprocessors.empty()) throw ShapeError("ensemble needs at least one preprocessor");
}

std::vector<MemberPlan> plan_members(const EnsembleConfig& config, std::size_t m, std::size_t n_classes,
                                     std::span<const int> y_train) {
  config.validate();
  std::vector<int> canonical(n_classes);
  for (std::size_t c = 0; c < n_classes; ++c) canonical[c] = static_cast<int>(c);
  if (config.shuffle_classes) {
    std::vector<int> order;
    std::vector<char> seen(n_classes, 0);
    for (int y : y_train) {
      if (y < 0 || static_cast<std::size_t>(y) >= n_classes) throw DataError("train label out of range");
      if (!seen[static_cast<std::size_t>(y)]) {
        seen[static_cast<std::size_t>(y)] = 1;
        order.push_back(y);
      }
    }
    for (std::size_t c = 0; c < n_classes; ++c)
      if (!seen[c]) order.push_back(static_cast<int>(c));
    for (std::size_t i = 0; i < n_classes; ++i) canonical[static_cast<std::size_t>(order[i])] = static_cast<int>(i);
  }
  std::vector<MemberPlan> plans(config.members);
  for (std::size_t i = 0; i < config.members; ++i) {
    Rng rng(derive_seed(config.seed, i));
    auto& p = plans[i];
    p.preprocess = config.preprocessors[i % config.preprocessors.size()];
    p.column_order.resize(m);
    for (std::size_t j = 0; j < m; ++j) p.column_order[j] = j;
    if (config.shuffle_columns) p.column_order = rng.permutation(m);
    std::vector<std::size_t> perm(n_classes);
    for (std::size_t c = 0; c < n_classes; ++c) perm[c] = c;
    if (config.shuffle_classes) perm = rng.permutation(n_classes);
    p.class_map.resize(n_classes);
    for (std::size_t c = 0; c < n_classes; ++c) p.class_map[c] = static_cast<int>(perm[static_cast<std::size_t>(canonical[c])]);
  }
  return plans;
}

BatchPlan plan_inference(std::size_t n, std::size_t m, const InferenceOptions& options) {
  if (options.memory_budget_mb <= 0) return {m, n};
  BatchPlan plan;
  plan.col_batch = std::min(m, plan_batch(Stage::col, n, options.memory_budget_mb, options.memory));
  plan.row_batch = std::min(n, plan_batch(Stage::row, m, options.memory_budget_mb, options.memory));
  // ICL runs the whole table as one dataset; it must fit too.
  plan_batch(Stage::icl, n, options.memory_budget_mb, options.memory);
  return plan;
}

Tensor planned_row_embeddings(const TabIclModel& model, const Tensor& x, std::size_t n_train, const BatchPlan& plan) {
  const std::size_t n = x.dim(0), m = x.dim(1);
  if (plan.col_batch >= m && plan.row_batch >= n) return model.row_embeddings(x, n_train);
  if (plan.col_batch == 0 || plan.row_batch == 0) throw ShapeError("batch plan has an empty batch");
  NoGradGuard guard;
  const std::size_t d = model.config().col.d;
  const auto xd = x.data();
  // Column chunks write into E [n, m, d].
  std::vector<Real> e(n * m * d);
  for (std::size_t c0 = 0; c0 < m; c0 += plan.col_batch) {
    const std::size_t cw = std::min(plan.col_batch, m - c0);
    std::vector<Real> part(n * cw);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t j = 0; j < cw; ++j) part[r * cw + j] = xd[r * m + c0 + j];
    const auto emb = model.col.embed_table(Tensor::from_data({n, cw}, std::move(part)), n_train);
    const auto ed = emb.E.data();
    for (std::size_t r = 0; r < n; ++r)
      std::copy_n(ed.begin() + static_cast<long>(r * cw * d), cw * d, e.begin() + static_cast<long>((r * m + c0) * d));
  }
  ++model.counters().embed_table;
  const std::size_t width = model.config().row.output_dim();
  std::vector<Real> h(n * width);
  for (std::size_t r0 = 0; r0 < n; r0 += plan.row_batch) {
    const std::size_t rw = std::min(plan.row_batch, n - r0);
    std::vector<Real> part(e.begin() + static_cast<long>(r0 * m * d), e.begin() + static_cast<long>((r0 + rw) * m * d));
    const Tensor out = model.row(Tensor::from_data({rw, m, d}, std::move(part)));
    std::copy(out.data().begin(), out.data().end(), h.begin() + static_cast<long>(r0 * width));
  }
  ++model.counters().row_interact;
  return Tensor::from_data({n, width}, std::move(h));
}

Tensor table_tensor(const Table& table) {
  std::vector<Real> v(table.values.begin(), table.values.end());
  return Tensor::from_data({table.rows, table.cols}, std::move(v));
}

namespace {

ClassProbabilities predict_prepared(const TabIclModel& model, const Table& prepared, std::span<const int> y_train,
                                    std::size_t n_classes, const InferenceOptions& options) {
  NoGradGuard guard;
  const Tensor x = table_tensor(prepared);
  const auto plan = plan_inference(prepared.rows, prepared.cols, options);
  const Tensor h = planned_row_embeddings(model, x, prepared.n_train, plan);
  if (n_classes <= model.config().icl.c_max) return model.predict_from_embeddings(h, y_train, n_classes);
  return predict_hierarchical(ClassTree::build(n_classes, model.config().icl.c_max), h, y_train, model);
}

}  // namespace

ClassProbabilities predict_plain(const TabIclModel& model, const Table& table, std::size_t n_classes,
                                 PreprocessKind kind, const InferenceOptions& options) {
  table.validate();
  const auto prepared = Preprocessor::fit(table, kind).transform(table);
  return predict_prepared(model, prepared, std::span<const int>(table.labels).first(table.n_train), n_classes, options);
}

ClassProbabilities ensemble_predict(const TabIclModel& model, const Table& table, std::size_t n_classes,
                                    const EnsembleConfig& config, const InferenceOptions& options) {
  table.validate();
  if (n_classes < 2) throw DataError("need at least 2 classes");
  const std::span<const int> y_train = std::span<const int>(table.labels).first(table.n_train);
  const auto plans = plan_members(config, table.cols, n_classes, y_train);
  std::vector<ClassProbabilities> outputs(plans.size());
  std::vector<std::exception_ptr> errors(plans.size());
  const long count = static_cast<long>(plans.size());
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < count; ++i) {
    const auto& plan = plans[static_cast<std::size_t>(i)];
    try {
      const Table permuted = table.select_columns(plan.column_order);
      const auto prepared = Preprocessor::fit(permuted, plan.preprocess).transform(permuted);
      std::vector<int> labels(table.n_train);
      for (std::size_t r = 0; r < table.n_train; ++r) labels[r] = plan.class_map[static_cast<std::size_t>(y_train[r])];
      outputs[static_cast<std::size_t>(i)] = predict_prepared(model, prepared, labels, n_classes, options);
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  ClassProbabilities out;
  out.rows = table.n_test();
  out.classes = n_classes;
  out.values.assign(out.rows * n_classes, 0.0);
  // Fixed member order keeps the sum independent of scheduling.
  for (std::size_t i = 0; i < plans.size(); ++i)
    for (std::size_t r = 0; r < out.rows; ++r)
      for (std::size_t c = 0; c < n_classes; ++c)
        out.at(r, c) += outputs[i].at(r, static_cast<std::size_t>(plans[i].class_map[c]));
  if (plans.size() > 1)
    for (auto& v : out.values) v /= static_cast<double>(plans.size());
  return out;
}

void write_predictions(const std::string& path, const std::vector<std::size_t>& row_ids,
                       const std::vector<std::string>& class_names, const ClassProbabilities& probs,
                       const std::string& comment) {
  if (row_ids.size() != probs.rows || class_names.size() != probs.classes) throw ShapeError("prediction table shape mismatch");
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path);
  if (!comment.empty()) out << "# " << comment << '\n';
  out << "row_id,pred_label";
  for (std::size_t c = 0; c < probs.classes; ++c) out << ",p_" << c;
  out << '\n' << std::setprecision(9);
  for (std::size_t r = 0; r < probs.rows; ++r) {
    out << row_ids[r] << ',' << class_names[probs.argmax(r)];
    for (std::size_t c = 0; c < probs.classes; ++c) out << ',' << probs.at(r, c);
    out << '\n';
  }
  if (!out) throw DataError("failed writing " + path);
}

PredictionTable read_predictions(const std::string& path) {
  const auto csv = read_csv(path);
  if (csv.header.size() < 3 || csv.header[0] != "row_id" || csv.header[1] != "pred_label")
    throw DataError(path + ": not a predictions file");
  PredictionTable t;
  t.classes = csv.header.size() - 2;
  for (std::size_t r = 0; r < csv.rows.size(); ++r) {
    const auto& row = csv.rows[r];
    const auto id = parse_number(row[0]);
    if (!id) throw DataError(path + ": line " + std::to_string(csv.line_numbers[r]) + ", column 1: bad row id");
    t.row_ids.push_back(static_cast<std::size_t>(*id));
    t.labels.push_back(row[1]);
    for (std::size_t c = 2; c < row.size(); ++c) {
      const auto p = parse_number(row[c]);
      if (!p) throw DataError(path + ": line " + std::to_string(csv.line_numbers[r]) + ", column " + std::to_string(c + 1) + ": bad probability");
      t.probs.push_back(*p);
    }
  }
  return t;
}

PredictResult predict_file(const std::string& input, const TabIclModel& model, const PredictOptions& options) {
  PredictResult result;
  result.data = load_prediction_csv(input, options.target);
  const auto& t = result.data.table;
  result.probs = ensemble_predict(model, t, result.data.n_classes(), options.ensemble, options.inference);
  result.test_row_ids.assign(result.data.row_ids.begin() + static_cast<long>(t.n_train), result.data.row_ids.end());
  if (!options.output.empty())
    write_predictions(options.output, result.test_row_ids, result.data.class_names, result.probs, options.comment);
  return result;
}

std::string Metrics::to_json() const {
  nlohmann::json j = {{"accuracy", accuracy}, {"log_loss", log_loss}, {"n_train", n_train}, {"n_test", n_test}, {"classes", classes}};
  j["auc_ovr"] = auc_ovr ? nlohmann::json(*auc_ovr) : nlohmann::json(nullptr);
  return j.dump();
}

Metrics evaluate(const ClassProbabilities& probs, std::span<const int> labels) {
  if (labels.size() != probs.rows) throw ShapeError("label count does not match prediction rows");
  Metrics m;
  m.accuracy = accuracy(probs.values, probs.classes, labels);
  m.auc_ovr = auc_ovr(probs.values, probs.classes, labels);
  m.log_loss = log_loss(probs.values, probs.classes, labels);
  m.n_test = labels.size();
  m.classes = probs.classes;
  return m;
}

Metrics evaluate_file(const std::string& input, const TabIclModel& model, const std::string& target,
                      double train_fraction, std::uint64_t seed, const EnsembleConfig& ensemble,
                      const InferenceOptions& inference) {
  const auto data = load_evaluation_csv(input, target, train_fraction, seed);
  const auto& t = data.table;
  const auto probs = ensemble_predict(model, t, data.n_classes(), ensemble, inference);
  auto m = evaluate(probs, std::span<const int>(t.labels).subspan(t.n_train));
  m.n_train = t.n_train;
  return m;
}

TABICL_NS_END
