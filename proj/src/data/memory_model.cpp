#include "tabicl/memory_model.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "tabicl/errors.hpp"

namespace tabicl {

const char* stage_name(Stage stage) {
  switch (stage) {
    case Stage::col: return "col";
    case Stage::row: return "row";
    case Stage::icl: return "icl";
  }
  return "?";
}

Stage parse_stage(const std::string& name) {
  if (name == "col") return Stage::col;
  if (name == "row") return Stage::row;
  if (name == "icl") return Stage::icl;
  throw DataError("unknown transformer '" + name + "' (expected col, row or icl)");
}

MemoryModel MemoryModel::from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open memory model " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("memory model " + path + ": " + e.what());
  }
  MemoryModel m;
  for (Stage s : {Stage::col, Stage::row, Stage::icl}) {
    if (!j.contains(stage_name(s))) continue;
    const auto& c = j.at(stage_name(s));
    auto& out = m[s];
    try {
      out.a1 = c.value("a1", out.a1);
      out.a2 = c.value("a2", out.a2);
      out.a3 = c.value("a3", out.a3);
      out.a4 = c.value("a4", out.a4);
    } catch (const nlohmann::json::exception& e) {
      throw DataError("memory model " + path + ": " + e.what());
    }
  }
  return m;
}

std::string MemoryModel::to_json() const {
  nlohmann::json j;
  for (Stage s : {Stage::col, Stage::row, Stage::icl}) {
    const auto& c = (*this)[s];
    j[stage_name(s)] = {{"a1", c.a1}, {"a2", c.a2}, {"a3", c.a3}, {"a4", c.a4}};
  }
  return j.dump();
}

double estimate_memory(Stage stage, double batch, double seq, const MemoryModel& model) {
  const auto& c = model[stage];
  return c.a1 * batch + c.a2 * seq + c.a3 * batch * seq + c.a4;
}

std::size_t plan_batch(Stage stage, std::size_t seq, double budget_mb, const MemoryModel& model) {
  if (seq == 0) throw DataError("plan_batch: sequence length must be positive");
  const auto& c = model[stage];
  const double s = static_cast<double>(seq);
  if (estimate_memory(stage, 1, s, model) > budget_mb) {
    throw DataError(std::string("memory budget of ") + std::to_string(budget_mb) + " MB cannot hold one " +
                    stage_name(stage) + " batch at sequence length " + std::to_string(seq));
  }
  const double slope = c.a1 + c.a3 * s;
  if (slope <= 0) return kUnboundedBatch;
  const double raw = std::floor((budget_mb - c.a2 * s - c.a4) / slope);
  if (raw >= 9e15) return kUnboundedBatch;
  auto b = static_cast<std::size_t>(std::max(1.0, raw));
  // The closed form can be one off after rounding; settle it against the estimate itself.
  while (b > 1 && estimate_memory(stage, static_cast<double>(b), s, model) > budget_mb) --b;
  while (estimate_memory(stage, static_cast<double>(b + 1), s, model) <= budget_mb) ++b;
  return b;
}

}  // namespace tabicl
