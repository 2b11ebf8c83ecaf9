#pragma once

// Peak-memory regression per transformer and the batch planner built on it.

#include <array>
#include <cstddef>
#include <limits>
#include <string>

namespace tabicl {

/// col: batch = features, seq = samples; row: batch = samples, seq = features;
/// icl: batch = datasets, seq = samples.
enum class Stage { col, row, icl };

const char* stage_name(Stage stage);
Stage parse_stage(const std::string& name);

/// MEM = a1*batch + a2*seq + a3*batch*seq + a4, in MB.
struct MemoryCoefficients {
  double a1 = 0, a2 = 0, a3 = 0, a4 = 0;
};

struct MemoryModel {
  std::array<MemoryCoefficients, 3> stages{{
      {0.0708, 7.29e-6, 0.00391, 137.62},
      {-2.07e-5, 2.27e-4, 0.00537, 138.54},
      {-0.260, 4.77e-7, 0.0195, 140.58},
  }};

  const MemoryCoefficients& operator[](Stage s) const { return stages[static_cast<std::size_t>(s)]; }
  MemoryCoefficients& operator[](Stage s) { return stages[static_cast<std::size_t>(s)]; }

  /// Reads {"col": {"a1":..,"a2":..,"a3":..,"a4":..}, "row": .., "icl": ..};
  /// stages or coefficients absent from the file keep their defaults.
  static MemoryModel from_json_file(const std::string& path);
  std::string to_json() const;
};

double estimate_memory(Stage stage, double batch, double seq, const MemoryModel& model = {});

/// Returned when memory does not grow with the batch size at this sequence length.
inline constexpr std::size_t kUnboundedBatch = std::numeric_limits<std::size_t>::max();

/// Largest batch b >= 1 with estimate_memory(b) <= budget_mb. Throws DataError
/// when even a batch of one does not fit.
std::size_t plan_batch(Stage stage, std::size_t seq, double budget_mb, const MemoryModel& model = {});

}  // namespace tabicl
