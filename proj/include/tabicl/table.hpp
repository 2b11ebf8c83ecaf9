#pragma once

#include <cstddef>
#include <vector>

namespace tabicl {

/// An n x m numeric table whose first `n_train` rows form the labelled context.
struct Table {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<float> values;  // row-major, rows * cols
  std::size_t n_train = 0;
  /// Labels for at least the train rows; may cover all rows when test labels are known.
  std::vector<int> labels;

  float at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
  std::size_t n_test() const { return rows - n_train; }
  bool has_test_labels() const { return labels.size() == rows; }
  /// Throws DataError on inconsistent sizes, an empty train part, or an empty table.
  void validate() const;
  /// Rows reordered by `order` (labels follow when present for every row).
  Table select_rows(const std::vector<std::size_t>& order, std::size_t new_n_train) const;
  /// Columns reordered by `order`.
  Table select_columns(const std::vector<std::size_t>& order) const;
};

}  // namespace tabicl
