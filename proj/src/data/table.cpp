#include "tabicl/table.hpp"

#include <string>

#include "tabicl/errors.hpp"

namespace tabicl {

void Table::validate() const {
  if (rows == 0 || cols == 0) throw DataError("empty table");
  if (values.size() != rows * cols) throw DataError("table value count does not match shape");
  if (n_train == 0 || n_train > rows) throw DataError("table needs 1..rows train rows, got " + std::to_string(n_train));
  if (labels.size() < n_train) throw DataError("missing labels for train rows");
}

Table Table::select_rows(const std::vector<std::size_t>& order, std::size_t new_n_train) const {
  Table t;
  t.rows = order.size();
  t.cols = cols;
  t.n_train = new_n_train;
  t.values.reserve(t.rows * cols);
  const bool all_labels = has_test_labels();
  for (auto r : order) {
    for (std::size_t c = 0; c < cols; ++c) t.values.push_back(at(r, c));
  }
  if (all_labels) {
    for (auto r : order) t.labels.push_back(labels[r]);
  } else {
    for (std::size_t i = 0; i < new_n_train; ++i) t.labels.push_back(labels.at(order[i]));
  }
  return t;
}

Table Table::select_columns(const std::vector<std::size_t>& order) const {
  Table t = *this;
  t.cols = order.size();
  t.values.resize(rows * t.cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < order.size(); ++j) t.values[r * t.cols + j] = at(r, order[j]);
  return t;
}

}  // namespace tabicl
