#pragma once

// CSV input for labelled tables and the metric definitions used by eval.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tabicl/table.hpp"

namespace tabicl {

struct CsvData {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;  // 1-based line of each row
};

/// Splits one line; fields may be double-quoted with "" as an escaped quote.
std::vector<std::string> split_csv_line(const std::string& line, std::size_t line_number);
/// Header plus rows; blank lines and lines starting with '#' are skipped.
/// Throws DataError naming the line and column on malformed input.
CsvData read_csv(const std::string& path);

/// Empty, NA, NaN, ?, null (any case) mark a missing cell.
bool is_missing_cell(const std::string& cell);
/// Strict full-string number parse.
std::optional<double> parse_number(const std::string& cell);

/// A labelled table with the train rows first.
struct LabeledData {
  Table table;
  std::vector<std::size_t> row_ids;  // 0-based data row in the source file per table row
  std::vector<std::string> feature_names;
  std::vector<bool> categorical;
  std::vector<std::string> class_names;  // label index -> original text
  std::size_t n_classes() const { return class_names.size(); }
};

/// Rows with an empty target cell are the test rows. Labels are mapped to
/// 0..C-1 by sorted label text (numerically when every label is a number).
/// Non-numeric columns are ordinal-encoded by first appearance in train rows;
/// categories seen only in test rows become -1.
LabeledData load_prediction_csv(const std::string& path, const std::string& target);

/// Every row must be labelled; a seeded random `train_fraction` of rows forms the context.
LabeledData load_evaluation_csv(const std::string& path, const std::string& target, double train_fraction,
                                std::uint64_t seed);

/// probs is row-major [labels.size(), classes].
double accuracy(std::span<const double> probs, std::size_t classes, std::span<const int> labels);
/// Macro average of one-vs-rest ROC AUC over the classes present in `labels`;
/// empty when fewer than two classes are present.
std::optional<double> auc_ovr(std::span<const double> probs, std::size_t classes, std::span<const int> labels);
/// Mean of -log(max(p_true, 1e-15)).
double log_loss(std::span<const double> probs, std::size_t classes, std::span<const int> labels);

}  // namespace tabicl
