#pragma once

// Per-column feature transforms fitted on the context rows of a table.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "tabicl/table.hpp"

namespace tabicl {

enum class PreprocessKind { znorm, power_then_znorm };

const char* preprocess_name(PreprocessKind kind);

/// Yeo-Johnson transform; monotone in x for every lambda.
double yeo_johnson(double x, double lambda);
/// Gaussian profile log-likelihood of lambda for the Yeo-Johnson family.
double yeo_johnson_loglik(std::span<const double> x, double lambda);
/// Maximizer of the log-likelihood over lambda in {-2, -1.95, ..., 2}.
double fit_yeo_johnson_lambda(std::span<const double> x);

struct ColumnTransform {
  double impute = 0;  // train mean of the observed values
  bool power = false;
  double lambda = 1;
  double mean = 0;
  double scale = 0;  // 0 marks a constant column
};

class Preprocessor {
 public:
  /// Fits on the first `table.n_train` rows only; missing cells (NaN) are ignored
  /// for the statistics and later imputed with the train mean.
  static Preprocessor fit(const Table& table, PreprocessKind kind);

  double apply(std::size_t col, double value) const;
  /// Transformed copy of every row; the result has no missing values.
  Table transform(const Table& table) const;

  PreprocessKind kind() const { return kind_; }
  const std::vector<ColumnTransform>& columns() const { return columns_; }

 private:
  PreprocessKind kind_ = PreprocessKind::znorm;
  std::vector<ColumnTransform> columns_;
};

}  // namespace tabicl
