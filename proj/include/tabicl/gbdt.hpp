#pragma once

// Small gradient-boosted regression trees (squared loss, exact greedy splits).

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace tabicl {

/// Row indices sorted by each feature (ties by index).
std::vector<std::vector<std::uint32_t>> presort(std::span<const double> x, std::size_t n, std::size_t features);

class RegressionTree {
 public:
  /// x is row-major [n, features]; fits residual targets r.
  void fit(std::span<const double> x, std::size_t n, std::size_t features, std::span<const double> r,
           std::size_t max_depth, std::size_t min_leaf = 1);
  /// Same, with per-feature row orders from presort(); grows the tree level by level.
  void fit_presorted(std::span<const double> x, std::size_t n, std::size_t features,
                     const std::vector<std::vector<std::uint32_t>>& sorted, std::span<const double> r,
                     std::size_t max_depth, std::size_t min_leaf = 1);
  double predict(std::span<const double> row) const;
  std::size_t leaf_count() const;
  std::size_t depth() const;

 private:
  struct Node {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0;
    double value = 0;
    std::size_t left = 0, right = 0;
  };
  std::vector<Node> nodes_;
};

struct BoostingParams {
  std::size_t n_estimators = 1;
  std::size_t max_depth = 2;
  double learning_rate = 0.3;
};

class GradientBoostedTrees {
 public:
  void fit(std::span<const double> x, std::size_t n, std::size_t features, std::span<const double> y,
           const BoostingParams& params);
  /// Same, reusing presort(x) across fits on one input.
  void fit_presorted(std::span<const double> x, std::size_t n, std::size_t features,
                     const std::vector<std::vector<std::uint32_t>>& sorted, std::span<const double> y,
                     const BoostingParams& params);
  double predict(std::span<const double> row) const;
  const std::vector<RegressionTree>& trees() const { return trees_; }
  /// Upper bound on the number of distinct predictions: product of leaf counts.
  double distinct_value_bound() const;

 private:
  double base_ = 0;
  double learning_rate_ = 0.3;
  std::vector<RegressionTree> trees_;
};

}  // namespace tabicl
