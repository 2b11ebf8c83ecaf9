#pragma once

// Hierarchical classification for more classes than the ICL head supports.

#include <cstddef>
#include <span>
#include <vector>

#include "tabicl/model.hpp"

TABICL_NS_BEGIN

struct ClassTreeNode {
  std::vector<int> classes;           // member classes, ascending
  std::vector<std::size_t> children;  // node indices; empty for a leaf
  std::size_t level = 0;              // root is level 0

  bool is_leaf() const { return children.empty(); }
  /// Outputs of this node's classifier: child groups, or classes at a leaf.
  std::size_t outputs() const { return is_leaf() ? classes.size() : children.size(); }
};

class ClassTree {
 public:
  /// A node with j > c_max members is dealt round-robin (by class index) into
  /// min(c_max, ceil(j / c_max)) groups; nodes with j <= c_max are leaves.
  static ClassTree build(std::size_t k, std::size_t c_max = 10);

  const std::vector<ClassTreeNode>& nodes() const { return nodes_; }
  const ClassTreeNode& root() const { return nodes_.front(); }
  std::size_t n_classes() const { return k_; }
  /// Number of classifier levels on the longest root-to-leaf path.
  std::size_t depth() const;
  /// Node indices from the root to the leaf holding `cls`, with the output index taken at each.
  std::vector<std::pair<std::size_t, std::size_t>> path(int cls) const;

 private:
  std::size_t k_ = 0;
  std::vector<ClassTreeNode> nodes_;
};

/// Chain rule: p(c) = product over the path of the node probability of the
/// branch leading to c. node_probs[i] is [rows, nodes()[i].outputs()].
ClassProbabilities combine_path_probabilities(const ClassTree& tree, const std::vector<ClassProbabilities>& node_probs);

/// Runs one ICL pass per tree node on the shared row embeddings h [n, D];
/// each node sees the train rows of its classes, relabelled by child group.
ClassProbabilities predict_hierarchical(const ClassTree& tree, const Tensor& h, std::span<const int> y_train,
                                        const TabIclModel& model);

/// Embeds the table once, then predicts through the class tree. For k <= c_max
/// this is exactly predict_dataset.
ClassProbabilities predict_with_tree(const TabIclModel& model, const Tensor& x, std::span<const int> y_train,
                                     std::size_t k);

TABICL_NS_END
