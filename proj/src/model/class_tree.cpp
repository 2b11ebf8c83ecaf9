#include "tabicl/class_tree.hpp"

#include <algorithm>
#include <functional>

#include "tabicl/errors.hpp"

TABICL_NS_BEGIN

ClassTree ClassTree::build(std::size_t k, std::size_t c_max) {
  if (k < 2) throw ShapeError("class tree needs at least 2 classes");
  if (c_max < 2) throw ShapeError("class tree needs c_max >= 2");
  ClassTree tree;
  tree.k_ = k;
  ClassTreeNode root;
  for (std::size_t c = 0; c < k; ++c) root.classes.push_back(static_cast<int>(c));
  tree.nodes_.push_back(std::move(root));
  // Breadth-first; nodes_ grows while we walk it.
  for (std::size_t i = 0; i < tree.nodes_.size(); ++i) {
    const std::size_t j = tree.nodes_[i].classes.size();
    if (j <= c_max) continue;
    const std::size_t groups = std::min(c_max, (j + c_max - 1) / c_max);
    std::vector<ClassTreeNode> kids(groups);
    for (std::size_t p = 0; p < j; ++p) kids[p % groups].classes.push_back(tree.nodes_[i].classes[p]);
    for (auto& kid : kids) {
      kid.level = tree.nodes_[i].level + 1;
      tree.nodes_[i].children.push_back(tree.nodes_.size());
      tree.nodes_.push_back(std::move(kid));
    }
  }
  return tree;
}

std::size_t ClassTree::depth() const {
  std::size_t d = 0;
  for (const auto& n : nodes_) d = std::max(d, n.level + 1);
  return d;
}

std::vector<std::pair<std::size_t, std::size_t>> ClassTree::path(int cls) const {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  std::size_t at = 0;
  while (true) {
    const auto& node = nodes_[at];
    if (node.is_leaf()) {
      const auto it = std::find(node.classes.begin(), node.classes.end(), cls);
      if (it == node.classes.end()) throw ShapeError("class " + std::to_string(cls) + " is not in the tree");
      out.emplace_back(at, static_cast<std::size_t>(it - node.classes.begin()));
      return out;
    }
    bool found = false;
    for (std::size_t g = 0; g < node.children.size() && !found; ++g) {
      const auto& kid = nodes_[node.children[g]].classes;
      if (std::binary_search(kid.begin(), kid.end(), cls)) {
        out.emplace_back(at, g);
        at = node.children[g];
        found = true;
      }
    }
    if (!found) throw ShapeError("class " + std::to_string(cls) + " is not in the tree");
  }
}

ClassProbabilities combine_path_probabilities(const ClassTree& tree, const std::vector<ClassProbabilities>& node_probs) {
  if (node_probs.size() != tree.nodes().size()) throw ShapeError("one probability table per tree node expected");
  const std::size_t rows = node_probs.front().rows;
  for (std::size_t i = 0; i < node_probs.size(); ++i) {
    if (node_probs[i].rows != rows || node_probs[i].classes != tree.nodes()[i].outputs())
      throw ShapeError("node probability table has the wrong shape");
  }
  ClassProbabilities out;
  out.rows = rows;
  out.classes = tree.n_classes();
  out.values.assign(rows * out.classes, 0.0);
  for (std::size_t c = 0; c < out.classes; ++c) {
    const auto steps = tree.path(static_cast<int>(c));
    for (std::size_t r = 0; r < rows; ++r) {
      double p = 1;
      for (const auto& [node, branch] : steps) p *= node_probs[node].at(r, branch);
      out.at(r, c) = p;
    }
  }
  return out;
}

ClassProbabilities predict_hierarchical(const ClassTree& tree, const Tensor& h, std::span<const int> y_train,
                                        const TabIclModel& model) {
  NoGradGuard guard;
  const std::size_t n = h.dim(0), width = h.dim(1), n_train = y_train.size();
  if (n_train >= n) throw ShapeError("predict_hierarchical: no test rows");
  const std::size_t n_test = n - n_train;
  if (tree.nodes().size() == 1) return model.predict_from_embeddings(h, y_train, tree.n_classes());

  const auto hd = h.data();
  std::vector<ClassProbabilities> node_probs(tree.nodes().size());
  for (std::size_t i = 0; i < tree.nodes().size(); ++i) {
    const auto& node = tree.nodes()[i];
    // Branch index of every class under this node.
    std::vector<int> branch(tree.n_classes(), -1);
    for (std::size_t g = 0; g < node.outputs(); ++g) {
      if (node.is_leaf()) {
        branch[static_cast<std::size_t>(node.classes[g])] = static_cast<int>(g);
      } else {
        for (int c : tree.nodes()[node.children[g]].classes) branch[static_cast<std::size_t>(c)] = static_cast<int>(g);
      }
    }
    std::vector<std::size_t> rows;
    std::vector<int> labels;
    for (std::size_t r = 0; r < n_train; ++r) {
      const int y = y_train[r];
      if (y < 0 || static_cast<std::size_t>(y) >= tree.n_classes()) throw ShapeError("train label out of range");
      if (branch[static_cast<std::size_t>(y)] >= 0) {
        rows.push_back(r);
        labels.push_back(branch[static_cast<std::size_t>(y)]);
      }
    }
    ClassProbabilities& p = node_probs[i];
    if (rows.empty()) {
      // None of this node's classes occur in the context: uniform over its branches.
      p.rows = n_test;
      p.classes = node.outputs();
      p.values.assign(n_test * p.classes, 1.0 / static_cast<double>(p.classes));
      continue;
    }
    std::vector<Real> sub((rows.size() + n_test) * width);
    std::size_t at = 0;
    for (auto r : rows) std::copy_n(hd.begin() + static_cast<long>(r * width), width, sub.begin() + static_cast<long>(width * at++));
    std::copy(hd.begin() + static_cast<long>(n_train * width), hd.end(), sub.begin() + static_cast<long>(width * at));
    const Tensor h_sub = Tensor::from_data({rows.size() + n_test, width}, std::move(sub));
    p = model.predict_from_embeddings(h_sub, labels, node.outputs());
  }
  return combine_path_probabilities(tree, node_probs);
}

ClassProbabilities predict_with_tree(const TabIclModel& model, const Tensor& x, std::span<const int> y_train,
                                     std::size_t k) {
  if (k <= model.config().icl.c_max) return model.predict_dataset(x, y_train, k);
  NoGradGuard guard;
  const auto tree = ClassTree::build(k, model.config().icl.c_max);
  return predict_hierarchical(tree, model.row_embeddings(x, y_train.size()), y_train, model);
}

TABICL_NS_END
