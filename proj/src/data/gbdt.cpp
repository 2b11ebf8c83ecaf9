#include "tabicl/gbdt.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace tabicl {

std::vector<std::vector<std::uint32_t>> presort(std::span<const double> x, std::size_t n, std::size_t features) {
  std::vector<std::vector<std::uint32_t>> sorted(features, std::vector<std::uint32_t>(n));
  for (std::size_t f = 0; f < features; ++f) {
    auto& o = sorted[f];
    std::iota(o.begin(), o.end(), 0u);
    std::sort(o.begin(), o.end(), [&](std::uint32_t a, std::uint32_t b) {
      const double xa = x[a * features + f], xb = x[b * features + f];
      return xa < xb || (xa == xb && a < b);
    });
  }
  return sorted;
}

void RegressionTree::fit(std::span<const double> x, std::size_t n, std::size_t features,
                         std::span<const double> r, std::size_t max_depth, std::size_t min_leaf) {
  if (x.size() != n * features) throw std::invalid_argument("tree fit: bad shapes");
  fit_presorted(x, n, features, presort(x, n, features), r, max_depth, min_leaf);
}

void RegressionTree::fit_presorted(std::span<const double> x, std::size_t n, std::size_t features,
                                   const std::vector<std::vector<std::uint32_t>>& sorted,
                                   std::span<const double> r, std::size_t max_depth, std::size_t min_leaf) {
  if (n == 0 || x.size() != n * features || r.size() != n || sorted.size() != features) {
    throw std::invalid_argument("tree fit: bad shapes");
  }
  min_leaf = std::max<std::size_t>(1, min_leaf);
  nodes_.assign(1, {});
  std::vector<std::size_t> node_of(n, 0);
  std::vector<double> sum(1, 0.0);
  std::vector<std::size_t> count(1, n);
  for (std::size_t i = 0; i < n; ++i) sum[0] += r[i];
  nodes_[0].value = sum[0] / static_cast<double>(n);

  std::vector<std::size_t> frontier{0};
  for (std::size_t depth = 0; depth < max_depth && !frontier.empty(); ++depth) {
    // Split search over every frontier node at once, one sweep per feature.
    const std::size_t total_nodes = nodes_.size();
    std::vector<double> best_gain(total_nodes), best_thr(total_nodes, 0.0);
    std::vector<int> best_feat(total_nodes, -1);
    std::vector<char> active(total_nodes, 0);
    for (std::size_t k : frontier) active[k] = 1;
    for (std::size_t k : frontier) best_gain[k] = sum[k] * sum[k] / static_cast<double>(count[k]) + 1e-12;
    std::vector<double> left(total_nodes), last(total_nodes);
    std::vector<std::size_t> seen(total_nodes);
    for (std::size_t f = 0; f < features; ++f) {
      std::fill(left.begin(), left.end(), 0.0);
      std::fill(seen.begin(), seen.end(), 0);
      for (const std::uint32_t i : sorted[f]) {
        const std::size_t k = node_of[i];
        if (!active[k] || count[k] < 2 * min_leaf) continue;
        const double xv = x[i * features + f];
        const std::size_t nl = seen[k], nr = count[k] - nl;
        if (nl >= min_leaf && nr >= min_leaf && last[k] != xv) {
          const double right = sum[k] - left[k];
          const double gain = left[k] * left[k] / static_cast<double>(nl) + right * right / static_cast<double>(nr);
          if (gain > best_gain[k]) {
            best_gain[k] = gain;
            best_feat[k] = static_cast<int>(f);
            double thr = 0.5 * (last[k] + xv);
            if (thr <= last[k]) thr = xv;
            best_thr[k] = thr;
          }
        }
        left[k] += r[i];
        last[k] = xv;
        ++seen[k];
      }
    }
    std::vector<std::size_t> next;
    for (std::size_t k : frontier) {
      if (best_feat[k] < 0) continue;
      nodes_[k].feature = best_feat[k];
      nodes_[k].threshold = best_thr[k];
      nodes_[k].left = nodes_.size();
      nodes_[k].right = nodes_.size() + 1;
      nodes_.push_back({});
      nodes_.push_back({});
      sum.resize(nodes_.size(), 0.0);
      count.resize(nodes_.size(), 0);
      next.push_back(nodes_[k].left);
      next.push_back(nodes_[k].right);
    }
    for (std::size_t i = 0; i < n; ++i) {
      const auto& nd = nodes_[node_of[i]];
      if (nd.feature < 0) continue;
      const std::size_t child = x[i * features + static_cast<std::size_t>(nd.feature)] < nd.threshold ? nd.left : nd.right;
      node_of[i] = child;
      sum[child] += r[i];
      ++count[child];
    }
    for (std::size_t k : next) nodes_[k].value = sum[k] / static_cast<double>(count[k]);
    frontier = std::move(next);
  }
}

double RegressionTree::predict(std::span<const double> row) const {
  std::size_t at = 0;
  while (nodes_[at].feature >= 0) {
    const auto& nd = nodes_[at];
    at = row[static_cast<std::size_t>(nd.feature)] < nd.threshold ? nd.left : nd.right;
  }
  return nodes_[at].value;
}

std::size_t RegressionTree::leaf_count() const {
  return static_cast<std::size_t>(std::count_if(nodes_.begin(), nodes_.end(), [](const Node& n) { return n.feature < 0; }));
}

std::size_t RegressionTree::depth() const {
  std::vector<std::size_t> d(nodes_.size(), 0);
  std::size_t deepest = 0;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    deepest = std::max(deepest, d[i]);
    if (nodes_[i].feature >= 0) d[nodes_[i].left] = d[nodes_[i].right] = d[i] + 1;
  }
  return deepest;
}

void GradientBoostedTrees::fit(std::span<const double> x, std::size_t n, std::size_t features,
                               std::span<const double> y, const BoostingParams& params) {
  if (n == 0 || y.size() != n || x.size() != n * features) throw std::invalid_argument("boosting fit: bad shapes");
  fit_presorted(x, n, features, presort(x, n, features), y, params);
}

void GradientBoostedTrees::fit_presorted(std::span<const double> x, std::size_t n, std::size_t features,
                                         const std::vector<std::vector<std::uint32_t>>& sorted,
                                         std::span<const double> y, const BoostingParams& params) {
  if (n == 0 || y.size() != n || x.size() != n * features) throw std::invalid_argument("boosting fit: bad shapes");
  learning_rate_ = params.learning_rate;
  base_ = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
  std::vector<double> pred(n, base_), resid(n);
  trees_.assign(params.n_estimators, {});
  for (auto& tree : trees_) {
    for (std::size_t i = 0; i < n; ++i) resid[i] = y[i] - pred[i];
    tree.fit_presorted(x, n, features, sorted, resid, params.max_depth);
    for (std::size_t i = 0; i < n; ++i) pred[i] += learning_rate_ * tree.predict(x.subspan(i * features, features));
  }
}

double GradientBoostedTrees::predict(std::span<const double> row) const {
  double v = base_;
  for (const auto& t : trees_) v += learning_rate_ * t.predict(row);
  return v;
}

double GradientBoostedTrees::distinct_value_bound() const {
  double b = 1;
  for (const auto& t : trees_) b *= static_cast<double>(t.leaf_count());
  return b;
}

}  // namespace tabicl
