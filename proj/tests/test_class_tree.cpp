#include <doctest.h>

#include <algorithm>
#include <set>

#include "tabicl/class_tree.hpp"
#include "tabicl/errors.hpp"

using namespace tabicl;

namespace {

std::size_t decimal_depth(std::size_t k) {
  std::size_t r = 0, p = 1;
  while (p < k) {
    p *= 10;
    ++r;
  }
  return r;
}

Tensor random_table(Rng& rng, std::size_t n, std::size_t m) {
  std::vector<Real> v(n * m);
  for (auto& x : v) x = static_cast<Real>(rng.normal());
  return Tensor::from_data({n, m}, std::move(v));
}

ClassProbabilities random_simplex_rows(Rng& rng, std::size_t rows, std::size_t classes) {
  ClassProbabilities p;
  p.rows = rows;
  p.classes = classes;
  p.values.resize(rows * classes);
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0;
    for (std::size_t c = 0; c < classes; ++c) s += (p.at(r, c) = rng.exponential(1.0));
    for (std::size_t c = 0; c < classes; ++c) p.at(r, c) /= s;
  }
  return p;
}

}  // namespace

TEST_CASE("tree shapes") {
  const auto t7 = ClassTree::build(7);
  CHECK(t7.nodes().size() == 1);
  CHECK(t7.root().is_leaf());
  CHECK(t7.depth() == 1);

  const auto t25 = ClassTree::build(25);
  CHECK(t25.depth() == 2);
  REQUIRE(t25.root().children.size() == 3);
  std::vector<std::size_t> sizes;
  for (auto c : t25.root().children) sizes.push_back(t25.nodes()[c].classes.size());
  CHECK(sizes == std::vector<std::size_t>{9, 8, 8});
  CHECK(t25.nodes()[t25.root().children[0]].classes == std::vector<int>{0, 3, 6, 9, 12, 15, 18, 21, 24});

  CHECK(ClassTree::build(1000).depth() == 3);
  CHECK_THROWS_AS(ClassTree::build(1), ShapeError);
}

TEST_CASE("depth law and partition invariants for k = 2..2000") {
  for (std::size_t k = 2; k <= 2000; ++k) {
    const auto tree = ClassTree::build(k);
    INFO("k = " << k);
    REQUIRE(tree.depth() == decimal_depth(k));
    std::multiset<int> seen;
    for (const auto& node : tree.nodes()) {
      REQUIRE(node.outputs() <= 10);
      REQUIRE(node.outputs() >= 2);
      if (node.is_leaf()) {
        seen.insert(node.classes.begin(), node.classes.end());
        continue;
      }
      std::size_t lo = k, hi = 0;
      for (auto c : node.children) {
        lo = std::min(lo, tree.nodes()[c].classes.size());
        hi = std::max(hi, tree.nodes()[c].classes.size());
      }
      REQUIRE(hi - lo <= 1);
    }
    REQUIRE(seen.size() == k);
    for (std::size_t c = 0; c < k; ++c) REQUIRE(seen.count(static_cast<int>(c)) == 1);
  }
}

TEST_CASE("chain rule with forced node outputs") {
  const auto tree = ClassTree::build(20);
  REQUIRE(tree.nodes().size() == 3);
  std::vector<ClassProbabilities> probs(3);
  for (std::size_t i = 0; i < 3; ++i) {
    const auto k = tree.nodes()[i].outputs();
    probs[i] = {2, k, std::vector<double>(2 * k, 1.0 / static_cast<double>(k))};
  }
  const auto out = combine_path_probabilities(tree, probs);
  CHECK(out.classes == 20);
  for (std::size_t r = 0; r < 2; ++r) {
    double s = 0;
    for (std::size_t c = 0; c < 20; ++c) {
      CHECK(out.at(r, c) == doctest::Approx(0.5 / 10));
      s += out.at(r, c);
    }
    CHECK(s == doctest::Approx(1.0));
  }
}

TEST_CASE("chain rule stays on the simplex") {
  Rng rng(3);
  for (std::size_t k : {11, 25, 137, 999}) {
    const auto tree = ClassTree::build(k);
    std::vector<ClassProbabilities> probs;
    for (const auto& node : tree.nodes()) probs.push_back(random_simplex_rows(rng, 5, node.outputs()));
    const auto out = combine_path_probabilities(tree, probs);
    for (std::size_t r = 0; r < 5; ++r) {
      double s = 0;
      for (std::size_t c = 0; c < k; ++c) s += out.at(r, c);
      CHECK(std::abs(s - 1) < 1e-6);
    }
  }
}

TEST_CASE("hierarchical prediction shares the row embeddings") {
  const TabIclModel model(ModelConfig::desk(), 5);
  Rng rng(6);
  const std::size_t n = 120, n_train = 100, k = 25;
  const auto x = random_table(rng, n, 4);
  std::vector<int> y(n_train);
  for (std::size_t i = 0; i < n_train; ++i) y[i] = static_cast<int>(i % k);
  rng.shuffle(y);
  model.counters().reset();
  const auto p = predict_with_tree(model, x, y, k);
  CHECK(model.counters().embed_table == 1);
  CHECK(model.counters().row_interact == 1);
  CHECK(model.counters().icl_forward == ClassTree::build(k).nodes().size());
  REQUIRE(p.rows == n - n_train);
  REQUIRE(p.classes == k);
  for (std::size_t r = 0; r < p.rows; ++r) {
    double s = 0;
    for (std::size_t c = 0; c < k; ++c) {
      CHECK(p.at(r, c) >= 0);
      s += p.at(r, c);
    }
    CHECK(std::abs(s - 1) < 1e-6);
  }
}

TEST_CASE("k <= 10 reduces to the flat path bitwise") {
  const TabIclModel model(ModelConfig::desk(), 8);
  Rng rng(9);
  const auto x = random_table(rng, 50, 3);
  for (std::size_t k : {2, 7, 10}) {
    std::vector<int> y(40);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = static_cast<int>(i % k);
    const auto flat = model.predict_dataset(x, y, k);
    const auto tree = predict_with_tree(model, x, y, k);
    CHECK(flat.values == tree.values);
    NoGradGuard guard;
    const auto via_h = predict_hierarchical(ClassTree::build(k), model.row_embeddings(x, y.size()), y, model);
    CHECK(flat.values == via_h.values);
  }
}

TEST_CASE("classes missing from the context get uniform branch probabilities") {
  const TabIclModel model(ModelConfig::desk(), 10);
  Rng rng(11);
  const auto x = random_table(rng, 60, 3);
  // Only classes of the first root group (0, 2, 4, ...) appear in the context.
  std::vector<int> y(50);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = static_cast<int>(2 * (i % 10));
  const auto p = predict_with_tree(model, x, y, 20);
  for (std::size_t r = 0; r < p.rows; ++r) {
    double s = 0;
    for (std::size_t c = 0; c < 20; ++c) s += p.at(r, c);
    CHECK(std::abs(s - 1) < 1e-6);
    CHECK(p.at(r, 1) == doctest::Approx(p.at(r, 3)));
  }
}
