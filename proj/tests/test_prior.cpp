#include <doctest.h>

#include <omp.h>

#include <algorithm>
#include <cstring>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "tabicl/errors.hpp"
#include "tabicl/gbdt.hpp"
#include "tabicl/prior.hpp"

using namespace tabicl;

namespace {

PriorConfig small_config() {
  PriorConfig c;
  c.min_samples = 64;
  c.max_samples = 128;
  return c;
}

// Rank of a row-major matrix by Gaussian elimination with partial pivoting.
std::size_t numeric_rank(std::vector<double> a, std::size_t rows, std::size_t cols, double tol) {
  std::size_t rank = 0;
  for (std::size_t c = 0; c < cols && rank < rows; ++c) {
    std::size_t best = rank;
    for (std::size_t r = rank; r < rows; ++r)
      if (std::abs(a[r * cols + c]) > std::abs(a[best * cols + c])) best = r;
    if (std::abs(a[best * cols + c]) <= tol) continue;
    for (std::size_t k = 0; k < cols; ++k) std::swap(a[rank * cols + k], a[best * cols + k]);
    for (std::size_t r = rank + 1; r < rows; ++r) {
      const double f = a[r * cols + c] / a[rank * cols + c];
      for (std::size_t k = c; k < cols; ++k) a[r * cols + k] -= f * a[rank * cols + k];
    }
    ++rank;
  }
  return rank;
}

bool same_dataset(const SyntheticDataset& a, const SyntheticDataset& b) {
  return a.n == b.n && a.m == b.m && a.n_classes == b.n_classes && a.kind == b.kind && a.y == b.y &&
         a.x.size() == b.x.size() && std::memcmp(a.x.data(), b.x.data(), a.x.size() * sizeof(float)) == 0;
}

}  // namespace

TEST_CASE("identity activation with a=b=0 is exactly standardization") {
  Rng rng(1);
  Matrix x(7, 3);
  for (auto& v : x.v) v = rng.normal(2.0, 3.0);
  Matrix expected = x;
  for (std::size_t c = 0; c < 3; ++c) {
    double mean = 0, var = 0;
    for (std::size_t r = 0; r < 7; ++r) mean += x.at(r, c);
    mean /= 7;
    for (std::size_t r = 0; r < 7; ++r) var += (x.at(r, c) - mean) * (x.at(r, c) - mean);
    const double sd = std::sqrt(var / 7);
    for (std::size_t r = 0; r < 7; ++r) expected.at(r, c) = (x.at(r, c) - mean) / sd;
  }
  Matrix got = x;
  activation_layer(got, ActivationKind::identity, rng, Rescale{0, 0});
  CHECK(got.v == expected.v);
}

TEST_CASE("rbf of a standardized zero is one") {
  Rng rng(2);
  Matrix x(3, 1);
  x.v = {-1.0, 0.0, 1.0};
  activation_layer(x, ActivationKind::rbf, rng, Rescale{0, 0});
  CHECK(x.at(1, 0) == 1.0);
  CHECK(x.at(0, 0) == doctest::Approx(std::exp(-1.5)));
}

TEST_CASE("activation layer contract") {
  Rng rng(3);
  Matrix one(1, 4);
  CHECK_THROWS_AS(activation_layer(one, ActivationKind::tanh, rng), DataError);

  Matrix x(50, 4);
  for (auto& v : x.v) v = rng.normal();
  Matrix a = x, b = x;
  Rng r1(9), r2(9);
  activation_layer(a, ActivationKind::random_fourier, r1);
  activation_layer(b, ActivationKind::random_fourier, r2);
  CHECK(a.v == b.v);
  for (double v : a.v) CHECK(std::isfinite(v));

  // Output is a non-trivial function of its input.
  Rng r3(10);
  const RandomFourierActivation f(r3);
  CHECK(f(0.3) != f(1.7));
  CHECK(std::isfinite(f(1e3)));
}

TEST_CASE("every activation is finite on a standardized batch") {
  for (std::size_t k = 0; k < kActivationKinds; ++k) {
    Rng rng(100 + k);
    Matrix x(64, 5);
    for (auto& v : x.v) v = rng.normal(0, 10);
    activation_layer(x, static_cast<ActivationKind>(k), rng);
    for (double v : x.v) REQUIRE(std::isfinite(v));
  }
}

TEST_CASE("random_fourier is drawn ten times as often as any other kind") {
  Rng rng(4);
  std::array<std::size_t, kActivationKinds> counts{};
  const std::size_t draws = 280000;
  for (std::size_t i = 0; i < draws; ++i) ++counts[static_cast<std::size_t>(sample_activation(rng))];
  // Weights 18 x 1 + 10 -> random_fourier has probability 10/28.
  const double p_rf = static_cast<double>(counts[static_cast<std::size_t>(ActivationKind::random_fourier)]) / draws;
  CHECK(p_rf == doctest::Approx(10.0 / 28).epsilon(0.02));
  for (std::size_t k = 0; k + 1 < kActivationKinds; ++k)
    CHECK(static_cast<double>(counts[k]) / draws == doctest::Approx(1.0 / 28).epsilon(0.06));
}

TEST_CASE("quantile labels") {
  const std::vector<double> t = {1, 2, 3, 4};
  const std::vector<double> median = {0.5};
  CHECK(labels_from_quantiles(t, median) == std::vector<int>{0, 0, 1, 1});
  const std::vector<double> shuffled = {4, 1, 3, 2};
  CHECK(labels_from_quantiles(shuffled, median) == std::vector<int>{1, 0, 1, 0});
}

TEST_CASE("discretize_target rejects degenerate targets") {
  Rng rng(5);
  const std::vector<double> constant(20, 3.0);
  CHECK_THROWS_AS(discretize_target(constant, 2, rng), DataError);
  const std::vector<double> tiny = {1, 2, 3};
  CHECK_THROWS_AS(discretize_target(tiny, 2, rng), DataError);
}

TEST_CASE("discretize_target never leaves a class empty") {
  Rng rng(6);
  for (int draw = 0; draw < 500; ++draw) {
    const auto n = static_cast<std::size_t>(rng.uniform_int(20, 300));
    const auto c = static_cast<std::size_t>(rng.uniform_int(2, 10));
    std::vector<double> t(n);
    for (auto& v : t) v = rng.normal();
    const auto labels = discretize_target(t, c, rng);
    std::vector<std::size_t> hist(c, 0);
    for (int y : labels) {
      REQUIRE(y >= 0);
      REQUIRE(static_cast<std::size_t>(y) < c);
      ++hist[static_cast<std::size_t>(y)];
    }
    for (auto h : hist) REQUIRE(h >= 2);
  }
}

TEST_CASE("linear SCM without noise has feature rank at most the input width") {
  PriorConfig c = small_config();
  c.force_activation = ActivationKind::identity;
  c.disable_noise = true;
  c.min_inputs = c.max_inputs = 3;
  c.min_features = 8;
  c.max_features = 12;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const auto ds = gen_scm_dataset(c, rng);
    // Centered columns are linear in the 3 input noise columns.
    std::vector<double> a(ds.n * ds.m);
    for (std::size_t j = 0; j < ds.m; ++j) {
      double mean = 0;
      for (std::size_t i = 0; i < ds.n; ++i) mean += ds.x[i * ds.m + j];
      mean /= static_cast<double>(ds.n);
      for (std::size_t i = 0; i < ds.n; ++i) a[i * ds.m + j] = ds.x[i * ds.m + j] - mean;
    }
    double scale = 0;
    for (double v : a) scale = std::max(scale, std::abs(v));
    CHECK(numeric_rank(a, ds.n, ds.m, 1e-4 * scale) <= 3);
  }
  // Control: with tanh the same shapes are full rank.
  c.force_activation = ActivationKind::tanh;
  Rng rng(0);
  const auto ds = gen_scm_dataset(c, rng);
  std::vector<double> a(ds.x.begin(), ds.x.end());
  CHECK(numeric_rank(a, ds.n, ds.m, 1e-4) > 3);
}

TEST_CASE("generated datasets satisfy the dataset invariants") {
  const PriorConfig c = small_config();
  std::size_t trees = 0;
  for (std::uint64_t i = 0; i < 1000; ++i) {
    const auto ds = sample_prior_dataset(c, derive_seed(21, i));
    INFO("seed index " << i);
    REQUIRE(dataset_violation(ds).empty());
    CHECK(ds.m <= 100);
    CHECK(ds.n_classes <= 10);
    CHECK(ds.n >= c.min_samples);
    CHECK(ds.n <= c.max_samples);
    trees += ds.kind == PriorKind::tree_scm;
  }
  CHECK(trees > 200);
  CHECK(trees < 400);
}

TEST_CASE("tree/scm mixture fraction") {
  PriorConfig c = small_config();
  c.max_features = 4;
  std::size_t trees = 0;
  const std::size_t total = 2000;
  const auto batch = sample_prior_batch(total, c, 77);
  for (const auto& ds : batch) trees += ds.kind == PriorKind::tree_scm;
  // sd of the fraction is about 0.0102; this is a 4 sigma window.
  const double frac = static_cast<double>(trees) / total;
  CHECK(frac >= 0.26);
  CHECK(frac <= 0.34);
}

TEST_CASE("tree hyperparameters are clamped") {
  Rng rng(8);
  std::array<std::size_t, 5> est{}, depth{};
  const std::size_t draws = 100000;
  for (std::size_t i = 0; i < draws; ++i) {
    const auto e = sample_tree_estimators(rng), d = sample_tree_depth(rng);
    REQUIRE(e >= 1);
    REQUIRE(e <= 4);
    REQUIRE(d >= 2);
    REQUIRE(d <= 4);
    ++est[e];
    ++depth[d];
  }
  // floor(Exp(0.5)) = 0 with probability 1 - exp(-0.5).
  CHECK(static_cast<double>(est[1]) / draws == doctest::Approx(1 - std::exp(-0.5)).epsilon(0.02));
  CHECK(static_cast<double>(depth[4]) / draws == doctest::Approx(std::exp(-1.0)).epsilon(0.02));
}

TEST_CASE("tree layers are piecewise constant") {
  const PriorConfig c = small_config();
  std::size_t layers = 0;
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    Rng rng(seed);
    SyntheticDataset ds;
    try {
      ds = gen_tree_scm_dataset(c, rng);
    } catch (const DataError&) {
      continue;
    }
    for (const auto& s : ds.tree_stats) {
      ++layers;
      CHECK(s.n_estimators <= 4);
      CHECK(s.max_depth <= 4);
      // Each tree has at most 2^depth leaves; the sum takes at most one value per leaf combination.
      const double leaf_product = std::pow(std::pow(2.0, static_cast<double>(s.max_depth)), static_cast<double>(s.n_estimators));
      CHECK(static_cast<double>(s.distinct_observed) <= s.distinct_bound);
      CHECK(s.distinct_bound <= leaf_product);
      if (s.n_estimators == 1) CHECK(static_cast<double>(s.distinct_observed) <= std::pow(2.0, static_cast<double>(s.max_depth)) + 1);
    }
  }
  CHECK(layers > 0);
}

TEST_CASE("regression tree recovers an axis-aligned step") {
  const std::size_t n = 200;
  std::vector<double> x(n * 2), y(n);
  Rng rng(9);
  for (std::size_t i = 0; i < n; ++i) {
    x[2 * i] = rng.uniform(-1, 1);
    x[2 * i + 1] = rng.uniform(-1, 1);
    y[i] = x[2 * i + 1] > 0.25 ? 3.0 : -1.0;
  }
  RegressionTree tree;
  tree.fit(x, n, 2, y, 3);
  for (std::size_t i = 0; i < n; ++i) CHECK(tree.predict(std::span<const double>(x).subspan(2 * i, 2)) == y[i]);
  CHECK(tree.leaf_count() == 2);
  CHECK(tree.depth() == 1);

  // Presorted growth gives the same tree as the plain fit.
  RegressionTree other;
  std::vector<double> noisy(n);
  for (auto& v : noisy) v = rng.normal();
  tree.fit(x, n, 2, noisy, 4);
  other.fit_presorted(x, n, 2, presort(x, n, 2), noisy, 4);
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = std::span<const double>(x).subspan(2 * i, 2);
    CHECK(tree.predict(row) == other.predict(row));
  }
  CHECK(tree.leaf_count() <= 16);
}

TEST_CASE("boosting reduces squared error") {
  const std::size_t n = 300;
  Rng rng(10);
  std::vector<double> x(n), y(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = rng.uniform(-3, 3);
    y[i] = std::sin(x[i]);
  }
  auto sse = [&](std::size_t estimators) {
    GradientBoostedTrees g;
    g.fit(x, n, 1, y, {estimators, 3, 0.3});
    double s = 0;
    for (std::size_t i = 0; i < n; ++i) s += std::pow(g.predict(std::span<const double>(x).subspan(i, 1)) - y[i], 2);
    return s;
  };
  CHECK(sse(4) < sse(1));
}

TEST_CASE("prior sampling is deterministic and schedule independent") {
  const PriorConfig c = small_config();
  const auto a = sample_prior_batch(12, c, 5);
  const auto b = sample_prior_batch(12, c, 5);
  const auto tail = sample_prior_batch(4, c, 5, 8);
  for (std::size_t i = 0; i < 12; ++i) CHECK(same_dataset(a[i], b[i]));
  for (std::size_t i = 0; i < 4; ++i) CHECK(same_dataset(a[8 + i], tail[i]));
  const int saved = omp_get_max_threads();
  omp_set_num_threads(1);
  const auto serial = sample_prior_batch(12, c, 5);
  omp_set_num_threads(4);
  const auto parallel = sample_prior_batch(12, c, 5);
  omp_set_num_threads(saved);
  for (std::size_t i = 0; i < 12; ++i) CHECK(same_dataset(serial[i], parallel[i]));
  CHECK_FALSE(same_dataset(a[0], sample_prior_dataset(c, 6)));
}

TEST_CASE("prior config bounds") {
  PriorConfig c;
  c.max_features = 101;
  CHECK_THROWS_AS(c.validate(), ShapeError);
  c = PriorConfig{};
  c.max_classes = 11;
  CHECK_THROWS_AS(c.validate(), ShapeError);
  c = PriorConfig{};
  c.scm_fraction = 1.5;
  CHECK_THROWS_AS(c.validate(), ShapeError);
}

TEST_CASE("TICL files round trip") {
  const auto ds = sample_prior_dataset(small_config(), 3);
  const auto dir = std::filesystem::temp_directory_path() / "tabicl_test_prior";
  std::filesystem::create_directories(dir);
  const auto path = (dir / "d.ticl").string();
  write_dataset(path, ds);
  auto back = read_dataset(path);
  back.kind = ds.kind;
  CHECK(same_dataset(ds, back));
  CHECK(std::filesystem::file_size(path) == 4 + 2 + 12 + ds.n * ds.m * 4 + ds.n * 4);

  const auto bad = (dir / "bad.ticl").string();
  std::ofstream(bad) << "NOPE";
  CHECK_THROWS_AS(read_dataset(bad), DataError);
  CHECK_THROWS_AS(read_dataset((dir / "missing.ticl").string()), DataError);

  const auto csv = (dir / "s.csv").string();
  write_scatter_csv(csv, ds);
  std::ifstream in(csv);
  std::string header;
  std::getline(in, header);
  CHECK(header == "x0,x1,label");
  std::filesystem::remove_all(dir);
}
