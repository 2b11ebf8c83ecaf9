#include "tabicl/prior.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <immintrin.h>
#include <fstream>
#include <numbers>
#include <set>

#include "tabicl/errors.hpp"
#include "tabicl/gbdt.hpp"

// glibc libmvec vector sine; the widest variant the build targets is used.
extern "C" __m128d _ZGVbN2v_sin(__m128d);
#if defined(__AVX512F__)
extern "C" __m512d _ZGVeN8v_sin(__m512d);
#elif defined(__AVX2__)
extern "C" __m256d _ZGVdN4v_sin(__m256d);
#endif

namespace tabicl {

namespace {

constexpr std::array<ActivationKind, kActivationKinds> kAllKinds = {
    ActivationKind::identity, ActivationKind::tanh,      ActivationKind::leaky_relu,
    ActivationKind::elu,      ActivationKind::relu,      ActivationKind::relu6,
    ActivationKind::selu,     ActivationKind::silu,      ActivationKind::softplus,
    ActivationKind::hardtanh, ActivationKind::sign,      ActivationKind::sine,
    ActivationKind::rbf,      ActivationKind::exp,       ActivationKind::sqrt_abs,
    ActivationKind::indicator_unit_interval, ActivationKind::square, ActivationKind::abs,
    ActivationKind::random_fourier,
};

constexpr std::size_t kMaxDiscretizeTries = 10;
constexpr std::size_t kMaxDatasetTries = 32;

double log_uniform(Rng& rng, double lo, double hi) { return std::exp(rng.uniform(std::log(lo), std::log(hi))); }

std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) {
  return static_cast<std::size_t>(rng.uniform_int(static_cast<long>(lo), static_cast<long>(hi)));
}

struct GraphShape {
  std::size_t n, m, classes, layers, inputs, width;
};

GraphShape sample_shape(const PriorConfig& c, Rng& rng) {
  GraphShape s{};
  s.n = pick(rng, c.min_samples, c.max_samples);
  s.m = pick(rng, c.min_features, c.max_features);
  s.classes = pick(rng, c.min_classes, std::min(c.max_classes, s.n / 2));
  s.layers = pick(rng, c.min_layers, c.max_layers);
  s.inputs = pick(rng, c.min_inputs, c.max_inputs);
  s.width = pick(rng, c.min_width, c.max_width);
  // Enough non-input nodes for m features plus a target.
  s.width = std::max(s.width, (s.m + 1 + s.layers - 1) / s.layers);
  return s;
}

Matrix input_noise(std::size_t n, std::size_t dim, Rng& rng) {
  Matrix z(n, dim);
  for (auto& v : z.v) v = rng.normal();
  return z;
}

// Picks the target from the last two layers and m features from the other
// non-input nodes, then discretizes.
SyntheticDataset assemble(const std::vector<Matrix>& layers, const GraphShape& s, PriorKind kind, Rng& rng) {
  struct NodeRef {
    std::size_t layer, unit;
  };
  // Piecewise-constant layers can collapse to a handful of values; such nodes
  // cannot carry C classes and are skipped as targets.
  auto distinct = [&](const NodeRef& r) {
    std::vector<double> col(s.n);
    for (std::size_t i = 0; i < s.n; ++i) col[i] = layers[r.layer].at(i, r.unit);
    std::sort(col.begin(), col.end());
    return static_cast<std::size_t>(std::unique(col.begin(), col.end()) - col.begin());
  };
  std::vector<NodeRef> late, all;
  for (std::size_t l = 0; l < layers.size(); ++l)
    for (std::size_t u = 0; u < layers[l].cols; ++u) {
      all.push_back({l, u});
      if (l + 2 >= layers.size() && distinct({l, u}) >= 2 * s.classes) late.push_back({l, u});
    }
  if (late.empty()) throw DataError("no late node has enough distinct values for " + std::to_string(s.classes) + " classes");
  const NodeRef target = late[pick(rng, 0, late.size() - 1)];
  std::vector<NodeRef> pool;
  for (const auto& r : all)
    if (r.layer != target.layer || r.unit != target.unit) pool.push_back(r);
  rng.shuffle(pool);
  pool.resize(s.m);

  SyntheticDataset ds;
  ds.n = s.n;
  ds.m = s.m;
  ds.n_classes = s.classes;
  ds.kind = kind;
  ds.x.resize(s.n * s.m);
  std::vector<double> t(s.n);
  for (std::size_t i = 0; i < s.n; ++i) {
    t[i] = layers[target.layer].at(i, target.unit);
    for (std::size_t j = 0; j < s.m; ++j) {
      const double v = layers[pool[j].layer].at(i, pool[j].unit);
      const auto f = static_cast<float>(v);
      if (!std::isfinite(f)) throw DataError("generated feature is not finite");
      ds.x[i * s.m + j] = f;
    }
  }
  ds.y = discretize_target(t, s.classes, rng);
  return ds;
}

}  // namespace

const char* activation_name(ActivationKind kind) {
  switch (kind) {
    case ActivationKind::identity: return "identity";
    case ActivationKind::tanh: return "tanh";
    case ActivationKind::leaky_relu: return "leaky_relu";
    case ActivationKind::elu: return "elu";
    case ActivationKind::relu: return "relu";
    case ActivationKind::relu6: return "relu6";
    case ActivationKind::selu: return "selu";
    case ActivationKind::silu: return "silu";
    case ActivationKind::softplus: return "softplus";
    case ActivationKind::hardtanh: return "hardtanh";
    case ActivationKind::sign: return "sign";
    case ActivationKind::sine: return "sine";
    case ActivationKind::rbf: return "rbf";
    case ActivationKind::exp: return "exp";
    case ActivationKind::sqrt_abs: return "sqrt_abs";
    case ActivationKind::indicator_unit_interval: return "indicator_unit_interval";
    case ActivationKind::square: return "square";
    case ActivationKind::abs: return "abs";
    case ActivationKind::random_fourier: return "random_fourier";
  }
  return "?";
}

double activation_weight(ActivationKind kind) { return kind == ActivationKind::random_fourier ? 10.0 : 1.0; }

ActivationKind sample_activation(Rng& rng) {
  double total = 0;
  for (auto k : kAllKinds) total += activation_weight(k);
  double u = rng.uniform(0.0, total);
  for (auto k : kAllKinds) {
    u -= activation_weight(k);
    if (u < 0) return k;
  }
  return ActivationKind::random_fourier;
}

RandomFourierActivation::RandomFourierActivation(Rng& rng) {
  const double decay = std::exp(rng.uniform(0.7, 3.0));
  std::array<double, kFeatures> w{}, z{};
  double norm = 0;
  for (std::size_t i = 0; i < kFeatures; ++i) {
    b_[i] = rng.uniform(0.0, 2 * std::numbers::pi);
    a_[i] = rng.uniform(0.0, static_cast<double>(kFeatures));
    w[i] = std::pow(std::max(a_[i], 1e-12), -decay);
    z[i] = rng.normal();
  }
  // Normalize in a scale-safe way: w can span hundreds of orders of magnitude.
  const double wmax = *std::max_element(w.begin(), w.end());
  for (auto& v : w) {
    v /= wmax;
    norm += v * v;
  }
  norm = std::sqrt(norm);
  for (std::size_t i = 0; i < kFeatures; ++i) coef_[i] = w[i] / norm * z[i];
}

double RandomFourierActivation::operator()(double x) const {
  static_assert(kFeatures % 8 == 0);
  const double* a = a_.data();
  const double* b = b_.data();
  const double* c = coef_.data();
#if defined(__AVX512F__)
  const __m512d xv = _mm512_set1_pd(x);
  __m512d acc = _mm512_setzero_pd();
  for (std::size_t i = 0; i < kFeatures; i += 8) {
    const __m512d arg = _mm512_add_pd(_mm512_mul_pd(_mm512_loadu_pd(a + i), xv), _mm512_loadu_pd(b + i));
    acc = _mm512_add_pd(acc, _mm512_mul_pd(_mm512_loadu_pd(c + i), _ZGVeN8v_sin(arg)));
  }
  alignas(64) double lanes[8];
  _mm512_store_pd(lanes, acc);
  return ((lanes[0] + lanes[1]) + (lanes[2] + lanes[3])) + ((lanes[4] + lanes[5]) + (lanes[6] + lanes[7]));
#elif defined(__AVX2__)
  const __m256d xv = _mm256_set1_pd(x);
  __m256d acc = _mm256_setzero_pd();
  for (std::size_t i = 0; i < kFeatures; i += 4) {
    const __m256d arg = _mm256_add_pd(_mm256_mul_pd(_mm256_loadu_pd(a + i), xv), _mm256_loadu_pd(b + i));
    acc = _mm256_add_pd(acc, _mm256_mul_pd(_mm256_loadu_pd(c + i), _ZGVdN4v_sin(arg)));
  }
  alignas(32) double lanes[4];
  _mm256_store_pd(lanes, acc);
  return (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
#else
  const __m128d xv = _mm_set1_pd(x);
  __m128d acc = _mm_setzero_pd();
  for (std::size_t i = 0; i < kFeatures; i += 2) {
    const __m128d arg = _mm_add_pd(_mm_mul_pd(_mm_loadu_pd(a + i), xv), _mm_loadu_pd(b + i));
    acc = _mm_add_pd(acc, _mm_mul_pd(_mm_loadu_pd(c + i), _ZGVbN2v_sin(arg)));
  }
  alignas(16) double lanes[2];
  _mm_store_pd(lanes, acc);
  return lanes[0] + lanes[1];
#endif
}

double apply_activation(ActivationKind kind, double x) {
  switch (kind) {
    case ActivationKind::identity: return x;
    case ActivationKind::tanh: return std::tanh(x);
    case ActivationKind::leaky_relu: return x > 0 ? x : 0.01 * x;
    case ActivationKind::elu: return x > 0 ? x : std::expm1(x);
    case ActivationKind::relu: return std::max(0.0, x);
    case ActivationKind::relu6: return std::clamp(x, 0.0, 6.0);
    case ActivationKind::selu: {
      constexpr double alpha = 1.6732632423543772, scale = 1.0507009873554805;
      return scale * (x > 0 ? x : alpha * std::expm1(x));
    }
    case ActivationKind::silu: return x / (1 + std::exp(-x));
    case ActivationKind::softplus: return x > 30 ? x : std::log1p(std::exp(x));
    case ActivationKind::hardtanh: return std::clamp(x, -1.0, 1.0);
    case ActivationKind::sign: return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0);
    case ActivationKind::sine: return std::sin(x);
    case ActivationKind::rbf: return std::exp(-x * x);
    case ActivationKind::exp: return std::exp(std::min(x, 20.0));
    case ActivationKind::sqrt_abs: return std::sqrt(std::abs(x));
    case ActivationKind::indicator_unit_interval: return x >= 0 && x <= 1 ? 1.0 : 0.0;
    case ActivationKind::square: return x * x;
    case ActivationKind::abs: return std::abs(x);
    case ActivationKind::random_fourier: break;
  }
  throw std::invalid_argument("random_fourier needs sampled parameters");
}

void standardize_columns(Matrix& x) {
  for (std::size_t c = 0; c < x.cols; ++c) {
    double mean = 0;
    for (std::size_t r = 0; r < x.rows; ++r) mean += x.at(r, c);
    mean /= static_cast<double>(x.rows);
    double var = 0;
    for (std::size_t r = 0; r < x.rows; ++r) var += (x.at(r, c) - mean) * (x.at(r, c) - mean);
    var /= static_cast<double>(x.rows);
    const double sd = std::sqrt(var);
    for (std::size_t r = 0; r < x.rows; ++r) x.at(r, c) = sd > 0 ? (x.at(r, c) - mean) / sd : 0.0;
  }
}

void activation_layer(Matrix& x, ActivationKind kind, Rng& rng, std::optional<Rescale> forced) {
  if (x.rows < 2) throw DataError("activation layer needs a batch of at least 2 rows");
  standardize_columns(x);
  if (kind == ActivationKind::random_fourier) {
    const RandomFourierActivation f(rng);
    for (auto& v : x.v) v = f(v);
    return;
  }
  Rescale rs;
  if (forced) {
    rs = *forced;
  } else {
    rs.a = rng.normal();
    rs.b = rng.normal();
  }
  const double gain = std::exp(2 * rs.a);
  for (auto& v : x.v) v = apply_activation(kind, gain * (v + rs.b));
}

const char* prior_kind_name(PriorKind kind) { return kind == PriorKind::scm ? "scm" : "tree_scm"; }

void PriorConfig::validate() const {
  auto fail = [](const std::string& what) { throw ShapeError("prior config: " + what); };
  if (min_samples > max_samples || min_features > max_features || min_classes > max_classes) fail("min above max");
  if (min_features < 1 || max_features > 100) fail("features must lie in [1, 100]");
  if (min_classes < 2 || max_classes > 10) fail("classes must lie in [2, 10]");
  if (min_samples < 2 * max_classes) fail("need at least 2 samples per class");
  if (!(scm_fraction >= 0 && scm_fraction <= 1)) fail("scm_fraction outside [0, 1]");
  if (min_layers < 2 || min_layers > max_layers) fail("need at least 2 layers");
  if (min_width < 1 || min_width > max_width || min_inputs < 1 || min_inputs > max_inputs) fail("bad widths");
  if (!(min_noise > 0 && min_noise <= max_noise)) fail("bad noise range");
}

std::string dataset_violation(const SyntheticDataset& ds) {
  if (ds.n_classes < 2 || ds.n_classes > 10) return "class count outside [2, 10]";
  if (ds.m < 1 || ds.m > 100) return "feature count outside [1, 100]";
  if (ds.x.size() != ds.n * ds.m || ds.y.size() != ds.n) return "inconsistent sizes";
  for (float v : ds.x)
    if (!std::isfinite(v)) return "non-finite feature value";
  std::vector<std::size_t> counts(ds.n_classes, 0);
  for (int y : ds.y) {
    if (y < 0 || static_cast<std::size_t>(y) >= ds.n_classes) return "label out of range";
    ++counts[static_cast<std::size_t>(y)];
  }
  for (std::size_t c = 0; c < ds.n_classes; ++c)
    if (counts[c] < 2) return "class " + std::to_string(c) + " has fewer than 2 samples";
  return {};
}

std::vector<int> labels_from_quantiles(std::span<const double> t, std::span<const double> quantiles) {
  std::vector<double> sorted(t.begin(), t.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> cuts;
  for (double q : quantiles) {
    const auto at = std::min(sorted.size() - 1, static_cast<std::size_t>(std::floor(q * static_cast<double>(sorted.size()) + 1e-9)));
    cuts.push_back(sorted[at]);
  }
  std::vector<int> labels(t.size());
  for (std::size_t i = 0; i < t.size(); ++i)
    labels[i] = static_cast<int>(std::count_if(cuts.begin(), cuts.end(), [&](double c) { return t[i] >= c; }));
  return labels;
}

std::vector<int> discretize_target(std::span<const double> t, std::size_t n_classes, Rng& rng) {
  if (n_classes < 2) throw DataError("need at least 2 classes");
  if (t.size() < 2 * n_classes) throw DataError("need at least 2 samples per class");
  if (std::all_of(t.begin(), t.end(), [&](double v) { return v == t[0]; })) throw DataError("degenerate (constant) target");
  for (double v : t)
    if (!std::isfinite(v)) throw DataError("non-finite target");
  // A quantile gap of 2/n guarantees two samples per class when t has no ties.
  const double min_gap = std::max(0.5 / static_cast<double>(n_classes), 2.0 / static_cast<double>(t.size()));
  for (std::size_t attempt = 0; attempt < kMaxDiscretizeTries; ++attempt) {
    // Class widths in quantile space: min_gap + (1 - C min_gap) * Dirichlet(1).
    std::vector<double> gaps(n_classes);
    double total = 0;
    for (auto& g : gaps) total += (g = rng.exponential(1.0));
    std::vector<double> q;
    double acc = 0;
    for (std::size_t c = 0; c + 1 < n_classes; ++c) {
      acc += min_gap + (1 - static_cast<double>(n_classes) * min_gap) * gaps[c] / total;
      q.push_back(acc);
    }
    auto labels = labels_from_quantiles(t, q);
    std::vector<std::size_t> counts(n_classes, 0);
    for (int y : labels) ++counts[static_cast<std::size_t>(y)];
    if (std::any_of(counts.begin(), counts.end(), [](std::size_t c) { return c < 2; })) continue;
    const auto relabel = rng.permutation(n_classes);
    for (auto& y : labels) y = static_cast<int>(relabel[static_cast<std::size_t>(y)]);
    return labels;
  }
  throw DataError("could not cut the target into " + std::to_string(n_classes) + " classes with 2+ samples each");
}

std::size_t sample_tree_estimators(Rng& rng) {
  const double e = std::floor(rng.exponential(0.5));
  return static_cast<std::size_t>(std::max(1.0, std::min(4.0, 1.0 + e)));
}

std::size_t sample_tree_depth(Rng& rng) {
  const double e = std::floor(rng.exponential(0.5));
  return static_cast<std::size_t>(std::max(2.0, std::min(4.0, 2.0 + e)));
}

SyntheticDataset gen_scm_dataset(const PriorConfig& config, Rng& rng) {
  config.validate();
  const GraphShape s = sample_shape(config, rng);
  const bool shared_kind = rng.bernoulli(0.5);
  const ActivationKind common = sample_activation(rng);

  Matrix prev = input_noise(s.n, s.inputs, rng);
  std::vector<Matrix> layers;
  for (std::size_t l = 0; l < s.layers; ++l) {
    Matrix h(s.n, s.width);
    std::vector<double> w(prev.cols * s.width);
    const double scale = 1.0 / std::sqrt(static_cast<double>(prev.cols));
    for (auto& v : w) v = rng.normal(0.0, scale);
    for (std::size_t i = 0; i < s.n; ++i)
      for (std::size_t k = 0; k < prev.cols; ++k) {
        const double xv = prev.at(i, k);
        for (std::size_t u = 0; u < s.width; ++u) h.at(i, u) += xv * w[k * s.width + u];
      }
    ActivationKind kind = shared_kind ? common : sample_activation(rng);
    if (config.force_activation) kind = *config.force_activation;
    activation_layer(h, kind, rng);
    if (!config.disable_noise) {
      // sigma is relative to the node's own spread, so the noise-to-signal
      // ratio stays in [min_noise, max_noise] whatever the activation did to the scale.
      for (std::size_t u = 0; u < s.width; ++u) {
        double mean = 0, var = 0;
        for (std::size_t i = 0; i < s.n; ++i) mean += h.at(i, u);
        mean /= static_cast<double>(s.n);
        for (std::size_t i = 0; i < s.n; ++i) var += (h.at(i, u) - mean) * (h.at(i, u) - mean);
        const double sd = std::sqrt(var / static_cast<double>(s.n));
        const double sigma = log_uniform(rng, config.min_noise, config.max_noise) * (sd > 0 ? sd : 1.0);
        for (std::size_t i = 0; i < s.n; ++i) h.at(i, u) += rng.normal(0.0, sigma);
      }
    }
    layers.push_back(h);
    prev = std::move(h);
  }
  return assemble(layers, s, PriorKind::scm, rng);
}

SyntheticDataset gen_tree_scm_dataset(const PriorConfig& config, Rng& rng) {
  config.validate();
  const GraphShape s = sample_shape(config, rng);
  Matrix prev = input_noise(s.n, s.inputs, rng);
  std::vector<Matrix> layers;
  std::vector<SyntheticDataset::TreeLayerStats> stats;
  for (std::size_t l = 0; l < s.layers; ++l) {
    BoostingParams params;
    params.n_estimators = sample_tree_estimators(rng);
    params.max_depth = sample_tree_depth(rng);
    Matrix h(s.n, s.width);
    std::vector<double> fake(s.n), out(s.n);
    const auto sorted = presort(prev.v, s.n, prev.cols);
    for (std::size_t u = 0; u < s.width; ++u) {
      for (auto& v : fake) v = rng.normal();
      GradientBoostedTrees model;
      model.fit_presorted(prev.v, s.n, prev.cols, sorted, fake, params);
      for (std::size_t i = 0; i < s.n; ++i) h.at(i, u) = out[i] = model.predict(std::span<const double>(prev.v).subspan(i * prev.cols, prev.cols));
      std::sort(out.begin(), out.end());
      const auto distinct = static_cast<std::size_t>(std::unique(out.begin(), out.end()) - out.begin());
      stats.push_back({params.n_estimators, params.max_depth, model.distinct_value_bound(), distinct});
    }
    layers.push_back(h);
    prev = std::move(h);
  }
  auto ds = assemble(layers, s, PriorKind::tree_scm, rng);
  ds.tree_stats = std::move(stats);
  return ds;
}

SyntheticDataset sample_prior_dataset(const PriorConfig& config, std::uint64_t seed) {
  config.validate();
  // The kind is fixed per seed so that retries do not skew the mixture.
  const bool scm = Rng(seed).bernoulli(config.scm_fraction);
  for (std::size_t attempt = 0; attempt < kMaxDatasetTries; ++attempt) {
    Rng rng(derive_seed(seed, attempt + 1));
    try {
      auto ds = scm ? gen_scm_dataset(config, rng) : gen_tree_scm_dataset(config, rng);
      ds.seed = seed;
      if (dataset_violation(ds).empty()) return ds;
    } catch (const DataError&) {
      // Degenerate draw: try the next stream.
    }
  }
  throw DataError("prior sampling exhausted its retries for seed " + std::to_string(seed));
}

std::vector<SyntheticDataset> sample_prior_batch(std::size_t batch_size, const PriorConfig& config,
                                                 std::uint64_t seed, std::uint64_t first_index) {
  std::vector<SyntheticDataset> out(batch_size);
  const long count = static_cast<long>(batch_size);
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < count; ++i) {
    out[static_cast<std::size_t>(i)] = sample_prior_dataset(config, derive_seed(seed, first_index + static_cast<std::uint64_t>(i)));
  }
  return out;
}

SyntheticDataset gaussian_blobs(std::size_t n, std::size_t m, std::size_t n_classes, double separation, Rng& rng) {
  if (n_classes < 2 || n < 2 * n_classes || m < 1) throw DataError("gaussian_blobs: need m >= 1, C >= 2 and n >= 2C");
  // Centers on a random line, consecutive ones `separation` apart.
  std::vector<double> dir(m), origin(m);
  double norm = 0;
  for (auto& v : dir) {
    v = rng.normal();
    norm += v * v;
  }
  norm = std::sqrt(norm);
  for (auto& v : dir) v /= norm;
  for (auto& v : origin) v = rng.normal(0.0, 2.0);
  SyntheticDataset ds;
  ds.n = n;
  ds.m = m;
  ds.n_classes = n_classes;
  ds.x.resize(n * m);
  ds.y.resize(n);
  for (std::size_t i = 0; i < n; ++i) ds.y[i] = static_cast<int>(i % n_classes);
  rng.shuffle(ds.y);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j)
      ds.x[i * m + j] = static_cast<float>(origin[j] + separation * ds.y[i] * dir[j] + rng.normal());
  return ds;
}

namespace {

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::istream& in, const std::string& path) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw DataError("truncated dataset file " + path);
  return v;
}

}  // namespace

void write_dataset(const std::string& path, const SyntheticDataset& ds) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path);
  out.write("TICL", 4);
  put<std::uint16_t>(out, 1);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ds.n));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ds.m));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ds.n_classes));
  out.write(reinterpret_cast<const char*>(ds.x.data()), static_cast<std::streamsize>(ds.x.size() * sizeof(float)));
  for (int y : ds.y) put<std::uint32_t>(out, static_cast<std::uint32_t>(y));
  if (!out) throw DataError("failed writing " + path);
}

SyntheticDataset read_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "TICL", 4) != 0) throw DataError(path + " is not a TICL dataset");
  if (get<std::uint16_t>(in, path) != 1) throw DataError("unsupported TICL version in " + path);
  SyntheticDataset ds;
  ds.n = get<std::uint32_t>(in, path);
  ds.m = get<std::uint32_t>(in, path);
  ds.n_classes = get<std::uint32_t>(in, path);
  ds.x.resize(ds.n * ds.m);
  in.read(reinterpret_cast<char*>(ds.x.data()), static_cast<std::streamsize>(ds.x.size() * sizeof(float)));
  if (!in) throw DataError("truncated dataset file " + path);
  ds.y.resize(ds.n);
  for (auto& y : ds.y) y = static_cast<int>(get<std::uint32_t>(in, path));
  return ds;
}

void write_scatter_csv(const std::string& path, const SyntheticDataset& ds) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << "x0,x1,label\n";
  for (std::size_t i = 0; i < ds.n; ++i) {
    const float x0 = ds.x[i * ds.m];
    const float x1 = ds.m > 1 ? ds.x[i * ds.m + 1] : 0.0f;
    out << x0 << ',' << x1 << ',' << ds.y[i] << '\n';
  }
}

}  // namespace tabicl
