#pragma once

// Synthetic classification tasks drawn from random structural causal models.

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tabicl/rng.hpp"

namespace tabicl {

enum class ActivationKind {
  identity,
  tanh,
  leaky_relu,
  elu,
  relu,
  relu6,
  selu,
  silu,
  softplus,
  hardtanh,
  sign,
  sine,
  rbf,
  exp,
  sqrt_abs,
  indicator_unit_interval,
  square,
  abs,
  random_fourier,
};

inline constexpr std::size_t kActivationKinds = 19;
const char* activation_name(ActivationKind kind);
/// Sampling weight: random_fourier is ten times as likely as each other kind.
double activation_weight(ActivationKind kind);
ActivationKind sample_activation(Rng& rng);

/// f(x) = (w / |w|_2 . sin(a x + b))^T z with N random features.
class RandomFourierActivation {
 public:
  static constexpr std::size_t kFeatures = 256;
  explicit RandomFourierActivation(Rng& rng);
  double operator()(double x) const;

 private:
  std::array<double, kFeatures> a_{}, b_{}, coef_{};  // coef = w / |w| * z
};

/// Elementwise activation (random_fourier excluded; it needs sampled parameters).
double apply_activation(ActivationKind kind, double x);

/// Dense row-major matrix of doubles.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> v;
  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), v(r * c, 0.0) {}
  double& at(std::size_t r, std::size_t c) { return v[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return v[r * cols + c]; }
};

/// Column standardization with the n-denominator variance; zero-variance columns become 0.
void standardize_columns(Matrix& x);

struct Rescale {
  double a = 0;
  double b = 0;
};

/// Standardize each column over the batch, rescale by exp(2a)(x + b) (skipped
/// for random_fourier), then apply the activation. a, b ~ N(0, 1) unless forced.
/// Throws DataError when the batch has fewer than 2 rows.
void activation_layer(Matrix& x, ActivationKind kind, Rng& rng, std::optional<Rescale> forced = std::nullopt);

enum class PriorKind { scm, tree_scm };
const char* prior_kind_name(PriorKind kind);

struct PriorConfig {
  std::size_t min_samples = 256;
  std::size_t max_samples = 256;
  std::size_t min_features = 2;
  std::size_t max_features = 10;
  std::size_t min_classes = 2;
  std::size_t max_classes = 10;
  double scm_fraction = 0.7;

  // Graph shape.
  std::size_t min_layers = 2, max_layers = 5;
  std::size_t min_width = 4, max_width = 16;
  std::size_t min_inputs = 2, max_inputs = 8;
  double min_noise = 0.01, max_noise = 0.3;

  // Test hooks.
  std::optional<ActivationKind> force_activation;
  bool disable_noise = false;

  void validate() const;
};

struct SyntheticDataset {
  std::size_t n = 0;
  std::size_t m = 0;
  std::size_t n_classes = 0;
  std::vector<float> x;  // row-major n x m
  std::vector<int> y;
  PriorKind kind = PriorKind::scm;
  std::uint64_t seed = 0;
  /// Distinct-value bound per tree layer child and the observed count (tree SCMs only).
  struct TreeLayerStats {
    std::size_t n_estimators = 0;
    std::size_t max_depth = 0;
    double distinct_bound = 0;
    std::size_t distinct_observed = 0;
  };
  std::vector<TreeLayerStats> tree_stats;
};

/// Empty string when valid; otherwise the first violated invariant.
std::string dataset_violation(const SyntheticDataset& ds);

/// Class labels from cut quantiles (each in (0,1)): label = number of cut values
/// at or below t, with cut value = sorted(t)[floor(q * n)].
std::vector<int> labels_from_quantiles(std::span<const double> t, std::span<const double> quantiles);
/// C-1 random quantile cuts with a minimum gap, resampled up to 10 times until
/// every class has at least 2 members; classes are then randomly relabelled.
/// Throws DataError for constant t, n < 2C, or when resampling is exhausted.
std::vector<int> discretize_target(std::span<const double> t, std::size_t n_classes, Rng& rng);

/// Tree hyperparameters: min(4, 1 + floor(Exp(0.5))) estimators, min(4, 2 + floor(Exp(0.5))) depth.
std::size_t sample_tree_estimators(Rng& rng);
std::size_t sample_tree_depth(Rng& rng);

SyntheticDataset gen_scm_dataset(const PriorConfig& config, Rng& rng);
SyntheticDataset gen_tree_scm_dataset(const PriorConfig& config, Rng& rng);
/// One dataset of the 70/30 mixture, fully determined by `seed`.
SyntheticDataset sample_prior_dataset(const PriorConfig& config, std::uint64_t seed);
/// Dataset i uses derive_seed(seed, first_index + i), so batches are order independent.
std::vector<SyntheticDataset> sample_prior_batch(std::size_t batch_size, const PriorConfig& config,
                                                 std::uint64_t seed, std::uint64_t first_index = 0);

/// Isotropic unit-variance Gaussian classes with centers `separation` apart
/// (each center is `separation` from the nearest other one along a random
/// direction); labels are balanced and shuffled. Not part of the prior mixture.
SyntheticDataset gaussian_blobs(std::size_t n, std::size_t m, std::size_t n_classes, double separation, Rng& rng);

/// Binary layout: "TICL", u16 version, u32 n, u32 m, u32 C, f32 X row-major, u32 labels.
void write_dataset(const std::string& path, const SyntheticDataset& ds);
SyntheticDataset read_dataset(const std::string& path);
/// `x0,x1,label` rows for the first two features.
void write_scatter_csv(const std::string& path, const SyntheticDataset& ds);

}  // namespace tabicl
