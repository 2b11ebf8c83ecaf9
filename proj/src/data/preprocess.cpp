#include "tabicl/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "tabicl/errors.hpp"

namespace tabicl {

namespace {

constexpr double kLambdaStep = 0.05;
constexpr int kLambdaSteps = 80;
// Far outliers in test rows are clipped so one cell cannot dominate the embedding.
constexpr double kClip = 100;

void mean_and_scale(std::span<const double> v, double& mean, double& scale) {
  mean = 0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double var = 0;
  for (double x : v) var += (x - mean) * (x - mean);
  var /= static_cast<double>(v.size());
  scale = std::sqrt(var);
  // Columns that are constant up to rounding carry no signal.
  if (!(scale > 1e-12 * std::max(1.0, std::abs(mean)))) scale = 0;
}

}  // namespace

const char* preprocess_name(PreprocessKind kind) {
  return kind == PreprocessKind::znorm ? "znorm" : "power_then_znorm";
}

double yeo_johnson(double x, double lambda) {
  constexpr double eps = 1e-12;
  if (x >= 0) {
    if (std::abs(lambda) < eps) return std::log1p(x);
    return (std::pow(x + 1, lambda) - 1) / lambda;
  }
  if (std::abs(lambda - 2) < eps) return -std::log1p(-x);
  return -(std::pow(1 - x, 2 - lambda) - 1) / (2 - lambda);
}

double yeo_johnson_loglik(std::span<const double> x, double lambda) {
  std::vector<double> t(x.size());
  double jac = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    t[i] = yeo_johnson(x[i], lambda);
    jac += std::copysign(1.0, x[i]) * std::log1p(std::abs(x[i]));
  }
  double mean, scale;
  mean_and_scale(t, mean, scale);
  if (!std::isfinite(scale)) return -std::numeric_limits<double>::infinity();
  if (scale == 0) return -std::numeric_limits<double>::infinity();
  const double n = static_cast<double>(x.size());
  return -0.5 * n * std::log(scale * scale) + (lambda - 1) * jac;
}

double fit_yeo_johnson_lambda(std::span<const double> x) {
  double best = 1, best_ll = -std::numeric_limits<double>::infinity();
  for (int i = 0; i <= kLambdaSteps; ++i) {
    const double lambda = -2 + kLambdaStep * i;
    const double ll = yeo_johnson_loglik(x, lambda);
    if (ll > best_ll) {
      best_ll = ll;
      best = lambda;
    }
  }
  return best;
}

Preprocessor Preprocessor::fit(const Table& table, PreprocessKind kind) {
  if (table.n_train == 0 || table.n_train > table.rows) throw DataError("preprocessor needs at least one train row");
  Preprocessor p;
  p.kind_ = kind;
  p.columns_.resize(table.cols);
  std::vector<double> col;
  for (std::size_t c = 0; c < table.cols; ++c) {
    auto& ct = p.columns_[c];
    col.clear();
    for (std::size_t r = 0; r < table.n_train; ++r)
      if (const double v = table.at(r, c); !std::isnan(v)) col.push_back(v);
    if (!col.empty()) {
      double unused;
      mean_and_scale(col, ct.impute, unused);
    }
    col.clear();
    for (std::size_t r = 0; r < table.n_train; ++r) col.push_back(std::isnan(table.at(r, c)) ? ct.impute : table.at(r, c));
    if (kind == PreprocessKind::power_then_znorm) {
      ct.power = true;
      ct.lambda = fit_yeo_johnson_lambda(col);
      for (auto& v : col) v = yeo_johnson(v, ct.lambda);
    }
    mean_and_scale(col, ct.mean, ct.scale);
  }
  return p;
}

double Preprocessor::apply(std::size_t col, double value) const {
  const auto& ct = columns_[col];
  if (std::isnan(value)) value = ct.impute;
  if (ct.power) value = yeo_johnson(value, ct.lambda);
  if (ct.scale == 0) return 0;
  const double z = (value - ct.mean) / ct.scale;
  if (std::isnan(z)) return 0;
  return std::clamp(z, -kClip, kClip);
}

Table Preprocessor::transform(const Table& table) const {
  if (table.cols != columns_.size()) throw DataError("preprocessor fitted on a different column count");
  Table out = table;
  for (std::size_t r = 0; r < table.rows; ++r)
    for (std::size_t c = 0; c < table.cols; ++c)
      out.values[r * table.cols + c] = static_cast<float>(apply(c, table.at(r, c)));
  return out;
}

}  // namespace tabicl
