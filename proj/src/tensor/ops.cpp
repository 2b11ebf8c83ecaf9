#include "tabicl/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "tabicl/errors.hpp"
#include "tensor/node.hpp"

TABICL_NS_BEGIN
namespace ops {

using detail::make_result;
using detail::Node;
using detail::parent;
using detail::parent_grad;

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

std::size_t trailing(const Tensor& t) {
  require(t.rank() >= 1, "expected a tensor of rank >= 1");
  return t.shape().back();
}

}  // namespace

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require(weight.rank() == 2, "linear weight must be rank 2");
  const std::size_t out = weight.dim(0), in = weight.dim(1);
  require(trailing(x) == in, "linear: input trailing dim " + std::to_string(trailing(x)) +
                                 " does not match layer input " + std::to_string(in));
  if (bias.defined()) require(bias.numel() == out, "linear: bias size mismatch");
  const std::size_t rows = x.numel() / in;
  Shape shape = x.shape();
  shape.back() = out;
  std::vector<Real> y(rows * out);
  kernels::linear_forward(x.data().data(), rows, in, weight.data().data(),
                          bias.defined() ? bias.data().data() : nullptr, out, y.data());
  std::vector<Tensor> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  return make_result("linear", std::move(shape), std::move(y), std::move(inputs),
                     [rows, in, out](Node& self) {
                       const Real* dy = self.grad.data();
                       if (Real* dx = parent_grad(self, 0)) {
                         kernels::linear_backward_input(dy, rows, out, parent(self, 1).value.data(), in, dx);
                       }
                       Real* dw = parent_grad(self, 1);
                       Real* db = self.parents.size() > 2 ? parent_grad(self, 2) : nullptr;
                       if (dw) {
                         kernels::linear_backward_params(dy, rows, out, parent(self, 0).value.data(), in, dw, db);
                       } else if (db) {
                         for (std::size_t i = 0; i < rows; ++i)
                           for (std::size_t n = 0; n < out; ++n) db[n] += dy[i * out + n];
                       }
                     });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(), "add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  std::vector<Real> y(a.numel());
  const auto ad = a.data(), bd = b.data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = ad[i] + bd[i];
  return make_result("add", a.shape(), std::move(y), {a, b}, [](Node& self) {
    for (std::size_t p = 0; p < 2; ++p) {
      if (Real* g = parent_grad(self, p))
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(), "mul: shape mismatch");
  std::vector<Real> y(a.numel());
  const auto ad = a.data(), bd = b.data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = ad[i] * bd[i];
  return make_result("mul", a.shape(), std::move(y), {a, b}, [](Node& self) {
    const auto& av = parent(self, 0).value;
    const auto& bv = parent(self, 1).value;
    if (Real* ga = parent_grad(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) ga[i] += self.grad[i] * bv[i];
    if (Real* gb = parent_grad(self, 1))
      for (std::size_t i = 0; i < self.grad.size(); ++i) gb[i] += self.grad[i] * av[i];
  });
}

Tensor scale(const Tensor& a, Real factor) {
  std::vector<Real> y(a.numel());
  const auto ad = a.data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = ad[i] * factor;
  return make_result("scale", a.shape(), std::move(y), {a}, [factor](Node& self) {
    if (Real* g = parent_grad(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * factor;
  });
}

Tensor mul_trailing_scalar(const Tensor& x, const Tensor& s) {
  const std::size_t d = trailing(x);
  require(s.numel() * d == x.numel() && trailing(s) == 1, "mul_trailing_scalar: shape mismatch");
  std::vector<Real> y(x.numel());
  const auto xd = x.data(), sd = s.data();
  for (std::size_t r = 0; r < s.numel(); ++r)
    for (std::size_t j = 0; j < d; ++j) y[r * d + j] = xd[r * d + j] * sd[r];
  return make_result("mul_trailing_scalar", x.shape(), std::move(y), {x, s}, [d](Node& self) {
    const auto& xv = parent(self, 0).value;
    const auto& sv = parent(self, 1).value;
    const std::size_t rows = sv.size();
    if (Real* gx = parent_grad(self, 0))
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < d; ++j) gx[r * d + j] += self.grad[r * d + j] * sv[r];
    if (Real* gs = parent_grad(self, 1))
      for (std::size_t r = 0; r < rows; ++r) {
        Real acc = 0;
        for (std::size_t j = 0; j < d; ++j) acc += self.grad[r * d + j] * xv[r * d + j];
        gs[r] += acc;
      }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& shift, Real eps) {
  const std::size_t d = trailing(x);
  require(d >= 1 && gain.numel() == d && shift.numel() == d, "layer_norm: parameter size mismatch");
  const std::size_t rows = x.numel() / d;
  std::vector<Real> y(x.numel());
  std::vector<Real> xhat(x.numel());
  std::vector<Real> rstd(rows);
  const Real* xd = x.data().data();
  const Real* gd = gain.data().data();
  const Real* sd = shift.data().data();
#pragma omp parallel for schedule(static)
  for (long rl = 0; rl < static_cast<long>(rows); ++rl) {
    const std::size_t r = static_cast<std::size_t>(rl);
    const Real* xr = xd + r * d;
    Real mu = 0;
    for (std::size_t j = 0; j < d; ++j) mu += xr[j];
    mu /= static_cast<Real>(d);
    Real var = 0;
    for (std::size_t j = 0; j < d; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= static_cast<Real>(d);
    const Real rs = Real(1) / std::sqrt(var + eps);
    rstd[r] = rs;
    for (std::size_t j = 0; j < d; ++j) {
      const Real h = (xr[j] - mu) * rs;
      xhat[r * d + j] = h;
      y[r * d + j] = h * gd[j] + sd[j];
    }
  }
  return make_result(
      "layer_norm", x.shape(), std::move(y), {x, gain, shift},
      [d, rows, xhat = std::move(xhat), rstd = std::move(rstd)](Node& self) {
        const Real* dy = self.grad.data();
        const auto& g = parent(self, 1).value;
        if (Real* dx = parent_grad(self, 0)) {
#pragma omp parallel for schedule(static)
          for (long rl = 0; rl < static_cast<long>(rows); ++rl) {
            const std::size_t r = static_cast<std::size_t>(rl);
            Real mean_g = 0, mean_gx = 0;
            for (std::size_t j = 0; j < d; ++j) {
              const Real gj = dy[r * d + j] * g[j];
              mean_g += gj;
              mean_gx += gj * xhat[r * d + j];
            }
            mean_g /= static_cast<Real>(d);
            mean_gx /= static_cast<Real>(d);
            for (std::size_t j = 0; j < d; ++j) {
              const Real gj = dy[r * d + j] * g[j];
              dx[r * d + j] += rstd[r] * (gj - mean_g - xhat[r * d + j] * mean_gx);
            }
          }
        }
        Real* dg = parent_grad(self, 1);
        Real* ds = parent_grad(self, 2);
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < d; ++j) {
            if (dg) dg[j] += dy[r * d + j] * xhat[r * d + j];
            if (ds) ds[j] += dy[r * d + j];
          }
      });
}

Tensor gelu(const Tensor& x) {
  constexpr Real inv_sqrt2 = Real(0.70710678118654752440);
  std::vector<Real> y(x.numel());
  const Real* xd = x.data().data();
#pragma omp parallel for schedule(static)
  for (long il = 0; il < static_cast<long>(y.size()); ++il) {
    const auto i = static_cast<std::size_t>(il);
    y[i] = Real(0.5) * xd[i] * (Real(1) + std::erf(xd[i] * inv_sqrt2));
  }
  return make_result("gelu", x.shape(), std::move(y), {x}, [](Node& self) {
    constexpr Real inv_sqrt2 = Real(0.70710678118654752440);
    const Real inv_sqrt2pi = Real(1) / std::sqrt(Real(2) * std::numbers::pi_v<Real>);
    const auto& xv = parent(self, 0).value;
    if (Real* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < xv.size(); ++i) {
        const Real v = xv[i];
        const Real cdf = Real(0.5) * (Real(1) + std::erf(v * inv_sqrt2));
        const Real pdf = std::exp(Real(-0.5) * v * v) * inv_sqrt2pi;
        g[i] += self.grad[i] * (cdf + v * pdf);
      }
    }
  });
}

Tensor softmax_active(const Tensor& x, std::size_t active) {
  const std::size_t k = trailing(x);
  require(active >= 1 && active <= k, "softmax_active: active count out of range");
  const std::size_t rows = x.numel() / k;
  std::vector<Real> y(x.numel(), Real(0));
  const auto xd = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const Real* xr = xd.data() + r * k;
    Real mx = *std::max_element(xr, xr + active);
    Real sum = 0;
    for (std::size_t j = 0; j < active; ++j) {
      y[r * k + j] = std::exp(xr[j] - mx);
      sum += y[r * k + j];
    }
    for (std::size_t j = 0; j < active; ++j) y[r * k + j] /= sum;
  }
  return make_result("softmax", x.shape(), std::move(y), {x}, [k, rows, active](Node& self) {
    if (Real* g = parent_grad(self, 0)) {
      for (std::size_t r = 0; r < rows; ++r) {
        const Real* p = self.value.data() + r * k;
        const Real* dy = self.grad.data() + r * k;
        Real dot = 0;
        for (std::size_t j = 0; j < active; ++j) dot += p[j] * dy[j];
        for (std::size_t j = 0; j < active; ++j) g[r * k + j] += p[j] * (dy[j] - dot);
      }
    }
  });
}

Tensor softmax(const Tensor& x) { return softmax_active(x, trailing(x)); }

Tensor cross_entropy(const Tensor& logits, std::span<const int> labels, std::size_t active) {
  require(logits.rank() == 2, "cross_entropy: logits must be [N, K]");
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  require(labels.size() == n && n > 0, "cross_entropy: label count mismatch");
  require(active >= 1 && active <= k, "cross_entropy: active count out of range");
  std::vector<Real> probs(n * active);
  double loss = 0;
  const auto xd = logits.data();
  for (std::size_t r = 0; r < n; ++r) {
    const int y = labels[r];
    if (y < 0 || static_cast<std::size_t>(y) >= active) throw ShapeError("cross_entropy: label out of range");
    const Real* xr = xd.data() + r * k;
    const Real mx = *std::max_element(xr, xr + active);
    double sum = 0;
    for (std::size_t j = 0; j < active; ++j) sum += std::exp(double(xr[j] - mx));
    const double lse = double(mx) + std::log(sum);
    for (std::size_t j = 0; j < active; ++j) probs[r * active + j] = static_cast<Real>(std::exp(double(xr[j]) - lse));
    loss += lse - double(xr[y]);
  }
  loss /= static_cast<double>(n);
  std::vector<int> ys(labels.begin(), labels.end());
  return make_result("cross_entropy", {}, {static_cast<Real>(loss)}, {logits},
                     [n, k, active, probs = std::move(probs), ys = std::move(ys)](Node& self) {
                       if (Real* g = parent_grad(self, 0)) {
                         const Real s = self.grad[0] / static_cast<Real>(n);
                         for (std::size_t r = 0; r < n; ++r) {
                           for (std::size_t j = 0; j < active; ++j) g[r * k + j] += s * probs[r * active + j];
                           g[r * k + static_cast<std::size_t>(ys[r])] -= s;
                         }
                       }
                     });
}

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads, const AttentionMask& mask) {
  require(q.rank() == 3 && k.rank() == 3 && v.rank() == 3, "attention expects [B, L, D] inputs");
  require(k.shape() == v.shape(), "attention: key/value shape mismatch");
  require(q.dim(0) == k.dim(0) && q.dim(2) == k.dim(2), "attention: query/key batch or width mismatch");
  require(heads >= 1 && q.dim(2) % heads == 0, "attention: model dim not divisible by heads");
  AttentionDims dims{q.dim(0), q.dim(1), k.dim(1), q.dim(2), heads};
  std::vector<Real> out(q.numel());
  std::vector<Real> lse(dims.batch * heads * dims.n_q);
  kernels::attention_forward(q.data().data(), k.data().data(), v.data().data(), dims, mask, out.data(), lse.data());
  return make_result("attention", q.shape(), std::move(out), {q, k, v},
                     [dims, mask, lse = std::move(lse)](Node& self) {
                       kernels::attention_backward(parent(self, 0).value.data(), parent(self, 1).value.data(),
                                                   parent(self, 2).value.data(), self.value.data(), lse.data(),
                                                   self.grad.data(), dims, mask, parent_grad(self, 0),
                                                   parent_grad(self, 1), parent_grad(self, 2));
                     });
}

namespace {
// cos/sin tables for positions [offset, offset+len) and pair index i < hd/2.
void rope_tables(std::size_t len, std::size_t hd, double base, std::size_t offset, std::vector<Real>& c,
                 std::vector<Real>& s) {
  const std::size_t pairs = hd / 2;
  c.resize(len * pairs);
  s.resize(len * pairs);
  for (std::size_t l = 0; l < len; ++l)
    for (std::size_t i = 0; i < pairs; ++i) {
      const double theta = static_cast<double>(offset + l) /
                           std::pow(base, 2.0 * static_cast<double>(i) / static_cast<double>(hd));
      c[l * pairs + i] = static_cast<Real>(std::cos(theta));
      s[l * pairs + i] = static_cast<Real>(std::sin(theta));
    }
}
}  // namespace

std::vector<Real> rope_rotate(std::span<const Real> x, double position, double base) {
  require(x.size() % 2 == 0, "rope_rotate: head dimension must be even");
  std::vector<Real> y(x.size());
  const std::size_t hd = x.size();
  for (std::size_t i = 0; i < hd / 2; ++i) {
    const double theta = position / std::pow(base, 2.0 * static_cast<double>(i) / static_cast<double>(hd));
    const double ct = std::cos(theta), st = std::sin(theta);
    const double a = x[2 * i], b = x[2 * i + 1];
    y[2 * i] = static_cast<Real>(a * ct - b * st);
    y[2 * i + 1] = static_cast<Real>(a * st + b * ct);
  }
  return y;
}

Tensor rope(const Tensor& x, std::size_t heads, double base, std::size_t position_offset) {
  require(x.rank() == 3, "rope expects [B, L, D]");
  const std::size_t B = x.dim(0), L = x.dim(1), D = x.dim(2);
  require(heads >= 1 && D % heads == 0, "rope: model dim not divisible by heads");
  const std::size_t hd = D / heads;
  require(hd % 2 == 0, "rope: head dimension must be even");
  require(base > 1.0, "rope: base must exceed 1");
  std::vector<Real> c, s;
  rope_tables(L, hd, base, position_offset, c, s);
  const std::size_t pairs = hd / 2;
  auto rotate = [=](const Real* src, Real* dst, const std::vector<Real>& cs, const std::vector<Real>& sn,
                    Real sign, bool accumulate) {
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t l = 0; l < L; ++l)
        for (std::size_t h = 0; h < heads; ++h) {
          const std::size_t base_idx = (b * L + l) * D + h * hd;
          for (std::size_t i = 0; i < pairs; ++i) {
            const Real ct = cs[l * pairs + i], st = sign * sn[l * pairs + i];
            const Real a = src[base_idx + 2 * i], bb = src[base_idx + 2 * i + 1];
            const Real y0 = a * ct - bb * st, y1 = a * st + bb * ct;
            if (accumulate) {
              dst[base_idx + 2 * i] += y0;
              dst[base_idx + 2 * i + 1] += y1;
            } else {
              dst[base_idx + 2 * i] = y0;
              dst[base_idx + 2 * i + 1] = y1;
            }
          }
        }
  };
  std::vector<Real> y(x.numel());
  rotate(x.data().data(), y.data(), c, s, Real(1), false);
  return make_result("rope", x.shape(), std::move(y), {x},
                     [rotate, c = std::move(c), s = std::move(s)](Node& self) {
                       if (Real* g = parent_grad(self, 0)) rotate(self.grad.data(), g, c, s, Real(-1), true);
                     });
}

Tensor reshape(const Tensor& x, Shape shape) {
  require(shape_numel(shape) == x.numel(), "reshape: element count mismatch");
  return make_result("reshape", std::move(shape), x.to_vector(), {x}, [](Node& self) {
    if (Real* g = parent_grad(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
  });
}

Tensor swap_leading(const Tensor& x) {
  require(x.rank() >= 2, "swap_leading needs rank >= 2");
  const std::size_t A = x.dim(0), B = x.dim(1), inner = x.numel() / (A * B);
  Shape shape = x.shape();
  std::swap(shape[0], shape[1]);
  std::vector<Real> y(x.numel());
  const auto xd = x.data();
  for (std::size_t a = 0; a < A; ++a)
    for (std::size_t b = 0; b < B; ++b)
      std::copy_n(xd.data() + (a * B + b) * inner, inner, y.data() + (b * A + a) * inner);
  return make_result("swap_leading", std::move(shape), std::move(y), {x}, [A, B, inner](Node& self) {
    if (Real* g = parent_grad(self, 0))
      for (std::size_t a = 0; a < A; ++a)
        for (std::size_t b = 0; b < B; ++b)
          for (std::size_t i = 0; i < inner; ++i) g[(a * B + b) * inner + i] += self.grad[(b * A + a) * inner + i];
  });
}

Tensor slice_rows(const Tensor& x, std::size_t start, std::size_t len) {
  require(x.rank() >= 2, "slice_rows needs rank >= 2");
  const std::size_t B = x.dim(0), L = x.dim(1), inner = x.numel() / (B * L);
  require(start + len <= L, "slice_rows: range exceeds axis length");
  Shape shape = x.shape();
  shape[1] = len;
  std::vector<Real> y(B * len * inner);
  const auto xd = x.data();
  for (std::size_t b = 0; b < B; ++b)
    std::copy_n(xd.data() + (b * L + start) * inner, len * inner, y.data() + b * len * inner);
  return make_result("slice_rows", std::move(shape), std::move(y), {x}, [B, L, inner, start, len](Node& self) {
    if (Real* g = parent_grad(self, 0))
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t i = 0; i < len * inner; ++i) g[(b * L + start) * inner + i] += self.grad[b * len * inner + i];
  });
}

Tensor broadcast_batch(const Tensor& x, std::size_t batch) {
  require(x.rank() == 2, "broadcast_batch expects [L, D]");
  const std::size_t n = x.numel();
  std::vector<Real> y(batch * n);
  for (std::size_t b = 0; b < batch; ++b) std::copy_n(x.data().data(), n, y.data() + b * n);
  return make_result("broadcast_batch", {batch, x.dim(0), x.dim(1)}, std::move(y), {x}, [batch, n](Node& self) {
    if (Real* g = parent_grad(self, 0))
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[b * n + i];
  });
}

Tensor prepend_tokens(const Tensor& x, const Tensor& tokens) {
  require(x.rank() == 3 && tokens.rank() == 2 && tokens.dim(1) == x.dim(2), "prepend_tokens: shape mismatch");
  const std::size_t B = x.dim(0), L = x.dim(1), D = x.dim(2), T = tokens.dim(0);
  std::vector<Real> y(B * (T + L) * D);
  for (std::size_t b = 0; b < B; ++b) {
    std::copy_n(tokens.data().data(), T * D, y.data() + b * (T + L) * D);
    std::copy_n(x.data().data() + b * L * D, L * D, y.data() + (b * (T + L) + T) * D);
  }
  return make_result("prepend_tokens", {B, T + L, D}, std::move(y), {x, tokens}, [B, L, D, T](Node& self) {
    const Real* gy = self.grad.data();
    if (Real* gx = parent_grad(self, 0))
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t i = 0; i < L * D; ++i) gx[b * L * D + i] += gy[(b * (T + L) + T) * D + i];
    if (Real* gt = parent_grad(self, 1))
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t i = 0; i < T * D; ++i) gt[i] += gy[b * (T + L) * D + i];
  });
}

Tensor add_leading_rows(const Tensor& x, const Tensor& y) {
  require(x.rank() == 3 && y.rank() == 3 && x.dim(0) == y.dim(0) && x.dim(2) == y.dim(2) && y.dim(1) <= x.dim(1),
          "add_leading_rows: shape mismatch");
  const std::size_t B = x.dim(0), L = x.dim(1), P = y.dim(1), D = x.dim(2);
  std::vector<Real> out = x.to_vector();
  const auto yd = y.data();
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t i = 0; i < P * D; ++i) out[b * L * D + i] += yd[b * P * D + i];
  return make_result("add_leading_rows", x.shape(), std::move(out), {x, y}, [B, L, P, D](Node& self) {
    if (Real* gx = parent_grad(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) gx[i] += self.grad[i];
    if (Real* gy = parent_grad(self, 1))
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t i = 0; i < P * D; ++i) gy[b * P * D + i] += self.grad[b * L * D + i];
  });
}

Tensor sum(const Tensor& x) {
  double acc = 0;
  for (Real v : x.data()) acc += v;
  return make_result("sum", {}, {static_cast<Real>(acc)}, {x}, [](Node& self) {
    if (Real* g = parent_grad(self, 0)) {
      const std::size_t n = self.parents[0]->value.size();
      for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[0];
    }
  });
}

Tensor mean(const Tensor& x) {
  require(x.numel() > 0, "mean of empty tensor");
  return scale(sum(x), Real(1) / static_cast<Real>(x.numel()));
}

}  // namespace ops
TABICL_NS_END
