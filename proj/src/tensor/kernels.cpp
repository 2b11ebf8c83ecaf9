#include "tabicl/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "tabicl/errors.hpp"

TABICL_NS_BEGIN

AttentionMask AttentionMask::dense_mask(std::size_t n_q, std::size_t n_k, std::vector<std::uint8_t> allowed) {
  if (allowed.size() != n_q * n_k) throw ShapeError("dense attention mask has wrong size");
  AttentionMask m;
  m.kind = Kind::dense;
  m.rows = n_q;
  m.cols = n_k;
  m.allowed = std::move(allowed);
  return m;
}

void AttentionMask::validate(std::size_t n_q, std::size_t n_k) const {
  if (n_k == 0) throw ShapeError("attention over an empty key set");
  switch (kind) {
    case Kind::full: return;
    case Kind::key_prefix:
      if (prefix_len == 0 || prefix_len > n_k) {
        throw ShapeError("key prefix " + std::to_string(prefix_len) + " invalid for " +
                         std::to_string(n_k) + " keys");
      }
      return;
    case Kind::dense:
      if (rows != n_q || cols != n_k) throw ShapeError("dense attention mask does not match q/k lengths");
      for (std::size_t i = 0; i < n_q; ++i) {
        bool any = false;
        for (std::size_t j = 0; j < n_k && !any; ++j) any = allowed[i * n_k + j] != 0;
        if (!any) throw ShapeError("attention mask leaves query " + std::to_string(i) + " without keys");
      }
      return;
  }
}

namespace kernels {

namespace {
constexpr std::size_t kRowBlock = 4;
constexpr std::size_t kAttnBlock = 64;

std::vector<Real> transpose(const Real* a, std::size_t rows, std::size_t cols) {
  constexpr std::size_t tile = 32;
  std::vector<Real> t(rows * cols);
  for (std::size_t r0 = 0; r0 < rows; r0 += tile) {
    const std::size_t r1 = std::min(rows, r0 + tile);
    for (std::size_t c0 = 0; c0 < cols; c0 += tile) {
      const std::size_t c1 = std::min(cols, c0 + tile);
      for (std::size_t c = c0; c < c1; ++c)
        for (std::size_t r = r0; r < r1; ++r) t[c * rows + r] = a[r * cols + c];
    }
  }
  return t;
}

constexpr std::size_t kColTile = 16;

// Register tile: rows [i0, i0+R) x cols [c0, c0+kColTile), accumulated over all k.
template <std::size_t R>
void gemm_tile(const Real* a, std::size_t i0, std::size_t inner, const Real* b, std::size_t cols,
               std::size_t c0, Real* out) {
  Real acc[R][kColTile];
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t c = 0; c < kColTile; ++c) acc[r][c] = out[(i0 + r) * cols + c0 + c];
  for (std::size_t k = 0; k < inner; ++k) {
    const Real* bk = b + k * cols + c0;
    for (std::size_t r = 0; r < R; ++r) {
      const Real aik = a[(i0 + r) * inner + k];
#pragma omp simd
      for (std::size_t c = 0; c < kColTile; ++c) acc[r][c] = std::fma(aik, bk[c], acc[r][c]);
    }
  }
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t c = 0; c < kColTile; ++c) out[(i0 + r) * cols + c0 + c] = acc[r][c];
}

// out[i, :] (+)= sum_k a[i, k] * b[k, :], k ascending, one fma chain per element.
void gemm_rows(const Real* a, std::size_t rows, std::size_t inner, const Real* b, std::size_t cols,
               Real* out) {
  const auto blocks = static_cast<long>((rows + kRowBlock - 1) / kRowBlock);
  const std::size_t full_cols = cols - cols % kColTile;
#pragma omp parallel for schedule(static)
  for (long blk = 0; blk < blocks; ++blk) {
    const std::size_t i0 = static_cast<std::size_t>(blk) * kRowBlock;
    const std::size_t i1 = std::min(rows, i0 + kRowBlock);
    if (i1 - i0 == kRowBlock) {
      for (std::size_t c0 = 0; c0 < full_cols; c0 += kColTile) gemm_tile<kRowBlock>(a, i0, inner, b, cols, c0, out);
    } else {
      for (std::size_t i = i0; i < i1; ++i)
        for (std::size_t c0 = 0; c0 < full_cols; c0 += kColTile) gemm_tile<1>(a, i, inner, b, cols, c0, out);
    }
    if (full_cols == cols) continue;
    for (std::size_t k = 0; k < inner; ++k) {
      const Real* bk = b + k * cols;
      for (std::size_t i = i0; i < i1; ++i) {
        const Real aik = a[i * inner + k];
        Real* oi = out + i * cols;
        for (std::size_t c = full_cols; c < cols; ++c) oi[c] = std::fma(aik, bk[c], oi[c]);
      }
    }
  }
}
}  // namespace

void linear_forward(const Real* x, std::size_t rows, std::size_t in, const Real* w, const Real* b,
                    std::size_t out, Real* y) {
  const auto wt = transpose(w, out, in);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t n = 0; n < out; ++n) y[i * out + n] = b ? b[n] : Real(0);
  gemm_rows(x, rows, in, wt.data(), out, y);
}

void linear_backward_input(const Real* dy, std::size_t rows, std::size_t out, const Real* w,
                           std::size_t in, Real* dx) {
  gemm_rows(dy, rows, out, w, in, dx);
}

void linear_backward_params(const Real* dy, std::size_t rows, std::size_t out, const Real* x,
                            std::size_t in, Real* dw, Real* db) {
  const auto dyt = transpose(dy, rows, out);
  gemm_rows(dyt.data(), out, rows, x, in, dw);
  if (db) {
    for (std::size_t n = 0; n < out; ++n) {
      Real acc = db[n];
      const Real* col = dyt.data() + n * rows;
      for (std::size_t i = 0; i < rows; ++i) acc += col[i];
      db[n] = acc;
    }
  }
}

namespace {

// Per-(batch, head) contiguous copies of the strided [B, L, D] head slices.
struct HeadViews {
  std::size_t hd, nq, nk, bh;
  std::vector<Real> q;   // [bh][nq][hd]
  std::vector<Real> kt;  // [bh][hd][nk]
  std::vector<Real> kr;  // [bh][nk][hd]
  std::vector<Real> vt;  // [bh][hd][nk]
  std::vector<Real> vr;  // [bh][nk][hd]

  HeadViews(const Real* qs, const Real* ks, const Real* vs, const AttentionDims& d)
      : hd(d.head_dim()), nq(d.n_q), nk(d.n_k), bh(d.batch * d.heads) {
    q.resize(bh * nq * hd);
    kt.resize(bh * hd * nk);
    kr.resize(bh * nk * hd);
    vt.resize(bh * hd * nk);
    vr.resize(bh * nk * hd);
    const long total = static_cast<long>(bh);
#pragma omp parallel for schedule(static)
    for (long idx = 0; idx < total; ++idx) {
      const std::size_t b = static_cast<std::size_t>(idx) / d.heads;
      const std::size_t h = static_cast<std::size_t>(idx) % d.heads;
      const std::size_t u = static_cast<std::size_t>(idx);
      for (std::size_t i = 0; i < nq; ++i)
        for (std::size_t t = 0; t < hd; ++t)
          q[(u * nq + i) * hd + t] = qs[(b * nq + i) * d.model_dim + h * hd + t];
      for (std::size_t j = 0; j < nk; ++j)
        for (std::size_t t = 0; t < hd; ++t) {
          const Real kv = ks[(b * nk + j) * d.model_dim + h * hd + t];
          const Real vv = vs[(b * nk + j) * d.model_dim + h * hd + t];
          kt[(u * hd + t) * nk + j] = kv;
          kr[(u * nk + j) * hd + t] = kv;
          vt[(u * hd + t) * nk + j] = vv;
          vr[(u * nk + j) * hd + t] = vv;
        }
    }
  }
};

std::size_t key_limit(const AttentionMask& mask, std::size_t nk) {
  return mask.kind == AttentionMask::Kind::key_prefix ? std::min(mask.prefix_len, nk) : nk;
}

// s[j] = scale * <qi, k_j> for j in [j0, j1), masked entries set to -inf.
void scores(const Real* qi, const Real* kt, std::size_t hd, std::size_t nk, std::size_t j0,
            std::size_t j1, Real scale, const AttentionMask& mask, std::size_t query, Real* s) {
  std::fill(s, s + (j1 - j0), Real(0));
  for (std::size_t t = 0; t < hd; ++t) {
    const Real qt = qi[t];
    const Real* row = kt + t * nk;
#pragma omp simd
    for (std::size_t j = j0; j < j1; ++j) s[j - j0] = std::fma(qt, row[j], s[j - j0]);
  }
  for (std::size_t j = j0; j < j1; ++j) s[j - j0] *= scale;
  if (mask.kind == AttentionMask::Kind::dense) {
    for (std::size_t j = j0; j < j1; ++j)
      if (!mask.permits(query, j)) s[j - j0] = -std::numeric_limits<Real>::infinity();
  }
}

}  // namespace

void attention_forward(const Real* q, const Real* k, const Real* v, const AttentionDims& d,
                       const AttentionMask& mask, Real* out, Real* lse) {
  mask.validate(d.n_q, d.n_k);
  const HeadViews hv(q, k, v, d);
  const std::size_t hd = hv.hd, nq = d.n_q, nk = d.n_k;
  const std::size_t limit = key_limit(mask, nk);
  const Real scale = Real(1) / std::sqrt(static_cast<Real>(hd));
  const std::size_t qblocks = (nq + kAttnBlock - 1) / kAttnBlock;
  const long tasks = static_cast<long>(hv.bh * qblocks);

#pragma omp parallel
  {
    std::vector<Real> s(limit);
    std::vector<Real> o(hd);
#pragma omp for schedule(static)
    for (long task = 0; task < tasks; ++task) {
      const std::size_t u = static_cast<std::size_t>(task) / qblocks;
      const std::size_t blk = static_cast<std::size_t>(task) % qblocks;
      const std::size_t b = u / d.heads, h = u % d.heads;
      const Real* kt = hv.kt.data() + u * hd * nk;
      const Real* vr = hv.vr.data() + u * nk * hd;
      for (std::size_t i = blk * kAttnBlock; i < std::min(nq, (blk + 1) * kAttnBlock); ++i) {
        const Real* qi = hv.q.data() + (u * nq + i) * hd;
        scores(qi, kt, hd, nk, 0, limit, scale, mask, i, s.data());
        Real mx = -std::numeric_limits<Real>::infinity();
        for (std::size_t j = 0; j < limit; ++j) mx = std::max(mx, s[j]);
        Real sum = 0;
        for (std::size_t j = 0; j < limit; ++j) {
          s[j] = std::exp(s[j] - mx);
          sum += s[j];
        }
        const Real inv = Real(1) / sum;
        std::fill(o.begin(), o.end(), Real(0));
        for (std::size_t j = 0; j < limit; ++j) {
          const Real p = s[j] * inv;
          if (p == Real(0)) continue;
          const Real* vj = vr + j * hd;
#pragma omp simd
          for (std::size_t t = 0; t < hd; ++t) o[t] = std::fma(p, vj[t], o[t]);
        }
        Real* dst = out + (b * nq + i) * d.model_dim + h * hd;
        std::copy(o.begin(), o.end(), dst);
        lse[u * nq + i] = mx + std::log(sum);
      }
    }
  }
}

void attention_backward(const Real* q, const Real* k, const Real* v, const Real* out, const Real* lse,
                        const Real* dout, const AttentionDims& d, const AttentionMask& mask, Real* dq,
                        Real* dk, Real* dv) {
  const HeadViews hv(q, k, v, d);
  const std::size_t hd = hv.hd, nq = d.n_q, nk = d.n_k, D = d.model_dim;
  const std::size_t limit = key_limit(mask, nk);
  const Real scale = Real(1) / std::sqrt(static_cast<Real>(hd));

  // Per-(b,h) gathered dO and D_i = <dO_i, O_i>.
  std::vector<Real> gdo(hv.bh * nq * hd);
  std::vector<Real> delta(hv.bh * nq);
  for (std::size_t u = 0; u < hv.bh; ++u) {
    const std::size_t b = u / d.heads, h = u % d.heads;
    for (std::size_t i = 0; i < nq; ++i) {
      Real acc = 0;
      for (std::size_t t = 0; t < hd; ++t) {
        const std::size_t src = (b * nq + i) * D + h * hd + t;
        gdo[(u * nq + i) * hd + t] = dout[src];
        acc = std::fma(dout[src], out[src], acc);
      }
      delta[u * nq + i] = acc;
    }
  }

  // One sequential sweep over the queries per (batch, head): dq row by row, and
  // dk/dv accumulated over queries in ascending order, so the result does not
  // depend on how (batch, head) pairs are spread over threads.
  const long tasks = static_cast<long>(hv.bh);
#pragma omp parallel
  {
    std::vector<Real> s(limit), dp(limit), ds(limit), acc(hd);
    std::vector<Real> dkt(hd * limit), dvt(hd * limit);  // [hd][limit]
#pragma omp for schedule(static)
    for (long task = 0; task < tasks; ++task) {
      const std::size_t u = static_cast<std::size_t>(task);
      const std::size_t b = u / d.heads, h = u % d.heads;
      const Real* kt = hv.kt.data() + u * hd * nk;
      const Real* kr = hv.kr.data() + u * nk * hd;
      const Real* vt = hv.vt.data() + u * hd * nk;
      std::fill(dkt.begin(), dkt.end(), Real(0));
      std::fill(dvt.begin(), dvt.end(), Real(0));
      for (std::size_t i = 0; i < nq; ++i) {
        const Real* qi = hv.q.data() + (u * nq + i) * hd;
        const Real* doi = gdo.data() + (u * nq + i) * hd;
        scores(qi, kt, hd, nk, 0, limit, scale, mask, i, s.data());
        std::fill(dp.begin(), dp.end(), Real(0));
        for (std::size_t t = 0; t < hd; ++t) {
          const Real g = doi[t];
          const Real* row = vt + t * nk;
#pragma omp simd
          for (std::size_t j = 0; j < limit; ++j) dp[j] = std::fma(g, row[j], dp[j]);
        }
        const Real l = lse[u * nq + i], di = delta[u * nq + i];
        for (std::size_t j = 0; j < limit; ++j) {
          s[j] = std::exp(s[j] - l);
          ds[j] = s[j] * (dp[j] - di);
        }
        if (dq) {
          std::fill(acc.begin(), acc.end(), Real(0));
          for (std::size_t j = 0; j < limit; ++j) {
            if (ds[j] == Real(0)) continue;
            const Real* kj = kr + j * hd;
#pragma omp simd
            for (std::size_t t = 0; t < hd; ++t) acc[t] = std::fma(ds[j], kj[t], acc[t]);
          }
          Real* dst = dq + (b * nq + i) * D + h * hd;
          for (std::size_t t = 0; t < hd; ++t) dst[t] += acc[t] * scale;
        }
        for (std::size_t j = 0; j < limit; ++j) ds[j] *= scale;
        for (std::size_t t = 0; t < hd; ++t) {
          const Real qt = qi[t], gt = doi[t];
          Real* dkr = dkt.data() + t * limit;
          Real* dvr = dvt.data() + t * limit;
#pragma omp simd
          for (std::size_t j = 0; j < limit; ++j) {
            dkr[j] = std::fma(ds[j], qt, dkr[j]);
            dvr[j] = std::fma(s[j], gt, dvr[j]);
          }
        }
      }
      for (std::size_t j = 0; j < limit; ++j) {
        const std::size_t base = (b * nk + j) * D + h * hd;
        for (std::size_t t = 0; t < hd; ++t) {
          if (dk) dk[base + t] += dkt[t * limit + j];
          if (dv) dv[base + t] += dvt[t * limit + j];
        }
      }
    }
  }
}

namespace reference {

void linear_forward(const Real* x, std::size_t rows, std::size_t in, const Real* w, const Real* b,
                    std::size_t out, Real* y) {
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t n = 0; n < out; ++n) {
      Real acc = b ? b[n] : Real(0);
      for (std::size_t k = 0; k < in; ++k) acc = std::fma(x[i * in + k], w[n * in + k], acc);
      y[i * out + n] = acc;
    }
}

void linear_backward_input(const Real* dy, std::size_t rows, std::size_t out, const Real* w,
                           std::size_t in, Real* dx) {
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t k = 0; k < in; ++k) {
      Real acc = dx[i * in + k];
      for (std::size_t n = 0; n < out; ++n) acc = std::fma(dy[i * out + n], w[n * in + k], acc);
      dx[i * in + k] = acc;
    }
}

void linear_backward_params(const Real* dy, std::size_t rows, std::size_t out, const Real* x,
                            std::size_t in, Real* dw, Real* db) {
  for (std::size_t n = 0; n < out; ++n) {
    for (std::size_t k = 0; k < in; ++k) {
      Real acc = dw[n * in + k];
      for (std::size_t i = 0; i < rows; ++i) acc = std::fma(dy[i * out + n], x[i * in + k], acc);
      dw[n * in + k] = acc;
    }
    if (db) {
      Real acc = db[n];
      for (std::size_t i = 0; i < rows; ++i) acc += dy[i * out + n];
      db[n] = acc;
    }
  }
}

void attention_forward(const Real* q, const Real* k, const Real* v, const AttentionDims& d,
                       const AttentionMask& mask, Real* out) {
  mask.validate(d.n_q, d.n_k);
  const std::size_t hd = d.head_dim(), D = d.model_dim;
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
  std::vector<double> p(d.n_k);
  for (std::size_t b = 0; b < d.batch; ++b)
    for (std::size_t h = 0; h < d.heads; ++h)
      for (std::size_t i = 0; i < d.n_q; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < d.n_k; ++j) {
          if (!mask.permits(i, j)) {
            p[j] = -std::numeric_limits<double>::infinity();
            continue;
          }
          double s = 0;
          for (std::size_t t = 0; t < hd; ++t)
            s += double(q[(b * d.n_q + i) * D + h * hd + t]) * double(k[(b * d.n_k + j) * D + h * hd + t]);
          p[j] = s * scale;
          mx = std::max(mx, p[j]);
        }
        double sum = 0;
        for (std::size_t j = 0; j < d.n_k; ++j) {
          p[j] = mask.permits(i, j) ? std::exp(p[j] - mx) : 0.0;
          sum += p[j];
        }
        for (std::size_t t = 0; t < hd; ++t) {
          double acc = 0;
          for (std::size_t j = 0; j < d.n_k; ++j) acc += p[j] / sum * double(v[(b * d.n_k + j) * D + h * hd + t]);
          out[(b * d.n_q + i) * D + h * hd + t] = static_cast<Real>(acc);
        }
      }
}

}  // namespace reference
}  // namespace kernels
TABICL_NS_END
