#include <omp.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <mutex>
#include <vector>

#include "helix/kernels.hpp"
#include "kernels_detail.hpp"

namespace helix::kernels {

void configure_threads() {
  static std::once_flag once;
  std::call_once(once, [] {
    if (const char* env = std::getenv("HELIX_THREADS")) {
      const int n = std::atoi(env);
      if (n > 0) omp_set_num_threads(n);
    }
  });
}

int max_threads() {
  configure_threads();
  return omp_get_max_threads();
}

namespace omp {

namespace {
using index_t = std::ptrdiff_t;
}

namespace {

// Row i of c = a b with the row held in registers for the common widths.
template <std::size_t N>
void gemm_row_fixed(const double* ai, const double* b, double* ci, std::size_t k) {
  double acc[N] = {};
  for (std::size_t p = 0; p < k; ++p) {
    const double aip = ai[p];
    const double* bp = b + p * N;
#pragma omp simd
    for (std::size_t j = 0; j < N; ++j) acc[j] += aip * bp[j];
  }
  for (std::size_t j = 0; j < N; ++j) ci[j] = acc[j];
}

void gemm_row(const double* ai, const double* b, double* ci, std::size_t k, std::size_t n) {
  switch (n) {
    case 8: return gemm_row_fixed<8>(ai, b, ci, k);
    case 16: return gemm_row_fixed<16>(ai, b, ci, k);
    case 32: return gemm_row_fixed<32>(ai, b, ci, k);
    default: break;
  }
  std::fill(ci, ci + n, 0.0);
  for (std::size_t p = 0; p < k; ++p) {
    const double aip = ai[p];
    const double* bp = b + p * n;
#pragma omp simd
    for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
  }
}

}  // namespace

void gemm(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
          std::size_t n) {
#pragma omp parallel for schedule(static) if (m * k * n > 32768)
  for (index_t i = 0; i < static_cast<index_t>(m); ++i) gemm_row(a + i * k, b, c + i * n, k, n);
}

void gemm_grad_a(const double* g, const double* b, double* da, std::size_t m, std::size_t k,
                 std::size_t n) {
  // b^T lets each da element sum over j in order while p runs in vector lanes
  std::vector<double> bt(k * n);
  for (std::size_t p = 0; p < k; ++p)
    for (std::size_t j = 0; j < n; ++j) bt[j * k + p] = b[p * n + j];
#pragma omp parallel if (m * k * n > 32768)
  {
    std::vector<double> acc(k);
#pragma omp for schedule(static)
    for (index_t i = 0; i < static_cast<index_t>(m); ++i) {
      gemm_row(g + i * n, bt.data(), acc.data(), n, k);
      double* dai = da + i * k;
#pragma omp simd
      for (std::size_t p = 0; p < k; ++p) dai[p] += acc[p];
    }
  }
}

void gemm_grad_b(const double* a, const double* g, double* db, std::size_t m, std::size_t k,
                 std::size_t n) {
  // Every db element accumulates over i in ascending order; threads own
  // disjoint row ranges of db.
#pragma omp parallel if (m * k * n > 32768)
  {
    const auto nt = static_cast<std::size_t>(omp_get_num_threads());
    const auto t = static_cast<std::size_t>(omp_get_thread_num());
    const std::size_t lo = k * t / nt, hi = k * (t + 1) / nt;
    for (std::size_t i = 0; i < m; ++i) {
      const double* ai = a + i * k;
      const double* gi = g + i * n;
      for (std::size_t p = lo; p < hi; ++p) {
        const double aip = ai[p];
        double* dbp = db + p * n;
#pragma omp simd
        for (std::size_t j = 0; j < n; ++j) dbp[j] += aip * gi[j];
      }
    }
  }
}

void softmax_rows(const double* x, double* y, std::size_t rows, std::size_t n) {
#pragma omp parallel for schedule(static) if (rows * n > 32768)
  for (index_t r = 0; r < static_cast<index_t>(rows); ++r) {
    const double* xr = x + r * n;
    double* yr = y + r * n;
    const double mx = *std::max_element(xr, xr + n);
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      yr[j] = std::exp(xr[j] - mx);
      sum += yr[j];
    }
    for (std::size_t j = 0; j < n; ++j) yr[j] /= sum;
  }
}

void layer_norm_rows(const double* x, const double* gamma, const double* beta, double* y,
                     double* mean, double* rstd, std::size_t rows, std::size_t d, double eps) {
  const double width = static_cast<double>(d);
#pragma omp parallel for schedule(static) if (rows * d > 32768)
  for (index_t r = 0; r < static_cast<index_t>(rows); ++r) {
    const double* xr = x + r * d;
    double mu = 0.0;
    for (std::size_t c = 0; c < d; ++c) mu += xr[c];
    mu /= width;
    double var = 0.0;
    for (std::size_t c = 0; c < d; ++c) var += (xr[c] - mu) * (xr[c] - mu);
    var /= width;
    const double rs = 1.0 / std::sqrt(var + eps);
    mean[r] = mu;
    rstd[r] = rs;
    double* yr = y + r * d;
    for (std::size_t c = 0; c < d; ++c) yr[c] = (xr[c] - mu) * rs * gamma[c] + beta[c];
  }
}

void layer_norm_rows_backward(const double* dy, const double* x, const double* gamma,
                              const double* mean, const double* rstd, double* dx,
                              double* dgamma, double* dbeta, std::size_t rows, std::size_t d) {
  const double inv_d = 1.0 / static_cast<double>(d);
  if (dx) {
#pragma omp parallel for schedule(static) if (rows * d > 32768)
    for (index_t r = 0; r < static_cast<index_t>(rows); ++r) {
      const double* dyr = dy + r * d;
      const double* xr = x + r * d;
      double sum_g = 0.0;
      double sum_gx = 0.0;
      for (std::size_t c = 0; c < d; ++c) {
        const double xhat = (xr[c] - mean[r]) * rstd[r];
        const double g = dyr[c] * gamma[c];
        sum_g += g;
        sum_gx += g * xhat;
      }
      double* dxr = dx + r * d;
      for (std::size_t c = 0; c < d; ++c) {
        const double xhat = (xr[c] - mean[r]) * rstd[r];
        const double g = dyr[c] * gamma[c];
        dxr[c] += rstd[r] * (g - sum_g * inv_d - xhat * sum_gx * inv_d);
      }
    }
  }
  if (!dgamma && !dbeta) return;
  // Parameter gradients reduce over rows sequentially to keep the order fixed.
  for (std::size_t r = 0; r < rows; ++r) {
    const double* dyr = dy + r * d;
    const double* xr = x + r * d;
    for (std::size_t c = 0; c < d; ++c) {
      const double xhat = (xr[c] - mean[r]) * rstd[r];
      if (dgamma) dgamma[c] += dyr[c] * xhat;
      if (dbeta) dbeta[c] += dyr[c];
    }
  }
}

namespace {

template <std::size_t WF>
void attention_forward_impl(const double* q, const double* k, const double* v, const double* keep,
                            double* probs, double* out, const AttentionShape& s) {
  const std::size_t S = s.length, D = s.width, H = s.heads, W = WF ? WF : D / H;
  const auto jobs = static_cast<index_t>(s.batch * H);
#pragma omp parallel if (s.batch * H * S * S * W > 32768)
  {
    std::vector<double> scores(S);
    std::vector<std::size_t> order(S);
    std::vector<double> acc(W);
#pragma omp for schedule(static)
    for (index_t job = 0; job < jobs; ++job) {
      const std::size_t n = static_cast<std::size_t>(job) / H;
      const std::size_t h = static_cast<std::size_t>(job) % H;
      const double* qb = q + n * S * D + h * W;
      const double* kb = k + n * S * D + h * W;
      const double* vb = v + n * S * D + h * W;
      for (std::size_t i = 0; i < S; ++i) {
        const double* qi = qb + i * D;
        for (std::size_t j = 0; j < S; ++j) {
          const double* kj = kb + j * D;
          double dot = 0.0;
          for (std::size_t c = 0; c < W; ++c) dot += qi[c] * kj[c];
          scores[j] = dot * s.scale;
        }
        detail::canonical_key_order(order, scores.data(), vb, D, W);

        const double mx = *std::max_element(scores.begin(), scores.end());
        double* p = probs + ((n * H + h) * S + i) * S;
        for (std::size_t j = 0; j < S; ++j) p[j] = std::exp(scores[j] - mx);
        double denom = 0.0;
        for (std::size_t j : order) denom += p[j];
        for (std::size_t j = 0; j < S; ++j) p[j] /= denom;

        const double* kp = keep ? keep + ((n * H + h) * S + i) * S : nullptr;
        std::fill(acc.begin(), acc.end(), 0.0);
        for (std::size_t j : order) {
          const double w = kp ? p[j] * kp[j] : p[j];
          const double* vj = vb + j * D;
          for (std::size_t c = 0; c < W; ++c) acc[c] += w * vj[c];
        }
        std::copy(acc.begin(), acc.end(), out + (n * S + i) * D + h * W);
      }
    }
  }
}

template <std::size_t WF>
void attention_backward_impl(const double* dout, const double* q, const double* k, const double* v,
                             const double* keep, const double* probs, double* dq, double* dk,
                             double* dv, const AttentionShape& s) {
  const std::size_t S = s.length, D = s.width, H = s.heads, W = WF ? WF : D / H;
  const auto jobs = static_cast<index_t>(s.batch * H);
#pragma omp parallel if (s.batch * H * S * S * W > 32768)
  {
    std::vector<double> dp(S);
#pragma omp for schedule(static)
    for (index_t job = 0; job < jobs; ++job) {
      const std::size_t n = static_cast<std::size_t>(job) / H;
      const std::size_t h = static_cast<std::size_t>(job) % H;
      const std::size_t base = n * S * D + h * W;
      for (std::size_t i = 0; i < S; ++i) {
        const double* p = probs + ((n * H + h) * S + i) * S;
        const double* kp = keep ? keep + ((n * H + h) * S + i) * S : nullptr;
        const double* doi = dout + base + i * D;
        double dot_pdp = 0.0;
        for (std::size_t j = 0; j < S; ++j) {
          const double* vj = v + base + j * D;
          double g = 0.0;
          for (std::size_t c = 0; c < W; ++c) g += doi[c] * vj[c];
          const double mult = kp ? kp[j] : 1.0;
          dp[j] = g * mult;
          dot_pdp += p[j] * dp[j];
          if (dv) {
            double* dvj = dv + base + j * D;
            for (std::size_t c = 0; c < W; ++c) dvj[c] += p[j] * mult * doi[c];
          }
        }
        const double* qi = q + base + i * D;
        double* dqi = dq ? dq + base + i * D : nullptr;
        for (std::size_t j = 0; j < S; ++j) {
          const double ds = p[j] * (dp[j] - dot_pdp) * s.scale;
          const double* kj = k + base + j * D;
          if (dqi)
            for (std::size_t c = 0; c < W; ++c) dqi[c] += ds * kj[c];
          if (dk) {
            double* dkj = dk + base + j * D;
            for (std::size_t c = 0; c < W; ++c) dkj[c] += ds * qi[c];
          }
        }
      }
    }
  }
}

}  // namespace

void attention_forward(const double* q, const double* k, const double* v, const double* keep,
                            double* probs, double* out, const AttentionShape& s) {
  switch (s.width / s.heads) {
    case 4: return attention_forward_impl<4>(q, k, v, keep, probs, out, s);
    case 8: return attention_forward_impl<8>(q, k, v, keep, probs, out, s);
    case 16: return attention_forward_impl<16>(q, k, v, keep, probs, out, s);
    default: return attention_forward_impl<0>(q, k, v, keep, probs, out, s);
  }
}

void attention_backward(const double* dout, const double* q, const double* k, const double* v,
                        const double* keep, const double* probs, double* dq, double* dk,
                        double* dv, const AttentionShape& s) {
  switch (s.width / s.heads) {
    case 4: return attention_backward_impl<4>(dout, q, k, v, keep, probs, dq, dk, dv, s);
    case 8: return attention_backward_impl<8>(dout, q, k, v, keep, probs, dq, dk, dv, s);
    case 16: return attention_backward_impl<16>(dout, q, k, v, keep, probs, dq, dk, dv, s);
    default: return attention_backward_impl<0>(dout, q, k, v, keep, probs, dq, dk, dv, s);
  }
}

}  // namespace omp
}  // namespace helix::kernels
