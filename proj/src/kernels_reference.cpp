#include <cmath>
#include <vector>

#include "helix/kernels.hpp"
#include "kernels_detail.hpp"

namespace helix::kernels::reference {

void gemm(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
          std::size_t n) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
      c[i * n + j] = acc;
    }
}

void gemm_grad_a(const double* g, const double* b, double* da, std::size_t m, std::size_t k,
                 std::size_t n) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * b[p * n + j];
      da[i * k + p] += acc;
    }
}

void gemm_grad_b(const double* a, const double* g, double* db, std::size_t m, std::size_t k,
                 std::size_t n) {
  for (std::size_t p = 0; p < k; ++p)
    for (std::size_t j = 0; j < n; ++j) {
      double acc = db[p * n + j];
      for (std::size_t i = 0; i < m; ++i) acc += a[i * k + p] * g[i * n + j];
      db[p * n + j] = acc;
    }
}

void softmax_rows(const double* x, double* y, std::size_t rows, std::size_t n) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x + r * n;
    double* yr = y + r * n;
    double mx = xr[0];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, xr[j]);
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
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x + r * d;
    double mu = 0.0;
    for (std::size_t c = 0; c < d; ++c) mu += xr[c];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t c = 0; c < d; ++c) var += (xr[c] - mu) * (xr[c] - mu);
    var /= static_cast<double>(d);
    const double rs = 1.0 / std::sqrt(var + eps);
    mean[r] = mu;
    rstd[r] = rs;
    for (std::size_t c = 0; c < d; ++c) y[r * d + c] = (xr[c] - mu) * rs * gamma[c] + beta[c];
  }
}

void layer_norm_rows_backward(const double* dy, const double* x, const double* gamma,
                              const double* mean, const double* rstd, double* dx,
                              double* dgamma, double* dbeta, std::size_t rows, std::size_t d) {
  const double inv_d = 1.0 / static_cast<double>(d);
  for (std::size_t r = 0; r < rows; ++r) {
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
    if (dx) {
      for (std::size_t c = 0; c < d; ++c) {
        const double xhat = (xr[c] - mean[r]) * rstd[r];
        const double g = dyr[c] * gamma[c];
        dx[r * d + c] += rstd[r] * (g - sum_g * inv_d - xhat * sum_gx * inv_d);
      }
    }
  }
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < d; ++c) {
      const double xhat = (x[r * d + c] - mean[r]) * rstd[r];
      if (dgamma) dgamma[c] += dy[r * d + c] * xhat;
      if (dbeta) dbeta[c] += dy[r * d + c];
    }
}

void attention_forward(const double* q, const double* k, const double* v, const double* keep,
                       double* probs, double* out, const AttentionShape& s) {
  const std::size_t S = s.length, D = s.width, H = s.heads, W = D / H;
  std::vector<double> scores(S);
  std::vector<std::size_t> order(S);
  for (std::size_t n = 0; n < s.batch; ++n)
    for (std::size_t h = 0; h < H; ++h)
      for (std::size_t i = 0; i < S; ++i) {
        const double* qi = q + (n * S + i) * D + h * W;
        for (std::size_t j = 0; j < S; ++j) {
          const double* kj = k + (n * S + j) * D + h * W;
          double dot = 0.0;
          for (std::size_t c = 0; c < W; ++c) dot += qi[c] * kj[c];
          scores[j] = dot * s.scale;
        }
        detail::canonical_key_order(order, scores.data(), v + n * S * D + h * W, D, W);

        double mx = scores[0];
        for (std::size_t j = 1; j < S; ++j) mx = std::max(mx, scores[j]);
        double* p = probs + ((n * H + h) * S + i) * S;
        for (std::size_t j = 0; j < S; ++j) p[j] = std::exp(scores[j] - mx);
        double denom = 0.0;
        for (std::size_t j : order) denom += p[j];
        for (std::size_t j = 0; j < S; ++j) p[j] /= denom;

        const double* kp = keep ? keep + ((n * H + h) * S + i) * S : nullptr;
        double* oi = out + (n * S + i) * D + h * W;
        for (std::size_t c = 0; c < W; ++c) {
          double acc = 0.0;
          for (std::size_t j : order) {
            const double w = kp ? p[j] * kp[j] : p[j];
            acc += w * v[(n * S + j) * D + h * W + c];
          }
          oi[c] = acc;
        }
      }
}

void attention_backward(const double* dout, const double* q, const double* k, const double* v,
                        const double* keep, const double* probs, double* dq, double* dk,
                        double* dv, const AttentionShape& s) {
  const std::size_t S = s.length, D = s.width, H = s.heads, W = D / H;
  std::vector<double> dp(S);
  for (std::size_t n = 0; n < s.batch; ++n)
    for (std::size_t h = 0; h < H; ++h)
      for (std::size_t i = 0; i < S; ++i) {
        const double* p = probs + ((n * H + h) * S + i) * S;
        const double* kp = keep ? keep + ((n * H + h) * S + i) * S : nullptr;
        const double* doi = dout + (n * S + i) * D + h * W;
        double dot_pdp = 0.0;
        for (std::size_t j = 0; j < S; ++j) {
          const double* vj = v + (n * S + j) * D + h * W;
          double g = 0.0;
          for (std::size_t c = 0; c < W; ++c) g += doi[c] * vj[c];
          const double mult = kp ? kp[j] : 1.0;
          dp[j] = g * mult;
          dot_pdp += p[j] * dp[j];
          if (dv) {
            double* dvj = dv + (n * S + j) * D + h * W;
            for (std::size_t c = 0; c < W; ++c) dvj[c] += p[j] * mult * doi[c];
          }
        }
        const double* qi = q + (n * S + i) * D + h * W;
        double* dqi = dq ? dq + (n * S + i) * D + h * W : nullptr;
        for (std::size_t j = 0; j < S; ++j) {
          const double ds = p[j] * (dp[j] - dot_pdp) * s.scale;
          const double* kj = k + (n * S + j) * D + h * W;
          if (dqi)
            for (std::size_t c = 0; c < W; ++c) dqi[c] += ds * kj[c];
          if (dk) {
            double* dkj = dk + (n * S + j) * D + h * W;
            for (std::size_t c = 0; c < W; ++c) dkj[c] += ds * qi[c];
          }
        }
      }
}

}  // namespace helix::kernels::reference
