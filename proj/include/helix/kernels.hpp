#pragma once

// Dense compute kernels behind the autograd ops.
//
// `reference` is the plain serial implementation kept for testing;
// `omp` distributes independent output rows across OpenMP threads. Both
// reduce every output element in the same fixed order, so they agree bit for
// bit regardless of the thread count.

#include <cstddef>

namespace helix::kernels {

/// Describes one fused multi-head attention problem on [N, S, D] buffers.
struct AttentionShape {
  std::size_t batch;   // N independent sequences
  std::size_t length;  // S tokens per sequence
  std::size_t width;   // D = heads * head_width
  std::size_t heads;
  double scale;        // usually 1/sqrt(head_width)
};

#define HELIX_KERNEL_DECLS                                                               \
  /* c[M,N] = a[M,K] * b[K,N] (overwrite) */                                               \
  void gemm(const double* a, const double* b, double* c, std::size_t m, std::size_t k,   \
            std::size_t n);                                                               \
  /* da[M,K] += g[M,N] * b[K,N]^T */                                                      \
  void gemm_grad_a(const double* g, const double* b, double* da, std::size_t m,          \
                   std::size_t k, std::size_t n);                                         \
  /* db[K,N] += a[M,K]^T * g[M,N] */                                                      \
  void gemm_grad_b(const double* a, const double* g, double* db, std::size_t m,          \
                   std::size_t k, std::size_t n);                                         \
  void softmax_rows(const double* x, double* y, std::size_t rows, std::size_t n);        \
  void layer_norm_rows(const double* x, const double* gamma, const double* beta,         \
                       double* y, double* mean, double* rstd, std::size_t rows,          \
                       std::size_t d, double eps);                                        \
  /* dx += ..., dgamma += ..., dbeta += ... (any may be null) */                          \
  void layer_norm_rows_backward(const double* dy, const double* x, const double* gamma,  \
                                const double* mean, const double* rstd, double* dx,      \
                                double* dgamma, double* dbeta, std::size_t rows,         \
                                std::size_t d);                                           \
  /* probs[N,H,S,S] receives pre-dropout softmax weights. keep (optional) holds         \
     the dropout multipliers per probability entry. Key reductions run in a             \
     canonical key order, so permuting the keys permutes nothing but the output. */     \
  void attention_forward(const double* q, const double* k, const double* v,              \
                         const double* keep, double* probs, double* out,                  \
                         const AttentionShape& shape);                                    \
  void attention_backward(const double* dout, const double* q, const double* k,          \
                          const double* v, const double* keep, const double* probs,      \
                          double* dq, double* dk, double* dv, const AttentionShape& shape);

namespace reference {
HELIX_KERNEL_DECLS
}  // namespace reference

namespace omp {
HELIX_KERNEL_DECLS
}  // namespace omp

#undef HELIX_KERNEL_DECLS

// Applies the HELIX_THREADS cap (if set) to the OpenMP runtime. Idempotent.
void configure_threads();
int max_threads();

}  // namespace helix::kernels
