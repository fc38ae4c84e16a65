// The OpenMP kernels must agree bit for bit with the serial reference.

#include <omp.h>

#include <utility>
#include <vector>

#include "doctest.h"
#include "helix/kernels.hpp"
#include "test_util.hpp"

using namespace helix;
using helix::testing::random_tensor;

namespace {

bool same_bits(const std::vector<double>& a, const std::vector<double>& b) {
  return helix::testing::bitwise_equal(Tensor(Shape{a.size()}, a), Tensor(Shape{b.size()}, b));
}

struct ThreadScope {
  explicit ThreadScope(int n) : saved(omp_get_max_threads()) { omp_set_num_threads(n); }
  ~ThreadScope() { omp_set_num_threads(saved); }
  int saved;
};

}  // namespace

TEST_CASE("gemm variants match the reference for several thread counts") {
  const std::size_t m = 67;
  using Dims = std::pair<std::size_t, std::size_t>;
  for (const auto& [k, n] : {Dims{19, 23}, Dims{19, 16}, Dims{16, 8}, Dims{8, 32}, Dims{32, 16}}) {
    CAPTURE(k);
    CAPTURE(n);
    const auto a = random_tensor({m, k}, 1), b = random_tensor({k, n}, 2), g = random_tensor({m, n}, 3);
    std::vector<double> c_ref(m * n), c_omp(m * n);
    kernels::reference::gemm(a.data().data(), b.data().data(), c_ref.data(), m, k, n);

    std::vector<double> da_ref(m * k, 0.5), db_ref(k * n, -0.25);
    kernels::reference::gemm_grad_a(g.data().data(), b.data().data(), da_ref.data(), m, k, n);
    kernels::reference::gemm_grad_b(a.data().data(), g.data().data(), db_ref.data(), m, k, n);

    for (int threads : {1, 2, 3}) {
      ThreadScope scope(threads);
      kernels::omp::gemm(a.data().data(), b.data().data(), c_omp.data(), m, k, n);
      CHECK(same_bits(c_ref, c_omp));
      std::vector<double> da(m * k, 0.5), db(k * n, -0.25);
      kernels::omp::gemm_grad_a(g.data().data(), b.data().data(), da.data(), m, k, n);
      kernels::omp::gemm_grad_b(a.data().data(), g.data().data(), db.data(), m, k, n);
      CHECK(same_bits(da_ref, da));
      CHECK(same_bits(db_ref, db));
    }
  }
}

TEST_CASE("softmax and layer norm kernels match the reference") {
  const std::size_t rows = 300, d = 12;
  const auto x = random_tensor({rows, d}, 4, -5.0, 5.0);
  const auto gamma = random_tensor({d}, 5), beta = random_tensor({d}, 6), dy = random_tensor({rows, d}, 7);

  std::vector<double> s_ref(rows * d), s_omp(rows * d);
  kernels::reference::softmax_rows(x.data().data(), s_ref.data(), rows, d);
  kernels::omp::softmax_rows(x.data().data(), s_omp.data(), rows, d);
  CHECK(same_bits(s_ref, s_omp));

  std::vector<double> y_ref(rows * d), y_omp(rows * d), mu_ref(rows), mu_omp(rows), rs_ref(rows), rs_omp(rows);
  kernels::reference::layer_norm_rows(x.data().data(), gamma.data().data(), beta.data().data(),
                                      y_ref.data(), mu_ref.data(), rs_ref.data(), rows, d, 1e-5);
  kernels::omp::layer_norm_rows(x.data().data(), gamma.data().data(), beta.data().data(),
                                y_omp.data(), mu_omp.data(), rs_omp.data(), rows, d, 1e-5);
  CHECK(same_bits(y_ref, y_omp));

  std::vector<double> dx_ref(rows * d, 0.0), dx_omp(rows * d, 0.0), dg_ref(d, 0.0), dg_omp(d, 0.0),
      db_ref(d, 0.0), db_omp(d, 0.0);
  kernels::reference::layer_norm_rows_backward(dy.data().data(), x.data().data(), gamma.data().data(),
                                               mu_ref.data(), rs_ref.data(), dx_ref.data(),
                                               dg_ref.data(), db_ref.data(), rows, d);
  kernels::omp::layer_norm_rows_backward(dy.data().data(), x.data().data(), gamma.data().data(),
                                         mu_omp.data(), rs_omp.data(), dx_omp.data(), dg_omp.data(),
                                         db_omp.data(), rows, d);
  CHECK(same_bits(dx_ref, dx_omp));
  CHECK(same_bits(dg_ref, dg_omp));
  CHECK(same_bits(db_ref, db_omp));
}

TEST_CASE("attention kernels match the reference with and without dropout multipliers") {
  for (std::size_t D : {8, 6, 16, 32}) {
    CAPTURE(D);
    const kernels::AttentionShape shape{9, 7, D, 2, 0.5};
    const std::size_t n = 9 * 7 * D, np = 9 * 2 * 7 * 7;
    const auto q = random_tensor({n}, 8), k = random_tensor({n}, 9), v = random_tensor({n}, 10),
               dout = random_tensor({n}, 11);
    std::vector<double> keep(np);
    Rng rng(12);
    for (auto& m : keep) m = rng.bernoulli(0.3) ? 0.0 : 1.0 / 0.7;

    for (const double* kp : {static_cast<const double*>(nullptr), static_cast<const double*>(keep.data())}) {
      std::vector<double> p_ref(np), o_ref(n), p_omp(np), o_omp(n);
      kernels::reference::attention_forward(q.data().data(), k.data().data(), v.data().data(), kp,
                                            p_ref.data(), o_ref.data(), shape);
      std::vector<double> dq_ref(n, 0.0), dk_ref(n, 0.0), dv_ref(n, 0.0);
      kernels::reference::attention_backward(dout.data().data(), q.data().data(), k.data().data(),
                                             v.data().data(), kp, p_ref.data(), dq_ref.data(),
                                             dk_ref.data(), dv_ref.data(), shape);
      for (int threads : {1, 4}) {
        ThreadScope scope(threads);
        kernels::omp::attention_forward(q.data().data(), k.data().data(), v.data().data(), kp,
                                        p_omp.data(), o_omp.data(), shape);
        CHECK(same_bits(p_ref, p_omp));
        CHECK(same_bits(o_ref, o_omp));
        std::vector<double> dq(n, 0.0), dk(n, 0.0), dv(n, 0.0);
        kernels::omp::attention_backward(dout.data().data(), q.data().data(), k.data().data(),
                                         v.data().data(), kp, p_omp.data(), dq.data(), dk.data(),
                                         dv.data(), shape);
        CHECK(same_bits(dq_ref, dq));
        CHECK(same_bits(dk_ref, dk));
        CHECK(same_bits(dv_ref, dv));
      }
    }
  }
}

TEST_CASE("attention output is invariant to the order keys are presented in") {
  // One sequence, one head: permuting keys/values permutes nothing in the output.
  const std::size_t S = 6, D = 4;
  const kernels::AttentionShape shape{1, S, D, 1, 0.5};
  const auto q = random_tensor({S, D}, 20), k = random_tensor({S, D}, 21), v = random_tensor({S, D}, 22);
  const std::vector<std::size_t> perm{3, 0, 5, 1, 4, 2};
  Tensor kp(Shape{S, D}), vp(Shape{S, D});
  for (std::size_t j = 0; j < S; ++j)
    for (std::size_t c = 0; c < D; ++c) {
      kp[j * D + c] = k[perm[j] * D + c];
      vp[j * D + c] = v[perm[j] * D + c];
    }
  std::vector<double> p1(S * S), o1(S * D), p2(S * S), o2(S * D);
  kernels::omp::attention_forward(q.data().data(), k.data().data(), v.data().data(), nullptr,
                                  p1.data(), o1.data(), shape);
  kernels::omp::attention_forward(q.data().data(), kp.data().data(), vp.data().data(), nullptr,
                                  p2.data(), o2.data(), shape);
  CHECK(same_bits(o1, o2));
}

TEST_CASE("key order invariance holds when scores tie") {
  // keys 0, 2 and 4 share a row, so their scores tie and values break the tie
  const std::size_t S = 6, D = 4;
  const kernels::AttentionShape shape{1, S, D, 1, 0.5};
  const auto q = random_tensor({S, D}, 30), v = random_tensor({S, D}, 32);
  auto k = random_tensor({S, D}, 31);
  for (std::size_t c = 0; c < D; ++c) k[2 * D + c] = k[4 * D + c] = k[c];
  const std::vector<std::size_t> perm{4, 1, 2, 5, 0, 3};
  Tensor kp(Shape{S, D}), vp(Shape{S, D});
  for (std::size_t j = 0; j < S; ++j)
    for (std::size_t c = 0; c < D; ++c) {
      kp[j * D + c] = k[perm[j] * D + c];
      vp[j * D + c] = v[perm[j] * D + c];
    }
  std::vector<double> p1(S * S), o1(S * D), p2(S * S), o2(S * D), p3(S * S), o3(S * D);
  kernels::omp::attention_forward(q.data().data(), k.data().data(), v.data().data(), nullptr,
                                  p1.data(), o1.data(), shape);
  kernels::omp::attention_forward(q.data().data(), kp.data().data(), vp.data().data(), nullptr,
                                  p2.data(), o2.data(), shape);
  kernels::reference::attention_forward(q.data().data(), kp.data().data(), vp.data().data(), nullptr,
                                        p3.data(), o3.data(), shape);
  CHECK(same_bits(o1, o2));
  CHECK(same_bits(o2, o3));
}
