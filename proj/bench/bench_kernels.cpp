// Wall-clock comparison of the serial reference kernels and the OpenMP
// kernels on shapes taken from a desk-scale training step.
#include <omp.h>

#include <chrono>
#include <cstdio>
#include <functional>
#include <vector>

#include "helix/kernels.hpp"
#include "helix/rng.hpp"

namespace k = helix::kernels;

namespace {

std::vector<double> random_buffer(std::size_t n, std::uint64_t seed) {
  helix::Rng rng(seed, "bench");
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

double best_of(int reps, const std::function<void()>& fn) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    best = std::min(best, std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
  }
  return best;
}

struct Case {
  const char* name;
  std::function<void()> reference, parallel;
};

}  // namespace

int main() {
  k::configure_threads();
  // 8 windows of 24 steps x 12 features, width 16, 2 heads
  const std::size_t tokens = 8 * 24 * 12, d = 16, din = 18;
  const auto a = random_buffer(tokens * din, 1), w = random_buffer(din * d, 2), g = random_buffer(tokens * d, 3);
  std::vector<double> c(tokens * d), da(tokens * din), dw(din * d);

  const k::AttentionShape temporal{8 * 12, 24, d, 2, 0.25};
  const auto q = random_buffer(tokens * d, 4), kk = random_buffer(tokens * d, 5), v = random_buffer(tokens * d, 6);
  std::vector<double> probs(temporal.batch * 2 * 24 * 24), out(tokens * d), dq(tokens * d), dk(tokens * d),
      dv(tokens * d);

  const auto gamma = random_buffer(d, 7), beta = random_buffer(d, 8);
  std::vector<double> y(tokens * d), mean(tokens), rstd(tokens), dx(tokens * d), dgamma(d), dbeta(d);

  std::vector<Case> cases = {
      {"gemm", [&] { k::reference::gemm(a.data(), w.data(), c.data(), tokens, din, d); },
       [&] { k::omp::gemm(a.data(), w.data(), c.data(), tokens, din, d); }},
      {"gemm_grad_a", [&] { k::reference::gemm_grad_a(g.data(), w.data(), da.data(), tokens, din, d); },
       [&] { k::omp::gemm_grad_a(g.data(), w.data(), da.data(), tokens, din, d); }},
      {"gemm_grad_b", [&] { k::reference::gemm_grad_b(a.data(), g.data(), dw.data(), tokens, din, d); },
       [&] { k::omp::gemm_grad_b(a.data(), g.data(), dw.data(), tokens, din, d); }},
      {"layer_norm",
       [&] { k::reference::layer_norm_rows(g.data(), gamma.data(), beta.data(), y.data(), mean.data(), rstd.data(), tokens, d, 1e-5); },
       [&] { k::omp::layer_norm_rows(g.data(), gamma.data(), beta.data(), y.data(), mean.data(), rstd.data(), tokens, d, 1e-5); }},
      {"layer_norm_bwd",
       [&] { k::reference::layer_norm_rows_backward(q.data(), g.data(), gamma.data(), mean.data(), rstd.data(), dx.data(), dgamma.data(), dbeta.data(), tokens, d); },
       [&] { k::omp::layer_norm_rows_backward(q.data(), g.data(), gamma.data(), mean.data(), rstd.data(), dx.data(), dgamma.data(), dbeta.data(), tokens, d); }},
      {"attention_fwd",
       [&] { k::reference::attention_forward(q.data(), kk.data(), v.data(), nullptr, probs.data(), out.data(), temporal); },
       [&] { k::omp::attention_forward(q.data(), kk.data(), v.data(), nullptr, probs.data(), out.data(), temporal); }},
      {"attention_bwd",
       [&] { k::reference::attention_backward(g.data(), q.data(), kk.data(), v.data(), nullptr, probs.data(), dq.data(), dk.data(), dv.data(), temporal); },
       [&] { k::omp::attention_backward(g.data(), q.data(), kk.data(), v.data(), nullptr, probs.data(), dq.data(), dk.data(), dv.data(), temporal); }},
  };

  const int threads = k::max_threads();
  std::printf("threads: %d\n%-16s %12s %12s %8s\n", threads, "kernel", "reference ms", "omp ms", "speedup");
  for (const auto& cs : cases) {
    const double ref = best_of(20, cs.reference);
    const double par = best_of(20, cs.parallel);
    std::printf("%-16s %12.3f %12.3f %8.2f\n", cs.name, ref, par, ref / par);
  }
}
