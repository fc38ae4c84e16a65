#pragma once

#include <cstddef>
#include <vector>

namespace helix::kernels::detail {

// Writes into `order` the key indices sorted by (score, value vector, index),
// so reductions over keys do not depend on the order the keys were presented
// in. Keys that tie on score and value contribute identical terms unless a
// dropout mask separates them.
inline void canonical_key_order(std::vector<std::size_t>& order, const double* scores,
                                const double* v, std::size_t v_stride,
                                std::size_t head_width) {
  const std::size_t n = order.size();
  // distinct scores: the rank of each key is its count of smaller scores
  thread_local std::vector<unsigned char> taken;
  taken.assign(n, 0);
  bool distinct = true;
  for (std::size_t j = 0; j < n && distinct; ++j) {
    const double sj = scores[j];
    std::size_t rank = 0;
    for (std::size_t m = 0; m < n; ++m) rank += scores[m] < sj;
    if (rank >= n || taken[rank]) distinct = false;
    else {
      taken[rank] = 1;
      order[rank] = j;
    }
  }
  if (distinct) return;

  auto less = [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] < scores[b];
    const double* va = v + a * v_stride;
    const double* vb = v + b * v_stride;
    for (std::size_t c = 0; c < head_width; ++c)
      if (va[c] != vb[c]) return va[c] < vb[c];
    return a < b;
  };
  for (std::size_t j = 0; j < n; ++j) {
    std::size_t m = j;
    while (m > 0 && less(j, order[m - 1])) {
      order[m] = order[m - 1];
      --m;
    }
    order[m] = j;
  }
}

}  // namespace helix::kernels::detail
