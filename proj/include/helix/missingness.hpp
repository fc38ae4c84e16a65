#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

#include "helix/io.hpp"
#include "helix/rng.hpp"
#include "helix/tensor.hpp"

namespace helix {

enum class Pattern { point, block, subseq };

std::string_view to_string(Pattern p);
Pattern parse_pattern(std::string_view name);

struct CorruptionSpec {
  Pattern pattern = Pattern::point;
  double rate = 0.5;
  std::size_t block_len = 6;
  std::size_t block_width = 3;

  void validate() const;
};

// One sampled block: window w, steps [t, t+len), features [f, f+width).
struct Rectangle {
  std::size_t window = 0;
  std::size_t t = 0;
  std::size_t f = 0;
  std::size_t len = 0;
  std::size_t width = 0;
};

/// Output of a corruption generator over [W, T, F] windows.
///
/// `values`/`mask` are the corrupted inputs (hidden entries zero-filled with
/// mask 0). `eval_mask` marks the hidden, originally observed entries.
/// Rates are measured relative to the originally observed entry count.
struct Corruption {
  Tensor values;
  Tensor mask;
  Tensor eval_mask;
  double realized_rate = 0.0;
  std::size_t hidden = 0;
  std::size_t observed = 0;
  std::vector<Rectangle> rectangles;  // block pattern only
};

Corruption corrupt_point(const Tensor& values, const Tensor& mask, double rate, Rng rng);
Corruption corrupt_block(const Tensor& values, const Tensor& mask, double rate, std::size_t block_len,
                         std::size_t block_width, Rng rng);
Corruption corrupt_subseq(const Tensor& values, const Tensor& mask, double rate, Rng rng);
Corruption corrupt(const Tensor& values, const Tensor& mask, const CorruptionSpec& spec, Rng rng);

struct SyntheticSpec {
  std::size_t features = 12;
  std::size_t window = 24;
  std::size_t windows = 400;
  double lengthscale = 0.4;
  double noise = 0.1;
  double ar = 0.8;
  std::vector<Coord> coords;  // sampled in the unit square when empty

  void validate() const;
};

struct SyntheticData {
  Tensor values;  // [windows * window, features], fully observed
  std::vector<Coord> coords;
  double jitter = 0.0;  // diagonal jitter the Cholesky factorization needed
};

/// Spatially correlated AR(1) series: x_t = chol(K) z_t + noise, with
/// K_ij = exp(-dist_ij^2 / l^2) and z_t = ar z_{t-1} + sqrt(1 - ar^2) e_t.
SyntheticData synth_spatial(const SyntheticSpec& spec, Rng rng);

}  // namespace helix
