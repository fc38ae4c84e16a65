#include <doctest.h>

#include <cmath>

#include "helix/errors.hpp"
#include "helix/missingness.hpp"
#include "test_util.hpp"

using namespace helix;
using namespace helix::testing;

namespace {

Tensor partial_mask(const Shape& shape, double density, std::uint64_t seed) {
  Rng rng(seed, "mask");
  Tensor m(shape);
  for (auto& v : m.data()) v = rng.bernoulli(density) ? 1.0 : 0.0;
  return m;
}

// Shared postconditions of every generator.
void check_corruption(const Tensor& values, const Tensor& mask, const Corruption& c) {
  std::size_t hidden = 0;
  for (std::size_t i = 0; i < values.numel(); ++i) {
    if (c.eval_mask[i] != 0.0) {
      ++hidden;
      CHECK(mask[i] != 0.0);
      CHECK(c.mask[i] == 0.0);
      CHECK(c.values[i] == 0.0);
    } else {
      CHECK(c.mask[i] == mask[i]);
      CHECK(c.values[i] == values[i]);
    }
  }
  CHECK(hidden == c.hidden);
  std::size_t observed = 0;
  for (double m : mask.data()) observed += m != 0.0;
  CHECK(observed == c.observed);
  CHECK(c.realized_rate == doctest::Approx(static_cast<double>(hidden) / static_cast<double>(observed)));
}

double correlation(const Tensor& x, std::size_t a, std::size_t b) {
  const std::size_t N = x.dim(0), F = x.dim(1);
  double ma = 0, mb = 0;
  for (std::size_t t = 0; t < N; ++t) {
    ma += x[t * F + a];
    mb += x[t * F + b];
  }
  ma /= static_cast<double>(N);
  mb /= static_cast<double>(N);
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t t = 0; t < N; ++t) {
    const double da = x[t * F + a] - ma, db = x[t * F + b] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  return sab / std::sqrt(saa * sbb);
}

}  // namespace

TEST_CASE("point corruption") {
  SUBCASE("hidden fraction over 1e5 entries") {
    const Tensor values = random_tensor({100, 100, 10}, 1);
    const Tensor mask(values.shape(), 1.0);
    const Corruption c = corrupt_point(values, mask, 0.5, Rng(3));
    check_corruption(values, mask, c);
    CHECK(std::abs(c.realized_rate - 0.5) < 0.01);
  }
  SUBCASE("rate within 3 binomial sigma across seeds and rates") {
    const Tensor values = random_tensor({50, 24, 12}, 2);
    const Tensor mask(values.shape(), 1.0);
    const double n = static_cast<double>(values.numel());
    for (double rate : {0.1, 0.5, 0.9})
      for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const Corruption c = corrupt_point(values, mask, rate, Rng(seed, "point"));
        CHECK(std::abs(c.realized_rate - rate) <= 3.0 * std::sqrt(rate * (1 - rate) / n));
      }
  }
  SUBCASE("tiny rate hides nothing") {
    const Tensor values = random_tensor({2, 6, 3}, 3);
    const Corruption c = corrupt_point(values, Tensor(values.shape(), 1.0), 1e-9, Rng(4));
    CHECK(c.hidden == 0);
  }
  SUBCASE("partially observed input") {
    const Tensor values = random_tensor({10, 24, 6}, 4);
    const Tensor mask = partial_mask(values.shape(), 0.7, 5);
    Tensor input = values;
    for (std::size_t i = 0; i < input.numel(); ++i) input[i] *= mask[i];
    check_corruption(input, mask, corrupt_point(input, mask, 0.3, Rng(6)));
  }
  SUBCASE("deterministic per seed") {
    const Tensor values = random_tensor({4, 8, 3}, 5);
    const Tensor mask(values.shape(), 1.0);
    const Corruption a = corrupt_point(values, mask, 0.4, Rng(9)), b = corrupt_point(values, mask, 0.4, Rng(9));
    CHECK(bitwise_equal(a.eval_mask, b.eval_mask));
  }
}

TEST_CASE("block corruption") {
  SUBCASE("full-cover block hides every observed entry") {
    const Tensor values = random_tensor({1, 8, 4}, 7);
    const Tensor mask = partial_mask(values.shape(), 0.6, 8);
    const Corruption c = corrupt_block(values, mask, 0.5, 8, 4, Rng(1));
    check_corruption(values, mask, c);
    CHECK(c.rectangles.size() == 1);
    CHECK(c.hidden == c.observed);
    CHECK(c.realized_rate == 1.0);
  }
  SUBCASE("hidden set equals the replayed rectangle log") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const Tensor values = random_tensor({6, 24, 12}, seed);
      const Tensor mask = partial_mask(values.shape(), 0.8, seed + 100);
      const Corruption c = corrupt_block(values, mask, 0.5, 6, 3, Rng(seed, "block"));
      check_corruption(values, mask, c);
      Tensor replay(values.shape(), 0.0);
      for (const auto& r : c.rectangles) {
        CHECK(r.t + r.len <= 24);
        CHECK(r.f + r.width <= 12);
        for (std::size_t t = r.t; t < r.t + r.len; ++t)
          for (std::size_t f = r.f; f < r.f + r.width; ++f) {
            const std::size_t i = (r.window * 24 + t) * 12 + f;
            if (mask[i] != 0.0) replay[i] = 1.0;
          }
      }
      CHECK(bitwise_equal(replay, c.eval_mask));
      // stops the first time the target is reached
      CHECK(c.realized_rate >= 0.5);
      CHECK(static_cast<double>(c.hidden) - 0.5 * static_cast<double>(c.observed) < 6 * 3);
    }
  }
  SUBCASE("block larger than the window is clipped") {
    const Tensor values = random_tensor({3, 4, 2}, 9);
    const Corruption c = corrupt_block(values, Tensor(values.shape(), 1.0), 0.3, 10, 10, Rng(2));
    for (const auto& r : c.rectangles) {
      CHECK(r.len == 4);
      CHECK(r.width == 2);
    }
  }
  SUBCASE("no observations") {
    const Tensor values(Shape{2, 4, 2});
    CHECK_THROWS_AS(corrupt_block(values, Tensor(values.shape(), 0.0), 0.5, 2, 2, Rng(0)), DataError);
  }
}

TEST_CASE("subsequence corruption") {
  SUBCASE("one contiguous interval of ceil(rate*T) steps per window") {
    const Tensor values = random_tensor({20, 24, 5}, 10);
    const Tensor mask(values.shape(), 1.0);
    const Corruption c = corrupt_subseq(values, mask, 0.5, Rng(11));
    check_corruption(values, mask, c);
    for (std::size_t w = 0; w < 20; ++w) {
      std::vector<std::size_t> steps;
      for (std::size_t t = 0; t < 24; ++t) {
        double row = 0;
        for (std::size_t f = 0; f < 5; ++f) row += c.eval_mask[(w * 24 + t) * 5 + f];
        CHECK((row == 0 || row == 5));
        if (row == 5) steps.push_back(t);
      }
      REQUIRE(steps.size() == 12);
      CHECK(steps.back() - steps.front() == 11);
    }
  }
  SUBCASE("hidden count equals observed entries inside the interval") {
    const Tensor values = random_tensor({10, 24, 4}, 12);
    const Tensor mask = partial_mask(values.shape(), 0.6, 13);
    const Corruption c = corrupt_subseq(values, mask, 0.5, Rng(14));
    check_corruption(values, mask, c);
    // replay the interval starts from the same stream
    Rng replay(14);
    std::size_t expected = 0;
    for (std::size_t w = 0; w < 10; ++w) {
      const std::size_t t0 = replay.below(24 - 12 + 1);
      for (std::size_t t = t0; t < t0 + 12; ++t)
        for (std::size_t f = 0; f < 4; ++f) expected += mask[(w * 24 + t) * 4 + f] != 0.0;
    }
    CHECK(c.hidden == expected);
  }
  SUBCASE("rate covering the whole window") {
    const Tensor values = random_tensor({3, 24, 2}, 15);
    const Corruption c = corrupt_subseq(values, Tensor(values.shape(), 1.0), 0.99, Rng(16));
    CHECK(c.hidden == values.numel());
  }
}

TEST_CASE("corruption spec") {
  CHECK_THROWS_AS((CorruptionSpec{Pattern::point, 0.0}.validate()), ConfigError);
  CHECK_THROWS_AS((CorruptionSpec{Pattern::point, 1.0}.validate()), ConfigError);
  CHECK_THROWS_AS((CorruptionSpec{Pattern::block, 0.5, 0, 3}.validate()), ConfigError);
  CHECK(parse_pattern("subseq") == Pattern::subseq);
  CHECK_THROWS_AS(parse_pattern("burst"), ConfigError);
  const Tensor values = random_tensor({2, 6, 3}, 17);
  CHECK_THROWS_AS(corrupt_point(values, Tensor(Shape{2, 6, 2}), 0.5, Rng(0)), DimensionError);
}

TEST_CASE("synthetic spatial data") {
  SUBCASE("sample correlation approaches the kernel") {
    SyntheticSpec spec;
    spec.windows = 1000;  // 24000 steps
    const SyntheticData d = synth_spatial(spec, Rng(21, "synthetic"));
    CHECK(d.values.shape() == Shape{24000, 12});
    const double l2 = spec.lengthscale * spec.lengthscale, noise_var = spec.noise * spec.noise;
    double sq = 0;
    for (std::size_t i = 0; i < 12; ++i)
      for (std::size_t j = 0; j < 12; ++j) {
        const double dist = distance(d.coords[i], d.coords[j]);
        const double k = i == j ? 1.0 : std::exp(-dist * dist / l2) / (1.0 + noise_var);
        const double e = correlation(d.values, i, j) - k;
        sq += e * e;
      }
    CHECK(std::sqrt(sq / 144.0) < 0.05);
  }
  SUBCASE("coincident stations need jitter and move together") {
    SyntheticSpec spec;
    spec.features = 3;
    spec.windows = 50;
    spec.noise = 0.0;
    spec.coords = {{0.2, 0.2}, {0.2, 0.2}, {0.9, 0.1}};
    const SyntheticData d = synth_spatial(spec, Rng(22));
    CHECK(d.jitter > 0.0);
    CHECK(correlation(d.values, 0, 1) > 0.999);
  }
  SUBCASE("tiny length scale decorrelates stations") {
    SyntheticSpec spec;
    spec.lengthscale = 1e-4;
    spec.windows = 500;
    const SyntheticData d = synth_spatial(spec, Rng(23));
    for (std::size_t i = 0; i < 12; ++i)
      for (std::size_t j = i + 1; j < 12; ++j) CHECK(std::abs(correlation(d.values, i, j)) < 0.1);
  }
  SUBCASE("deterministic and in the unit square") {
    SyntheticSpec spec;
    spec.windows = 5;
    const SyntheticData a = synth_spatial(spec, Rng(24)), b = synth_spatial(spec, Rng(24));
    CHECK(bitwise_equal(a.values, b.values));
    for (const auto& c : a.coords) {
      CHECK((c.x >= 0.0 && c.x < 1.0 && c.y >= 0.0 && c.y < 1.0));
    }
    const SyntheticData other = synth_spatial(spec, Rng(25));
    CHECK(!bitwise_equal(a.values, other.values));
  }
  SUBCASE("invalid specs") {
    SyntheticSpec spec;
    spec.lengthscale = 0.0;
    CHECK_THROWS_AS(synth_spatial(spec, Rng(0)), ConfigError);
    spec = SyntheticSpec{};
    spec.coords = {{0, 0}};
    CHECK_THROWS_AS(synth_spatial(spec, Rng(0)), ConfigError);
  }
}
