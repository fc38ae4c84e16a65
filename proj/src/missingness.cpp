#include "helix/missingness.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <cmath>

#include "helix/errors.hpp"

namespace helix {

std::string_view to_string(Pattern p) {
  switch (p) {
    case Pattern::point: return "point";
    case Pattern::block: return "block";
    case Pattern::subseq: return "subseq";
  }
  return "?";
}

Pattern parse_pattern(std::string_view name) {
  if (name == "point") return Pattern::point;
  if (name == "block") return Pattern::block;
  if (name == "subseq") return Pattern::subseq;
  throw ConfigError("unknown pattern '" + std::string(name) + "' (point, block, subseq)");
}

void CorruptionSpec::validate() const {
  if (!(rate > 0.0 && rate < 1.0)) throw ConfigError("corruption rate must be in (0, 1), got " + std::to_string(rate));
  if (block_len == 0 || block_width == 0) throw ConfigError("block dimensions must be at least 1");
}

namespace {

void check_windows(const Tensor& values, const Tensor& mask, const char* who) {
  if (values.rank() != 3 || mask.shape() != values.shape())
    throw DimensionError(std::string(who) + ": expected matching [W,T,F] values and mask, got " +
                         shape_str(values.shape()) + " and " + shape_str(mask.shape()));
}

void check_rate(double rate, const char* who) {
  if (!(rate > 0.0 && rate < 1.0)) throw ConfigError(std::string(who) + ": rate must be in (0, 1)");
}

Corruption start(const Tensor& values, const Tensor& mask) {
  Corruption c;
  c.values = values;
  c.mask = mask;
  c.eval_mask = Tensor(values.shape(), 0.0);
  for (double m : mask.data()) c.observed += m != 0.0;
  return c;
}

void hide(Corruption& c, std::size_t i) {
  if (c.mask[i] == 0.0) return;
  c.mask[i] = 0.0;
  c.values[i] = 0.0;
  c.eval_mask[i] = 1.0;
  ++c.hidden;
}

void finish(Corruption& c) {
  c.realized_rate = c.observed ? static_cast<double>(c.hidden) / static_cast<double>(c.observed) : 0.0;
}

}  // namespace

Corruption corrupt_point(const Tensor& values, const Tensor& mask, double rate, Rng rng) {
  check_windows(values, mask, "corrupt_point");
  check_rate(rate, "corrupt_point");
  Corruption c = start(values, mask);
  for (std::size_t i = 0; i < values.numel(); ++i) {
    const bool draw = rng.bernoulli(rate);
    if (draw && mask[i] != 0.0) hide(c, i);
  }
  finish(c);
  return c;
}

Corruption corrupt_block(const Tensor& values, const Tensor& mask, double rate, std::size_t block_len,
                         std::size_t block_width, Rng rng) {
  check_windows(values, mask, "corrupt_block");
  check_rate(rate, "corrupt_block");
  if (block_len == 0 || block_width == 0) throw ConfigError("corrupt_block: block dimensions must be at least 1");
  const std::size_t W = values.dim(0), T = values.dim(1), F = values.dim(2);
  const std::size_t len = std::min(block_len, T), width = std::min(block_width, F);
  Corruption c = start(values, mask);
  if (c.observed == 0) throw DataError("corrupt_block: no observed entries to hide");

  const double target = rate * static_cast<double>(c.observed);
  const std::size_t cap = 1000 * (W * T * F / (len * width) + 1);
  std::size_t iterations = 0;
  while (static_cast<double>(c.hidden) < target) {
    if (++iterations > cap)
      throw DataError("corrupt_block: rate " + std::to_string(rate) + " unreachable after " +
                      std::to_string(cap) + " blocks (hidden " + std::to_string(c.hidden) + " of " +
                      std::to_string(c.observed) + ")");
    Rectangle r{rng.below(W), rng.below(T - len + 1), rng.below(F - width + 1), len, width};
    c.rectangles.push_back(r);
    for (std::size_t t = r.t; t < r.t + len; ++t)
      for (std::size_t f = r.f; f < r.f + width; ++f) hide(c, (r.window * T + t) * F + f);
  }
  finish(c);
  return c;
}

Corruption corrupt_subseq(const Tensor& values, const Tensor& mask, double rate, Rng rng) {
  check_windows(values, mask, "corrupt_subseq");
  check_rate(rate, "corrupt_subseq");
  const std::size_t W = values.dim(0), T = values.dim(1), F = values.dim(2);
  const auto len = std::min<std::size_t>(T, static_cast<std::size_t>(std::ceil(rate * static_cast<double>(T))));
  Corruption c = start(values, mask);
  for (std::size_t w = 0; w < W; ++w) {
    const std::size_t t0 = rng.below(T - len + 1);
    for (std::size_t t = t0; t < t0 + len; ++t)
      for (std::size_t f = 0; f < F; ++f) hide(c, (w * T + t) * F + f);
  }
  finish(c);
  return c;
}

Corruption corrupt(const Tensor& values, const Tensor& mask, const CorruptionSpec& spec, Rng rng) {
  spec.validate();
  switch (spec.pattern) {
    case Pattern::point: return corrupt_point(values, mask, spec.rate, rng);
    case Pattern::block: return corrupt_block(values, mask, spec.rate, spec.block_len, spec.block_width, rng);
    case Pattern::subseq: return corrupt_subseq(values, mask, spec.rate, rng);
  }
  throw ConfigError("corrupt: unknown pattern");
}

void SyntheticSpec::validate() const {
  if (features == 0 || window == 0 || windows == 0) throw ConfigError("synthetic: sizes must be positive");
  if (!(lengthscale > 0.0)) throw ConfigError("synthetic: lengthscale must be positive");
  if (!(noise >= 0.0)) throw ConfigError("synthetic: noise must be nonnegative");
  if (!(ar > -1.0 && ar < 1.0)) throw ConfigError("synthetic: AR coefficient must be in (-1, 1)");
  if (!coords.empty() && coords.size() != features)
    throw ConfigError("synthetic: " + std::to_string(coords.size()) + " coordinates for " +
                      std::to_string(features) + " features");
}

SyntheticData synth_spatial(const SyntheticSpec& spec, Rng rng) {
  spec.validate();
  const std::size_t F = spec.features, N = spec.window * spec.windows;
  SyntheticData out;
  out.coords = spec.coords;
  if (out.coords.empty()) {
    Rng crng = rng.derive("coords");
    for (std::size_t i = 0; i < F; ++i) {
      const double x = crng.uniform();
      out.coords.push_back({x, crng.uniform()});
    }
  }

  Eigen::MatrixXd k(F, F);
  const double l2 = spec.lengthscale * spec.lengthscale;
  for (std::size_t i = 0; i < F; ++i)
    for (std::size_t j = 0; j < F; ++j) {
      const double d = distance(out.coords[i], out.coords[j]);
      k(i, j) = std::exp(-d * d / l2);
    }

  Eigen::MatrixXd chol;
  bool ok = false;
  for (double jitter : {0.0, 1e-12, 1e-11, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6}) {
    Eigen::LLT<Eigen::MatrixXd> llt(k + jitter * Eigen::MatrixXd::Identity(F, F));
    if (llt.info() == Eigen::Success) {
      chol = llt.matrixL();
      out.jitter = jitter;
      ok = true;
      break;
    }
  }
  if (!ok) throw NumericError("synth_spatial: covariance not positive definite even with jitter 1e-6");

  Rng zrng = rng.derive("latent"), nrng = rng.derive("noise");
  const double innov = std::sqrt(1.0 - spec.ar * spec.ar);
  std::vector<double> z(F);
  for (auto& v : z) v = zrng.normal();
  out.values = Tensor(Shape{N, F});
  for (std::size_t t = 0; t < N; ++t) {
    if (t > 0)
      for (auto& v : z) v = spec.ar * v + innov * zrng.normal();
    for (std::size_t i = 0; i < F; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j <= i; ++j) acc += chol(i, j) * z[j];
      out.values[t * F + i] = acc + spec.noise * nrng.normal();
    }
  }
  return out;
}

}  // namespace helix
