#include "helix/baselines.hpp"

#include <algorithm>

#include "helix/errors.hpp"

namespace helix {

std::string_view to_string(BaselineKind k) {
  switch (k) {
    case BaselineKind::mean: return "mean";
    case BaselineKind::median: return "median";
    case BaselineKind::locf: return "locf";
    case BaselineKind::linear: return "linear";
  }
  return "?";
}

BaselineKind parse_baseline(std::string_view name) {
  if (name == "mean") return BaselineKind::mean;
  if (name == "median") return BaselineKind::median;
  if (name == "locf") return BaselineKind::locf;
  if (name == "linear") return BaselineKind::linear;
  throw ConfigError("unknown baseline '" + std::string(name) + "' (mean, median, locf, linear)");
}

FeatureStats fit_feature_stats(const Tensor& values, const Tensor& mask) {
  if (mask.shape() != values.shape() || values.rank() < 1)
    throw DimensionError("fit_feature_stats: values " + shape_str(values.shape()) + ", mask " +
                         shape_str(mask.shape()));
  const std::size_t F = values.shape().back(), rows = values.numel() / F;
  FeatureStats s{std::vector<double>(F, 0.0), std::vector<double>(F, 0.0), std::vector<std::size_t>(F, 0)};
  std::vector<double> column;
  for (std::size_t f = 0; f < F; ++f) {
    column.clear();
    double sum = 0.0;
    for (std::size_t r = 0; r < rows; ++r)
      if (mask[r * F + f] != 0.0) {
        column.push_back(values[r * F + f]);
        sum += values[r * F + f];
      }
    s.observed[f] = column.size();
    if (column.empty()) continue;
    s.mean[f] = sum / static_cast<double>(column.size());
    std::sort(column.begin(), column.end());
    const std::size_t n = column.size();
    s.median[f] = n % 2 ? column[n / 2] : 0.5 * (column[n / 2 - 1] + column[n / 2]);
  }
  return s;
}

namespace {

struct Layout {
  std::size_t windows, steps, features;
};

Layout layout_of(const Tensor& values, const Tensor& mask, const char* who) {
  if (mask.shape() != values.shape())
    throw DimensionError(std::string(who) + ": values " + shape_str(values.shape()) + ", mask " +
                         shape_str(mask.shape()));
  if (values.rank() == 2) return {1, values.dim(0), values.dim(1)};
  if (values.rank() == 3) return {values.dim(0), values.dim(1), values.dim(2)};
  throw DimensionError(std::string(who) + ": expected [T,F] or [W,T,F], got " + shape_str(values.shape()));
}

std::string fully_missing(const char* who, std::size_t w, std::size_t f) {
  return std::string(who) + ": feature " + std::to_string(f) + " has no observations in window " +
         std::to_string(w) + "; filled with 0";
}

BaselineResult fill_constant(const Tensor& values, const Tensor& mask, const std::vector<double>& fill,
                             const std::vector<std::size_t>& observed, const char* who) {
  const auto L = layout_of(values, mask, who);
  if (fill.size() != L.features)
    throw DimensionError(std::string(who) + ": statistics cover " + std::to_string(fill.size()) +
                         " features, data has " + std::to_string(L.features));
  BaselineResult res{values, {}};
  for (std::size_t f = 0; f < L.features; ++f)
    if (observed[f] == 0)
      res.warnings.push_back(std::string(who) + ": feature " + std::to_string(f) +
                             " has no training observations; filled with 0");
  for (std::size_t i = 0; i < values.numel(); ++i)
    if (mask[i] == 0.0) res.imputed[i] = observed[i % L.features] ? fill[i % L.features] : 0.0;
  return res;
}

}  // namespace

BaselineResult impute_mean(const Tensor& values, const Tensor& mask, const FeatureStats& stats) {
  return fill_constant(values, mask, stats.mean, stats.observed, "impute_mean");
}

BaselineResult impute_median(const Tensor& values, const Tensor& mask, const FeatureStats& stats) {
  return fill_constant(values, mask, stats.median, stats.observed, "impute_median");
}

BaselineResult impute_locf(const Tensor& values, const Tensor& mask) {
  const auto [W, T, F] = layout_of(values, mask, "impute_locf");
  BaselineResult res{values, {}};
  for (std::size_t w = 0; w < W; ++w)
    for (std::size_t f = 0; f < F; ++f) {
      auto at = [&, w = w, f = f](std::size_t t) { return (w * T + t) * F + f; };
      std::size_t first = T;
      for (std::size_t t = 0; t < T && first == T; ++t)
        if (mask[at(t)] != 0.0) first = t;
      if (first == T) {
        res.warnings.push_back(fully_missing("impute_locf", w, f));
        for (std::size_t t = 0; t < T; ++t) res.imputed[at(t)] = 0.0;
        continue;
      }
      for (std::size_t t = 0; t < first; ++t) res.imputed[at(t)] = values[at(first)];
      double last = values[at(first)];
      for (std::size_t t = first; t < T; ++t) {
        if (mask[at(t)] != 0.0)
          last = values[at(t)];
        else
          res.imputed[at(t)] = last;
      }
    }
  return res;
}

BaselineResult impute_linear(const Tensor& values, const Tensor& mask) {
  const auto [W, T, F] = layout_of(values, mask, "impute_linear");
  BaselineResult res{values, {}};
  std::vector<std::size_t> obs;
  for (std::size_t w = 0; w < W; ++w)
    for (std::size_t f = 0; f < F; ++f) {
      auto at = [&, w = w, f = f](std::size_t t) { return (w * T + t) * F + f; };
      obs.clear();
      for (std::size_t t = 0; t < T; ++t)
        if (mask[at(t)] != 0.0) obs.push_back(t);
      if (obs.empty()) {
        res.warnings.push_back(fully_missing("impute_linear", w, f));
        for (std::size_t t = 0; t < T; ++t) res.imputed[at(t)] = 0.0;
        continue;
      }
      for (std::size_t t = 0; t < obs.front(); ++t) res.imputed[at(t)] = values[at(obs.front())];
      for (std::size_t t = obs.back() + 1; t < T; ++t) res.imputed[at(t)] = values[at(obs.back())];
      for (std::size_t k = 0; k + 1 < obs.size(); ++k) {
        const std::size_t a = obs[k], b = obs[k + 1];
        const double va = values[at(a)], vb = values[at(b)];
        for (std::size_t t = a + 1; t < b; ++t) {
          const double frac = static_cast<double>(t - a) / static_cast<double>(b - a);
          res.imputed[at(t)] = va + (vb - va) * frac;
        }
      }
    }
  return res;
}

BaselineResult impute_baseline(BaselineKind kind, const Tensor& values, const Tensor& mask,
                               const FeatureStats& stats) {
  switch (kind) {
    case BaselineKind::mean: return impute_mean(values, mask, stats);
    case BaselineKind::median: return impute_median(values, mask, stats);
    case BaselineKind::locf: return impute_locf(values, mask);
    case BaselineKind::linear: return impute_linear(values, mask);
  }
  throw ConfigError("impute_baseline: unknown kind");
}

}  // namespace helix
