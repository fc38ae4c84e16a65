#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "helix/tensor.hpp"

namespace helix {

enum class BaselineKind { mean, median, locf, linear };

std::string_view to_string(BaselineKind k);
BaselineKind parse_baseline(std::string_view name);

/// Per-feature fill statistics from observed training entries.
struct FeatureStats {
  std::vector<double> mean;
  std::vector<double> median;
  std::vector<std::size_t> observed;
};

// `values`/`mask` are [..., F]; every leading index is one observation row.
FeatureStats fit_feature_stats(const Tensor& values, const Tensor& mask);

struct BaselineResult {
  Tensor imputed;
  std::vector<std::string> warnings;
};

// Inputs are [W, T, F] windows or a single [T, F] window; each window is
// filled independently. Observed entries pass through unchanged.
BaselineResult impute_mean(const Tensor& values, const Tensor& mask, const FeatureStats& stats);
BaselineResult impute_median(const Tensor& values, const Tensor& mask, const FeatureStats& stats);
BaselineResult impute_locf(const Tensor& values, const Tensor& mask);
BaselineResult impute_linear(const Tensor& values, const Tensor& mask);

BaselineResult impute_baseline(BaselineKind kind, const Tensor& values, const Tensor& mask,
                               const FeatureStats& stats);

}  // namespace helix
