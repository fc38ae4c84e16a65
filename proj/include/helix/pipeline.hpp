#pragma once

#include <cstddef>
#include <vector>

#include "helix/analysis.hpp"
#include "helix/config.hpp"
#include "helix/io.hpp"
#include "helix/missingness.hpp"
#include "helix/training.hpp"

namespace helix {

/// Normalized windows of a series with their chronological split.
struct PreparedData {
  Windows windows;  // values are z-scored
  NormStats norm;

  WindowData part(std::size_t begin, std::size_t end) const;
  WindowData train() const { return part(0, windows.split.train); }
  WindowData val() const { return part(windows.split.val_begin(), windows.split.test_begin()); }
  WindowData test() const { return part(windows.split.test_begin(), windows.count()); }
};

// Fits the normalization on observed train-split rows unless `norm` is given.
PreparedData prepare_data(const Tensor& values, const Tensor& mask, const DataConfig& data,
                          const NormStats* norm = nullptr);

// Hides entries of a [N, F] series window by window (stride = window); rows
// after the last full window are left alone.
struct SeriesCorruption {
  Tensor values;
  Tensor mask;
  Corruption windows;
};

SeriesCorruption corrupt_series(const Tensor& values, const Tensor& mask, std::size_t window,
                                const CorruptionSpec& spec, Rng rng);

struct TrainedModel {
  HelixModel model;
  FitResult fit;
};

TrainedModel train_model(const RunConfig& cfg, const PreparedData& data, const FitHooks& hooks = {});

/// Synthetic benchmark: generated series, corrupted inputs, prepared windows.
struct SyntheticBenchmark {
  SyntheticData synthetic;
  SeriesCorruption corruption;
  PreparedData data;
  Tensor truth;      // [W, T, F] normalized ground truth
  Tensor eval_mask;  // [W, T, F] hidden entries

  Tensor test_slice(const Tensor& windows) const;
};

SyntheticBenchmark synthetic_benchmark(const RunConfig& cfg);

}  // namespace helix
