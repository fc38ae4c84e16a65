#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "helix/encoder.hpp"
#include "helix/io.hpp"
#include "helix/tensor.hpp"

namespace helix {

/// Errors over the evaluation-target entries.
struct EvalReport {
  double mae = 0.0;
  double mse = 0.0;
  double mre = 0.0;  // sum|err| / sum|truth|; NaN when sum|truth| == 0
  bool mre_undefined = false;
  std::size_t count = 0;
  std::string tag;
};

EvalReport metrics(const Tensor& truth, const Tensor& pred, const Tensor& eval_mask, std::string tag = {});

struct PearsonResult {
  double r = 0.0;
  double p = 1.0;  // two-sided, from the t transform of r
  std::size_t n = 0;
  bool degenerate = false;  // zero variance on either side or n < 3
};

PearsonResult pearson(std::span<const double> x, std::span<const double> y);

struct StructureReport {
  Tensor similarity;  // [F, F] cosine similarity of identity rows
  Tensor distance;    // [F, F] Euclidean distance
  PearsonResult similarity_vs_distance;
  std::vector<std::string> warnings;
};

StructureReport embedding_structure(const Tensor& identities, const std::vector<Coord>& coords);

// Pearson r per layer between off-diagonal feature attention A_ij and the
// proximity exp(-dist_ij / median_dist).
std::vector<PearsonResult> attention_structure(const AttentionRecord& record, const std::vector<Coord>& coords);
Tensor proximity_matrix(const std::vector<Coord>& coords);

struct CurveRow {
  std::string label;
  std::size_t count = 0;
  double mae = 0.0;  // NaN when the bucket is empty
};

inline constexpr std::size_t kGapBuckets = 4;
// Bucket index of a run length: 1-2, 3-5, 6-10, 11+.
std::size_t gap_bucket(std::size_t run);

// Inputs [W, T, F]; runs of hidden entries are measured per feature within a window.
std::vector<CurveRow> gap_length_curve(const Tensor& truth, const Tensor& pred, const Tensor& eval_mask);

// Max |corr| of each feature with any other, over pairwise-complete rows of a [N, F] series.
std::vector<double> max_abs_correlation(const Tensor& values, const Tensor& mask);
// Tercile of each feature by rank of its score: bin = floor(3 * rank / F).
std::vector<std::size_t> tercile_bins(const std::vector<double>& score);

struct CorrelationBinRow {
  std::string label;
  std::size_t features = 0;
  std::size_t count = 0;
  double model_mae = 0.0;
  double baseline_mae = 0.0;
  double improvement = 0.0;  // (baseline - model) / baseline
};

std::vector<CorrelationBinRow> correlation_bin_curve(const Tensor& truth, const Tensor& pred_model,
                                                     const Tensor& pred_baseline, const Tensor& eval_mask,
                                                     const std::vector<double>& feature_correlation);

}  // namespace helix
