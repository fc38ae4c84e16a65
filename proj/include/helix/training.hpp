#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "helix/encoder.hpp"
#include "helix/model.hpp"
#include "helix/rng.hpp"

namespace helix {

/// Index sets of one masked-reconstruction pass, as 0/1 tensors.
struct MaskPlan {
  Tensor observed;      // O
  Tensor artificial;    // M_art, a subset of O
  Tensor residual;      // O \ M_art; also the model-input mask
  Tensor input_values;  // values zero-filled outside the residual set
  std::size_t observed_count = 0;
  std::size_t artificial_count = 0;
  std::size_t residual_count = 0;

  const Tensor& input_mask() const { return residual; }
};

// Each observed entry joins M_art independently with probability rho.
MaskPlan make_artificial_mask(const Tensor& values, const Tensor& mask, double rho, Rng rng);

struct LossTerm {
  double value = 0.0;
  std::size_t count = 0;
  bool degenerate = false;  // empty index set; value is 0
};

// Mean |x_hat - x| over O \ M_art.
LossTerm ort_loss(const Tensor& x, const Tensor& x_hat, const MaskPlan& plan);
// Mean |x_hat - x| over M_art.
LossTerm mit_loss(const Tensor& x, const Tensor& x_hat, const MaskPlan& plan);

struct LossReport {
  double ort = 0.0;
  double mit = 0.0;
  double total = 0.0;  // ort + mit
  std::size_t ort_count = 0;
  std::size_t mit_count = 0;
};

struct TrainConfig {
  std::size_t epochs = 1000;
  std::size_t patience = 10;
  std::size_t batch_size = 32;
  double lr = 1e-3;
  double rho = 0.2;
  std::uint64_t seed = 0;
  Variant variant = Variant::full;

  void validate() const;
};

/// Normalized windows [W, T, F] with their observation mask.
struct WindowData {
  Tensor values;
  Tensor mask;

  std::size_t count() const { return values.empty() ? 0 : values.dim(0); }
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_mae = 0.0;
};

struct StepRecord {
  std::size_t epoch = 0;
  std::size_t batch = 0;
  LossReport loss;
};

struct FitHooks {
  std::function<void(const StepRecord&)> on_step;
  std::function<void(const EpochRecord&)> on_epoch;
};

struct FitResult {
  std::vector<EpochRecord> history;
  double initial_val_mae = 0.0;
  std::size_t best_epoch = 0;  // 0 when no epoch improved on the initial weights
  double best_val_mae = 0.0;
  bool stopped_early = false;
};

// Named random streams derived from a training seed.
struct TrainStreams {
  explicit TrainStreams(std::uint64_t seed);
  Rng init, masking, dropout, data, validation;
};

/// Trains with L_ORT + L_MIT and Adam, keeping the best-validation weights.
FitResult fit(HelixModel& model, const WindowData& train, const WindowData& val, const TrainConfig& cfg,
              const FitHooks& hooks = {});

// MIT mean absolute error of `model` on a fixed plan.
double validation_mae(const HelixModel& model, const WindowData& data, const MaskPlan& plan,
                      std::size_t batch_size);

// Raw eval-mode model output [W, T, F].
Tensor predict(const HelixModel& model, const WindowData& data, std::size_t batch_size = 64);
// Model output at missing entries, observed entries copied from the input.
Tensor impute(const HelixModel& model, const WindowData& data, std::size_t batch_size = 64);
// Eval-mode attention averaged over every window.
AttentionRecord collect_attention(const HelixModel& model, const WindowData& data, std::size_t batch_size = 64);

// Builds the model for `variant` with weights from the init stream of `seed`.
HelixModel make_model(ModelConfig base, Variant variant, std::uint64_t seed);

}  // namespace helix
