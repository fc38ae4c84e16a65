#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "helix/autograd.hpp"
#include "helix/model.hpp"
#include "helix/rng.hpp"

namespace helix {

enum class Axis { temporal, feature };

/// AttentionParams bound to a tape for one forward pass.
struct BoundAttention {
  ag::Var wq, bq, wk, wv, bv, wo, bo, ln_gamma, ln_beta;
};

struct BoundLayer {
  BoundAttention temporal, feature;
  BoundAttention temporal_stage2, feature_stage2;  // aliases of stage 1 when shared
};

/// Raw pre-dropout attention weights of one attention call, [N, H, S, S].
struct AttentionTap {
  std::size_t layer = 0;
  Axis axis = Axis::temporal;
  int stage = 1;
  Tensor probs;
};

/// Per-layer attention matrices averaged over heads, batch and every call on
/// that axis within the layer. Accumulates across batches via `merge`.
class AttentionRecord {
 public:
  explicit AttentionRecord(std::size_t layers = 0);

  void add(std::size_t layer, Axis axis, const Tensor& probs);
  void merge(const AttentionRecord& other);

  std::size_t layers() const { return temporal_sum_.size(); }
  bool has(std::size_t layer, Axis axis) const;
  Tensor temporal(std::size_t layer) const;  // [T, T]
  Tensor feature(std::size_t layer) const;   // [F, F]

 private:
  std::vector<Tensor> temporal_sum_, feature_sum_;
  std::vector<double> temporal_count_, feature_count_;
};

/// Branch outputs of one encoder layer.
///
/// Hybrid layers hold (H_T, H_F, H_TF, H_FT) and `fused` is their mean;
/// serial layers hold the three chained outputs and `fused` is the last.
struct LayerTrace {
  std::vector<ag::Var> branches;
  ag::Var fused;

  const ag::Var& h_t() const { return branches.at(0); }
  const ag::Var& h_f() const { return branches.at(1); }
  const ag::Var& h_tf() const { return branches.at(2); }
  const ag::Var& h_ft() const { return branches.at(3); }
};

/// Knobs shared by every attention call of a forward pass.
struct AttentionSettings {
  std::size_t heads = 1;
  double dropout = 0.0;
  ag::Mode mode = ag::Mode::eval;
};

/// Post-norm multi-head attention over one axis of a [B, T, F, d] tensor; the
/// other axis is folded into the batch: LayerNorm(x + Wo * MHA(x)).
ag::Var axis_attention(const ag::Var& h, Axis axis, const BoundAttention& params,
                       const AttentionSettings& settings, Rng& rng, Tensor* probs_out = nullptr);

/// Observer for attention weights produced while running layers.
struct AttentionSink {
  AttentionRecord* record = nullptr;
  std::vector<AttentionTap>* taps = nullptr;
  void push(std::size_t layer, Axis axis, int stage, Tensor probs) const;
  bool active() const { return record || taps; }
};

LayerTrace helix_layer(const ag::Var& h_prev, const BoundLayer& params,
                       const AttentionSettings& settings, Rng& rng, std::size_t layer_index = 0,
                       const AttentionSink& sink = {});

// T -> F -> T chain with the layer's temporal parameters reused.
LayerTrace serial_layer(const ag::Var& h_prev, const BoundLayer& params,
                        const AttentionSettings& settings, Rng& rng, std::size_t layer_index = 0,
                        const AttentionSink& sink = {});

/// Mean of H0 and every branch output of every layer.
ag::Var multi_level_fusion(const ag::Var& h0, std::span<const LayerTrace> traces);

/// Softmax-gated combination of the same candidates; `gate_w` is
/// [K * d, K]. Writes the per-token weights [..., K] when asked.
ag::Var gated_fusion(const ag::Var& h0, std::span<const LayerTrace> traces, const ag::Var& gate_w,
                     Tensor* weights_out = nullptr);

struct ForwardOptions {
  ag::Mode mode = ag::Mode::eval;
  Rng rng;  // dropout stream, only read in train mode
  bool store_attention = false;
  bool keep_taps = false;
};

struct ForwardResult {
  ag::Var x_hat;  // [B, T, F]
  ag::Var tokens;  // [B, T, F, d_e]
  ag::Var h0;
  ag::Var fused;
  std::vector<LayerTrace> traces;
  std::optional<AttentionRecord> attention;
  std::vector<AttentionTap> taps;
  Tensor gate_weights;
};

// Binds parameters as differentiable leaves.
ForwardResult forward(ag::Tape& tape, HelixModel& model, const SeriesBatch& batch,
                      const ForwardOptions& options);
// Binds parameters as constants; the model is only read.
ForwardResult forward(ag::Tape& tape, const HelixModel& model, const SeriesBatch& batch,
                      const ForwardOptions& options);

}  // namespace helix
