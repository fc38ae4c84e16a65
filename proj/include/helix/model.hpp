#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "helix/autograd.hpp"
#include "helix/rng.hpp"
#include "helix/tensor.hpp"

namespace helix {

/// A batch of multivariate windows.
///
/// `values` is the model input with missing entries zero-filled, `mask` is 1
/// where a value is observed. `truth` holds the supervision / scoring targets;
/// the model never reads it.
struct SeriesBatch {
  Tensor values;  // [B, T, F]
  Tensor mask;    // [B, T, F]
  Tensor truth;   // [B, T, F]

  std::size_t batch() const { return values.dim(0); }
  std::size_t steps() const { return values.dim(1); }
  std::size_t features() const { return values.dim(2); }

  void validate() const;
};

enum class PeKind { sinusoidal, learnable };
enum class EncoderKind { hybrid, serial };
enum class FusionKind { multi_level, final_only, gated };

/// Ablation / architecture variants selectable from the CLI.
enum class Variant { full, no_featid, no_fusion, no_hybrid, learnable_pe, gated_fusion };

std::string_view to_string(Variant v);
Variant parse_variant(std::string_view name);
std::string_view to_string(PeKind k);
std::string_view to_string(EncoderKind k);
std::string_view to_string(FusionKind k);
PeKind parse_pe_kind(std::string_view name);
EncoderKind parse_encoder_kind(std::string_view name);
FusionKind parse_fusion_kind(std::string_view name);

struct EmbeddingConfig {
  std::size_t d_pe = 16;
  std::size_t d_f = 8;
  bool feature_id = true;
  PeKind pe_kind = PeKind::sinusoidal;
  std::size_t t_max = 24;  // rows of the learnable PE table

  // value + PE + identity + mask
  std::size_t d_e() const { return 1 + d_pe + (feature_id ? d_f : 0) + 1; }
};

struct EncoderConfig {
  std::size_t d_model = 32;
  std::size_t heads = 4;
  std::size_t layers = 2;
  EncoderKind kind = EncoderKind::hybrid;
  FusionKind fusion = FusionKind::multi_level;
  double dropout = 0.1;
  // Stage 2 reuses the layer's Stage-1 attention parameters when true.
  bool share_stage_params = true;

  std::size_t head_width() const { return d_model / heads; }
};

struct ModelConfig {
  std::size_t n_features = 0;
  EmbeddingConfig embedding;
  EncoderConfig encoder;

  void validate() const;
};

ModelConfig apply_variant(ModelConfig cfg, Variant variant);

/// Parameters of one post-norm multi-head attention block.
struct AttentionParams {
  ag::Parameter wq, bq, wk, wv, bv, wo, bo, ln_gamma, ln_beta;
};

struct LayerParams {
  AttentionParams temporal;
  AttentionParams feature;
  // Only present when Stage 2 has its own parameter sets.
  std::optional<AttentionParams> temporal_stage2;
  std::optional<AttentionParams> feature_stage2;
};

/// All learnable state of a HELIX imputer plus its architecture.
class HelixModel {
 public:
  HelixModel() = default;
  HelixModel(const ModelConfig& config, Rng init_rng);

  const ModelConfig& config() const { return config_; }

  // Fixed traversal order; checkpoints and optimizer state rely on it.
  std::vector<ag::Parameter*> parameters();
  std::vector<const ag::Parameter*> parameters() const;
  ag::Parameter* find(std::string_view name);

  void zero_grad();
  std::size_t parameter_count() const;

  ag::Parameter feature_ids;  // [F, d_f]
  ag::Parameter pe_table;     // [t_max, d_pe]
  ag::Parameter in_w, in_b;   // [d_e, d], [d]
  std::vector<LayerParams> layers;
  ag::Parameter gate_w;       // [(K) * d, K], K = fusion candidates
  ag::Parameter out_gamma, out_beta, out_w, out_b;

 private:
  ModelConfig config_;
};

// Number of representations combined by multi-level fusion: 1 + 4L (hybrid)
// or 1 + 3L (serial).
std::size_t fusion_candidates(const EncoderConfig& cfg);

}  // namespace helix
