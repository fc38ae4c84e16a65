#include "helix/encoder.hpp"

#include <type_traits>

#include "helix/embedding.hpp"
#include "helix/errors.hpp"

namespace helix {

// ---- attention record ------------------------------------------------------------

AttentionRecord::AttentionRecord(std::size_t layers)
    : temporal_sum_(layers), feature_sum_(layers), temporal_count_(layers, 0.0),
      feature_count_(layers, 0.0) {}

void AttentionRecord::add(std::size_t layer, Axis axis, const Tensor& probs) {
  if (layer >= layers()) throw RangeError("AttentionRecord: layer out of range");
  if (probs.rank() != 4 || probs.dim(2) != probs.dim(3))
    throw DimensionError("AttentionRecord: expected [N,H,S,S], got " + shape_str(probs.shape()));
  auto& sum = axis == Axis::temporal ? temporal_sum_[layer] : feature_sum_[layer];
  auto& count = axis == Axis::temporal ? temporal_count_[layer] : feature_count_[layer];
  const std::size_t s = probs.dim(2);
  if (sum.empty()) sum = Tensor(Shape{s, s}, 0.0);
  if (sum.dim(0) != s) throw DimensionError("AttentionRecord: axis length changed between calls");
  const std::size_t mats = probs.dim(0) * probs.dim(1);
  for (std::size_t m = 0; m < mats; ++m)
    for (std::size_t i = 0; i < s * s; ++i) sum[i] += probs[m * s * s + i];
  count += static_cast<double>(mats);
}

void AttentionRecord::merge(const AttentionRecord& other) {
  if (layers() == 0) {
    *this = other;
    return;
  }
  if (other.layers() != layers()) throw DimensionError("AttentionRecord: layer count mismatch");
  auto merge_into = [](Tensor& dst, const Tensor& src) {
    if (src.empty()) return;
    if (dst.empty()) {
      dst = src;
      return;
    }
    for (std::size_t i = 0; i < dst.numel(); ++i) dst[i] += src[i];
  };
  for (std::size_t l = 0; l < layers(); ++l) {
    merge_into(temporal_sum_[l], other.temporal_sum_[l]);
    merge_into(feature_sum_[l], other.feature_sum_[l]);
    temporal_count_[l] += other.temporal_count_[l];
    feature_count_[l] += other.feature_count_[l];
  }
}

bool AttentionRecord::has(std::size_t layer, Axis axis) const {
  if (layer >= layers()) return false;
  return (axis == Axis::temporal ? temporal_count_ : feature_count_)[layer] > 0.0;
}

namespace {

Tensor averaged(const Tensor& sum, double count) {
  if (count == 0.0) throw ContractError("AttentionRecord: no attention recorded for this layer/axis");
  Tensor out = sum;
  for (auto& v : out.data()) v /= count;
  return out;
}

}  // namespace

Tensor AttentionRecord::temporal(std::size_t layer) const {
  if (layer >= layers()) throw RangeError("AttentionRecord: layer out of range");
  return averaged(temporal_sum_[layer], temporal_count_[layer]);
}

Tensor AttentionRecord::feature(std::size_t layer) const {
  if (layer >= layers()) throw RangeError("AttentionRecord: layer out of range");
  return averaged(feature_sum_[layer], feature_count_[layer]);
}

void AttentionSink::push(std::size_t layer, Axis axis, int stage, Tensor probs) const {
  if (record) record->add(layer, axis, probs);
  if (taps) taps->push_back(AttentionTap{layer, axis, stage, std::move(probs)});
}

// ---- attention blocks -------------------------------------------------------------

ag::Var axis_attention(const ag::Var& h, Axis axis, const BoundAttention& p,
                       const AttentionSettings& settings, Rng& rng, Tensor* probs_out) {
  const Shape& s = h.shape();
  if (s.size() != 4) throw DimensionError("axis_attention: expected [B,T,F,d], got " + shape_str(s));
  const std::size_t B = s[0], T = s[1], F = s[2], d = s[3];

  // Fold the non-attended axis into the batch.
  ag::Var x = axis == Axis::temporal
                  ? ag::reshape(ag::permute(h, {0, 2, 1, 3}), Shape{B * F, T, d})
                  : ag::reshape(h, Shape{B * T, F, d});
  const ag::Var q = ag::linear(x, p.wq, p.bq);
  const ag::Var k = ag::linear(x, p.wk, ag::Var());
  const ag::Var v = ag::linear(x, p.wv, p.bv);
  const ag::Var ctx = ag::attention(q, k, v, settings.heads, settings.dropout, settings.mode, rng, probs_out);
  const ag::Var y = ag::layer_norm(ag::add(x, ag::linear(ctx, p.wo, p.bo)), p.ln_gamma, p.ln_beta);

  return axis == Axis::temporal ? ag::permute(ag::reshape(y, Shape{B, F, T, d}), {0, 2, 1, 3})
                                : ag::reshape(y, Shape{B, T, F, d});
}

namespace {

ag::Var run_attention(const ag::Var& h, Axis axis, const BoundAttention& params,
                      const AttentionSettings& settings, Rng& rng, std::size_t layer, int stage,
                      std::uint64_t call, const AttentionSink& sink) {
  Rng call_rng = rng.derive(call);
  if (!sink.active()) return axis_attention(h, axis, params, settings, call_rng);
  Tensor probs;
  ag::Var out = axis_attention(h, axis, params, settings, call_rng, &probs);
  sink.push(layer, axis, stage, std::move(probs));
  return out;
}

}  // namespace

LayerTrace helix_layer(const ag::Var& h_prev, const BoundLayer& p, const AttentionSettings& settings,
                       Rng& rng, std::size_t layer, const AttentionSink& sink) {
  LayerTrace trace;
  const ag::Var h_t = run_attention(h_prev, Axis::temporal, p.temporal, settings, rng, layer, 1, 0, sink);
  const ag::Var h_f = run_attention(h_prev, Axis::feature, p.feature, settings, rng, layer, 1, 1, sink);
  const ag::Var h_tf = run_attention(h_t, Axis::feature, p.feature_stage2, settings, rng, layer, 2, 2, sink);
  const ag::Var h_ft = run_attention(h_f, Axis::temporal, p.temporal_stage2, settings, rng, layer, 2, 3, sink);
  trace.branches = {h_t, h_f, h_tf, h_ft};
  trace.fused = ag::scale(ag::add_n(trace.branches), 0.25);
  return trace;
}

LayerTrace serial_layer(const ag::Var& h_prev, const BoundLayer& p, const AttentionSettings& settings,
                        Rng& rng, std::size_t layer, const AttentionSink& sink) {
  LayerTrace trace;
  const ag::Var a = run_attention(h_prev, Axis::temporal, p.temporal, settings, rng, layer, 1, 0, sink);
  const ag::Var b = run_attention(a, Axis::feature, p.feature, settings, rng, layer, 2, 1, sink);
  const ag::Var c = run_attention(b, Axis::temporal, p.temporal, settings, rng, layer, 3, 2, sink);
  trace.branches = {a, b, c};
  trace.fused = c;
  return trace;
}

namespace {

std::vector<ag::Var> fusion_inputs(const ag::Var& h0, std::span<const LayerTrace> traces) {
  if (traces.empty()) throw ContractError("fusion: at least one layer trace is required");
  std::vector<ag::Var> all{h0};
  for (const auto& tr : traces) all.insert(all.end(), tr.branches.begin(), tr.branches.end());
  return all;
}

}  // namespace

ag::Var multi_level_fusion(const ag::Var& h0, std::span<const LayerTrace> traces) {
  const auto all = fusion_inputs(h0, traces);
  return ag::scale(ag::add_n(all), 1.0 / static_cast<double>(all.size()));
}

ag::Var gated_fusion(const ag::Var& h0, std::span<const LayerTrace> traces, const ag::Var& gate_w,
                     Tensor* weights_out) {
  const auto all = fusion_inputs(h0, traces);
  const std::size_t k = all.size();
  const std::size_t d = h0.shape().back();
  if (gate_w.shape() != Shape{k * d, k})
    throw DimensionError("gated_fusion: gate " + shape_str(gate_w.shape()) + " for " +
                         std::to_string(k) + " candidates of width " + std::to_string(d));
  const ag::Var weights = ag::softmax_last(ag::matmul(ag::concat_last(all), gate_w));
  if (weights_out) *weights_out = weights.value();
  return ag::weighted_mix(weights, all);
}

// ---- full forward -----------------------------------------------------------------

namespace {

template <typename Model>
ag::Var bind(ag::Tape& tape, [[maybe_unused]] Model& model, const ag::Parameter& param) {
  if constexpr (std::is_const_v<Model>) {
    return tape.constant(param.value);
  } else {
    return tape.leaf(const_cast<ag::Parameter&>(param));
  }
}

template <typename Model>
BoundAttention bind_attention(ag::Tape& tape, Model& model, const AttentionParams& a) {
  return BoundAttention{bind(tape, model, a.wq), bind(tape, model, a.bq), bind(tape, model, a.wk),
                        bind(tape, model, a.wv), bind(tape, model, a.bv), bind(tape, model, a.wo),
                        bind(tape, model, a.bo), bind(tape, model, a.ln_gamma),
                        bind(tape, model, a.ln_beta)};
}

template <typename Model>
ForwardResult forward_impl(ag::Tape& tape, Model& model, const SeriesBatch& batch,
                           const ForwardOptions& options) {
  const ModelConfig& cfg = model.config();
  batch.validate();
  if (batch.features() != cfg.n_features)
    throw DimensionError("forward: batch has " + std::to_string(batch.features()) +
                         " features, model expects " + std::to_string(cfg.n_features));

  ForwardResult result;
  EmbeddingInputs inputs{cfg.embedding, {}, {}};
  if (cfg.embedding.feature_id) inputs.feature_ids = bind(tape, model, model.feature_ids);
  if (cfg.embedding.pe_kind == PeKind::learnable) inputs.pe_table = bind(tape, model, model.pe_table);
  result.tokens = embed_batch(tape, batch, inputs);
  result.h0 = project_input(result.tokens, bind(tape, model, model.in_w), bind(tape, model, model.in_b));

  const auto& enc = cfg.encoder;
  const AttentionSettings settings{enc.heads, enc.dropout, options.mode};
  if (options.store_attention) result.attention.emplace(enc.layers);
  const AttentionSink sink{result.attention ? &*result.attention : nullptr,
                           options.keep_taps ? &result.taps : nullptr};
  Rng rng = options.rng;

  ag::Var h = result.h0;
  for (std::size_t l = 0; l < enc.layers; ++l) {
    const auto& lp = model.layers[l];
    BoundLayer bound;
    bound.temporal = bind_attention(tape, model, lp.temporal);
    bound.feature = bind_attention(tape, model, lp.feature);
    bound.temporal_stage2 = lp.temporal_stage2 ? bind_attention(tape, model, *lp.temporal_stage2) : bound.temporal;
    bound.feature_stage2 = lp.feature_stage2 ? bind_attention(tape, model, *lp.feature_stage2) : bound.feature;
    Rng layer_rng = rng.derive(l);
    result.traces.push_back(enc.kind == EncoderKind::hybrid
                                ? helix_layer(h, bound, settings, layer_rng, l, sink)
                                : serial_layer(h, bound, settings, layer_rng, l, sink));
    h = result.traces.back().fused;
  }

  switch (enc.fusion) {
    case FusionKind::multi_level: result.fused = multi_level_fusion(result.h0, result.traces); break;
    case FusionKind::final_only: result.fused = h; break;
    case FusionKind::gated:
      result.fused = gated_fusion(result.h0, result.traces, bind(tape, model, model.gate_w),
                                  &result.gate_weights);
      break;
  }

  const ag::Var normed = ag::layer_norm(result.fused, bind(tape, model, model.out_gamma),
                                        bind(tape, model, model.out_beta));
  const ag::Var out = ag::linear(normed, bind(tape, model, model.out_w), bind(tape, model, model.out_b));
  result.x_hat = ag::reshape(out, Shape{batch.batch(), batch.steps(), batch.features()});
  return result;
}

}  // namespace

ForwardResult forward(ag::Tape& tape, HelixModel& model, const SeriesBatch& batch,
                      const ForwardOptions& options) {
  return forward_impl(tape, model, batch, options);
}

ForwardResult forward(ag::Tape& tape, const HelixModel& model, const SeriesBatch& batch,
                      const ForwardOptions& options) {
  return forward_impl(tape, model, batch, options);
}

}  // namespace helix
