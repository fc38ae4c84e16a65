#include "helix/model.hpp"

#include <cmath>

#include "helix/embedding.hpp"
#include "helix/errors.hpp"

namespace helix {

void SeriesBatch::validate() const {
  if (values.rank() != 3)
    throw DimensionError("SeriesBatch: values must be [B,T,F], got " + shape_str(values.shape()));
  if (mask.shape() != values.shape() || truth.shape() != values.shape())
    throw DimensionError("SeriesBatch: values " + shape_str(values.shape()) + ", mask " +
                         shape_str(mask.shape()) + ", truth " + shape_str(truth.shape()));
}

namespace {

template <typename E, std::size_t N>
E parse_enum(std::string_view name, const std::pair<std::string_view, E> (&table)[N],
             const char* what) {
  for (const auto& [key, value] : table)
    if (key == name) return value;
  throw ConfigError(std::string("unknown ") + what + " '" + std::string(name) + "'");
}

template <typename E, std::size_t N>
std::string_view enum_name(E v, const std::pair<std::string_view, E> (&table)[N]) {
  for (const auto& [key, value] : table)
    if (value == v) return key;
  return "?";
}

constexpr std::pair<std::string_view, Variant> kVariants[] = {
    {"full", Variant::full},
    {"no_featid", Variant::no_featid},
    {"no_fusion", Variant::no_fusion},
    {"no_hybrid", Variant::no_hybrid},
    {"learnable_pe", Variant::learnable_pe},
    {"gated_fusion", Variant::gated_fusion},
};
constexpr std::pair<std::string_view, PeKind> kPeKinds[] = {
    {"sinusoidal", PeKind::sinusoidal}, {"learnable", PeKind::learnable}};
constexpr std::pair<std::string_view, EncoderKind> kEncoderKinds[] = {
    {"hybrid", EncoderKind::hybrid}, {"serial", EncoderKind::serial}};
constexpr std::pair<std::string_view, FusionKind> kFusionKinds[] = {
    {"multi_level", FusionKind::multi_level},
    {"final_only", FusionKind::final_only},
    {"gated", FusionKind::gated}};

}  // namespace

std::string_view to_string(Variant v) { return enum_name(v, kVariants); }
Variant parse_variant(std::string_view name) { return parse_enum(name, kVariants, "variant"); }
std::string_view to_string(PeKind k) { return enum_name(k, kPeKinds); }
std::string_view to_string(EncoderKind k) { return enum_name(k, kEncoderKinds); }
std::string_view to_string(FusionKind k) { return enum_name(k, kFusionKinds); }
PeKind parse_pe_kind(std::string_view n) { return parse_enum(n, kPeKinds, "pe_kind"); }
EncoderKind parse_encoder_kind(std::string_view n) { return parse_enum(n, kEncoderKinds, "encoder kind"); }
FusionKind parse_fusion_kind(std::string_view n) { return parse_enum(n, kFusionKinds, "fusion kind"); }

void ModelConfig::validate() const {
  const auto& e = embedding;
  const auto& c = encoder;
  if (n_features == 0) throw ConfigError("model: n_features must be >= 1");
  if (e.d_pe == 0 || e.d_pe % 2 != 0)
    throw ConfigError("model: d_pe must be a positive even number, got " + std::to_string(e.d_pe));
  if (e.feature_id && e.d_f == 0) throw ConfigError("model: d_f must be >= 1");
  if (e.t_max == 0) throw ConfigError("model: t_max must be >= 1");
  if (c.d_model == 0 || c.heads == 0 || c.d_model % c.heads != 0)
    throw ConfigError("model: d_model " + std::to_string(c.d_model) + " not divisible by " +
                      std::to_string(c.heads) + " heads");
  if (c.layers == 0) throw ConfigError("model: layers must be >= 1");
  if (!(c.dropout >= 0.0 && c.dropout < 1.0))
    throw ConfigError("model: dropout must lie in [0, 1)");
  if (c.kind == EncoderKind::serial && c.fusion == FusionKind::final_only)
    throw ConfigError("model: final-only fusion composes with the hybrid encoder only");
}

ModelConfig apply_variant(ModelConfig cfg, Variant variant) {
  cfg.embedding.feature_id = true;
  cfg.embedding.pe_kind = PeKind::sinusoidal;
  cfg.encoder.kind = EncoderKind::hybrid;
  cfg.encoder.fusion = FusionKind::multi_level;
  switch (variant) {
    case Variant::full: break;
    case Variant::no_featid: cfg.embedding.feature_id = false; break;
    case Variant::no_fusion: cfg.encoder.fusion = FusionKind::final_only; break;
    case Variant::no_hybrid: cfg.encoder.kind = EncoderKind::serial; break;
    case Variant::learnable_pe: cfg.embedding.pe_kind = PeKind::learnable; break;
    case Variant::gated_fusion: cfg.encoder.fusion = FusionKind::gated; break;
  }
  return cfg;
}

std::size_t fusion_candidates(const EncoderConfig& cfg) {
  return 1 + (cfg.kind == EncoderKind::hybrid ? 4 : 3) * cfg.layers;
}

namespace {

using ag::Parameter;

Parameter xavier(const std::string& name, std::size_t fan_in, std::size_t fan_out, const Rng& rng) {
  Rng r = rng.derive(name);
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor w(Shape{fan_in, fan_out});
  for (auto& v : w.data()) v = r.uniform(-a, a);
  return Parameter(name, std::move(w));
}

Parameter constant(const std::string& name, std::size_t n, double value) {
  return Parameter(name, Tensor(Shape{n}, value));
}

AttentionParams make_attention(const std::string& prefix, std::size_t d, const Rng& rng) {
  return AttentionParams{
      xavier(prefix + ".wq", d, d, rng), constant(prefix + ".bq", d, 0.0),
      xavier(prefix + ".wk", d, d, rng), xavier(prefix + ".wv", d, d, rng),
      constant(prefix + ".bv", d, 0.0),  xavier(prefix + ".wo", d, d, rng),
      constant(prefix + ".bo", d, 0.0),  constant(prefix + ".ln_gamma", d, 1.0),
      constant(prefix + ".ln_beta", d, 0.0),
  };
}

template <typename P>
void collect(AttentionParams& a, std::vector<P>& out) {
  for (auto* p : {&a.wq, &a.bq, &a.wk, &a.wv, &a.bv, &a.wo, &a.bo, &a.ln_gamma, &a.ln_beta})
    out.push_back(p);
}

}  // namespace

HelixModel::HelixModel(const ModelConfig& config, Rng init_rng) : config_(config) {
  config_.validate();
  const auto& e = config_.embedding;
  const auto& c = config_.encoder;
  const std::size_t d = c.d_model;

  if (e.feature_id) {
    Rng r = init_rng.derive("embed.feature_ids");
    const double a = 1.0 / std::sqrt(static_cast<double>(e.d_f));
    Tensor ids(Shape{config_.n_features, e.d_f});
    for (auto& v : ids.data()) v = r.uniform(-a, a);
    feature_ids = Parameter("embed.feature_ids", std::move(ids));
  }
  if (e.pe_kind == PeKind::learnable)
    pe_table = Parameter("embed.pe_table", sinusoidal_table(e.t_max, e.d_pe));
  in_w = xavier("embed.in_w", e.d_e(), d, init_rng);
  in_b = constant("embed.in_b", d, 0.0);

  for (std::size_t l = 0; l < c.layers; ++l) {
    const std::string prefix = "layers." + std::to_string(l);
    LayerParams layer{make_attention(prefix + ".temporal", d, init_rng),
                      make_attention(prefix + ".feature", d, init_rng), std::nullopt, std::nullopt};
    if (!c.share_stage_params && c.kind == EncoderKind::hybrid) {
      layer.temporal_stage2 = make_attention(prefix + ".temporal_stage2", d, init_rng);
      layer.feature_stage2 = make_attention(prefix + ".feature_stage2", d, init_rng);
    }
    layers.push_back(std::move(layer));
  }
  if (c.fusion == FusionKind::gated) {
    const std::size_t k = fusion_candidates(c);
    gate_w = xavier("fusion.gate_w", k * d, k, init_rng);
  }
  out_gamma = constant("head.ln_gamma", d, 1.0);
  out_beta = constant("head.ln_beta", d, 0.0);
  out_w = xavier("head.out_w", d, 1, init_rng);
  out_b = constant("head.out_b", 1, 0.0);
}

std::vector<ag::Parameter*> HelixModel::parameters() {
  std::vector<ag::Parameter*> out;
  if (!feature_ids.value.empty()) out.push_back(&feature_ids);
  if (!pe_table.value.empty()) out.push_back(&pe_table);
  out.push_back(&in_w);
  out.push_back(&in_b);
  for (auto& layer : layers) {
    collect(layer.temporal, out);
    collect(layer.feature, out);
    if (layer.temporal_stage2) collect(*layer.temporal_stage2, out);
    if (layer.feature_stage2) collect(*layer.feature_stage2, out);
  }
  if (!gate_w.value.empty()) out.push_back(&gate_w);
  for (auto* p : {&out_gamma, &out_beta, &out_w, &out_b}) out.push_back(p);
  return out;
}

std::vector<const ag::Parameter*> HelixModel::parameters() const {
  auto params = const_cast<HelixModel*>(this)->parameters();
  return {params.begin(), params.end()};
}

ag::Parameter* HelixModel::find(std::string_view name) {
  for (auto* p : parameters())
    if (p->name == name) return p;
  return nullptr;
}

void HelixModel::zero_grad() {
  for (auto* p : parameters()) p->zero_grad();
}

std::size_t HelixModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto* p : parameters()) n += p->value.numel();
  return n;
}

}  // namespace helix
