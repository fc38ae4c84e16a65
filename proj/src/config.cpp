#include "helix/config.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <type_traits>

#include "config_json.hpp"
#include "helix/errors.hpp"

namespace helix {

namespace detail {

namespace {

// Reads keys out of one JSON object and rejects whatever is left over.
class Section {
 public:
  Section(const json& doc, std::string name) : doc_(doc), name_(std::move(name)) {
    if (!doc_.is_object()) throw ConfigError("config: '" + name_ + "' must be an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    const auto it = doc_.find(key);
    if (it == doc_.end()) return;
    const json& v = *it;
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) fail(key, "a boolean");
      out = v.get<bool>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_unsigned()) fail(key, "a non-negative integer");
      out = static_cast<T>(v.get<std::uint64_t>());
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) fail(key, "a number");
      out = v.get<double>();
    } else {
      if (!v.is_string()) fail(key, "a string");
      out = v.get<std::string>();
    }
  }

  const json* child(const char* key) {
    seen_.insert(key);
    const auto it = doc_.find(key);
    return it == doc_.end() ? nullptr : &*it;
  }

  void finish() const {
    for (const auto& item : doc_.items())
      if (!seen_.count(item.key()))
        throw ConfigError("config: unknown key '" + qualified(item.key()) + "'");
  }

 private:
  std::string qualified(const std::string& key) const { return name_.empty() ? key : name_ + "." + key; }

  [[noreturn]] void fail(const char* key, const char* what) const {
    throw ConfigError("config: '" + qualified(key) + "' must be " + what);
  }

  const json& doc_;
  std::string name_;
  std::set<std::string> seen_;
};

template <typename Parse>
void read_enum(Section& s, const char* key, Parse parse) {
  std::string name;
  s.get(key, name);
  if (!name.empty()) parse(name);
}

}  // namespace

json to_json(const RunConfig& c) {
  const auto& e = c.model.embedding;
  const auto& m = c.model.encoder;
  return json{
      {"seed", c.seed},
      {"data", {{"window", c.data.window}, {"stride", c.data.stride}}},
      {"synthetic",
       {{"features", c.synthetic.features},
        {"windows", c.synthetic.windows},
        {"lengthscale", c.synthetic.lengthscale},
        {"noise", c.synthetic.noise},
        {"ar", c.synthetic.ar}}},
      {"corruption",
       {{"pattern", std::string(to_string(c.corruption.pattern))},
        {"rate", c.corruption.rate},
        {"block_len", c.corruption.block_len},
        {"block_width", c.corruption.block_width}}},
      {"model",
       {{"d_pe", e.d_pe},
        {"d_f", e.d_f},
        {"t_max", e.t_max},
        {"d_model", m.d_model},
        {"heads", m.heads},
        {"layers", m.layers},
        {"dropout", m.dropout},
        {"share_stage_params", m.share_stage_params}}},
      {"train",
       {{"epochs", c.train.epochs},
        {"patience", c.train.patience},
        {"batch_size", c.train.batch_size},
        {"lr", c.train.lr},
        {"rho", c.train.rho},
        {"variant", std::string(to_string(c.train.variant))}}},
      {"paths", {{"data", c.paths.data}, {"coords", c.paths.coords}, {"out", c.paths.out}}},
  };
}

RunConfig run_config_from_json(const json& doc) {
  RunConfig c;
  Section root(doc, "");
  root.get("seed", c.seed);
  if (const json* j = root.child("data")) {
    Section s(*j, "data");
    s.get("window", c.data.window);
    s.get("stride", c.data.stride);
    s.finish();
  }
  if (const json* j = root.child("synthetic")) {
    Section s(*j, "synthetic");
    s.get("features", c.synthetic.features);
    s.get("windows", c.synthetic.windows);
    s.get("lengthscale", c.synthetic.lengthscale);
    s.get("noise", c.synthetic.noise);
    s.get("ar", c.synthetic.ar);
    s.finish();
  }
  if (const json* j = root.child("corruption")) {
    Section s(*j, "corruption");
    read_enum(s, "pattern", [&](const std::string& n) { c.corruption.pattern = parse_pattern(n); });
    s.get("rate", c.corruption.rate);
    s.get("block_len", c.corruption.block_len);
    s.get("block_width", c.corruption.block_width);
    s.finish();
  }
  if (const json* j = root.child("model")) {
    Section s(*j, "model");
    s.get("d_pe", c.model.embedding.d_pe);
    s.get("d_f", c.model.embedding.d_f);
    s.get("t_max", c.model.embedding.t_max);
    s.get("d_model", c.model.encoder.d_model);
    s.get("heads", c.model.encoder.heads);
    s.get("layers", c.model.encoder.layers);
    s.get("dropout", c.model.encoder.dropout);
    s.get("share_stage_params", c.model.encoder.share_stage_params);
    s.finish();
  }
  if (const json* j = root.child("train")) {
    Section s(*j, "train");
    s.get("epochs", c.train.epochs);
    s.get("patience", c.train.patience);
    s.get("batch_size", c.train.batch_size);
    s.get("lr", c.train.lr);
    s.get("rho", c.train.rho);
    read_enum(s, "variant", [&](const std::string& n) { c.train.variant = parse_variant(n); });
    s.finish();
  }
  if (const json* j = root.child("paths")) {
    Section s(*j, "paths");
    s.get("data", c.paths.data);
    s.get("coords", c.paths.coords);
    s.get("out", c.paths.out);
    s.finish();
  }
  root.finish();
  c.train.seed = c.seed;
  c.synthetic.window = c.data.window;
  return c;
}

json to_json(const ModelConfig& c) {
  const auto& e = c.embedding;
  const auto& m = c.encoder;
  return json{
      {"n_features", c.n_features},
      {"embedding",
       {{"d_pe", e.d_pe},
        {"d_f", e.d_f},
        {"feature_id", e.feature_id},
        {"pe_kind", std::string(to_string(e.pe_kind))},
        {"t_max", e.t_max}}},
      {"encoder",
       {{"d_model", m.d_model},
        {"heads", m.heads},
        {"layers", m.layers},
        {"kind", std::string(to_string(m.kind))},
        {"fusion", std::string(to_string(m.fusion))},
        {"dropout", m.dropout},
        {"share_stage_params", m.share_stage_params}}},
  };
}

ModelConfig model_config_from_json(const json& doc) {
  ModelConfig c;
  Section root(doc, "model");
  root.get("n_features", c.n_features);
  if (const json* j = root.child("embedding")) {
    Section s(*j, "model.embedding");
    s.get("d_pe", c.embedding.d_pe);
    s.get("d_f", c.embedding.d_f);
    s.get("feature_id", c.embedding.feature_id);
    read_enum(s, "pe_kind", [&](const std::string& n) { c.embedding.pe_kind = parse_pe_kind(n); });
    s.get("t_max", c.embedding.t_max);
    s.finish();
  }
  if (const json* j = root.child("encoder")) {
    Section s(*j, "model.encoder");
    s.get("d_model", c.encoder.d_model);
    s.get("heads", c.encoder.heads);
    s.get("layers", c.encoder.layers);
    read_enum(s, "kind", [&](const std::string& n) { c.encoder.kind = parse_encoder_kind(n); });
    read_enum(s, "fusion", [&](const std::string& n) { c.encoder.fusion = parse_fusion_kind(n); });
    s.get("dropout", c.encoder.dropout);
    s.get("share_stage_params", c.encoder.share_stage_params);
    s.finish();
  }
  root.finish();
  c.validate();
  return c;
}

}  // namespace detail

void RunConfig::validate() const {
  if (data.window == 0) throw ConfigError("config: data.window must be >= 1");
  synthetic.validate();
  corruption.validate();
  train.validate();
  ModelConfig probe = model_for(synthetic.features);
  probe.validate();
}

ModelConfig RunConfig::model_for(std::size_t features) const {
  ModelConfig m = apply_variant(model, train.variant);
  m.n_features = features;
  if (m.embedding.t_max == 0) m.embedding.t_max = data.window;
  return m;
}

RunConfig parse_config(std::string_view text) {
  detail::json doc;
  try {
    doc = detail::json::parse(text);
  } catch (const detail::json::parse_error& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  RunConfig cfg = detail::run_config_from_json(doc);
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str());
}

std::string format_config(const RunConfig& cfg) { return detail::to_json(cfg).dump(2) + "\n"; }

}  // namespace helix
