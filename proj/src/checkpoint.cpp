#include "helix/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <vector>

#include "config_json.hpp"
#include "helix/errors.hpp"

namespace helix {

namespace {

using detail::json;

struct Entry {
  std::string name;
  const Tensor* tensor;
};

void put_u64(std::string& out, std::uint64_t v) {
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xff));
}

std::uint64_t get_u64(std::string_view in, std::size_t at) {
  std::uint64_t v = 0;
  for (int b = 0; b < 8; ++b) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[at + b])) << (8 * b);
  return v;
}

Tensor vector_tensor(const std::vector<double>& v) { return Tensor(Shape{v.size()}, v); }

json shape_json(const Shape& s) {
  json out = json::array();
  for (auto d : s) out.push_back(d);
  return out;
}

}  // namespace

std::string encode_checkpoint(const RunConfig& run, const HelixModel& model, const NormStats& norm) {
  const std::size_t F = model.config().n_features;
  if (norm.mean.size() != F || norm.std.size() != F)
    throw DimensionError("save_checkpoint: normalization covers " + std::to_string(norm.mean.size()) +
                         " features, model has " + std::to_string(F));
  const Tensor mean = vector_tensor(norm.mean), stdev = vector_tensor(norm.std);
  std::vector<Entry> entries;
  for (const auto* p : model.parameters()) entries.push_back({p->name, &p->value});
  entries.push_back({"norm.mean", &mean});
  entries.push_back({"norm.std", &stdev});

  json manifest = json::array();
  std::uint64_t offset = 0;
  for (const auto& e : entries) {
    manifest.push_back({{"name", e.name}, {"shape", shape_json(e.tensor->shape())}, {"offset", offset}});
    offset += 8 * e.tensor->numel();
  }
  const json header{{"run", detail::to_json(run)}, {"model", detail::to_json(model.config())}, {"manifest", manifest}};
  const std::string text = header.dump();

  std::string out(kCheckpointMagic);
  put_u64(out, text.size());
  out += text;
  out.reserve(out.size() + offset);
  for (const auto& e : entries)
    for (double v : e.tensor->data()) put_u64(out, std::bit_cast<std::uint64_t>(v));
  return out;
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  const std::size_t prefix = kCheckpointMagic.size() + 8;
  if (bytes.size() < prefix || bytes.substr(0, kCheckpointMagic.size()) != kCheckpointMagic)
    throw CorruptionError("checkpoint: bad magic (not a checkpoint file)");
  const std::uint64_t header_len = get_u64(bytes, kCheckpointMagic.size());
  if (header_len > bytes.size() - prefix) throw CorruptionError("checkpoint: truncated header");

  json header;
  try {
    header = json::parse(bytes.substr(prefix, header_len));
  } catch (const json::parse_error& e) {
    throw CorruptionError(std::string("checkpoint: unreadable header: ") + e.what());
  }
  if (!header.is_object() || !header.contains("run") || !header.contains("model") || !header.contains("manifest") ||
      !header["manifest"].is_array())
    throw CorruptionError("checkpoint: header lacks run, model or manifest");

  Checkpoint ck;
  try {
    ck.run = detail::run_config_from_json(header["run"]);
    ck.model = HelixModel(detail::model_config_from_json(header["model"]), Rng(0));
  } catch (const ConfigError& e) {
    throw CorruptionError(std::string("checkpoint: invalid header: ") + e.what());
  }

  const std::size_t F = ck.model.config().n_features;
  Tensor mean(Shape{F}), stdev(Shape{F});
  std::vector<std::pair<std::string, Tensor*>> expected;
  for (auto* p : ck.model.parameters()) expected.emplace_back(p->name, &p->value);
  expected.emplace_back("norm.mean", &mean);
  expected.emplace_back("norm.std", &stdev);

  const json& manifest = header["manifest"];
  const std::string_view payload = bytes.substr(prefix + header_len);
  std::uint64_t offset = 0;
  for (std::size_t i = 0; i < expected.size(); ++i) {
    const auto& [name, tensor] = expected[i];
    if (i >= manifest.size())
      throw ManifestError("checkpoint: tensor '" + name + "' missing from manifest");
    const json& m = manifest[i];
    Shape shape;
    try {
      if (m.at("name").get<std::string>() != name)
        throw ManifestError("checkpoint: manifest entry " + std::to_string(i) + " is '" +
                            m.at("name").get<std::string>() + "', model expects tensor '" + name + "'");
      shape = m.at("shape").get<Shape>();
      if (m.at("offset").get<std::uint64_t>() != offset)
        throw ManifestError("checkpoint: tensor '" + name + "' has offset " +
                            std::to_string(m.at("offset").get<std::uint64_t>()) + ", expected " +
                            std::to_string(offset));
    } catch (const json::exception& e) {
      throw ManifestError("checkpoint: malformed manifest entry for tensor '" + name + "': " + e.what());
    }
    if (shape != tensor->shape())
      throw ManifestError("checkpoint: tensor '" + name + "' has shape " + shape_str(shape) +
                          " but the model config implies " + shape_str(tensor->shape()));
    const std::uint64_t size = 8 * tensor->numel();
    if (offset + size > payload.size())
      throw CorruptionError("checkpoint: truncated payload in tensor '" + name + "'");
    for (std::size_t k = 0; k < tensor->numel(); ++k)
      (*tensor)[k] = std::bit_cast<double>(get_u64(payload, offset + 8 * k));
    offset += size;
  }
  if (manifest.size() != expected.size())
    throw ManifestError("checkpoint: manifest lists " + std::to_string(manifest.size()) + " tensors, model has " +
                        std::to_string(expected.size()));
  if (offset != payload.size())
    throw CorruptionError("checkpoint: " + std::to_string(payload.size() - offset) + " trailing bytes after payload");

  ck.norm.mean = mean.vec();
  ck.norm.std = stdev.vec();
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const RunConfig& run, const HelixModel& model,
                     const NormStats& norm) {
  const std::string bytes = encode_checkpoint(run, model, norm);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("save_checkpoint: cannot open " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("save_checkpoint: write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("load_checkpoint: cannot open " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace helix
