#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <json.hpp>

#include "helix/checkpoint.hpp"
#include "helix/config.hpp"
#include "helix/encoder.hpp"
#include "helix/errors.hpp"
#include "test_util.hpp"

using namespace helix;
using namespace helix::testing;

namespace {

template <typename E, typename F>
std::string message_of(F&& f) {
  try {
    f();
  } catch (const E& e) {
    return e.what();
  }
  return "<no exception>";
}

RunConfig small_run() {
  RunConfig c = parse_config(R"({
    "seed": 5,
    "data": {"window": 6},
    "synthetic": {"features": 3, "windows": 10},
    "model": {"d_pe": 4, "d_f": 4, "d_model": 8, "heads": 2, "layers": 1, "dropout": 0.0},
    "train": {"epochs": 2, "batch_size": 4}
  })");
  return c;
}

NormStats some_norm(std::size_t f) {
  NormStats n;
  for (std::size_t i = 0; i < f; ++i) {
    n.mean.push_back(0.5 * static_cast<double>(i) - 1.0);
    n.std.push_back(1.0 + 0.25 * static_cast<double>(i));
  }
  return n;
}

// Splits an encoded checkpoint into its JSON header and payload bytes.
struct Parts {
  nlohmann::json header;
  std::string payload;
};

Parts split(const std::string& bytes) {
  const std::size_t prefix = kCheckpointMagic.size();
  std::uint64_t len = 0;
  for (std::size_t i = 0; i < 8; ++i)
    len |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[prefix + i])) << (8 * i);
  return {nlohmann::json::parse(bytes.substr(prefix + 8, len)), bytes.substr(prefix + 8 + len)};
}

std::string join(const Parts& p) {
  const std::string header = p.header.dump();
  std::string out(kCheckpointMagic);
  for (std::size_t i = 0; i < 8; ++i) out.push_back(static_cast<char>((header.size() >> (8 * i)) & 0xff));
  return out + header + p.payload;
}

}  // namespace

TEST_CASE("config defaults and overrides") {
  const RunConfig d = parse_config("{}");
  CHECK(d.seed == 0);
  CHECK(d.data.window == 24);
  CHECK(d.train.rho == 0.2);
  CHECK(d.train.variant == Variant::full);
  CHECK(d.model.embedding.t_max == 0);

  const RunConfig c = small_run();
  CHECK(c.seed == 5);
  CHECK(c.train.seed == 5);
  CHECK(c.synthetic.window == 6);
  CHECK(c.model.encoder.d_model == 8);

  const ModelConfig m = c.model_for(3);
  CHECK(m.n_features == 3);
  CHECK(m.embedding.t_max == 6);
  CHECK(m.embedding.feature_id);

  RunConfig ablated = c;
  ablated.train.variant = Variant::no_featid;
  CHECK(!ablated.model_for(3).embedding.feature_id);
}

TEST_CASE("config rejects unknown keys and bad types") {
  CHECK(message_of<ConfigError>([] { parse_config(R"({"train": {"learning_rate": 0.1}})"); })
            .find("train.learning_rate") != std::string::npos);
  CHECK(message_of<ConfigError>([] { parse_config(R"({"bogus": 1})"); }).find("bogus") != std::string::npos);
  CHECK(message_of<ConfigError>([] { parse_config(R"({"train": {"epochs": "ten"}})"); }).find("train.epochs") !=
        std::string::npos);
  CHECK_THROWS_AS(parse_config(R"({"seed": -1})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"train": {"variant": "no_such"}})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"corruption": {"rate": 1.5}})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"model": {"d_model": 10, "heads": 4}})"), ConfigError);
  CHECK_THROWS_AS(parse_config("{not json"), ConfigError);
  CHECK_THROWS_AS(parse_config("[1, 2]"), ConfigError);
  CHECK_THROWS_AS(load_config("/nonexistent/helix.json"), ConfigError);
}

TEST_CASE("config format and parse round trip") {
  RunConfig c = small_run();
  c.corruption.pattern = Pattern::block;
  c.corruption.rate = 0.35;
  c.train.lr = 3e-3;
  c.train.variant = Variant::gated_fusion;
  c.paths.out = "runs/a";
  const std::string text = format_config(c);
  CHECK(format_config(parse_config(text)) == text);
  const RunConfig back = parse_config(text);
  CHECK(back.train.lr == 3e-3);
  CHECK(back.corruption.pattern == Pattern::block);
  CHECK(back.paths.out == "runs/a");
}

TEST_CASE("checkpoint round trip") {
  const RunConfig run = small_run();
  const HelixModel model = make_model(run.model_for(3), run.train.variant, run.seed);
  const NormStats norm = some_norm(3);
  const std::string bytes = encode_checkpoint(run, model, norm);
  CHECK(bytes.compare(0, kCheckpointMagic.size(), kCheckpointMagic) == 0);

  const Checkpoint ck = decode_checkpoint(bytes);
  CHECK(encode_checkpoint(ck.run, ck.model, ck.norm) == bytes);
  CHECK(ck.norm.mean == norm.mean);
  CHECK(ck.norm.std == norm.std);
  CHECK(format_config(ck.run) == format_config(run));

  const SeriesBatch batch = random_batch(2, 6, 3, 40);
  ag::Tape t1, t2;
  CHECK(bitwise_equal(forward(t1, model, batch, {}).x_hat.value(), forward(t2, ck.model, batch, {}).x_hat.value()));

  const auto path = std::filesystem::temp_directory_path() / "helix_test_roundtrip.ckpt";
  save_checkpoint(path, run, model, norm);
  const Checkpoint loaded = load_checkpoint(path);
  CHECK(encode_checkpoint(loaded.run, loaded.model, loaded.norm) == bytes);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_checkpoint(path), DataError);
}

TEST_CASE("damaged checkpoints") {
  const RunConfig run = small_run();
  const HelixModel model = make_model(run.model_for(3), run.train.variant, run.seed);
  const std::string bytes = encode_checkpoint(run, model, some_norm(3));

  SUBCASE("truncated by 8 bytes") {
    CHECK_THROWS_AS(decode_checkpoint(bytes.substr(0, bytes.size() - 8)), CorruptionError);
  }
  SUBCASE("trailing bytes") { CHECK_THROWS_AS(decode_checkpoint(bytes + "x"), CorruptionError); }
  SUBCASE("bad magic") {
    std::string bad = bytes;
    bad[0] = 'X';
    CHECK(message_of<CorruptionError>([&] { decode_checkpoint(bad); }).find("magic") != std::string::npos);
    CHECK_THROWS_AS(decode_checkpoint("HELIX"), CorruptionError);
  }
  SUBCASE("shape tampered in the header names the tensor") {
    Parts p = split(bytes);
    auto& entry = p.header["manifest"][0];
    const std::string name = entry["name"];
    entry["shape"][0] = entry["shape"][0].get<std::size_t>() + 1;
    const std::string msg = message_of<ManifestError>([&] { decode_checkpoint(join(p)); });
    CHECK(msg.find("'" + name + "'") != std::string::npos);
  }
  SUBCASE("renamed tensor") {
    Parts p = split(bytes);
    p.header["manifest"][1]["name"] = "renamed";
    CHECK_THROWS_AS(decode_checkpoint(join(p)), ManifestError);
  }
  SUBCASE("unknown config key inside the header") {
    Parts p = split(bytes);
    p.header["run"]["train"]["extra"] = 1;
    CHECK_THROWS_AS(decode_checkpoint(join(p)), CorruptionError);
  }
  SUBCASE("header is not JSON") {
    Parts p = split(bytes);
    std::string broken = join(p);
    broken[kCheckpointMagic.size() + 8] = '#';
    CHECK_THROWS_AS(decode_checkpoint(broken), CorruptionError);
  }
}
