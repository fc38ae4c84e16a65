#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "helix/missingness.hpp"
#include "helix/model.hpp"
#include "helix/training.hpp"

namespace helix {

struct DataConfig {
  std::size_t window = 24;
  std::size_t stride = 0;  // 0 = window (non-overlapping)
};

struct PathsConfig {
  std::string data;    // wide CSV; empty = generate synthetic data
  std::string coords;  // feature_id,x,y sidecar
  std::string out = ".";
};

// Model defaults for a run; t_max 0 means "the window length".
inline ModelConfig default_run_model() {
  ModelConfig m;
  m.embedding.t_max = 0;
  return m;
}

/// Everything a CLI run needs. The architecture flags of `model` are set by
/// `train.variant`; `model.n_features` comes from the data.
struct RunConfig {
  std::uint64_t seed = 0;
  DataConfig data;
  SyntheticSpec synthetic;
  CorruptionSpec corruption;
  ModelConfig model = default_run_model();
  TrainConfig train;
  PathsConfig paths;

  void validate() const;
  // Architecture for `features` columns with the variant applied and
  // t_max defaulted to the window length.
  ModelConfig model_for(std::size_t features) const;
};

// Missing keys keep their defaults; unknown keys and bad values throw ConfigError.
RunConfig parse_config(std::string_view json_text);
RunConfig load_config(const std::filesystem::path& path);
std::string format_config(const RunConfig& cfg);

}  // namespace helix
