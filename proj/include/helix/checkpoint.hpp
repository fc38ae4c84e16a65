#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "helix/config.hpp"
#include "helix/io.hpp"
#include "helix/model.hpp"

namespace helix {

inline constexpr std::string_view kCheckpointMagic = "HELIXCKPT1";

/// Trained model plus what is needed to reuse it: the run configuration and
/// the normalization fitted on the training split.
struct Checkpoint {
  RunConfig run;
  HelixModel model;
  NormStats norm;
};

// Layout: magic, u64 LE header length, JSON header, LE f64 payloads in
// manifest order.
std::string encode_checkpoint(const RunConfig& run, const HelixModel& model, const NormStats& norm);
Checkpoint decode_checkpoint(std::string_view bytes);

void save_checkpoint(const std::filesystem::path& path, const RunConfig& run, const HelixModel& model,
                     const NormStats& norm);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace helix
