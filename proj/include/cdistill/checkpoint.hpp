#pragma once

#include <cstddef>
#include <filesystem>

#include <json.hpp>

#include "cdistill/model.hpp"

namespace cdistill {

// Layout: "CDISTCKP", u64 LE manifest length, manifest JSON, then the tensor
// payloads (row-major little-endian float64) in manifest order. Each tensor
// entry carries the SHA-256 of its payload.
inline constexpr int kCheckpointFormatVersion = 1;

struct CheckpointInfo {
  std::size_t stage_index = 0;
  std::size_t step_count = 0;
};

struct LoadedCheckpoint {
  EncoderModel model;
  CheckpointInfo info;
};

// Returns the manifest that was written. Throws IoFailure.
nlohmann::ordered_json save_checkpoint(const EncoderModel& model, const std::filesystem::path& path,
                                       const CheckpointInfo& info = {});
// Throws IoFailure, DigestMismatch, VersionMismatch.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

nlohmann::ordered_json save_head_checkpoint(const ClassifierHead& head, const std::filesystem::path& path);
ClassifierHead load_head_checkpoint(const std::filesystem::path& path);

// Manifest only, without reading or verifying payloads.
nlohmann::json read_checkpoint_manifest(const std::filesystem::path& path);

}  // namespace cdistill
