#pragma once

#include <filesystem>

#include <nlohmann/json.hpp>

#include "lrc/encoder.hpp"

namespace lrc {

inline constexpr int kCheckpointFormatVersion = 1;

nlohmann::json to_json(const EncoderConfig& config);
EncoderConfig encoder_config_from_json(const nlohmann::json& j);

// Writes `<stem>.json` (manifest: format_version, config, ordered parameter
// descriptors with byte offsets) and `<stem>.bin` (little-endian float64
// values, concatenated in descriptor order). Returns the manifest path.
std::filesystem::path save_checkpoint(const EncoderModel& model, const std::filesystem::path& stem);

// Accepts either the manifest path or the stem.
EncoderModel load_checkpoint(const std::filesystem::path& path);

}  // namespace lrc
