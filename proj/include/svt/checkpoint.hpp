#pragma once

// Checkpoint documents: JSON text with parameter arrays stored as base64 of
// little-endian IEEE-754 doubles (column-major), so round trips are exact.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "svt/nn.hpp"

namespace svt::io {

using nlohmann::json;

inline constexpr std::string_view kCheckpointFormat = "svt-checkpoint/1";

std::string base64_encode(std::span<const std::uint8_t> bytes);
/// Throws IoError on malformed input.
std::vector<std::uint8_t> base64_decode(std::string_view text);

std::string encode_doubles(std::span<const double> values);
std::vector<double> decode_doubles(std::string_view text);

json matrix_to_json(const nn::Mat& m);
nn::Mat matrix_from_json(const json& j);

struct CheckpointMeta {
  std::uint64_t seed = 0;
  long train_step = 0;
  std::string env_config_hash;
};

json meta_to_json(const CheckpointMeta& meta);
CheckpointMeta meta_from_json(const json& j);

/// {"layer_sizes", "activations", "parameters"}.
json mlp_to_json(const nn::Mlp& net);
nn::Mlp mlp_from_json(const json& j);

/// Full standalone document for a single network.
json mlp_checkpoint(const nn::Mlp& net, const CheckpointMeta& meta);

/// Hex FNV-1a of the network's serialized parameters; used to reference
/// frozen source networks from compound checkpoints.
std::string content_hash(const nn::Mlp& net);
std::string hex64(std::uint64_t v);

/// Writes via a temporary file and rename so readers never see a partial file.
void write_text_file(const std::filesystem::path& path, std::string_view text);
std::string read_text_file(const std::filesystem::path& path);

json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const json& doc);

}  // namespace svt::io
