#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "cfpn/model.hpp"

namespace cfpn {

// Little-endian layout:
//   "CFPN" | u32 version | records...
//   record: u32 name_len | name bytes | u32 rank | u32 dims[rank] | f64 payload[prod(dims)]

inline constexpr std::uint32_t kCheckpointVersion = 1;

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

std::vector<std::uint8_t> encode_checkpoint(const NamedTensors& records);
NamedTensors decode_checkpoint(const std::vector<std::uint8_t>& bytes);

/// Writes parameters, BN buffers and "meta.*" records describing the config.
void save_checkpoint(const std::filesystem::path& path, const CfpnModel& model);
CfpnModel load_checkpoint(const std::filesystem::path& path);

}  // namespace cfpn
