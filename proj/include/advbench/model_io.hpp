#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "advbench/model.hpp"

namespace advbench {

/// Binary model format, all integers little-endian:
///
///   "ADVB" | version:u32 | count:u32 | count x layer
///   layer = kind:u8 | rank:u32 | dims:u32[rank] | weights:f64[...]
///
/// The first record (kind 0) carries the input shape and no weights.
/// Dense (1) stores dims (out,in) then W row-major and b; conv3x3 (2) stores
/// (out,in,3,3) then kernels and b; relu (3), flatten (4) and avgpool2 (5)
/// have rank 0.
inline constexpr std::uint32_t kModelFormatVersion = 1;

std::vector<std::uint8_t> encode_model(const Classifier& model);
Classifier decode_model(const std::vector<std::uint8_t>& bytes);

void save_model(const Classifier& model, const std::filesystem::path& path);
Classifier load_model(const std::filesystem::path& path);

/// JSON mirror: {"format":"ADVB","version":1,"layers":[{"kind","dims","weights"}]}
/// where "weights" is base64 of the same f64 little-endian block.
std::string model_to_json(const Classifier& model);
Classifier model_from_json(const std::string& text);

std::string base64_encode(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> base64_decode(const std::string& text);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

}  // namespace advbench
