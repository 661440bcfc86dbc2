#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "ratlesnet/model.h"

namespace ratlesnet {

// Binary model container, all integers and floats little-endian:
//
//   "RLNET1"
//   u64 input_channels, num_classes, growth_rate, levels, seed
//   u64 tensor_count
//   per tensor: u32 name_length, name bytes, u64 shape[5], u64 value_count,
//               f32 values[value_count]
//
// Tensors appear in Model::parameters() order, named "<layer>.weight" and
// "<layer>.bias".
std::vector<std::uint8_t> encode_checkpoint(const Model<float>& model);

// Throws FormatError for a bad magic or any count/name/shape that disagrees
// with the topology the stored config builds, LengthError on truncation.
Model<float> decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const Model<float>& model, const std::filesystem::path& path);
Model<float> load_checkpoint(const std::filesystem::path& path);

}  // namespace ratlesnet
