#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "ratlesnet/volume.h"

namespace ratlesnet {

// Fields of the 348-byte NIfTI-1 header this library reads or writes.
struct NiftiHeader {
  std::int32_t sizeof_hdr = 348;             // offset 0
  std::array<std::int16_t, 8> dim{};         // offset 40
  std::int16_t datatype = 0;                 // offset 70
  std::int16_t bitpix = 0;                   // offset 72
  std::array<float, 8> pixdim{};             // offset 76
  float vox_offset = 352.0f;                 // offset 108
  float scl_slope = 1.0f;                    // offset 112
  float scl_inter = 0.0f;                    // offset 116
  std::array<char, 4> magic{'n', '+', '1', '\0'};  // offset 344
  bool little_endian = true;                 // detected from sizeof_hdr
};

namespace nifti {
inline constexpr std::int16_t kUInt8 = 2;
inline constexpr std::int16_t kInt16 = 4;
inline constexpr std::int16_t kInt32 = 8;
inline constexpr std::int16_t kFloat32 = 16;
inline constexpr std::int16_t kFloat64 = 64;
inline constexpr std::size_t kHeaderSize = 348;
inline constexpr std::size_t kDataOffset = 352;
}  // namespace nifti

// Byte order is detected from sizeof_hdr. Throws LengthError for short input,
// FormatError for a bad magic, sizeof_hdr, dim[0] or bitpix, and
// UnsupportedError for other datatypes or non-unit dims beyond the third.
NiftiHeader read_nifti_header(std::span<const std::uint8_t> bytes);

// Reads a single-file NIfTI-1 image as a 3-D volume. Values are scaled by
// scl_slope/scl_inter unless scl_slope is 0.
Volume read_volume(std::span<const std::uint8_t> bytes);
// As read_volume, then requires every value to be 0 or 1 (LabelError).
Mask read_mask(std::span<const std::uint8_t> bytes);

// Little-endian single-file NIfTI-1: float32 for volumes, uint8 for masks,
// vox_offset 352, scl_slope 1, scl_inter 0.
std::vector<std::uint8_t> write_nifti(const Volume& volume);
std::vector<std::uint8_t> write_nifti(const Mask& mask);

Volume load_volume(const std::filesystem::path& path);
Mask load_mask(const std::filesystem::path& path);
void save_nifti(const Volume& volume, const std::filesystem::path& path);
void save_nifti(const Mask& mask, const std::filesystem::path& path);

}  // namespace ratlesnet
