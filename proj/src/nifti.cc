#include "ratlesnet/nifti.h"

#include <cmath>
#include <cstring>
#include <string>

#include "ratlesnet/io.h"

namespace ratlesnet {

namespace {

std::int16_t bitpix_for(std::int16_t datatype) {
  switch (datatype) {
    case nifti::kUInt8: return 8;
    case nifti::kInt16: return 16;
    case nifti::kInt32: return 32;
    case nifti::kFloat32: return 32;
    case nifti::kFloat64: return 64;
    default: return 0;
  }
}

template <typename Raw>
void decode_values(io::ByteReader& r, std::size_t count, std::vector<double>& out) {
  r.require(count * sizeof(Raw));
  out.resize(count);
  for (std::size_t i = 0; i < count; ++i) out[i] = static_cast<double>(r.get<Raw>());
}

// Voxels in file order (x fastest) as doubles, scaled.
Volume decode(std::span<const std::uint8_t> bytes) {
  const NiftiHeader h = read_nifti_header(bytes);
  Extent3 shape{1, 1, 1};
  for (int d = 0; d < std::min<int>(h.dim[0], 3); ++d) {
    if (h.dim[d + 1] < 1) throw FormatError("nifti: dim[" + std::to_string(d + 1) + "] < 1");
    shape[d] = static_cast<std::size_t>(h.dim[d + 1]);
  }
  const std::size_t count = voxel_count(shape);
  if (!std::isfinite(h.vox_offset) || h.vox_offset < static_cast<float>(nifti::kDataOffset)) {
    throw FormatError("nifti: vox_offset must be >= 352 for single-file images");
  }
  io::ByteReader r(bytes, h.little_endian);
  r.seek(static_cast<std::size_t>(std::floor(h.vox_offset)));
  std::vector<double> raw;
  switch (h.datatype) {
    case nifti::kUInt8: decode_values<std::uint8_t>(r, count, raw); break;
    case nifti::kInt16: decode_values<std::int16_t>(r, count, raw); break;
    case nifti::kInt32: decode_values<std::int32_t>(r, count, raw); break;
    case nifti::kFloat32: decode_values<float>(r, count, raw); break;
    case nifti::kFloat64: decode_values<double>(r, count, raw); break;
  }
  const bool scaled = h.scl_slope != 0.0f && std::isfinite(h.scl_slope) &&
                      !(h.scl_slope == 1.0f && h.scl_inter == 0.0f);
  Volume v;
  v.shape = shape;
  v.voxel_size = {h.pixdim[1], h.pixdim[2], h.pixdim[3]};
  v.values.resize(count);
  std::size_t i = 0;
  for (std::size_t z = 0; z < shape[2]; ++z) {
    for (std::size_t y = 0; y < shape[1]; ++y) {
      for (std::size_t x = 0; x < shape[0]; ++x, ++i) {
        double value = raw[i];
        if (scaled) value = static_cast<double>(h.scl_slope) * value + h.scl_inter;
        if (!std::isfinite(value)) throw FormatError("nifti: non-finite voxel value");
        v.at(x, y, z) = static_cast<float>(value);
      }
    }
  }
  return v;
}

std::vector<std::uint8_t> encode_header(const Extent3& shape, const Spacing3& spacing,
                                        std::int16_t datatype) {
  for (std::size_t d : shape) {
    if (d < 1 || d > 32767) throw ShapeError("nifti: extent out of range for a NIfTI-1 dim");
  }
  std::vector<std::uint8_t> header(nifti::kDataOffset, 0);
  auto put = [&](std::size_t offset, auto value) {
    io::ByteWriter w;
    w.put(value);
    std::memcpy(header.data() + offset, w.bytes().data(), w.bytes().size());
  };
  put(0, std::int32_t{348});
  const std::int16_t dims[8] = {3, static_cast<std::int16_t>(shape[0]),
                                static_cast<std::int16_t>(shape[1]),
                                static_cast<std::int16_t>(shape[2]), 1, 1, 1, 1};
  for (int i = 0; i < 8; ++i) put(40 + 2 * i, dims[i]);
  put(70, datatype);
  put(72, bitpix_for(datatype));
  const float pixdim[8] = {1.0f, static_cast<float>(spacing[0]), static_cast<float>(spacing[1]),
                           static_cast<float>(spacing[2]), 0.0f, 0.0f, 0.0f, 0.0f};
  for (int i = 0; i < 8; ++i) put(76 + 4 * i, pixdim[i]);
  put(108, static_cast<float>(nifti::kDataOffset));
  put(112, 1.0f);
  put(116, 0.0f);
  header[123] = 2;  // xyzt_units: millimetres
  const char magic[4] = {'n', '+', '1', '\0'};
  std::memcpy(header.data() + 344, magic, 4);
  return header;
}

template <typename Image, typename Raw>
std::vector<std::uint8_t> encode(const Image& img, std::int16_t datatype) {
  io::ByteWriter w;
  w.put_bytes(encode_header(img.shape, img.voxel_size, datatype));
  for (std::size_t z = 0; z < img.shape[2]; ++z) {
    for (std::size_t y = 0; y < img.shape[1]; ++y) {
      for (std::size_t x = 0; x < img.shape[0]; ++x) w.put(static_cast<Raw>(img.at(x, y, z)));
    }
  }
  return std::move(w.bytes());
}

}  // namespace

NiftiHeader read_nifti_header(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < nifti::kDataOffset) {
    throw LengthError("nifti: " + std::to_string(bytes.size()) +
                      " bytes is shorter than a single-file header");
  }
  NiftiHeader h;
  io::ByteReader le(bytes, true);
  if (le.get_at<std::int32_t>(0) == 348) {
    h.little_endian = true;
  } else if (io::ByteReader(bytes, false).get_at<std::int32_t>(0) == 348) {
    h.little_endian = false;
  } else {
    throw FormatError("nifti: sizeof_hdr is not 348 in either byte order");
  }
  io::ByteReader r(bytes, h.little_endian);
  h.sizeof_hdr = 348;
  std::memcpy(h.magic.data(), bytes.data() + 344, 4);
  if (h.magic != std::array<char, 4>{'n', '+', '1', '\0'}) {
    throw FormatError("nifti: magic is not \"n+1\" (only single-file NIfTI-1 is supported)");
  }
  r.seek(40);
  for (auto& d : h.dim) d = r.get<std::int16_t>();
  h.datatype = r.get_at<std::int16_t>(70);
  h.bitpix = r.get_at<std::int16_t>(72);
  r.seek(76);
  for (auto& p : h.pixdim) p = r.get<float>();
  h.vox_offset = r.get_at<float>(108);
  h.scl_slope = r.get_at<float>(112);
  h.scl_inter = r.get_at<float>(116);

  if (h.dim[0] < 1 || h.dim[0] > 7) {
    throw FormatError("nifti: dim[0] = " + std::to_string(h.dim[0]) + " outside [1,7]");
  }
  for (int d = 4; d <= h.dim[0]; ++d) {
    if (h.dim[d] != 1) {
      throw UnsupportedError("nifti: only 3-D images are supported (dim[" + std::to_string(d) +
                             "] = " + std::to_string(h.dim[d]) + ")");
    }
  }
  const std::int16_t expected = bitpix_for(h.datatype);
  if (expected == 0) {
    throw UnsupportedError("nifti: unsupported datatype " + std::to_string(h.datatype));
  }
  if (h.bitpix != expected) {
    throw FormatError("nifti: bitpix " + std::to_string(h.bitpix) + " inconsistent with datatype " +
                      std::to_string(h.datatype));
  }
  return h;
}

Volume read_volume(std::span<const std::uint8_t> bytes) { return decode(bytes); }

Mask read_mask(std::span<const std::uint8_t> bytes) {
  const Volume v = decode(bytes);
  Mask m(v.shape, v.voxel_size);
  for (std::size_t i = 0; i < v.values.size(); ++i) {
    const float value = v.values[i];
    if (value != 0.0f && value != 1.0f) {
      throw LabelError("nifti: mask value " + std::to_string(value) + " is not 0 or 1");
    }
    m.values[i] = value == 1.0f ? 1 : 0;
  }
  return m;
}

std::vector<std::uint8_t> write_nifti(const Volume& volume) {
  return encode<Volume, float>(volume, nifti::kFloat32);
}

std::vector<std::uint8_t> write_nifti(const Mask& mask) {
  return encode<Mask, std::uint8_t>(mask, nifti::kUInt8);
}

Volume load_volume(const std::filesystem::path& path) {
  try {
    return read_volume(io::read_file(path));
  } catch (const DataError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

Mask load_mask(const std::filesystem::path& path) {
  try {
    return read_mask(io::read_file(path));
  } catch (const DataError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void save_nifti(const Volume& volume, const std::filesystem::path& path) {
  io::write_file(path, write_nifti(volume));
}

void save_nifti(const Mask& mask, const std::filesystem::path& path) {
  io::write_file(path, write_nifti(mask));
}

}  // namespace ratlesnet
