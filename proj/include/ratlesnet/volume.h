#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "ratlesnet/tensor.h"

namespace ratlesnet {

using Extent3 = std::array<std::size_t, 3>;
using Spacing3 = std::array<double, 3>;

inline std::size_t voxel_count(const Extent3& e) { return e[0] * e[1] * e[2]; }

// Scalar MR volume. Values are row-major over (x, y, z): z varies fastest,
// matching the tensor layout (NIfTI files store x fastest; nifti_io reorders).
struct Volume {
  Extent3 shape{};
  Spacing3 voxel_size{1.0, 1.0, 1.0};
  std::vector<float> values;

  Volume() = default;
  Volume(Extent3 extent, Spacing3 spacing, float fill = 0.0f)
      : shape(extent), voxel_size(spacing), values(voxel_count(extent), fill) {}

  std::size_t index(std::size_t x, std::size_t y, std::size_t z) const {
    return (x * shape[1] + y) * shape[2] + z;
  }
  float& at(std::size_t x, std::size_t y, std::size_t z) { return values[index(x, y, z)]; }
  float at(std::size_t x, std::size_t y, std::size_t z) const { return values[index(x, y, z)]; }

  friend bool operator==(const Volume&, const Volume&) = default;
};

// Binary label volume; same layout as Volume.
struct Mask {
  Extent3 shape{};
  Spacing3 voxel_size{1.0, 1.0, 1.0};
  std::vector<std::uint8_t> values;

  Mask() = default;
  Mask(Extent3 extent, Spacing3 spacing)
      : shape(extent), voxel_size(spacing), values(voxel_count(extent), 0) {}

  std::size_t index(std::size_t x, std::size_t y, std::size_t z) const {
    return (x * shape[1] + y) * shape[2] + z;
  }
  std::uint8_t& at(std::size_t x, std::size_t y, std::size_t z) { return values[index(x, y, z)]; }
  std::uint8_t at(std::size_t x, std::size_t y, std::size_t z) const {
    return values[index(x, y, z)];
  }
  std::size_t count() const;

  friend bool operator==(const Mask&, const Mask&) = default;
};

// (1, 1, x, y, z) tensor view of a volume's values.
Tensor<float> to_tensor(const Volume& v);

}  // namespace ratlesnet
