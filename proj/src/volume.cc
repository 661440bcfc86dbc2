#include "ratlesnet/volume.h"

#include <numeric>

namespace ratlesnet {

std::size_t Mask::count() const {
  return std::accumulate(values.begin(), values.end(), std::size_t{0},
                         [](std::size_t acc, std::uint8_t v) { return acc + (v != 0); });
}

Tensor<float> to_tensor(const Volume& v) {
  return Tensor<float>(Shape(1, 1, v.shape[0], v.shape[1], v.shape[2]), v.values);
}

}  // namespace ratlesnet
