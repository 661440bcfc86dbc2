#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ratlesnet/error.h"

namespace ratlesnet {

// Extents of a (batch, channel, x, y, z) tensor. Data is row-major over this
// tuple, so z is the fastest-varying index.
struct Shape {
  std::array<std::size_t, 5> dims{};

  constexpr Shape() = default;
  constexpr Shape(std::size_t b, std::size_t c, std::size_t x, std::size_t y, std::size_t z)
      : dims{b, c, x, y, z} {}

  constexpr std::size_t batch() const { return dims[0]; }
  constexpr std::size_t channels() const { return dims[1]; }
  constexpr std::size_t x() const { return dims[2]; }
  constexpr std::size_t y() const { return dims[3]; }
  constexpr std::size_t z() const { return dims[4]; }
  constexpr std::size_t spatial_size() const { return dims[2] * dims[3] * dims[4]; }
  constexpr std::size_t numel() const { return dims[0] * dims[1] * spatial_size(); }
  constexpr bool is_scalar() const {
    return dims[0] == 1 && dims[1] == 1 && dims[2] == 1 && dims[3] == 1 && dims[4] == 1;
  }
  constexpr bool same_spatial(const Shape& o) const {
    return dims[2] == o.dims[2] && dims[3] == o.dims[3] && dims[4] == o.dims[4];
  }

  constexpr std::size_t offset(std::size_t b, std::size_t c, std::size_t x, std::size_t y,
                               std::size_t z) const {
    return (((b * dims[1] + c) * dims[2] + x) * dims[3] + y) * dims[4] + z;
  }

  std::string to_string() const;

  friend constexpr bool operator==(const Shape&, const Shape&) = default;
};

template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T{0});
  // Throws ShapeError when values.size() != shape.numel().
  Tensor(Shape shape, std::vector<T> values);

  const Shape& shape() const { return shape_; }
  std::size_t numel() const { return data_.size(); }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }
  T& at(std::size_t b, std::size_t c, std::size_t x, std::size_t y, std::size_t z) {
    return data_[shape_.offset(b, c, x, y, z)];
  }
  const T& at(std::size_t b, std::size_t c, std::size_t x, std::size_t y, std::size_t z) const {
    return data_[shape_.offset(b, c, x, y, z)];
  }

  bool requires_grad() const { return requires_grad_; }
  void set_requires_grad(bool on) { requires_grad_ = on; }

  bool has_grad() const { return grad_.has_value(); }
  // Allocates a zero gradient buffer on first use.
  std::span<T> grad();
  std::span<const T> grad() const;
  void zero_grad();
  void clear_grad() { grad_.reset(); }

  // Value copy in another precision; gradient state is not carried over.
  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    Tensor<U> t(shape_, std::move(out));
    t.set_requires_grad(requires_grad_);
    return t;
  }

  bool all_finite() const;

 private:
  Shape shape_{};
  std::vector<T> data_;
  bool requires_grad_ = false;
  std::optional<std::vector<T>> grad_;
};

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace ratlesnet
