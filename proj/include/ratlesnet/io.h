#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ratlesnet/error.h"

namespace ratlesnet::io {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text(const std::filesystem::path& path, const std::string& text);

template <typename U>
U byteswap(U v) {
  static_assert(std::is_trivially_copyable_v<U>);
  std::array<std::uint8_t, sizeof(U)> raw;
  std::memcpy(raw.data(), &v, sizeof(U));
  std::reverse(raw.begin(), raw.end());
  std::memcpy(&v, raw.data(), sizeof(U));
  return v;
}

// Appends values in little-endian order.
class ByteWriter {
 public:
  template <typename U>
  void put(U v) {
    if constexpr (std::endian::native == std::endian::big) v = byteswap(v);
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    bytes_.insert(bytes_.end(), p, p + sizeof(U));
  }
  void put_bytes(std::span<const std::uint8_t> raw) {
    bytes_.insert(bytes_.end(), raw.begin(), raw.end());
  }
  void put_string(const std::string& s) {
    bytes_.insert(bytes_.end(), s.begin(), s.end());
  }
  std::vector<std::uint8_t>& bytes() { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
};

// Reads values of a chosen byte order; throws LengthError past the end.
class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes, bool little_endian = true)
      : bytes_(bytes), little_(little_endian) {}

  template <typename U>
  U get() {
    require(sizeof(U));
    U v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(U));
    pos_ += sizeof(U);
    const bool native_little = std::endian::native == std::endian::little;
    if (native_little != little_) v = byteswap(v);
    return v;
  }
  template <typename U>
  U get_at(std::size_t offset) {
    seek(offset);
    return get<U>();
  }
  std::string get_string(std::size_t n) {
    require(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  void seek(std::size_t offset) {
    pos_ = offset;
    require(0);
  }
  void require(std::size_t n) const {
    if (pos_ > bytes_.size() || bytes_.size() - pos_ < n) {
      throw LengthError("unexpected end of data at byte " + std::to_string(pos_));
    }
  }
  std::size_t position() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
  bool little_;
};

}  // namespace ratlesnet::io
