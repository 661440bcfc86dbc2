#include <doctest.h>

#include <bit>
#include <cstring>

#include "ratlesnet/error.h"
#include "ratlesnet/nifti.h"
#include "support/reference.h"

using namespace ratlesnet;

namespace {

// Hand-rolled single-file NIfTI-1 writer for fixtures, byte order selectable.
class Fixture {
 public:
  Fixture(std::array<std::int16_t, 8> dim, std::int16_t datatype, std::int16_t bitpix,
          bool little = true)
      : little_(little), bytes_(352, 0) {
    put<std::int32_t>(0, 348);
    for (int i = 0; i < 8; ++i) put<std::int16_t>(40 + 2 * i, dim[i]);
    put<std::int16_t>(70, datatype);
    put<std::int16_t>(72, bitpix);
    for (int i = 0; i < 8; ++i) put<float>(76 + 4 * i, 1.0f);
    put<float>(108, 352.0f);
    put<float>(112, 1.0f);
    put<float>(116, 0.0f);
    std::memcpy(bytes_.data() + 344, "n+1\0", 4);
  }

  template <typename U>
  void put(std::size_t offset, U v) {
    std::array<std::uint8_t, sizeof(U)> raw;
    std::memcpy(raw.data(), &v, sizeof(U));
    if (little_ != (std::endian::native == std::endian::little)) {
      std::reverse(raw.begin(), raw.end());
    }
    if (bytes_.size() < offset + sizeof(U)) bytes_.resize(offset + sizeof(U), 0);
    std::memcpy(bytes_.data() + offset, raw.data(), sizeof(U));
  }

  template <typename U>
  void append(U v) {
    put(bytes_.size(), v);
  }

  std::vector<std::uint8_t>& bytes() { return bytes_; }

 private:
  bool little_;
  std::vector<std::uint8_t> bytes_;
};

template <typename U>
U read_le(const std::vector<std::uint8_t>& b, std::size_t offset) {
  U v;
  std::memcpy(&v, b.data() + offset, sizeof(U));
  return v;  // the test host is little-endian
}

// x-fastest file order with value x + 10y + 100z.
std::vector<std::uint8_t> indexed_fixture(bool little) {
  Fixture f({3, 3, 4, 5, 1, 1, 1, 1}, nifti::kFloat32, 32, little);
  f.put<float>(80, 0.5f);
  f.put<float>(84, 0.25f);
  f.put<float>(88, 2.0f);
  for (int z = 0; z < 5; ++z)
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 3; ++x) f.append<float>(static_cast<float>(x + 10 * y + 100 * z));
  return f.bytes();
}

}  // namespace

TEST_CASE("file order is x-fastest and maps onto (x, y, z) indexing") {
  const Volume v = read_volume(indexed_fixture(true));
  CHECK(v.shape == Extent3{3, 4, 5});
  CHECK(v.voxel_size == Spacing3{0.5, 0.25, 2.0});
  CHECK(v.at(2, 0, 0) == 2.0f);
  CHECK(v.at(0, 3, 0) == 30.0f);
  CHECK(v.at(1, 2, 4) == 421.0f);
}

TEST_CASE("both byte orders parse to identical data") {
  const auto le = indexed_fixture(true);
  const auto be = indexed_fixture(false);
  CHECK(le != be);
  CHECK(read_nifti_header(be).little_endian == false);
  CHECK(read_volume(le) == read_volume(be));
}

TEST_CASE("volume and mask roundtrips are exact") {
  Volume v({7, 5, 3}, {0.1172, 0.1172, 1.0});
  std::mt19937 rng(5);
  std::normal_distribution<float> n(0.0f, 100.0f);
  for (float& x : v.values) x = n(rng);
  v.values[4] = -0.0f;
  v.values[5] = std::numeric_limits<float>::denorm_min();
  const auto bytes = write_nifti(v);
  const Volume back = read_volume(bytes);
  CHECK(back.shape == v.shape);
  CHECK(std::memcmp(back.values.data(), v.values.data(), v.values.size() * 4) == 0);
  for (int d = 0; d < 3; ++d) CHECK(static_cast<float>(back.voxel_size[d]) == static_cast<float>(v.voxel_size[d]));

  Mask m({4, 6, 3}, {1, 1, 1});
  for (std::size_t i = 0; i < m.values.size(); ++i) m.values[i] = (i * 5) % 3 == 0;
  const Mask mback = read_mask(write_nifti(m));
  CHECK(mback == m);
}

TEST_CASE("written header constants") {
  const Volume v({4, 3, 2}, {0.5, 0.5, 1.0}, 1.5f);
  const auto b = write_nifti(v);
  CHECK(b.size() == 352 + 24 * 4);
  CHECK(b[0] == 0x5c);
  CHECK(b[1] == 0x01);
  CHECK(b[2] == 0);
  CHECK(b[3] == 0);
  CHECK(read_le<std::int32_t>(b, 0) == 348);
  const std::int16_t dims[8] = {3, 4, 3, 2, 1, 1, 1, 1};
  for (int i = 0; i < 8; ++i) CHECK(read_le<std::int16_t>(b, 40 + 2 * i) == dims[i]);
  CHECK(read_le<std::int16_t>(b, 70) == 16);
  CHECK(read_le<std::int16_t>(b, 72) == 32);
  CHECK(read_le<float>(b, 80) == 0.5f);
  CHECK(read_le<float>(b, 88) == 1.0f);
  CHECK(read_le<float>(b, 108) == 352.0f);
  CHECK(read_le<float>(b, 112) == 1.0f);
  CHECK(read_le<float>(b, 116) == 0.0f);
  CHECK(std::memcmp(b.data() + 344, "n+1\0", 4) == 0);
  for (std::size_t i = 348; i < 352; ++i) CHECK(b[i] == 0);

  const Mask m({4, 3, 2}, {1, 1, 1});
  const auto mb = write_nifti(m);
  CHECK(mb.size() == 352 + 24);
  CHECK(read_le<std::int16_t>(mb, 70) == 2);
  CHECK(read_le<std::int16_t>(mb, 72) == 8);
}

TEST_CASE("256x256x18 header fixture") {
  Fixture f({3, 256, 256, 18, 1, 1, 1, 1}, nifti::kFloat32, 32);
  f.put<float>(80, 0.1172f);
  f.put<float>(84, 0.1172f);
  f.put<float>(88, 1.0f);
  f.bytes().resize(352 + 256 * 256 * 18 * 4, 0);
  const NiftiHeader h = read_nifti_header(f.bytes());
  CHECK(h.dim[1] == 256);
  CHECK(h.dim[3] == 18);
  const Volume v = read_volume(f.bytes());
  CHECK(v.shape == Extent3{256, 256, 18});
  CHECK(static_cast<float>(v.voxel_size[0]) == 0.1172f);
  CHECK(v.voxel_size[2] == 1.0);
}

TEST_CASE("int16 with slope and intercept") {
  Fixture f({3, 1, 1, 1, 1, 1, 1, 1}, nifti::kInt16, 16);
  f.put<float>(112, 2.0f);
  f.put<float>(116, 1.0f);
  f.append<std::int16_t>(3);
  CHECK(read_volume(f.bytes()).values[0] == 7.0f);

  // slope 0 means unscaled
  f.put<float>(112, 0.0f);
  CHECK(read_volume(f.bytes()).values[0] == 3.0f);
}

TEST_CASE("other supported datatypes") {
  Fixture u8({3, 2, 1, 1, 1, 1, 1, 1}, nifti::kUInt8, 8);
  u8.append<std::uint8_t>(1);
  u8.append<std::uint8_t>(250);
  CHECK(read_volume(u8.bytes()).values == std::vector<float>{1, 250});

  Fixture i32({3, 1, 1, 2, 1, 1, 1, 1}, nifti::kInt32, 32, false);
  i32.append<std::int32_t>(-5);
  i32.append<std::int32_t>(70000);
  CHECK(read_volume(i32.bytes()).values == std::vector<float>{-5, 70000});

  Fixture f64({3, 1, 1, 1, 1, 1, 1, 1}, nifti::kFloat64, 64);
  f64.append<double>(0.125);
  CHECK(read_volume(f64.bytes()).values[0] == 0.125f);

  // dim[0] below 3 with trailing unit extents
  Fixture two_d({2, 2, 2, 1, 1, 1, 1, 1}, nifti::kUInt8, 8);
  for (int i = 0; i < 4; ++i) two_d.append<std::uint8_t>(static_cast<std::uint8_t>(i));
  CHECK(read_volume(two_d.bytes()).shape == Extent3{2, 2, 1});
}

TEST_CASE("malformed files are rejected") {
  auto make = [] {
    Fixture f({3, 2, 2, 2, 1, 1, 1, 1}, nifti::kFloat32, 32);
    for (int i = 0; i < 8; ++i) f.append<float>(1.0f);
    return f;
  };
  {
    Fixture f = make();
    std::memcpy(f.bytes().data() + 344, "ni1\0", 4);
    CHECK_THROWS_AS(read_volume(f.bytes()), FormatError);
  }
  {
    Fixture f = make();
    f.put<std::int32_t>(0, 540);
    CHECK_THROWS_AS(read_volume(f.bytes()), FormatError);
  }
  {
    Fixture f = make();
    f.bytes().resize(200);
    CHECK_THROWS_AS(read_volume(f.bytes()), LengthError);
  }
  {
    Fixture f = make();
    f.bytes().resize(f.bytes().size() - 1);
    CHECK_THROWS_AS(read_volume(f.bytes()), LengthError);
  }
  {
    Fixture f = make();
    f.put<std::int16_t>(40, 4);
    f.put<std::int16_t>(48, 3);
    CHECK_THROWS_AS(read_volume(f.bytes()), UnsupportedError);
  }
  {
    Fixture f = make();
    f.put<std::int16_t>(40, 9);
    CHECK_THROWS_AS(read_volume(f.bytes()), FormatError);
  }
  {
    Fixture f = make();
    f.put<std::int16_t>(70, 32);  // complex64
    CHECK_THROWS_AS(read_volume(f.bytes()), UnsupportedError);
  }
  {
    Fixture f = make();
    f.put<std::int16_t>(72, 16);
    CHECK_THROWS_AS(read_volume(f.bytes()), FormatError);
  }
  {
    Fixture f = make();
    f.put<float>(108, 200.0f);
    CHECK_THROWS_AS(read_volume(f.bytes()), FormatError);
  }
  {
    Fixture f = make();
    f.put<float>(352, std::numeric_limits<float>::quiet_NaN());
    CHECK_THROWS_AS(read_volume(f.bytes()), FormatError);
  }
}

TEST_CASE("masks must be binary") {
  Fixture f({3, 2, 1, 1, 1, 1, 1, 1}, nifti::kUInt8, 8);
  f.append<std::uint8_t>(0);
  f.append<std::uint8_t>(2);
  CHECK_THROWS_AS(read_mask(f.bytes()), LabelError);
}

TEST_CASE("file helpers report the path") {
  testing_support::TempDir dir("nifti");
  const Volume v({2, 2, 2}, {1, 1, 1}, 3.0f);
  save_nifti(v, dir / "v.nii");
  CHECK(load_volume(dir / "v.nii") == v);
  CHECK_THROWS_AS(load_mask(dir / "v.nii"), FormatError);
  try {
    load_volume(dir / "missing.nii");
    FAIL("expected an error");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("missing.nii") != std::string::npos);
  }
}
