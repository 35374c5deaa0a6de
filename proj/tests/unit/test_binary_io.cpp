#include <doctest.h>

#include <filesystem>

#include "lsdhm/binary_io.hpp"
#include "lsdhm/error.hpp"
#include "oracles.hpp"

using namespace lsdhm;

TEST_CASE("FVT1 byte layout") {
  const auto bytes = encode_fvt1(Tensor3(1, 2, 1, {1.0, -2.0}));
  const std::vector<std::uint8_t> expected = {'F', 'V', 'T', '1', 1, 0, 0, 0, 2,    0,    0,    0,
                                              1,   0,   0,   0,   0, 0, 0x80, 0x3f, 0, 0, 0, 0xc0};
  CHECK(bytes == expected);
}

TEST_CASE("FVT1 round trip stores float32") {
  oracle::Gen gen(3);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor3 t = gen.tensor(gen.index(1, 5), gen.index(1, 5), gen.index(1, 5), -100, 100);
    const Tensor3 back = decode_fvt1(encode_fvt1(t));
    REQUIRE(back.same_shape(t));
    for (std::size_t i = 0; i < t.size(); ++i)
      CHECK(back.data()[i] == static_cast<double>(static_cast<float>(t.data()[i])));
    // float-representable values come back bitwise
    CHECK(decode_fvt1(encode_fvt1(back)) == back);
  }
}

TEST_CASE("FVT1 rejects malformed input") {
  auto bytes = encode_fvt1(Tensor3(2, 2, 2, 0.5));
  SUBCASE("bad magic") {
    bytes[0] = 'X';
    CHECK_THROWS_AS(decode_fvt1(bytes), DataError);
  }
  SUBCASE("truncated") {
    bytes.pop_back();
    CHECK_THROWS_AS(decode_fvt1(bytes), DataError);
  }
  SUBCASE("trailing bytes") {
    bytes.push_back(0);
    CHECK_THROWS_AS(decode_fvt1(bytes), DataError);
  }
  SUBCASE("zero dimension") {
    bytes[4] = 0;
    CHECK_THROWS_AS(decode_fvt1(bytes), DataError);
  }
}

TEST_CASE("FVT1 files and vectors") {
  const auto dir = std::filesystem::temp_directory_path() / "lsdhm_test_fvt1";
  std::filesystem::create_directories(dir);
  const std::vector<double> v = {0.25, -1.5, 3.0};
  save_vector_fvt1(dir / "v.fvt", v);
  CHECK(load_vector_fvt1(dir / "v.fvt") == v);
  CHECK_THROWS_AS(load_fvt1(dir / "missing.fvt"), DataError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("byte reader bounds") {
  ByteWriter w;
  w.u32(7);
  w.f64(2.5);
  ByteReader r(w.buffer());
  CHECK(r.u32() == 7);
  CHECK(r.f64() == 2.5);
  CHECK(r.at_end());
  CHECK_THROWS_AS(r.u32(), DataError);
}
