#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lsdhm/tensor.hpp"

namespace lsdhm {

// Appends little-endian encoded values to a byte buffer.
class ByteWriter {
 public:
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f32(float v);
  void f64(double v);
  void f64s(std::span<const double> v);
  void tag(std::string_view four_chars);
  void bytes(std::span<const std::uint8_t> b);

  const std::vector<std::uint8_t>& buffer() const { return buf_; }
  std::vector<std::uint8_t> take() { return std::move(buf_); }

 private:
  std::vector<std::uint8_t> buf_;
};

// Reads little-endian values; every read is bounds checked (DataError).
class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> data) : data_(data) {}

  std::uint32_t u32();
  std::uint64_t u64();
  float f32();
  double f64();
  std::vector<double> f64s(std::size_t n);
  std::string tag();
  std::span<const std::uint8_t> bytes(std::size_t n);

  std::size_t remaining() const { return data_.size() - pos_; }
  bool at_end() const { return pos_ == data_.size(); }

 private:
  void need(std::size_t n) const;

  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

// "FVT1" tensor files: magic, u32 H, W, D, then H*W*D float32, all little endian.
std::vector<std::uint8_t> encode_fvt1(const Tensor3& t);
Tensor3 decode_fvt1(std::span<const std::uint8_t> bytes);
void save_fvt1(const std::filesystem::path& path, const Tensor3& t);
Tensor3 load_fvt1(const std::filesystem::path& path);

// A vector stored as a 1 x 1 x n tensor.
void save_vector_fvt1(const std::filesystem::path& path, std::span<const double> v);
std::vector<double> load_vector_fvt1(const std::filesystem::path& path);

}  // namespace lsdhm
