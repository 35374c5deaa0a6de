#include "lsdhm/binary_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "lsdhm/error.hpp"

namespace lsdhm {

namespace {

template <typename U>
void put_le(std::vector<std::uint8_t>& buf, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i)
    buf.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

template <typename U>
U get_le(const std::uint8_t* p) {
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(p[i]) << (8 * i);
  return v;
}

}  // namespace

void ByteWriter::u32(std::uint32_t v) { put_le(buf_, v); }
void ByteWriter::u64(std::uint64_t v) { put_le(buf_, v); }
void ByteWriter::f32(float v) { put_le(buf_, std::bit_cast<std::uint32_t>(v)); }
void ByteWriter::f64(double v) { put_le(buf_, std::bit_cast<std::uint64_t>(v)); }

void ByteWriter::f64s(std::span<const double> v) {
  buf_.reserve(buf_.size() + 8 * v.size());
  for (double x : v) f64(x);
}

void ByteWriter::tag(std::string_view four_chars) {
  if (four_chars.size() != 4) throw DataError("tags are exactly four bytes");
  buf_.insert(buf_.end(), four_chars.begin(), four_chars.end());
}

void ByteWriter::bytes(std::span<const std::uint8_t> b) {
  buf_.insert(buf_.end(), b.begin(), b.end());
}

void ByteReader::need(std::size_t n) const {
  if (remaining() < n) throw DataError("unexpected end of binary data");
}

std::uint32_t ByteReader::u32() {
  need(4);
  auto v = get_le<std::uint32_t>(data_.data() + pos_);
  pos_ += 4;
  return v;
}

std::uint64_t ByteReader::u64() {
  need(8);
  auto v = get_le<std::uint64_t>(data_.data() + pos_);
  pos_ += 8;
  return v;
}

float ByteReader::f32() { return std::bit_cast<float>(u32()); }
double ByteReader::f64() { return std::bit_cast<double>(u64()); }

std::vector<double> ByteReader::f64s(std::size_t n) {
  if (n > remaining() / 8) throw DataError("unexpected end of binary data");
  std::vector<double> out(n);
  for (auto& x : out) x = f64();
  return out;
}

std::string ByteReader::tag() {
  auto b = bytes(4);
  return std::string(b.begin(), b.end());
}

std::span<const std::uint8_t> ByteReader::bytes(std::size_t n) {
  need(n);
  auto out = data_.subspan(pos_, n);
  pos_ += n;
  return out;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed for " + path.string());
}

std::vector<std::uint8_t> encode_fvt1(const Tensor3& t) {
  ByteWriter w;
  w.tag("FVT1");
  w.u32(static_cast<std::uint32_t>(t.height()));
  w.u32(static_cast<std::uint32_t>(t.width()));
  w.u32(static_cast<std::uint32_t>(t.channels()));
  for (double x : t.data()) w.f32(static_cast<float>(x));
  return w.take();
}

Tensor3 decode_fvt1(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  if (r.tag() != "FVT1") throw DataError("not an FVT1 tensor (bad magic)");
  const std::size_t h = r.u32(), w = r.u32(), d = r.u32();
  if (h == 0 || w == 0 || d == 0) throw DataError("FVT1 tensor with a zero dimension");
  const std::size_t n = h * w * d;
  if (r.remaining() != 4 * n) throw DataError("FVT1 payload length does not match header");
  std::vector<double> data(n);
  for (auto& x : data) x = static_cast<double>(r.f32());
  return Tensor3(h, w, d, std::move(data));
}

void save_fvt1(const std::filesystem::path& path, const Tensor3& t) {
  write_file_bytes(path, encode_fvt1(t));
}

Tensor3 load_fvt1(const std::filesystem::path& path) {
  try {
    return decode_fvt1(read_file_bytes(path));
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void save_vector_fvt1(const std::filesystem::path& path, std::span<const double> v) {
  save_fvt1(path, Tensor3(1, 1, v.size(), std::vector<double>(v.begin(), v.end())));
}

std::vector<double> load_vector_fvt1(const std::filesystem::path& path) {
  return load_fvt1(path).values();
}

}  // namespace lsdhm
