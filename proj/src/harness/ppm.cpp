#include "lsdhm/harness/ppm.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include "lsdhm/binary_io.hpp"
#include "lsdhm/error.hpp"

namespace lsdhm::harness {

namespace {

// Reads one whitespace-delimited header token, skipping '#' comments.
std::string header_token(std::span<const std::uint8_t> b, std::size_t& pos) {
  while (pos < b.size()) {
    if (b[pos] == '#') {
      while (pos < b.size() && b[pos] != '\n') ++pos;
    } else if (std::isspace(b[pos])) {
      ++pos;
    } else {
      break;
    }
  }
  std::string tok;
  while (pos < b.size() && !std::isspace(b[pos]) && b[pos] != '#') tok.push_back(static_cast<char>(b[pos++]));
  if (tok.empty()) throw DataError("truncated PPM header");
  return tok;
}

std::size_t header_number(std::span<const std::uint8_t> b, std::size_t& pos) {
  const std::string tok = header_token(b, pos);
  if (!std::all_of(tok.begin(), tok.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); }))
    throw DataError("malformed PPM header field '" + tok + "'");
  return std::stoul(tok);
}

}  // namespace

Tensor3 decode_ppm(std::span<const std::uint8_t> bytes) {
  std::size_t pos = 0;
  if (header_token(bytes, pos) != "P6") throw DataError("not a binary PPM (P6) file");
  const std::size_t width = header_number(bytes, pos);
  const std::size_t height = header_number(bytes, pos);
  const std::size_t maxval = header_number(bytes, pos);
  if (width == 0 || height == 0) throw DataError("PPM with zero size");
  if (maxval == 0 || maxval > 255) throw DataError("only 8-bit PPM files are supported");
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw DataError("truncated PPM header");
  ++pos;
  const std::size_t n = width * height * 3;
  if (bytes.size() - pos < n) throw DataError("PPM pixel data is truncated");
  std::vector<double> data(n);
  for (std::size_t i = 0; i < n; ++i)
    data[i] = static_cast<double>(bytes[pos + i]) / static_cast<double>(maxval);
  return Tensor3(height, width, 3, std::move(data));
}

Tensor3 read_ppm(const std::filesystem::path& path) {
  try {
    return decode_ppm(read_file_bytes(path));
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

std::vector<std::uint8_t> encode_ppm(const Tensor3& image) {
  if (image.channels() != 3) throw ShapeError("PPM output needs three channels");
  const std::string header =
      "P6\n" + std::to_string(image.width()) + " " + std::to_string(image.height()) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.reserve(out.size() + image.size());
  for (double v : image.data())
    out.push_back(static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)));
  return out;
}

void write_ppm(const std::filesystem::path& path, const Tensor3& image) {
  write_file_bytes(path, encode_ppm(image));
}

std::vector<ManifestEntry> parse_manifest(const std::string& text) {
  std::vector<ManifestEntry> out;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw DataError("manifest line " + std::to_string(lineno) + ": expected filename<TAB>label");
    ManifestEntry e;
    e.filename = line.substr(0, tab);
    const std::string label = line.substr(tab + 1);
    try {
      std::size_t used = 0;
      e.label = std::stoi(label, &used);
      if (used != label.size()) throw std::invalid_argument(label);
    } catch (const std::exception&) {
      throw DataError(e.filename + ": unknown label '" + label + "'");
    }
    out.push_back(std::move(e));
  }
  return out;
}

std::string format_manifest(const std::vector<ManifestEntry>& entries) {
  std::string out;
  for (const auto& e : entries) out += e.filename + "\t" + std::to_string(e.label) + "\n";
  return out;
}

LabeledDataset ingest_images(const std::filesystem::path& dir, const std::filesystem::path& manifest,
                             int num_classes) {
  std::ifstream in(manifest);
  if (!in) throw DataError("cannot read manifest " + manifest.string());
  std::stringstream ss;
  ss << in.rdbuf();
  const auto entries = parse_manifest(ss.str());
  if (entries.empty()) throw DataError("manifest " + manifest.string() + " lists no images");
  LabeledDataset ds(num_classes);
  for (const auto& e : entries) {
    if (e.label < 0 || e.label >= num_classes)
      throw DataError(e.filename + ": unknown label " + std::to_string(e.label));
    const auto path = dir / e.filename;
    if (!std::filesystem::exists(path)) throw DataError(path.string() + ": file not found");
    Tensor3 img = read_ppm(path);
    if (!ds.empty() && !ds[0].image.same_shape(img))
      throw DataError(path.string() + ": image size differs from the rest of the dataset");
    ds.add(std::move(img), e.label);
  }
  return ds;
}

}  // namespace lsdhm::harness
