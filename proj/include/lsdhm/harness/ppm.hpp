#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lsdhm/tensor.hpp"

namespace lsdhm::harness {

// Binary PPM (P6) with maxval <= 255; values scaled to [0, 1].
Tensor3 decode_ppm(std::span<const std::uint8_t> bytes);
Tensor3 read_ppm(const std::filesystem::path& path);

// Values are clamped to [0, 1] and rounded to 8 bits.
std::vector<std::uint8_t> encode_ppm(const Tensor3& image);
void write_ppm(const std::filesystem::path& path, const Tensor3& image);

struct ManifestEntry {
  std::string filename;
  int label = 0;
};

// Lines of `filename<TAB>label`; blank lines are skipped.
std::vector<ManifestEntry> parse_manifest(const std::string& text);
std::string format_manifest(const std::vector<ManifestEntry>& entries);

// Loads every image listed in `manifest` (relative to `dir`). Throws DataError
// naming the offending file for unreadable files, dimension mismatches and
// labels outside [0, num_classes); an empty manifest is also an error.
LabeledDataset ingest_images(const std::filesystem::path& dir, const std::filesystem::path& manifest,
                             int num_classes);

}  // namespace lsdhm::harness
