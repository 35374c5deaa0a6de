#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lsdhm/convnet.hpp"
#include "lsdhm/harness/config.hpp"
#include "lsdhm/harness/pipeline.hpp"
#include "lsdhm/harness/results.hpp"

namespace lsdhm::harness {

// ---- ambiguous pairs ------------------------------------------------------

// Test error in percent of binary classifiers on one pair of classes.
struct PairRow {
  int class_a = 0, class_b = 0;
  double error_fc = 0.0, error_conv = 0.0, error_both = 0.0;
};

// Uses the "fc", "fcv" and "fused" features already encoded in `st`. Throws
// ConfigError when the dataset has no ambiguous pairs.
std::vector<PairRow> experiment_pairs(const RunConfig& cfg, const PipelineState& st);
CsvTable pairs_table(const std::vector<PairRow>& rows);

// ---- occlusion ------------------------------------------------------------

struct OcclusionRow {
  std::string kind;  // caller supplied label, e.g. "glyph" or "background"
  Rect rect;
  std::vector<double> map_l2;  // l2 difference per channel of the extracted maps
  double mean_l2 = 0.0;        // mean of map_l2
};

// Occludes each rectangle with the image's mean value and compares the maps
// of `layer` before and after. Throws ConfigError for rectangles outside the
// image.
std::vector<OcclusionRow> experiment_occlusion(const nn::ConvNet& net, std::size_t layer,
                                               const Tensor3& image, const std::vector<Rect>& rects,
                                               const std::vector<std::string>& kinds = {});

// Up to `count` rectangles of size h x w that do not intersect any of `avoid`,
// at seeded random positions.
std::vector<Rect> background_rects(std::size_t image_h, std::size_t image_w, std::size_t h,
                                   std::size_t w, const std::vector<Rect>& avoid, std::size_t count,
                                   std::uint64_t seed);

struct OcclusionStudy {
  std::vector<std::size_t> images;  // test image indices used
  std::vector<double> glyph_mean, background_mean;
  std::vector<OcclusionRow> rows;
  std::vector<std::size_t> row_image;  // image index of every row
  double fraction_glyph_larger = 0.0;
};

// Glyph boxes against the same number of equal-area background rectangles on
// the first `images` test images that contain glyphs.
OcclusionStudy occlusion_study(const RunConfig& cfg, const nn::ConvNet& net, const Dataset& data,
                               std::size_t images);
CsvTable occlusion_table(const OcclusionStudy& s);

// ---- activation statistics ------------------------------------------------

// Indices of the q largest values. Equal values keep ascending index order.
std::vector<std::size_t> top_q(const std::vector<double>& values, std::size_t q);

struct ActivationStats {
  std::size_t q = 0;
  std::vector<std::size_t> fc_top, conv_top;
  std::vector<std::size_t> fc_histogram, conv_histogram;  // per class counts, each sums to q
  double total_variation = 0.0;
};

ActivationStats activation_stats(const std::vector<double>& fc_mean,
                                 const std::vector<double>& conv_mean,
                                 const std::vector<int>& labels, int num_classes,
                                 std::size_t q);

// Mean FC and conv-layer activation per image over train then test images;
// q = max(1, round(stats.top_fraction * N)).
ActivationStats experiment_activation_stats(const RunConfig& cfg, const nn::ConvNet& net,
                                            const Dataset& data);
CsvTable activation_table(const ActivationStats& s);

}  // namespace lsdhm::harness
