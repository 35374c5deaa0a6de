#pragma once

#include <array>
#include <cstdint>
#include <utility>
#include <vector>

#include "lsdhm/tensor.hpp"

namespace lsdhm::harness {

using Color = std::array<double, 3>;

// 5 wide x 7 tall bitmap; bit (4 - x) of row y is pixel (y, x).
struct Glyph {
  std::array<std::uint8_t, 7> rows{};
  Color color{};

  static constexpr std::size_t kWidth = 5;
  static constexpr std::size_t kHeight = 7;
  bool on(std::size_t y, std::size_t x) const { return (rows[y] >> (kWidth - 1 - x)) & 1u; }
};

// Global scene layout: a two-color gradient along `angle` (radians) plus a
// coarse grid of tinted regions.
struct LayoutTemplate {
  double angle = 0.0;
  Color from{}, to{};
  std::size_t grid = 4;
  std::vector<Color> region_tint;  // grid x grid
};

struct SceneClass {
  std::size_t layout = 0;
  std::vector<std::size_t> glyphs;  // indices into MicroSceneSpec::glyphs
};

struct MicroSceneSpec {
  std::size_t height = 32, width = 32;
  std::vector<LayoutTemplate> layouts;
  std::vector<Glyph> glyphs;
  std::vector<SceneClass> classes;
  std::vector<std::pair<int, int>> ambiguous_pairs;
  std::size_t glyphs_min = 2, glyphs_max = 4;
  double noise = 0.05;
  double layout_jitter = 0.15;  // radians of gradient-direction jitter per image
  std::uint64_t seed = 0;

  int num_classes() const { return static_cast<int>(classes.size()); }

  // Ten classes: three ambiguous pairs (shared layout, different glyph sets)
  // followed by four singleton classes with their own layouts.
  static MicroSceneSpec default_spec(std::uint64_t seed, double noise = 0.05);
};

// Throws ConfigError when classes reference missing layouts/glyphs, pairs are
// out of range or do not share a layout, or glyph counts are inconsistent.
void validate(const MicroSceneSpec& spec);

struct SceneImage {
  Tensor3 image;
  int label = 0;
  std::vector<Rect> glyph_boxes;
};

struct SceneSplit {
  LabeledDataset train, test;
  std::vector<std::vector<Rect>> train_boxes, test_boxes;
};

SceneImage render_scene(const MicroSceneSpec& spec, int label, std::uint64_t seed);

// n_per_class images per class; the first 80% of each class (rounded down, at
// least one) go to training, the rest to test. Throws ConfigError if
// n_per_class < 2.
SceneSplit generate_dataset(const MicroSceneSpec& spec, std::size_t n_per_class);

}  // namespace lsdhm::harness
