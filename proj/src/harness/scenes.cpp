#include "lsdhm/harness/scenes.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "lsdhm/error.hpp"
#include "lsdhm/random.hpp"

namespace lsdhm::harness {

namespace {

Glyph make_glyph(std::array<std::uint8_t, 7> rows, Color color) { return Glyph{rows, color}; }

LayoutTemplate make_layout(Rng& rng, double angle, Color from, Color to) {
  LayoutTemplate t;
  t.angle = angle;
  t.from = from;
  t.to = to;
  t.grid = 4;
  t.region_tint.resize(t.grid * t.grid);
  for (auto& c : t.region_tint)
    for (auto& v : c) v = rng.uniform(-0.12, 0.12);
  return t;
}

}  // namespace

MicroSceneSpec MicroSceneSpec::default_spec(std::uint64_t seed, double noise) {
  MicroSceneSpec s;
  s.seed = seed;
  s.noise = noise;
  Rng rng(derive_seed(seed, 77));

  const Color red{0.9, 0.15, 0.1}, blue{0.1, 0.25, 0.9}, yellow{0.95, 0.85, 0.1},
      green{0.1, 0.75, 0.2}, white{0.97, 0.97, 0.97}, dark{0.08, 0.08, 0.1};
  // Shapes come in look-alike couples; ambiguous classes use different
  // members of a couple in the same colors.
  const std::array<std::uint8_t, 7> cross{0b10001, 0b01010, 0b00100, 0b00100, 0b00100, 0b01010, 0b10001};
  const std::array<std::uint8_t, 7> plus{0b00100, 0b00100, 0b00100, 0b11111, 0b00100, 0b00100, 0b00100};
  const std::array<std::uint8_t, 7> ring{0b01110, 0b10001, 0b10001, 0b10001, 0b10001, 0b10001, 0b01110};
  const std::array<std::uint8_t, 7> box{0b11111, 0b10001, 0b10001, 0b10001, 0b10001, 0b10001, 0b11111};
  const std::array<std::uint8_t, 7> tee{0b11111, 0b00100, 0b00100, 0b00100, 0b00100, 0b00100, 0b00100};
  const std::array<std::uint8_t, 7> ell{0b10000, 0b10000, 0b10000, 0b10000, 0b10000, 0b10000, 0b11111};
  const std::array<std::uint8_t, 7> bar{0b01110, 0b01110, 0b01110, 0b01110, 0b01110, 0b01110, 0b01110};
  const std::array<std::uint8_t, 7> dots{0b10101, 0b00000, 0b10101, 0b00000, 0b10101, 0b00000, 0b10101};

  s.glyphs = {
      make_glyph(cross, red),    make_glyph(ring, blue),    // 0,1  pair 0 class a
      make_glyph(plus, red),     make_glyph(box, blue),     // 2,3  pair 0 class b
      make_glyph(tee, yellow),   make_glyph(dots, white),   // 4,5  pair 1 class a
      make_glyph(ell, yellow),   make_glyph(bar, white),    // 6,7  pair 1 class b
      make_glyph(ring, green),   make_glyph(cross, dark),   // 8,9  pair 2 class a
      make_glyph(box, green),    make_glyph(plus, dark),    // 10,11 pair 2 class b
      make_glyph(bar, red),      make_glyph(tee, blue),     // 12,13 singletons
      make_glyph(dots, yellow),  make_glyph(ell, green),    // 14,15
  };

  s.layouts.push_back(make_layout(rng, 0.0, {0.55, 0.45, 0.35}, {0.25, 0.2, 0.15}));
  s.layouts.push_back(make_layout(rng, 1.5708, {0.35, 0.5, 0.65}, {0.7, 0.75, 0.8}));
  s.layouts.push_back(make_layout(rng, 0.7854, {0.3, 0.4, 0.3}, {0.6, 0.55, 0.4}));
  s.layouts.push_back(make_layout(rng, 3.1416, {0.5, 0.3, 0.4}, {0.2, 0.3, 0.5}));
  s.layouts.push_back(make_layout(rng, -1.5708, {0.45, 0.45, 0.45}, {0.75, 0.65, 0.55}));
  s.layouts.push_back(make_layout(rng, 2.3562, {0.2, 0.45, 0.45}, {0.55, 0.35, 0.25}));
  s.layouts.push_back(make_layout(rng, -0.7854, {0.6, 0.6, 0.35}, {0.3, 0.35, 0.45}));

  s.classes = {
      {0, {0, 1}},  {0, {2, 3}},  {1, {4, 5}},  {1, {6, 7}},  {2, {8, 9}},
      {2, {10, 11}}, {3, {12, 13}}, {4, {14, 15}}, {5, {0, 7}}, {6, {9, 12}},
  };
  s.ambiguous_pairs = {{0, 1}, {2, 3}, {4, 5}};
  return s;
}

void validate(const MicroSceneSpec& spec) {
  if (spec.classes.empty()) throw ConfigError("scene spec has no classes");
  if (spec.height < Glyph::kHeight || spec.width < Glyph::kWidth)
    throw ConfigError("scene images are smaller than a glyph");
  if (spec.glyphs_min > spec.glyphs_max) throw ConfigError("glyphs_min exceeds glyphs_max");
  if (!(spec.noise >= 0.0)) throw ConfigError("noise must be non-negative");
  for (const auto& c : spec.classes) {
    if (c.layout >= spec.layouts.size()) throw ConfigError("class references a missing layout");
    for (auto g : c.glyphs)
      if (g >= spec.glyphs.size()) throw ConfigError("class references a missing glyph");
    if (c.glyphs.empty() && spec.glyphs_max > 0)
      throw ConfigError("class without glyphs but glyphs_max > 0");
  }
  for (const auto& l : spec.layouts)
    if (l.grid == 0 || l.region_tint.size() != l.grid * l.grid)
      throw ConfigError("layout region grid is inconsistent");
  for (auto [a, b] : spec.ambiguous_pairs) {
    if (a < 0 || b < 0 || a >= spec.num_classes() || b >= spec.num_classes() || a == b)
      throw ConfigError("ambiguous pair references an invalid class");
    if (spec.classes[static_cast<std::size_t>(a)].layout !=
        spec.classes[static_cast<std::size_t>(b)].layout)
      throw ConfigError("ambiguous pair " + std::to_string(a) + "/" + std::to_string(b) +
                        " does not share a layout");
  }
}

SceneImage render_scene(const MicroSceneSpec& spec, int label, std::uint64_t seed) {
  const auto& cls = spec.classes.at(static_cast<std::size_t>(label));
  const auto& layout = spec.layouts[cls.layout];
  Rng rng(seed);
  SceneImage out;
  out.label = label;
  out.image = Tensor3(spec.height, spec.width, 3);

  const double angle = layout.angle + (spec.layout_jitter > 0.0
                                           ? rng.uniform(-spec.layout_jitter, spec.layout_jitter)
                                           : 0.0);
  const double ca = std::cos(angle), sa = std::sin(angle);
  const double hh = static_cast<double>(spec.height - 1), ww = static_cast<double>(spec.width - 1);
  for (std::size_t y = 0; y < spec.height; ++y)
    for (std::size_t x = 0; x < spec.width; ++x) {
      // position along the gradient direction, mapped to [0, 1]
      const double u = (static_cast<double>(x) / std::max(ww, 1.0) - 0.5) * ca +
                       (static_cast<double>(y) / std::max(hh, 1.0) - 0.5) * sa;
      const double t = std::clamp(u / 1.4142 + 0.5, 0.0, 1.0);
      const std::size_t gy = y * layout.grid / spec.height, gx = x * layout.grid / spec.width;
      const Color& tint = layout.region_tint[gy * layout.grid + gx];
      for (std::size_t ch = 0; ch < 3; ++ch)
        out.image(y, x, ch) = (1.0 - t) * layout.from[ch] + t * layout.to[ch] + tint[ch];
    }

  if (!cls.glyphs.empty() && spec.glyphs_max > 0) {
    const std::size_t count =
        spec.glyphs_min + rng.index(spec.glyphs_max - spec.glyphs_min + 1);
    for (std::size_t i = 0; i < count; ++i) {
      const Glyph& g = spec.glyphs[cls.glyphs[rng.index(cls.glyphs.size())]];
      const std::size_t y0 = rng.index(spec.height - Glyph::kHeight + 1);
      const std::size_t x0 = rng.index(spec.width - Glyph::kWidth + 1);
      for (std::size_t y = 0; y < Glyph::kHeight; ++y)
        for (std::size_t x = 0; x < Glyph::kWidth; ++x)
          if (g.on(y, x))
            for (std::size_t ch = 0; ch < 3; ++ch) out.image(y0 + y, x0 + x, ch) = g.color[ch];
      out.glyph_boxes.push_back({y0, x0, y0 + Glyph::kHeight, x0 + Glyph::kWidth});
    }
  }

  for (double& v : out.image.data()) {
    if (spec.noise > 0.0) v += spec.noise * rng.normal();
    v = std::clamp(v, 0.0, 1.0);
  }
  return out;
}

SceneSplit generate_dataset(const MicroSceneSpec& spec, std::size_t n_per_class) {
  validate(spec);
  if (n_per_class < 2) throw ConfigError("need at least two images per class");
  const std::size_t n_train = std::max<std::size_t>(1, n_per_class * 8 / 10);
  SceneSplit split{LabeledDataset(spec.num_classes()), LabeledDataset(spec.num_classes()), {}, {}};
  // Interleave classes so both splits are ordered image-major, class-minor.
  for (std::size_t i = 0; i < n_per_class; ++i)
    for (int c = 0; c < spec.num_classes(); ++c) {
      const std::uint64_t s =
          derive_seed(spec.seed, static_cast<std::uint64_t>(c) * 1000003ULL + i);
      SceneImage img = render_scene(spec, c, s);
      if (i < n_train) {
        split.train_boxes.push_back(std::move(img.glyph_boxes));
        split.train.add(std::move(img.image), c);
      } else {
        split.test_boxes.push_back(std::move(img.glyph_boxes));
        split.test.add(std::move(img.image), c);
      }
    }
  return split;
}

}  // namespace lsdhm::harness
