#include "lsdhm/harness/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lsdhm/error.hpp"
#include "lsdhm/random.hpp"

namespace lsdhm::harness {

namespace {

// Features of the images whose label is a or b, relabelled 0 / 1.
void select_pair(const std::vector<std::vector<double>>& features, const std::vector<int>& labels,
                 int a, int b, std::vector<std::vector<double>>& out_x, std::vector<int>& out_y) {
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != a && labels[i] != b) continue;
    out_x.push_back(features[i]);
    out_y.push_back(labels[i] == a ? 0 : 1);
  }
}

bool intersects(const Rect& a, const Rect& b) {
  return a.h0 < b.h1 && b.h0 < a.h1 && a.w0 < b.w1 && b.w0 < a.w1;
}

}  // namespace

std::vector<PairRow> experiment_pairs(const RunConfig& cfg, const PipelineState& st) {
  if (st.data.ambiguous_pairs.empty()) throw ConfigError("no ambiguous pairs configured");
  std::vector<PairRow> rows;
  for (auto [a, b] : st.data.ambiguous_pairs) {
    PairRow row{a, b};
    for (auto [name, slot] : {std::pair{"fc", &row.error_fc}, std::pair{"fcv", &row.error_conv},
                              std::pair{"fused", &row.error_both}}) {
      std::vector<std::vector<double>> xtr, xte;
      std::vector<int> ytr, yte;
      select_pair(st.train_features.at(name), st.train.labels, a, b, xtr, ytr);
      select_pair(st.test_features.at(name), st.test.labels, a, b, xte, yte);
      if (xtr.empty() || xte.empty())
        throw DataError("pair " + std::to_string(a) + "/" + std::to_string(b) +
                        " has no train or test images");
      const SvmModel m = train_classifier(cfg, xtr, ytr, 2, cfg.svm_c);
      *slot = 100.0 * (1.0 - accuracy(m, xte, yte));
    }
    rows.push_back(row);
  }
  return rows;
}

CsvTable pairs_table(const std::vector<PairRow>& rows) {
  CsvTable t{{"class_a", "class_b", "error_fc", "error_conv", "error_both"}, {}};
  for (const auto& r : rows)
    t.rows.push_back({std::to_string(r.class_a), std::to_string(r.class_b),
                      percent(r.error_fc / 100.0), percent(r.error_conv / 100.0),
                      percent(r.error_both / 100.0)});
  return t;
}

std::vector<OcclusionRow> experiment_occlusion(const nn::ConvNet& net, std::size_t layer,
                                               const Tensor3& image, const std::vector<Rect>& rects,
                                               const std::vector<std::string>& kinds) {
  if (!kinds.empty() && kinds.size() != rects.size())
    throw ConfigError("one kind label per rectangle expected");
  const std::span<const double> px = image.data();
  const double fill = std::accumulate(px.begin(), px.end(), 0.0) / static_cast<double>(px.size());
  const Tensor3 before = net.extract_conv(image, layer);
  std::vector<OcclusionRow> out;
  for (std::size_t r = 0; r < rects.size(); ++r) {
    const Tensor3 after = net.extract_conv(occlude(image, rects[r], fill), layer);
    OcclusionRow row;
    row.kind = kinds.empty() ? "rect" : kinds[r];
    row.rect = rects[r];
    row.map_l2.assign(before.channels(), 0.0);
    for (std::size_t h = 0; h < before.height(); ++h)
      for (std::size_t w = 0; w < before.width(); ++w)
        for (std::size_t d = 0; d < before.channels(); ++d) {
          const double diff = after(h, w, d) - before(h, w, d);
          row.map_l2[d] += diff * diff;
        }
    for (double& v : row.map_l2) v = std::sqrt(v);
    row.mean_l2 = std::accumulate(row.map_l2.begin(), row.map_l2.end(), 0.0) /
                  static_cast<double>(row.map_l2.size());
    out.push_back(std::move(row));
  }
  return out;
}

std::vector<Rect> background_rects(std::size_t image_h, std::size_t image_w, std::size_t h,
                                   std::size_t w, const std::vector<Rect>& avoid, std::size_t count,
                                   std::uint64_t seed) {
  if (h > image_h || w > image_w) throw ConfigError("background rectangle larger than the image");
  std::vector<Rect> candidates;
  for (std::size_t y = 0; y + h <= image_h; ++y)
    for (std::size_t x = 0; x + w <= image_w; ++x) {
      const Rect r{y, x, y + h, x + w};
      if (std::none_of(avoid.begin(), avoid.end(), [&](const Rect& a) { return intersects(a, r); }))
        candidates.push_back(r);
    }
  Rng rng(seed);
  rng.shuffle(candidates.begin(), candidates.end());
  if (candidates.size() > count) candidates.resize(count);
  return candidates;
}

OcclusionStudy occlusion_study(const RunConfig& cfg, const nn::ConvNet& net, const Dataset& data,
                               std::size_t images) {
  if (data.test_boxes.empty()) throw ConfigError("occlusion study needs generated scenes");
  OcclusionStudy s;
  std::size_t larger = 0;
  for (std::size_t i = 0; i < data.test.size() && s.images.size() < images; ++i) {
    const auto& boxes = data.test_boxes[i];
    if (boxes.empty()) continue;
    const Tensor3& img = data.test[i].image;
    const Rect& g = boxes.front();
    const auto bg = background_rects(img.height(), img.width(), g.h1 - g.h0, g.w1 - g.w0, boxes,
                                     boxes.size(), derive_seed(cfg.stage_seed("data"), 100 + i));
    if (bg.empty()) continue;
    std::vector<Rect> rects = boxes;
    std::vector<std::string> kinds(boxes.size(), "glyph");
    rects.insert(rects.end(), bg.begin(), bg.end());
    kinds.insert(kinds.end(), bg.size(), "background");
    auto rows = experiment_occlusion(net, cfg.extract_layer, img, rects, kinds);
    double gsum = 0.0, bsum = 0.0;
    for (const auto& r : rows) (r.kind == "glyph" ? gsum : bsum) += r.mean_l2;
    const double gm = gsum / static_cast<double>(boxes.size());
    const double bm = bsum / static_cast<double>(bg.size());
    s.images.push_back(i);
    s.glyph_mean.push_back(gm);
    s.background_mean.push_back(bm);
    if (gm > bm) ++larger;
    for (auto& r : rows) {
      s.rows.push_back(std::move(r));
      s.row_image.push_back(i);
    }
  }
  if (s.images.empty()) throw DataError("no test image contains glyphs");
  s.fraction_glyph_larger = static_cast<double>(larger) / static_cast<double>(s.images.size());
  return s;
}

CsvTable occlusion_table(const OcclusionStudy& s) {
  CsvTable t{{"image", "kind", "h0", "w0", "h1", "w1", "mean_map_l2"}, {}};
  for (std::size_t i = 0; i < s.rows.size(); ++i) {
    const auto& r = s.rows[i];
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.6f", r.mean_l2);
    t.rows.push_back({std::to_string(s.row_image[i]), r.kind, std::to_string(r.rect.h0),
                      std::to_string(r.rect.w0), std::to_string(r.rect.h1),
                      std::to_string(r.rect.w1), buf});
  }
  return t;
}

std::vector<std::size_t> top_q(const std::vector<double>& values, std::size_t q) {
  std::vector<std::size_t> idx(values.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] > values[b]; });
  idx.resize(std::min(q, idx.size()));
  return idx;
}

ActivationStats activation_stats(const std::vector<double>& fc_mean,
                                 const std::vector<double>& conv_mean,
                                 const std::vector<int>& labels, int num_classes, std::size_t q) {
  if (fc_mean.size() != labels.size() || conv_mean.size() != labels.size())
    throw ShapeError("one activation value per image expected");
  ActivationStats s;
  s.q = std::min(q, labels.size());
  s.fc_top = top_q(fc_mean, s.q);
  s.conv_top = top_q(conv_mean, s.q);
  s.fc_histogram.assign(static_cast<std::size_t>(num_classes), 0);
  s.conv_histogram.assign(static_cast<std::size_t>(num_classes), 0);
  for (auto i : s.fc_top) ++s.fc_histogram.at(static_cast<std::size_t>(labels[i]));
  for (auto i : s.conv_top) ++s.conv_histogram.at(static_cast<std::size_t>(labels[i]));
  double tv = 0.0;
  for (std::size_t k = 0; k < s.fc_histogram.size(); ++k)
    tv += std::abs(static_cast<double>(s.fc_histogram[k]) - static_cast<double>(s.conv_histogram[k]));
  s.total_variation = s.q ? 0.5 * tv / static_cast<double>(s.q) : 0.0;
  return s;
}

ActivationStats experiment_activation_stats(const RunConfig& cfg, const nn::ConvNet& net,
                                            const Dataset& data) {
  std::vector<double> fc_mean, conv_mean;
  std::vector<int> labels;
  for (const LabeledDataset* ds : {&data.train, &data.test})
    for (const auto& item : ds->items()) {
      const auto fw = net.forward(item.image, false);
      const auto& fc = fw.fc_features;
      const auto maps = fw.maps.at(cfg.extract_layer).data();
      fc_mean.push_back(std::accumulate(fc.begin(), fc.end(), 0.0) / static_cast<double>(fc.size()));
      conv_mean.push_back(std::accumulate(maps.begin(), maps.end(), 0.0) /
                          static_cast<double>(maps.size()));
      labels.push_back(item.label);
    }
  const double n = static_cast<double>(labels.size());
  const auto q = static_cast<std::size_t>(std::max(1.0, std::round(cfg.stats_top_fraction * n)));
  return activation_stats(fc_mean, conv_mean, labels, data.train.num_classes(), q);
}

CsvTable activation_table(const ActivationStats& s) {
  CsvTable t{{"source", "class", "count"}, {}};
  for (std::size_t k = 0; k < s.fc_histogram.size(); ++k)
    t.rows.push_back({"fc", std::to_string(k), std::to_string(s.fc_histogram[k])});
  for (std::size_t k = 0; k < s.conv_histogram.size(); ++k)
    t.rows.push_back({"conv", std::to_string(k), std::to_string(s.conv_histogram[k])});
  return t;
}

}  // namespace lsdhm::harness
