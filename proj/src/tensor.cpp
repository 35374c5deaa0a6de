#include "lsdhm/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "lsdhm/error.hpp"

namespace lsdhm {

Tensor3::Tensor3(std::size_t height, std::size_t width, std::size_t channels, double fill)
    : height_(height), width_(width), channels_(channels),
      data_(height * width * channels, fill) {
  if (height == 0 || width == 0 || channels == 0)
    throw ShapeError("Tensor3 dimensions must be positive");
}

Tensor3::Tensor3(std::size_t height, std::size_t width, std::size_t channels,
                 std::vector<double> data)
    : height_(height), width_(width), channels_(channels), data_(std::move(data)) {
  if (height == 0 || width == 0 || channels == 0)
    throw ShapeError("Tensor3 dimensions must be positive");
  if (data_.size() != height * width * channels)
    throw ShapeError("Tensor3 data length " + std::to_string(data_.size()) +
                     " does not match " + std::to_string(height) + "x" +
                     std::to_string(width) + "x" + std::to_string(channels));
}

DescriptorSet::DescriptorSet(std::size_t dim, std::vector<double> values)
    : dim_(dim), values_(std::move(values)) {
  if (dim_ == 0) throw ShapeError("descriptor dimension must be positive");
  if (values_.size() % dim_ != 0)
    throw ShapeError("descriptor buffer is not a multiple of the dimension");
}

void DescriptorSet::push_back(std::span<const double> descriptor) {
  if (dim_ == 0) dim_ = descriptor.size();
  if (descriptor.size() != dim_) throw ShapeError("descriptor dimension mismatch");
  values_.insert(values_.end(), descriptor.begin(), descriptor.end());
  positions_.clear();
}

void DescriptorSet::append(const DescriptorSet& other) {
  if (other.empty()) return;
  if (dim_ == 0) dim_ = other.dim_;
  if (other.dim_ != dim_) throw ShapeError("descriptor dimension mismatch");
  values_.insert(values_.end(), other.values_.begin(), other.values_.end());
  positions_.clear();
}

void DescriptorSet::set_positions(std::vector<std::pair<std::size_t, std::size_t>> p) {
  if (p.size() != count()) throw ShapeError("position count does not match descriptors");
  positions_ = std::move(p);
}

LabeledDataset::LabeledDataset(int num_classes) : num_classes_(num_classes) {
  if (num_classes <= 0) throw ConfigError("num_classes must be positive");
}

void LabeledDataset::add(Tensor3 image, int label) {
  if (label < 0 || label >= num_classes_)
    throw DataError("label " + std::to_string(label) + " outside [0, " +
                    std::to_string(num_classes_) + ")");
  if (!items_.empty() && !items_.front().image.same_shape(image))
    throw ShapeError("all images in a dataset must share H, W, D");
  items_.push_back({std::move(image), label});
}

std::vector<int> LabeledDataset::labels() const {
  std::vector<int> out;
  out.reserve(items_.size());
  for (const auto& it : items_) out.push_back(it.label);
  return out;
}

DescriptorSet channels_to_descriptors(const Tensor3& maps) {
  if (maps.empty()) throw ShapeError("cannot extract descriptors from empty maps");
  DescriptorSet out(maps.channels(), maps.values());
  std::vector<std::pair<std::size_t, std::size_t>> pos;
  pos.reserve(maps.height() * maps.width());
  for (std::size_t h = 0; h < maps.height(); ++h)
    for (std::size_t w = 0; w < maps.width(); ++w) pos.emplace_back(h, w);
  out.set_positions(std::move(pos));
  return out;
}

Tensor3 descriptors_to_channels(const DescriptorSet& descriptors, std::size_t height,
                                std::size_t width) {
  if (descriptors.count() != height * width)
    throw ShapeError("descriptor count does not match H*W");
  return Tensor3(height, width, descriptors.dim(), descriptors.values());
}

void max_abs_normalize_inplace(std::span<double> d) {
  double peak = 0.0;
  for (double x : d) peak = std::max(peak, std::abs(x));
  if (peak == 0.0) return;
  for (double& x : d) x /= peak;
}

std::vector<double> max_abs_normalize(std::span<const double> d) {
  if (d.empty()) throw ShapeError("cannot normalize an empty descriptor");
  std::vector<double> out(d.begin(), d.end());
  max_abs_normalize_inplace(out);
  return out;
}

Tensor3 occlude(const Tensor3& image, const Rect& rect, double fill) {
  if (rect.h0 > rect.h1 || rect.w0 > rect.w1 || rect.h1 > image.height() ||
      rect.w1 > image.width())
    throw ConfigError("occlusion rectangle (" + std::to_string(rect.h0) + "," +
                      std::to_string(rect.w0) + "," + std::to_string(rect.h1) + "," +
                      std::to_string(rect.w1) + ") is not inside the image");
  Tensor3 out = image;
  for (std::size_t h = rect.h0; h < rect.h1; ++h)
    for (std::size_t w = rect.w0; w < rect.w1; ++w)
      for (std::size_t d = 0; d < image.channels(); ++d) out(h, w, d) = fill;
  return out;
}

double l2_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace lsdhm
