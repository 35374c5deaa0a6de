#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

namespace lsdhm {

// H x W x D stack of feature maps (or an image), stored row-major in
// (h, w, d) order so that the channel fiber at each position is contiguous.
class Tensor3 {
 public:
  Tensor3() = default;
  Tensor3(std::size_t height, std::size_t width, std::size_t channels, double fill = 0.0);
  Tensor3(std::size_t height, std::size_t width, std::size_t channels,
          std::vector<double> data);

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t channels() const { return channels_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::size_t offset(std::size_t h, std::size_t w, std::size_t d = 0) const {
    return (h * width_ + w) * channels_ + d;
  }

  double operator()(std::size_t h, std::size_t w, std::size_t d) const {
    return data_[offset(h, w, d)];
  }
  double& operator()(std::size_t h, std::size_t w, std::size_t d) {
    return data_[offset(h, w, d)];
  }

  const double* ptr(std::size_t h, std::size_t w) const { return data_.data() + offset(h, w); }
  double* ptr(std::size_t h, std::size_t w) { return data_.data() + offset(h, w); }

  std::span<const double> fiber(std::size_t h, std::size_t w) const {
    return {data_.data() + offset(h, w), channels_};
  }

  std::span<const double> data() const { return data_; }
  std::span<double> data() { return data_; }
  const std::vector<double>& values() const { return data_; }

  bool same_shape(const Tensor3& other) const {
    return height_ == other.height_ && width_ == other.width_ &&
           channels_ == other.channels_;
  }

  friend bool operator==(const Tensor3&, const Tensor3&) = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::size_t channels_ = 0;
  std::vector<double> data_;
};

// T descriptors of equal dimension, stored contiguously. When produced from a
// Tensor3 the (h, w) position of every descriptor is kept alongside.
class DescriptorSet {
 public:
  DescriptorSet() = default;
  explicit DescriptorSet(std::size_t dim) : dim_(dim) {}
  DescriptorSet(std::size_t dim, std::vector<double> values);

  std::size_t dim() const { return dim_; }
  std::size_t count() const { return dim_ == 0 ? 0 : values_.size() / dim_; }
  bool empty() const { return values_.empty(); }

  std::span<const double> operator[](std::size_t t) const {
    return {values_.data() + t * dim_, dim_};
  }
  std::span<double> mutable_row(std::size_t t) { return {values_.data() + t * dim_, dim_}; }

  void push_back(std::span<const double> descriptor);
  void append(const DescriptorSet& other);

  const std::vector<double>& values() const { return values_; }
  const std::vector<std::pair<std::size_t, std::size_t>>& positions() const {
    return positions_;
  }
  bool has_positions() const { return !positions_.empty(); }
  void set_positions(std::vector<std::pair<std::size_t, std::size_t>> p);

 private:
  std::size_t dim_ = 0;
  std::vector<double> values_;
  std::vector<std::pair<std::size_t, std::size_t>> positions_;
};

struct LabeledImage {
  Tensor3 image;
  int label = 0;
};

class LabeledDataset {
 public:
  LabeledDataset() = default;
  explicit LabeledDataset(int num_classes);

  // Throws ConfigError/ShapeError if the label is out of range or the image
  // shape differs from the images already present.
  void add(Tensor3 image, int label);

  int num_classes() const { return num_classes_; }
  std::size_t size() const { return items_.size(); }
  bool empty() const { return items_.empty(); }
  const LabeledImage& operator[](std::size_t i) const { return items_[i]; }
  const std::vector<LabeledImage>& items() const { return items_; }
  std::vector<int> labels() const;

 private:
  int num_classes_ = 0;
  std::vector<LabeledImage> items_;
};

struct Rect {
  std::size_t h0 = 0, w0 = 0, h1 = 0, w1 = 0;  // half-open [h0, h1) x [w0, w1)

  std::size_t area() const { return (h1 - h0) * (w1 - w0); }
};

// One descriptor per spatial position; descriptor h*W + w is the fiber at (h, w).
DescriptorSet channels_to_descriptors(const Tensor3& maps);

// Inverse of channels_to_descriptors.
Tensor3 descriptors_to_channels(const DescriptorSet& descriptors, std::size_t height,
                                std::size_t width);

// Divides by the largest absolute component. An all-zero input is returned as is.
std::vector<double> max_abs_normalize(std::span<const double> d);
void max_abs_normalize_inplace(std::span<double> d);

// Copy of `image` with the rectangle set to `fill` in every channel.
// Throws ConfigError when the rectangle is malformed or leaves the image.
Tensor3 occlude(const Tensor3& image, const Rect& rect, double fill);

double l2_norm(std::span<const double> v);

}  // namespace lsdhm
