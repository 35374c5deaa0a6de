#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lsdhm/tensor.hpp"

namespace lsdhm::nn {

enum class LayerKind : std::uint32_t { Conv = 0, MaxPool = 1, FullyConnected = 2 };

// Convolutions use zero "same" padding of (k-1)/2 and are followed by ReLU.
// Pooling uses no padding and floor division. Hidden fully-connected layers
// are followed by ReLU.
struct LayerSpec {
  LayerKind kind = LayerKind::Conv;
  std::size_t kernel = 1;
  std::size_t stride = 1;
  std::size_t outputs = 0;  // conv channels or fc width; unused for pooling

  static LayerSpec conv(std::size_t kernel, std::size_t stride, std::size_t channels) {
    return {LayerKind::Conv, kernel, stride, channels};
  }
  static LayerSpec pool(std::size_t kernel, std::size_t stride) {
    return {LayerKind::MaxPool, kernel, stride, 0};
  }
  static LayerSpec fc(std::size_t width) { return {LayerKind::FullyConnected, 1, 1, width}; }

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

// Local convolutional supervision head: conv 3x3/s1 + ReLU, max pool 3x3/s2,
// then a linear map from the flattened pooled maps straight to class scores.
struct LcsHeadSpec {
  std::size_t attach_layer = 0;  // index of a conv layer in the trunk
  std::size_t channels = 16;
  std::size_t conv_kernel = 3;
  std::size_t pool_kernel = 3;
  std::size_t pool_stride = 2;

  friend bool operator==(const LcsHeadSpec&, const LcsHeadSpec&) = default;
};

struct Shape {
  std::size_t height = 0, width = 0, channels = 0;

  std::size_t size() const { return height * width * channels; }
  friend bool operator==(const Shape&, const Shape&) = default;
};

struct ConvNetSpec {
  Shape input{32, 32, 3};
  std::vector<LayerSpec> layers;
  std::size_t num_classes = 2;
  std::vector<LcsHeadSpec> heads;

  // conv5x5/16 -> pool2/2 -> conv3x3/32 -> pool2/2 -> fc64 -> scores, with one
  // LCS head (16 channels) on the second conv layer.
  static ConvNetSpec desk_default(std::size_t num_classes, bool with_head = true);

  friend bool operator==(const ConvNetSpec&, const ConvNetSpec&) = default;
};

// Output shape of every trunk layer; throws ShapeError when the geometry
// collapses or the layer order is unsupported.
std::vector<Shape> infer_shapes(const ConvNetSpec& spec);

struct HeadActivations {
  Tensor3 conv;  // post-ReLU
  Tensor3 pool;
  std::vector<double> scores;
};

struct ForwardResult {
  std::vector<Tensor3> maps;         // output of every trunk layer, post-activation
  std::vector<double> fc_features;   // last hidden fc layer, empty if none
  std::vector<double> main_scores;
  std::vector<HeadActivations> heads;

  std::vector<std::vector<double>> aux_scores() const;
};

// Contiguous slice of the parameter vector belonging to one layer.
struct ParamBlock {
  std::string name;
  std::size_t weight_offset = 0, weight_count = 0;
  std::size_t bias_offset = 0, bias_count = 0;
};

class ConvNet {
 public:
  ConvNet() = default;
  // Xavier-uniform weights, zero biases. Every layer draws from its own
  // stream derived from `seed`, so adding or removing heads leaves the trunk
  // initialization unchanged.
  ConvNet(ConvNetSpec spec, std::uint64_t seed);
  // Rebuilds a network from stored parameters (must match the spec's size).
  ConvNet(ConvNetSpec spec, std::vector<double> params);

  const ConvNetSpec& spec() const { return spec_; }
  const std::vector<Shape>& shapes() const { return shapes_; }
  std::size_t num_params() const { return params_.size(); }
  std::span<const double> params() const { return params_; }
  std::span<double> params() { return params_; }
  const std::vector<ParamBlock>& blocks() const { return blocks_; }

  // Parameters that belong to the trunk and the main score layer.
  std::size_t trunk_param_count() const { return trunk_param_count_; }

  std::size_t fc_width() const;

  ForwardResult forward(const Tensor3& image, bool with_heads = true) const;

  // Accumulates d(loss)/d(params) into `grad` given score gradients. Heads
  // whose gradient is empty are skipped entirely.
  void backward(const Tensor3& image, const ForwardResult& fw, std::span<const double> d_main,
                std::span<const std::vector<double>> d_aux, std::span<double> grad) const;

  // Post-activation maps of a conv or pool layer.
  Tensor3 extract_conv(const Tensor3& image, std::size_t layer_index) const;

  // Activations of the last fully-connected layer before the score layer.
  std::vector<double> extract_fc(const Tensor3& image) const;

 private:
  void build_layout();
  void check_input(const Tensor3& image) const;
  ForwardResult forward_until(const Tensor3& image, std::size_t last_layer, bool full,
                              bool with_heads) const;

  ConvNetSpec spec_;
  std::vector<Shape> shapes_;
  std::vector<Shape> head_conv_shapes_, head_pool_shapes_;
  std::vector<double> params_;
  std::vector<ParamBlock> blocks_;
  std::vector<std::optional<std::size_t>> layer_block_;
  std::size_t score_block_ = 0;
  std::vector<std::size_t> head_conv_block_, head_score_block_;
  std::size_t trunk_param_count_ = 0;
};

// Sum over classes of max(0, 1 - s_c t_c), t_c = +1 for the label, -1 otherwise.
double hinge_loss(std::span<const double> scores, int label);
// Subgradient of hinge_loss; zero on the flat side of every kink.
std::vector<double> hinge_gradient(std::span<const double> scores, int label);

// Main hinge plus sum_a lambda_a * hinge(aux_a). Throws ConfigError on a bad
// label or a weight/head count mismatch.
double joint_loss(std::span<const double> main_scores,
                  std::span<const std::vector<double>> aux_scores, int label,
                  std::span<const double> aux_weights);

struct TrainConfig {
  std::vector<double> aux_weights;  // one per head; empty means 0.3 for every head
  double learning_rate = 0.003;
  double lr_decay = 0.9;  // multiplied into the learning rate after every epoch
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::size_t batch_size = 32;
  std::size_t epochs = 10;
  std::uint64_t seed = 0;
  unsigned threads = 1;

  std::vector<double> resolved_aux_weights(std::size_t num_heads) const;
};

struct BatchLoss {
  double total = 0.0;
  double main = 0.0;
  std::vector<double> aux;  // unweighted per-head hinge
};

// Mean joint loss over a batch and its gradient (weight decay not included).
BatchLoss compute_gradients(const ConvNet& net, std::span<const LabeledImage* const> batch,
                            std::span<const double> aux_weights, std::span<double> grad,
                            unsigned threads = 1);

BatchLoss batch_loss(const ConvNet& net, std::span<const LabeledImage* const> batch,
                     std::span<const double> aux_weights);

class SgdState {
 public:
  explicit SgdState(std::size_t num_params) : velocity_(num_params, 0.0) {}
  std::span<const double> velocity() const { return velocity_; }

  // Momentum SGD with L2 weight decay on weights (not biases).
  void step(ConvNet& net, std::span<const double> grad, double lr, double momentum,
            double weight_decay);

 private:
  std::vector<double> velocity_;
};

// One optimizer step on a batch. Throws NumericError on a non-finite loss.
BatchLoss backward_and_step(ConvNet& net, SgdState& state,
                            std::span<const LabeledImage* const> batch, const TrainConfig& cfg,
                            double lr);

struct TrainLogRow {
  std::size_t iteration = 0;
  double main_loss = 0.0;
  std::vector<double> aux_losses;
  double learning_rate = 0.0;
};

struct TrainOptions {
  // Stop after this many optimizer steps (0 = run all epochs).
  std::size_t max_steps = 0;
  std::function<void(const TrainLogRow&)> on_step;
};

std::vector<TrainLogRow> train(ConvNet& net, const LabeledDataset& data, const TrainConfig& cfg,
                               const TrainOptions& opts = {});

std::string train_log_csv(const std::vector<TrainLogRow>& rows);

}  // namespace lsdhm::nn
