#include "lsdhm/convnet.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "lsdhm/error.hpp"
#include "lsdhm/parallel.hpp"
#include "lsdhm/random.hpp"

namespace lsdhm::nn {

namespace {

using Index = std::ptrdiff_t;

Shape conv_output(const Shape& in, std::size_t kernel, std::size_t stride, std::size_t channels) {
  const std::size_t pad = (kernel - 1) / 2;
  const Index h = (static_cast<Index>(in.height + 2 * pad) - static_cast<Index>(kernel)) /
                      static_cast<Index>(stride) + 1;
  const Index w = (static_cast<Index>(in.width + 2 * pad) - static_cast<Index>(kernel)) /
                      static_cast<Index>(stride) + 1;
  if (h < 1 || w < 1) throw ShapeError("convolution collapses the spatial size");
  return {static_cast<std::size_t>(h), static_cast<std::size_t>(w), channels};
}

Shape pool_output(const Shape& in, std::size_t kernel, std::size_t stride) {
  if (kernel > in.height || kernel > in.width)
    throw ShapeError("pooling window larger than its input (" + std::to_string(in.height) + "x" +
                     std::to_string(in.width) + ")");
  return {(in.height - kernel) / stride + 1, (in.width - kernel) / stride + 1, in.channels};
}

void check_conv_geometry(std::size_t kernel, std::size_t stride) {
  if (kernel == 0 || kernel % 2 == 0) throw ShapeError("convolution kernels must be odd");
  if (stride == 0) throw ShapeError("stride must be positive");
}

// Weights laid out [kh][kw][cin][cout].
void conv_forward(const Tensor3& in, std::size_t kernel, std::size_t stride, const double* weights,
                  const double* bias, Tensor3& out) {
  const Index pad = static_cast<Index>((kernel - 1) / 2);
  const std::size_t cin = in.channels(), cout = out.channels();
  for (std::size_t oh = 0; oh < out.height(); ++oh) {
    for (std::size_t ow = 0; ow < out.width(); ++ow) {
      double* o = out.ptr(oh, ow);
      std::copy(bias, bias + cout, o);
      for (std::size_t kh = 0; kh < kernel; ++kh) {
        const Index ih = static_cast<Index>(oh * stride + kh) - pad;
        if (ih < 0 || ih >= static_cast<Index>(in.height())) continue;
        for (std::size_t kw = 0; kw < kernel; ++kw) {
          const Index iw = static_cast<Index>(ow * stride + kw) - pad;
          if (iw < 0 || iw >= static_cast<Index>(in.width())) continue;
          const double* x = in.ptr(static_cast<std::size_t>(ih), static_cast<std::size_t>(iw));
          const double* w = weights + (kh * kernel + kw) * cin * cout;
          for (std::size_t ci = 0; ci < cin; ++ci) {
            const double xv = x[ci];
            if (xv == 0.0) continue;
            const double* wr = w + ci * cout;
            for (std::size_t co = 0; co < cout; ++co) o[co] += xv * wr[co];
          }
        }
      }
      for (std::size_t co = 0; co < cout; ++co) o[co] = o[co] > 0.0 ? o[co] : 0.0;
    }
  }
}

// d_out is the gradient with respect to the post-ReLU output.
void conv_backward(const Tensor3& in, const Tensor3& out, std::span<const double> d_out,
                   std::size_t kernel, std::size_t stride, const double* weights, double* d_weights,
                   double* d_bias, double* d_in) {
  const Index pad = static_cast<Index>((kernel - 1) / 2);
  const std::size_t cin = in.channels(), cout = out.channels();
  std::vector<double> transposed;
  if (d_in) {
    transposed.resize(kernel * kernel * cin * cout);
    for (std::size_t p = 0; p < kernel * kernel; ++p)
      for (std::size_t ci = 0; ci < cin; ++ci)
        for (std::size_t co = 0; co < cout; ++co)
          transposed[(p * cout + co) * cin + ci] = weights[(p * cin + ci) * cout + co];
  }
  std::vector<double> g(cout);
  for (std::size_t oh = 0; oh < out.height(); ++oh) {
    for (std::size_t ow = 0; ow < out.width(); ++ow) {
      const std::size_t base = out.offset(oh, ow);
      bool any = false;
      for (std::size_t co = 0; co < cout; ++co) {
        g[co] = out.data()[base + co] > 0.0 ? d_out[base + co] : 0.0;
        any = any || g[co] != 0.0;
      }
      if (!any) continue;
      for (std::size_t co = 0; co < cout; ++co) d_bias[co] += g[co];
      for (std::size_t kh = 0; kh < kernel; ++kh) {
        const Index ih = static_cast<Index>(oh * stride + kh) - pad;
        if (ih < 0 || ih >= static_cast<Index>(in.height())) continue;
        for (std::size_t kw = 0; kw < kernel; ++kw) {
          const Index iw = static_cast<Index>(ow * stride + kw) - pad;
          if (iw < 0 || iw >= static_cast<Index>(in.width())) continue;
          const std::size_t in_base =
              in.offset(static_cast<std::size_t>(ih), static_cast<std::size_t>(iw));
          const double* x = in.data().data() + in_base;
          const std::size_t p = kh * kernel + kw;
          double* dw = d_weights + p * cin * cout;
          for (std::size_t ci = 0; ci < cin; ++ci) {
            const double xv = x[ci];
            if (xv == 0.0) continue;
            double* dwr = dw + ci * cout;
            for (std::size_t co = 0; co < cout; ++co) dwr[co] += xv * g[co];
          }
          if (d_in) {
            double* di = d_in + in_base;
            const double* wt = transposed.data() + p * cout * cin;
            for (std::size_t co = 0; co < cout; ++co) {
              const double gc = g[co];
              if (gc == 0.0) continue;
              const double* wr = wt + co * cin;
              for (std::size_t ci = 0; ci < cin; ++ci) di[ci] += wr[ci] * gc;
            }
          }
        }
      }
    }
  }
}

void pool_forward(const Tensor3& in, std::size_t kernel, std::size_t stride, Tensor3& out) {
  const std::size_t c = in.channels();
  for (std::size_t oh = 0; oh < out.height(); ++oh)
    for (std::size_t ow = 0; ow < out.width(); ++ow) {
      double* o = out.ptr(oh, ow);
      const double* first = in.ptr(oh * stride, ow * stride);
      std::copy(first, first + c, o);
      for (std::size_t kh = 0; kh < kernel; ++kh)
        for (std::size_t kw = 0; kw < kernel; ++kw) {
          const double* x = in.ptr(oh * stride + kh, ow * stride + kw);
          for (std::size_t ch = 0; ch < c; ++ch) o[ch] = x[ch] > o[ch] ? x[ch] : o[ch];
        }
    }
}

// Routes each output gradient to the first maximal input in scan order.
void pool_backward(const Tensor3& in, const Tensor3& out, std::span<const double> d_out,
                   std::size_t kernel, std::size_t stride, double* d_in) {
  const std::size_t c = in.channels();
  for (std::size_t oh = 0; oh < out.height(); ++oh)
    for (std::size_t ow = 0; ow < out.width(); ++ow) {
      const std::size_t obase = out.offset(oh, ow);
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double g = d_out[obase + ch];
        if (g == 0.0) continue;
        std::size_t best = in.offset(oh * stride, ow * stride, ch);
        double best_v = in.data()[best];
        for (std::size_t kh = 0; kh < kernel; ++kh)
          for (std::size_t kw = 0; kw < kernel; ++kw) {
            const std::size_t idx = in.offset(oh * stride + kh, ow * stride + kw, ch);
            if (in.data()[idx] > best_v) {
              best_v = in.data()[idx];
              best = idx;
            }
          }
        d_in[best] += g;
      }
    }
}

// Weights laid out [out][in].
void fc_forward(std::span<const double> x, const double* weights, const double* bias, bool relu,
                std::span<double> y) {
  const std::size_t n_in = x.size();
  for (std::size_t o = 0; o < y.size(); ++o) {
    const double* w = weights + o * n_in;
    double acc = bias[o];
    for (std::size_t i = 0; i < n_in; ++i) acc += w[i] * x[i];
    y[o] = relu ? (acc > 0.0 ? acc : 0.0) : acc;
  }
}

void fc_backward(std::span<const double> x, std::span<const double> y, std::span<const double> dy,
                 const double* weights, bool relu, double* d_weights, double* d_bias, double* dx) {
  const std::size_t n_in = x.size();
  for (std::size_t o = 0; o < y.size(); ++o) {
    const double g = (relu && !(y[o] > 0.0)) ? 0.0 : dy[o];
    if (g == 0.0) continue;
    d_bias[o] += g;
    double* dw = d_weights + o * n_in;
    for (std::size_t i = 0; i < n_in; ++i) dw[i] += g * x[i];
    if (dx) {
      const double* w = weights + o * n_in;
      for (std::size_t i = 0; i < n_in; ++i) dx[i] += g * w[i];
    }
  }
}

void xavier_fill(std::span<double> w, std::size_t fan_in, std::size_t fan_out, std::uint64_t seed) {
  Rng rng(seed);
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (double& v : w) v = rng.uniform(-limit, limit);
}

constexpr std::uint64_t kScoreSalt = 500;
constexpr std::uint64_t kHeadSalt = 1000;

}  // namespace

ConvNetSpec ConvNetSpec::desk_default(std::size_t num_classes, bool with_head) {
  ConvNetSpec s;
  s.input = {32, 32, 3};
  s.layers = {LayerSpec::conv(5, 1, 16), LayerSpec::pool(2, 2), LayerSpec::conv(3, 1, 32),
              LayerSpec::pool(2, 2), LayerSpec::fc(64)};
  s.num_classes = num_classes;
  if (with_head) s.heads.push_back(LcsHeadSpec{2, 16, 3, 3, 2});
  return s;
}

std::vector<Shape> infer_shapes(const ConvNetSpec& spec) {
  if (spec.input.size() == 0) throw ShapeError("input shape must be positive");
  if (spec.num_classes < 1) throw ShapeError("num_classes must be positive");
  std::vector<Shape> shapes;
  Shape cur = spec.input;
  bool seen_fc = false;
  for (const auto& l : spec.layers) {
    switch (l.kind) {
      case LayerKind::Conv:
        if (seen_fc) throw ShapeError("convolution after a fully-connected layer");
        check_conv_geometry(l.kernel, l.stride);
        if (l.outputs == 0) throw ShapeError("convolution needs at least one output channel");
        cur = conv_output(cur, l.kernel, l.stride, l.outputs);
        break;
      case LayerKind::MaxPool:
        if (seen_fc) throw ShapeError("pooling after a fully-connected layer");
        if (l.kernel == 0 || l.stride == 0) throw ShapeError("pooling kernel and stride must be positive");
        cur = pool_output(cur, l.kernel, l.stride);
        break;
      case LayerKind::FullyConnected:
        if (l.outputs == 0) throw ShapeError("fully-connected layer needs a positive width");
        seen_fc = true;
        cur = {1, 1, l.outputs};
        break;
      default:
        throw ShapeError("unknown layer kind");
    }
    shapes.push_back(cur);
  }
  for (const auto& h : spec.heads) {
    if (h.attach_layer >= spec.layers.size() ||
        spec.layers[h.attach_layer].kind != LayerKind::Conv)
      throw ShapeError("LCS head must attach to a convolutional layer");
    if (h.channels == 0) throw ShapeError("LCS head needs at least one channel");
    check_conv_geometry(h.conv_kernel, 1);
    const Shape c = conv_output(shapes[h.attach_layer], h.conv_kernel, 1, h.channels);
    pool_output(c, h.pool_kernel, h.pool_stride);
  }
  return shapes;
}

std::vector<std::vector<double>> ForwardResult::aux_scores() const {
  std::vector<std::vector<double>> out;
  for (const auto& h : heads) out.push_back(h.scores);
  return out;
}

void ConvNet::build_layout() {
  shapes_ = infer_shapes(spec_);
  blocks_.clear();
  layer_block_.assign(spec_.layers.size(), std::nullopt);
  head_conv_block_.clear();
  head_score_block_.clear();
  head_conv_shapes_.clear();
  head_pool_shapes_.clear();
  std::size_t offset = 0;
  auto add = [&](std::string name, std::size_t weights, std::size_t biases) {
    ParamBlock b{std::move(name), offset, weights, offset + weights, biases};
    offset += weights + biases;
    blocks_.push_back(std::move(b));
    return blocks_.size() - 1;
  };
  Shape prev = spec_.input;
  for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
    const auto& l = spec_.layers[i];
    if (l.kind == LayerKind::Conv)
      layer_block_[i] = add("conv" + std::to_string(i), l.kernel * l.kernel * prev.channels * l.outputs,
                            l.outputs);
    else if (l.kind == LayerKind::FullyConnected)
      layer_block_[i] = add("fc" + std::to_string(i), prev.size() * l.outputs, l.outputs);
    prev = shapes_[i];
  }
  score_block_ = add("score", prev.size() * spec_.num_classes, spec_.num_classes);
  trunk_param_count_ = offset;
  for (std::size_t h = 0; h < spec_.heads.size(); ++h) {
    const auto& hs = spec_.heads[h];
    const Shape at = shapes_[hs.attach_layer];
    const Shape c = conv_output(at, hs.conv_kernel, 1, hs.channels);
    const Shape p = pool_output(c, hs.pool_kernel, hs.pool_stride);
    head_conv_shapes_.push_back(c);
    head_pool_shapes_.push_back(p);
    head_conv_block_.push_back(add("head" + std::to_string(h) + ".conv",
                                   hs.conv_kernel * hs.conv_kernel * at.channels * hs.channels,
                                   hs.channels));
    head_score_block_.push_back(
        add("head" + std::to_string(h) + ".score", p.size() * spec_.num_classes, spec_.num_classes));
  }
  params_.assign(offset, 0.0);
}

ConvNet::ConvNet(ConvNetSpec spec, std::uint64_t seed) : spec_(std::move(spec)) {
  build_layout();
  Shape prev = spec_.input;
  for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
    const auto& l = spec_.layers[i];
    if (layer_block_[i]) {
      const auto& b = blocks_[*layer_block_[i]];
      std::span<double> w(params_.data() + b.weight_offset, b.weight_count);
      if (l.kind == LayerKind::Conv)
        xavier_fill(w, l.kernel * l.kernel * prev.channels, l.kernel * l.kernel * l.outputs,
                    derive_seed(seed, i));
      else
        xavier_fill(w, prev.size(), l.outputs, derive_seed(seed, i));
    }
    prev = shapes_[i];
  }
  {
    const auto& b = blocks_[score_block_];
    xavier_fill({params_.data() + b.weight_offset, b.weight_count}, prev.size(), spec_.num_classes,
                derive_seed(seed, kScoreSalt));
  }
  for (std::size_t h = 0; h < spec_.heads.size(); ++h) {
    const auto& hs = spec_.heads[h];
    const auto& bc = blocks_[head_conv_block_[h]];
    const std::size_t cin = shapes_[hs.attach_layer].channels;
    const std::size_t kk = hs.conv_kernel * hs.conv_kernel;
    xavier_fill({params_.data() + bc.weight_offset, bc.weight_count}, kk * cin, kk * hs.channels,
                derive_seed(seed, kHeadSalt + 2 * h));
    const auto& bs = blocks_[head_score_block_[h]];
    xavier_fill({params_.data() + bs.weight_offset, bs.weight_count}, head_pool_shapes_[h].size(),
                spec_.num_classes, derive_seed(seed, kHeadSalt + 2 * h + 1));
  }
}

ConvNet::ConvNet(ConvNetSpec spec, std::vector<double> params) : spec_(std::move(spec)) {
  build_layout();
  if (params.size() != params_.size())
    throw DataError("network has " + std::to_string(params_.size()) + " parameters, got " +
                    std::to_string(params.size()));
  params_ = std::move(params);
}

std::size_t ConvNet::fc_width() const {
  for (std::size_t i = spec_.layers.size(); i-- > 0;)
    if (spec_.layers[i].kind == LayerKind::FullyConnected) return spec_.layers[i].outputs;
  return 0;
}

void ConvNet::check_input(const Tensor3& image) const {
  if (image.height() != spec_.input.height || image.width() != spec_.input.width ||
      image.channels() != spec_.input.channels)
    throw ShapeError("image is " + std::to_string(image.height()) + "x" +
                     std::to_string(image.width()) + "x" + std::to_string(image.channels()) +
                     ", network expects " + std::to_string(spec_.input.height) + "x" +
                     std::to_string(spec_.input.width) + "x" +
                     std::to_string(spec_.input.channels));
}

ForwardResult ConvNet::forward_until(const Tensor3& image, std::size_t last_layer, bool full,
                                     bool with_heads) const {
  check_input(image);
  ForwardResult r;
  r.maps.reserve(spec_.layers.size());
  const std::size_t n_layers = full ? spec_.layers.size() : last_layer + 1;
  for (std::size_t i = 0; i < n_layers; ++i) {
    const auto& l = spec_.layers[i];
    const Tensor3& in = i == 0 ? image : r.maps[i - 1];
    const Shape s = shapes_[i];
    Tensor3 out(s.height, s.width, s.channels);
    if (l.kind == LayerKind::Conv) {
      const auto& b = blocks_[*layer_block_[i]];
      conv_forward(in, l.kernel, l.stride, params_.data() + b.weight_offset,
                   params_.data() + b.bias_offset, out);
    } else if (l.kind == LayerKind::MaxPool) {
      pool_forward(in, l.kernel, l.stride, out);
    } else {
      const auto& b = blocks_[*layer_block_[i]];
      fc_forward(in.data(), params_.data() + b.weight_offset, params_.data() + b.bias_offset, true,
                 out.data());
    }
    r.maps.push_back(std::move(out));
  }
  if (!full) return r;

  for (std::size_t i = spec_.layers.size(); i-- > 0;)
    if (spec_.layers[i].kind == LayerKind::FullyConnected) {
      r.fc_features = r.maps[i].values();
      break;
    }
  const Tensor3& last = r.maps.empty() ? image : r.maps.back();
  r.main_scores.assign(spec_.num_classes, 0.0);
  {
    const auto& b = blocks_[score_block_];
    fc_forward(last.data(), params_.data() + b.weight_offset, params_.data() + b.bias_offset,
               false, r.main_scores);
  }
  if (!with_heads) return r;
  for (std::size_t h = 0; h < spec_.heads.size(); ++h) {
    const auto& hs = spec_.heads[h];
    HeadActivations ha;
    const Shape cs = head_conv_shapes_[h], ps = head_pool_shapes_[h];
    ha.conv = Tensor3(cs.height, cs.width, cs.channels);
    ha.pool = Tensor3(ps.height, ps.width, ps.channels);
    const auto& bc = blocks_[head_conv_block_[h]];
    conv_forward(r.maps[hs.attach_layer], hs.conv_kernel, 1, params_.data() + bc.weight_offset,
                 params_.data() + bc.bias_offset, ha.conv);
    pool_forward(ha.conv, hs.pool_kernel, hs.pool_stride, ha.pool);
    ha.scores.assign(spec_.num_classes, 0.0);
    const auto& bs = blocks_[head_score_block_[h]];
    fc_forward(ha.pool.data(), params_.data() + bs.weight_offset, params_.data() + bs.bias_offset,
               false, ha.scores);
    r.heads.push_back(std::move(ha));
  }
  return r;
}

ForwardResult ConvNet::forward(const Tensor3& image, bool with_heads) const {
  return forward_until(image, spec_.layers.size(), true, with_heads);
}

void ConvNet::backward(const Tensor3& image, const ForwardResult& fw, std::span<const double> d_main,
                       std::span<const std::vector<double>> d_aux, std::span<double> grad) const {
  if (grad.size() != params_.size()) throw ShapeError("gradient buffer has wrong size");
  if (d_main.size() != spec_.num_classes) throw ShapeError("score gradient has wrong size");
  if (d_aux.size() > spec_.heads.size()) throw ShapeError("more head gradients than heads");
  const std::size_t n = spec_.layers.size();
  double* g = grad.data();

  std::vector<std::vector<double>> d_maps(n);
  for (std::size_t i = 0; i < n; ++i) d_maps[i].assign(fw.maps[i].size(), 0.0);

  for (std::size_t h = 0; h < d_aux.size(); ++h) {
    if (d_aux[h].empty()) continue;
    if (fw.heads.size() <= h) throw ShapeError("forward pass was run without heads");
    const auto& hs = spec_.heads[h];
    const auto& ha = fw.heads[h];
    const auto& bs = blocks_[head_score_block_[h]];
    std::vector<double> d_pool(ha.pool.size(), 0.0);
    fc_backward(ha.pool.data(), ha.scores, d_aux[h], params_.data() + bs.weight_offset, false,
                g + bs.weight_offset, g + bs.bias_offset, d_pool.data());
    std::vector<double> d_conv(ha.conv.size(), 0.0);
    pool_backward(ha.conv, ha.pool, d_pool, hs.pool_kernel, hs.pool_stride, d_conv.data());
    const auto& bc = blocks_[head_conv_block_[h]];
    conv_backward(fw.maps[hs.attach_layer], ha.conv, d_conv, hs.conv_kernel, 1,
                  params_.data() + bc.weight_offset, g + bc.weight_offset, g + bc.bias_offset,
                  d_maps[hs.attach_layer].data());
  }

  {
    const Tensor3& last = n == 0 ? image : fw.maps.back();
    const auto& b = blocks_[score_block_];
    fc_backward(last.data(), fw.main_scores, d_main, params_.data() + b.weight_offset, false,
                g + b.weight_offset, g + b.bias_offset, n == 0 ? nullptr : d_maps[n - 1].data());
  }

  for (std::size_t i = n; i-- > 0;) {
    const auto& l = spec_.layers[i];
    const Tensor3& in = i == 0 ? image : fw.maps[i - 1];
    double* d_in = i == 0 ? nullptr : d_maps[i - 1].data();
    if (l.kind == LayerKind::Conv) {
      const auto& b = blocks_[*layer_block_[i]];
      conv_backward(in, fw.maps[i], d_maps[i], l.kernel, l.stride, params_.data() + b.weight_offset,
                    g + b.weight_offset, g + b.bias_offset, d_in);
    } else if (l.kind == LayerKind::MaxPool) {
      if (d_in) pool_backward(in, fw.maps[i], d_maps[i], l.kernel, l.stride, d_in);
    } else {
      const auto& b = blocks_[*layer_block_[i]];
      fc_backward(in.data(), fw.maps[i].data(), d_maps[i], params_.data() + b.weight_offset, true,
                  g + b.weight_offset, g + b.bias_offset, d_in);
    }
  }
}

Tensor3 ConvNet::extract_conv(const Tensor3& image, std::size_t layer_index) const {
  if (layer_index >= spec_.layers.size() ||
      spec_.layers[layer_index].kind == LayerKind::FullyConnected)
    throw ConfigError("layer " + std::to_string(layer_index) + " is not a conv or pool layer");
  auto r = forward_until(image, layer_index, false, false);
  return std::move(r.maps[layer_index]);
}

std::vector<double> ConvNet::extract_fc(const Tensor3& image) const {
  for (std::size_t i = spec_.layers.size(); i-- > 0;)
    if (spec_.layers[i].kind == LayerKind::FullyConnected) {
      auto r = forward_until(image, i, false, false);
      return r.maps[i].values();
    }
  throw ConfigError("network has no fully-connected layer before the score layer");
}

double hinge_loss(std::span<const double> scores, int label) {
  if (label < 0 || static_cast<std::size_t>(label) >= scores.size())
    throw ConfigError("label " + std::to_string(label) + " out of range");
  double loss = 0.0;
  for (std::size_t c = 0; c < scores.size(); ++c) {
    const double t = static_cast<int>(c) == label ? 1.0 : -1.0;
    loss += std::max(0.0, 1.0 - scores[c] * t);
  }
  return loss;
}

std::vector<double> hinge_gradient(std::span<const double> scores, int label) {
  if (label < 0 || static_cast<std::size_t>(label) >= scores.size())
    throw ConfigError("label " + std::to_string(label) + " out of range");
  std::vector<double> g(scores.size(), 0.0);
  for (std::size_t c = 0; c < scores.size(); ++c) {
    const double t = static_cast<int>(c) == label ? 1.0 : -1.0;
    if (1.0 - scores[c] * t > 0.0) g[c] = -t;
  }
  return g;
}

double joint_loss(std::span<const double> main_scores,
                  std::span<const std::vector<double>> aux_scores, int label,
                  std::span<const double> aux_weights) {
  if (aux_scores.size() != aux_weights.size())
    throw ConfigError("one auxiliary weight is needed per head");
  double loss = hinge_loss(main_scores, label);
  for (std::size_t a = 0; a < aux_scores.size(); ++a) {
    if (aux_scores[a].size() != main_scores.size())
      throw ShapeError("auxiliary scores have the wrong length");
    loss += aux_weights[a] * hinge_loss(aux_scores[a], label);
  }
  return loss;
}

std::vector<double> TrainConfig::resolved_aux_weights(std::size_t num_heads) const {
  if (aux_weights.empty()) return std::vector<double>(num_heads, 0.3);
  if (aux_weights.size() != num_heads)
    throw ConfigError("got " + std::to_string(aux_weights.size()) + " auxiliary weights for " +
                      std::to_string(num_heads) + " heads");
  for (double w : aux_weights)
    if (!(w >= 0.0)) throw ConfigError("auxiliary weights must be non-negative");
  return aux_weights;
}

namespace {

struct SampleResult {
  double main = 0.0;
  std::vector<double> aux;
};

SampleResult sample_gradient(const ConvNet& net, const LabeledImage& item,
                             std::span<const double> aux_weights, std::span<double> grad) {
  const ForwardResult fw = net.forward(item.image, true);
  SampleResult r;
  r.main = hinge_loss(fw.main_scores, item.label);
  const auto d_main = hinge_gradient(fw.main_scores, item.label);
  std::vector<std::vector<double>> d_aux(fw.heads.size());
  for (std::size_t h = 0; h < fw.heads.size(); ++h) {
    r.aux.push_back(hinge_loss(fw.heads[h].scores, item.label));
    if (aux_weights[h] == 0.0) continue;
    d_aux[h] = hinge_gradient(fw.heads[h].scores, item.label);
    for (double& v : d_aux[h]) v *= aux_weights[h];
  }
  net.backward(item.image, fw, d_main, d_aux, grad);
  return r;
}

BatchLoss summarize(const std::vector<SampleResult>& samples, std::span<const double> aux_weights) {
  BatchLoss out;
  out.aux.assign(aux_weights.size(), 0.0);
  for (const auto& s : samples) {
    out.main += s.main;
    for (std::size_t h = 0; h < aux_weights.size(); ++h) out.aux[h] += s.aux[h];
  }
  const double inv = 1.0 / static_cast<double>(samples.size());
  out.main *= inv;
  out.total = out.main;
  for (std::size_t h = 0; h < aux_weights.size(); ++h) {
    out.aux[h] *= inv;
    out.total += aux_weights[h] * out.aux[h];
  }
  return out;
}

}  // namespace

BatchLoss compute_gradients(const ConvNet& net, std::span<const LabeledImage* const> batch,
                            std::span<const double> aux_weights, std::span<double> grad,
                            unsigned threads) {
  if (batch.empty()) throw ConfigError("empty batch");
  if (aux_weights.size() != net.spec().heads.size())
    throw ConfigError("one auxiliary weight is needed per head");
  if (grad.size() != net.num_params()) throw ShapeError("gradient buffer has wrong size");
  std::fill(grad.begin(), grad.end(), 0.0);
  std::vector<SampleResult> samples(batch.size());
  // Per-sample buffers summed in batch order keep the result independent of
  // the thread count.
  if (threads <= 1) {
    std::vector<double> buf(net.num_params());
    for (std::size_t b = 0; b < batch.size(); ++b) {
      std::fill(buf.begin(), buf.end(), 0.0);
      samples[b] = sample_gradient(net, *batch[b], aux_weights, buf);
      for (std::size_t i = 0; i < buf.size(); ++i) grad[i] += buf[i];
    }
  } else {
    std::vector<std::vector<double>> bufs(batch.size(), std::vector<double>(net.num_params(), 0.0));
    parallel_for(batch.size(), threads, [&](std::size_t b) {
      samples[b] = sample_gradient(net, *batch[b], aux_weights, bufs[b]);
    });
    for (const auto& buf : bufs)
      for (std::size_t i = 0; i < buf.size(); ++i) grad[i] += buf[i];
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (double& v : grad) v *= inv;
  return summarize(samples, aux_weights);
}

BatchLoss batch_loss(const ConvNet& net, std::span<const LabeledImage* const> batch,
                     std::span<const double> aux_weights) {
  if (batch.empty()) throw ConfigError("empty batch");
  if (aux_weights.size() != net.spec().heads.size())
    throw ConfigError("one auxiliary weight is needed per head");
  std::vector<SampleResult> samples;
  for (const auto* item : batch) {
    const ForwardResult fw = net.forward(item->image, true);
    SampleResult r;
    r.main = hinge_loss(fw.main_scores, item->label);
    for (const auto& h : fw.heads) r.aux.push_back(hinge_loss(h.scores, item->label));
    samples.push_back(std::move(r));
  }
  return summarize(samples, aux_weights);
}

void SgdState::step(ConvNet& net, std::span<const double> grad, double lr, double momentum,
                    double weight_decay) {
  auto p = net.params();
  if (grad.size() != p.size() || velocity_.size() != p.size())
    throw ShapeError("optimizer state does not match the network");
  for (const auto& b : net.blocks()) {
    for (std::size_t i = b.weight_offset; i < b.weight_offset + b.weight_count; ++i) {
      velocity_[i] = momentum * velocity_[i] - lr * (grad[i] + weight_decay * p[i]);
      p[i] += velocity_[i];
    }
    for (std::size_t i = b.bias_offset; i < b.bias_offset + b.bias_count; ++i) {
      velocity_[i] = momentum * velocity_[i] - lr * grad[i];
      p[i] += velocity_[i];
    }
  }
}

BatchLoss backward_and_step(ConvNet& net, SgdState& state,
                            std::span<const LabeledImage* const> batch, const TrainConfig& cfg,
                            double lr) {
  const auto weights = cfg.resolved_aux_weights(net.spec().heads.size());
  std::vector<double> grad(net.num_params());
  const BatchLoss loss = compute_gradients(net, batch, weights, grad, cfg.threads);
  if (!std::isfinite(loss.total))
    throw NumericError("non-finite training loss (main " + std::to_string(loss.main) + ")");
  state.step(net, grad, lr, cfg.momentum, cfg.weight_decay);
  return loss;
}

std::vector<TrainLogRow> train(ConvNet& net, const LabeledDataset& data, const TrainConfig& cfg,
                               const TrainOptions& opts) {
  if (data.empty()) throw ConfigError("cannot train on an empty dataset");
  if (!(cfg.learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (cfg.batch_size == 0) throw ConfigError("batch size must be positive");
  if (static_cast<std::size_t>(data.num_classes()) != net.spec().num_classes)
    throw ConfigError("dataset and network disagree on the number of classes");
  cfg.resolved_aux_weights(net.spec().heads.size());

  SgdState state(net.num_params());
  Rng rng(cfg.seed);
  std::vector<std::size_t> order(data.size());
  std::vector<TrainLogRow> log;
  std::size_t step = 0;
  double lr = cfg.learning_rate;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order.begin(), order.end());
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::vector<const LabeledImage*> batch;
      for (std::size_t i = start; i < end; ++i) batch.push_back(&data[order[i]]);
      const BatchLoss loss = backward_and_step(net, state, batch, cfg, lr);
      ++step;
      TrainLogRow row{step, loss.main, loss.aux, lr};
      if (opts.on_step) opts.on_step(row);
      log.push_back(std::move(row));
      if (opts.max_steps && step >= opts.max_steps) return log;
    }
    lr *= cfg.lr_decay;
  }
  return log;
}

std::string train_log_csv(const std::vector<TrainLogRow>& rows) {
  std::ostringstream os;
  os.precision(17);
  const std::size_t heads = rows.empty() ? 0 : rows.front().aux_losses.size();
  os << "iteration,main_loss";
  for (std::size_t h = 0; h < heads; ++h) os << ",aux_loss_" << h;
  os << ",learning_rate\n";
  for (const auto& r : rows) {
    os << r.iteration << ',' << r.main_loss;
    for (double a : r.aux_losses) os << ',' << a;
    os << ',' << r.learning_rate << '\n';
  }
  return os.str();
}

}  // namespace lsdhm::nn
