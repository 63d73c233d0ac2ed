#include "emfv/neuralnet.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <string>

#include "emfv/errors.hpp"

namespace emfv {

namespace {

constexpr std::size_t kNoLayer = static_cast<std::size_t>(-1);

std::string shape_str(const Shape& s) {
  return std::to_string(s.channels) + "x" + std::to_string(s.height) + "x" +
         std::to_string(s.width);
}

void conv_forward(const Layer& l, std::span<const double> in,
                  std::span<double> out) {
  const std::size_t ci_n = l.input.channels;
  const std::size_t ih = l.input.height;
  const std::size_t iw = l.input.width;
  const std::size_t oh = l.output.height;
  const std::size_t ow = l.output.width;
  const std::size_t k = l.kernel;
  for (std::size_t co = 0; co < l.output.channels; ++co) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        double sum = l.biases[co];
        for (std::size_t ci = 0; ci < ci_n; ++ci) {
          const double* w = &l.weights[((co * ci_n + ci) * k) * k];
          for (std::size_t ky = 0; ky < k; ++ky) {
            // Padded coordinates; anything outside the image reads as zero.
            const auto iy = static_cast<std::ptrdiff_t>(oy * l.stride + ky) -
                            static_cast<std::ptrdiff_t>(l.padding);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(ih)) continue;
            for (std::size_t kx = 0; kx < k; ++kx) {
              const auto ix = static_cast<std::ptrdiff_t>(ox * l.stride + kx) -
                              static_cast<std::ptrdiff_t>(l.padding);
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(iw)) continue;
              sum += w[ky * k + kx] *
                     in[(ci * ih + static_cast<std::size_t>(iy)) * iw +
                        static_cast<std::size_t>(ix)];
            }
          }
        }
        out[(co * oh + oy) * ow + ox] = sum;
      }
    }
  }
}

void conv_backward(const Layer& l, std::span<const double> in,
                   std::span<const double> delta_out, std::span<double> dw,
                   std::span<double> db, std::span<double> delta_in) {
  const std::size_t ci_n = l.input.channels;
  const std::size_t ih = l.input.height;
  const std::size_t iw = l.input.width;
  const std::size_t oh = l.output.height;
  const std::size_t ow = l.output.width;
  const std::size_t k = l.kernel;
  for (std::size_t co = 0; co < l.output.channels; ++co) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        const double g = delta_out[(co * oh + oy) * ow + ox];
        db[co] += g;
        if (g == 0.0) continue;
        for (std::size_t ci = 0; ci < ci_n; ++ci) {
          const std::size_t wbase = ((co * ci_n + ci) * k) * k;
          for (std::size_t ky = 0; ky < k; ++ky) {
            const auto iy = static_cast<std::ptrdiff_t>(oy * l.stride + ky) -
                            static_cast<std::ptrdiff_t>(l.padding);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(ih)) continue;
            for (std::size_t kx = 0; kx < k; ++kx) {
              const auto ix = static_cast<std::ptrdiff_t>(ox * l.stride + kx) -
                              static_cast<std::ptrdiff_t>(l.padding);
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(iw)) continue;
              const std::size_t pos =
                  (ci * ih + static_cast<std::size_t>(iy)) * iw +
                  static_cast<std::size_t>(ix);
              dw[wbase + ky * k + kx] += g * in[pos];
              delta_in[pos] += g * l.weights[wbase + ky * k + kx];
            }
          }
        }
      }
    }
  }
}

void dense_forward(const Layer& l, std::span<const double> in,
                   std::span<double> out) {
  const std::size_t n = in.size();
  for (std::size_t o = 0; o < out.size(); ++o) {
    double sum = l.biases[o];
    const double* w = &l.weights[o * n];
    for (std::size_t i = 0; i < n; ++i) sum += w[i] * in[i];
    out[o] = sum;
  }
}

// Index of the first maximum in each pooling window.
std::size_t pool_argmax(const Layer& l, std::span<const double> in,
                        std::size_t c, std::size_t oy, std::size_t ox) {
  const std::size_t w = l.window;
  const std::size_t ih = l.input.height;
  const std::size_t iw = l.input.width;
  std::size_t best = (c * ih + oy * w) * iw + ox * w;
  for (std::size_t dy = 0; dy < w; ++dy) {
    for (std::size_t dx = 0; dx < w; ++dx) {
      const std::size_t pos = (c * ih + oy * w + dy) * iw + ox * w + dx;
      if (in[pos] > in[best]) best = pos;
    }
  }
  return best;
}

double log_softmax_at(std::span<const double> logits, std::size_t label) {
  const double top = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double z : logits) sum += std::exp(z - top);
  return logits[label] - top - std::log(sum);
}

}  // namespace

Tensor::Tensor(Shape shape, double fill)
    : shape_(shape), data_(shape.size(), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(shape), data_(std::move(data)) {
  if (data_.size() != shape_.size()) {
    throw LayerShapeError("tensor data has " + std::to_string(data_.size()) +
                          " entries, shape " + shape_str(shape_) + " needs " +
                          std::to_string(shape_.size()));
  }
}

std::size_t conv_output_size(std::size_t input_size, std::size_t kernel_size,
                             std::size_t padding, std::size_t stride) {
  if (input_size == 0 || kernel_size == 0 || stride == 0) {
    throw LayerShapeError("input size, kernel size and stride must be >= 1");
  }
  if (kernel_size > input_size + 2 * padding) {
    throw LayerShapeError("kernel " + std::to_string(kernel_size) +
                          " does not fit input " + std::to_string(input_size) +
                          " with padding " + std::to_string(padding));
  }
  const std::size_t span = input_size - kernel_size + 2 * padding;
  if (span % stride != 0) {
    throw LayerShapeError("stride " + std::to_string(stride) +
                          " does not divide W - K + 2P = " +
                          std::to_string(span));
  }
  return 1 + span / stride;
}

double relu(double x) noexcept { return x > 0.0 ? x : 0.0; }

Tensor relu(const Tensor& t) {
  Tensor out = t;
  for (double& v : out.data()) v = relu(v);
  return out;
}

Tensor maxpool(const Tensor& t, std::size_t window) {
  const Shape& s = t.shape();
  if (window == 0 || s.height % window != 0 || s.width % window != 0) {
    throw LayerShapeError("pool window " + std::to_string(window) +
                          " does not divide " + shape_str(s));
  }
  Tensor out(Shape{s.channels, s.height / window, s.width / window});
  for (std::size_t c = 0; c < s.channels; ++c) {
    for (std::size_t oy = 0; oy < out.shape().height; ++oy) {
      for (std::size_t ox = 0; ox < out.shape().width; ++ox) {
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t dy = 0; dy < window; ++dy) {
          for (std::size_t dx = 0; dx < window; ++dx) {
            best = std::max(best, t.at(c, oy * window + dy, ox * window + dx));
          }
        }
        out.at(c, oy, ox) = best;
      }
    }
  }
  return out;
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> out(logits.begin(), logits.end());
  if (out.empty()) return out;
  const double top = *std::max_element(out.begin(), out.end());
  double sum = 0.0;
  for (double& v : out) {
    v = std::exp(v - top);
    sum += v;
  }
  for (double& v : out) v /= sum;
  return out;
}

Network::Network(Shape input) : input_(input) {
  if (input.size() == 0) throw LayerShapeError("input shape must be nonempty");
}

Shape Network::tail_shape() const noexcept {
  return layers_.empty() ? input_ : layers_.back().output;
}

Shape Network::output_shape() const noexcept { return tail_shape(); }

bool Network::has_softmax_head() const noexcept {
  return !layers_.empty() && layers_.back().kind == LayerKind::kSoftmax;
}

Network& Network::conv(std::size_t channels_out, std::size_t kernel,
                       std::size_t padding, std::size_t stride) {
  if (has_softmax_head()) throw LayerShapeError("softmax must be last");
  if (channels_out == 0) throw LayerShapeError("conv needs >= 1 channel");
  Layer l;
  l.kind = LayerKind::kConv;
  l.input = tail_shape();
  l.kernel = kernel;
  l.padding = padding;
  l.stride = stride;
  l.output = Shape{channels_out,
                   conv_output_size(l.input.height, kernel, padding, stride),
                   conv_output_size(l.input.width, kernel, padding, stride)};
  l.weights.assign(channels_out * l.input.channels * kernel * kernel, 0.0);
  l.biases.assign(channels_out, 0.0);
  layers_.push_back(std::move(l));
  return *this;
}

Network& Network::relu() {
  if (has_softmax_head()) throw LayerShapeError("softmax must be last");
  Layer l;
  l.kind = LayerKind::kRelu;
  l.input = l.output = tail_shape();
  layers_.push_back(std::move(l));
  return *this;
}

Network& Network::maxpool(std::size_t window) {
  if (has_softmax_head()) throw LayerShapeError("softmax must be last");
  Layer l;
  l.kind = LayerKind::kMaxPool;
  l.input = tail_shape();
  l.window = window;
  if (window == 0 || l.input.height % window != 0 ||
      l.input.width % window != 0) {
    throw LayerShapeError("pool window " + std::to_string(window) +
                          " does not divide " + shape_str(l.input));
  }
  l.output = Shape{l.input.channels, l.input.height / window,
                   l.input.width / window};
  layers_.push_back(std::move(l));
  return *this;
}

Network& Network::dense(std::size_t units) {
  if (has_softmax_head()) throw LayerShapeError("softmax must be last");
  if (units == 0) throw LayerShapeError("dense layer needs >= 1 unit");
  Layer l;
  l.kind = LayerKind::kDense;
  l.input = tail_shape();
  l.output = Shape{units, 1, 1};
  l.weights.assign(units * l.input.size(), 0.0);
  l.biases.assign(units, 0.0);
  layers_.push_back(std::move(l));
  return *this;
}

Network& Network::softmax() {
  if (has_softmax_head()) throw LayerShapeError("softmax must be last");
  if (layers_.empty()) throw LayerShapeError("softmax needs a preceding layer");
  Layer l;
  l.kind = LayerKind::kSoftmax;
  l.input = l.output = tail_shape();
  layers_.push_back(std::move(l));
  return *this;
}

void Network::initialize(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-0.1, 0.1);
  for (auto& l : layers_) {
    for (double& w : l.weights) w = dist(rng);
    std::fill(l.biases.begin(), l.biases.end(), 0.0);
  }
}

void Network::set_feature_layer(std::size_t index) {
  if (index + 1 >= layers_.size() || layers_[index].kind != LayerKind::kDense ||
      layers_[index + 1].kind != LayerKind::kRelu) {
    throw LayerShapeError("feature layer " + std::to_string(index) +
                          " must be a dense layer followed by a ReLU");
  }
  feature_layer_ = index;
}

std::size_t Network::feature_layer_index() const {
  if (feature_layer_ != kNoLayer) return feature_layer_;
  // Last dense+relu pair that still has a dense layer after it.
  std::size_t found = kNoLayer;
  bool head_seen = false;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    if (layers_[i].kind != LayerKind::kDense) continue;
    if (head_seen && i + 1 < layers_.size() &&
        layers_[i + 1].kind == LayerKind::kRelu) {
      found = i;
      break;
    }
    head_seen = true;
  }
  if (found == kNoLayer) {
    throw LayerShapeError("network has no dense+ReLU feature layer before "
                          "its classifier head");
  }
  return found;
}

std::size_t Network::feature_dimension() const {
  return layers_[feature_layer_index()].output.size();
}

std::size_t Network::num_classes() const {
  for (std::size_t i = layers_.size(); i-- > 0;) {
    if (layers_[i].kind == LayerKind::kDense) return layers_[i].output.size();
  }
  return tail_shape().size();
}

std::size_t Network::parameter_count() const noexcept {
  std::size_t n = 0;
  for (const auto& l : layers_) n += l.weights.size() + l.biases.size();
  return n;
}

const Layer& Network::parameter_layer(std::size_t index) const {
  if (index >= layers_.size() || !layers_[index].has_parameters()) {
    throw LayerShapeError("layer " + std::to_string(index) +
                          " has no parameters");
  }
  return layers_[index];
}

std::span<double> Network::weights(std::size_t layer) {
  parameter_layer(layer);
  return layers_[layer].weights;
}

std::span<double> Network::biases(std::size_t layer) {
  parameter_layer(layer);
  return layers_[layer].biases;
}

std::span<const double> Network::weights(std::size_t layer) const {
  return parameter_layer(layer).weights;
}

std::span<const double> Network::biases(std::size_t layer) const {
  return parameter_layer(layer).biases;
}

ForwardResult Network::forward(const Tensor& input) const {
  if (input.shape() != input_) {
    throw LayerShapeError("input shape " + shape_str(input.shape()) +
                          " does not match network input " + shape_str(input_));
  }
  ForwardResult result;
  result.activations.reserve(layers_.size());
  const Tensor* current = &input;
  for (const auto& l : layers_) {
    Tensor out(l.output);
    switch (l.kind) {
      case LayerKind::kConv:
        conv_forward(l, current->data(), out.data());
        break;
      case LayerKind::kRelu:
        out = emfv::relu(*current);
        break;
      case LayerKind::kMaxPool:
        out = emfv::maxpool(*current, l.window);
        break;
      case LayerKind::kDense:
        dense_forward(l, current->data(), out.data());
        break;
      case LayerKind::kSoftmax: {
        auto probs = emfv::softmax(current->data());
        out = Tensor(l.output, std::move(probs));
        break;
      }
    }
    result.activations.push_back(std::move(out));
    current = &result.activations.back();
  }
  const std::size_t n = result.activations.size();
  const Tensor& head = has_softmax_head() ? (n >= 2 ? result.activations[n - 2]
                                                    : input)
                                          : (n >= 1 ? result.activations.back()
                                                    : input);
  result.logits.assign(head.data().begin(), head.data().end());
  return result;
}

FeatureVector Network::extract_features(const Tensor& input) const {
  const std::size_t idx = feature_layer_index();
  ForwardResult fr = forward(input);
  const Tensor& act = fr.activations[idx + 1];  // the ReLU after the layer
  return FeatureVector(std::vector<double>(act.data().begin(), act.data().end()));
}

double Network::loss(const Tensor& input, std::size_t label) const {
  ForwardResult fr = forward(input);
  if (label >= fr.logits.size()) {
    throw LabelError("label " + std::to_string(label) + " out of range");
  }
  return -log_softmax_at(fr.logits, label);
}

std::size_t Network::predict(const Tensor& input) const {
  ForwardResult fr = forward(input);
  return static_cast<std::size_t>(
      std::max_element(fr.logits.begin(), fr.logits.end()) - fr.logits.begin());
}

Gradients Network::gradients(const Tensor& input, std::size_t label) const {
  if (!has_softmax_head()) {
    throw LayerShapeError("gradients need a softmax classifier head");
  }
  ForwardResult fr = forward(input);
  if (label >= fr.logits.size()) {
    throw LabelError("label " + std::to_string(label) + " out of range");
  }

  Gradients g;
  g.weights.resize(layers_.size());
  g.biases.resize(layers_.size());

  // Softmax + cross-entropy: dL/dlogits = p - onehot(label).
  std::vector<double> delta(fr.activations.back().data().begin(),
                            fr.activations.back().data().end());
  delta[label] -= 1.0;

  for (std::size_t i = layers_.size() - 1; i-- > 0;) {
    const Layer& l = layers_[i];
    std::span<const double> in =
        i == 0 ? input.data() : fr.activations[i - 1].data();
    std::vector<double> delta_in(l.input.size(), 0.0);
    switch (l.kind) {
      case LayerKind::kConv:
        g.weights[i].assign(l.weights.size(), 0.0);
        g.biases[i].assign(l.biases.size(), 0.0);
        conv_backward(l, in, delta, g.weights[i], g.biases[i], delta_in);
        break;
      case LayerKind::kDense: {
        const std::size_t n = in.size();
        g.weights[i].assign(l.weights.size(), 0.0);
        g.biases[i].assign(delta.begin(), delta.end());
        for (std::size_t o = 0; o < delta.size(); ++o) {
          const double d = delta[o];
          double* gw = &g.weights[i][o * n];
          const double* w = &l.weights[o * n];
          for (std::size_t k = 0; k < n; ++k) {
            gw[k] = d * in[k];
            delta_in[k] += w[k] * d;
          }
        }
        break;
      }
      case LayerKind::kRelu:
        for (std::size_t k = 0; k < delta.size(); ++k) {
          delta_in[k] = in[k] > 0.0 ? delta[k] : 0.0;
        }
        break;
      case LayerKind::kMaxPool:
        for (std::size_t c = 0; c < l.output.channels; ++c) {
          for (std::size_t oy = 0; oy < l.output.height; ++oy) {
            for (std::size_t ox = 0; ox < l.output.width; ++ox) {
              delta_in[pool_argmax(l, in, c, oy, ox)] +=
                  delta[(c * l.output.height + oy) * l.output.width + ox];
            }
          }
        }
        break;
      case LayerKind::kSoftmax:
        throw LayerShapeError("softmax is only supported as the final layer");
    }
    delta = std::move(delta_in);
  }
  return g;
}

Network default_network(const ArchitectureConfig& c, std::uint64_t seed) {
  Network net(Shape{1, c.image_side, c.image_side});
  net.conv(c.conv1_channels, 3, 1, 1)
      .relu()
      .maxpool(2)
      .conv(c.conv2_channels, 3, 1, 1)
      .relu()
      .maxpool(2)
      .dense(c.feature_dimension)
      .relu()
      .dense(c.num_classes)
      .softmax();
  net.set_feature_layer(6);
  net.initialize(seed);
  return net;
}

double mean_loss(const Network& network, std::span<const LabeledImage> dataset) {
  if (dataset.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& s : dataset) sum += network.loss(s.image, s.label);
  return sum / static_cast<double>(dataset.size());
}

double accuracy(const Network& network, std::span<const LabeledImage> dataset) {
  if (dataset.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& s : dataset) hits += network.predict(s.image) == s.label;
  return static_cast<double>(hits) / static_cast<double>(dataset.size());
}

TrainResult train(Network network, std::span<const LabeledImage> dataset,
                  const TrainingConfig& config) {
  if (dataset.empty()) throw EmptyGalleryError("training dataset is empty");
  if (!(config.learning_rate >= 0.0) || !std::isfinite(config.learning_rate)) {
    throw InvalidArgumentError("learning rate must be finite and >= 0");
  }
  if (config.epochs == 0 || config.batch_size == 0) {
    throw InvalidArgumentError("epochs and batch size must be >= 1");
  }
  if (!network.has_softmax_head()) {
    throw LayerShapeError("training needs a softmax classifier head");
  }
  const std::size_t classes = network.num_classes();
  if (classes < 2) throw LabelError("training needs at least two classes");
  std::vector<std::size_t> per_class(classes, 0);
  for (const auto& s : dataset) {
    if (s.label >= classes) {
      throw LabelError("label " + std::to_string(s.label) +
                       " outside [0, " + std::to_string(classes) + ")");
    }
    ++per_class[s.label];
  }
  for (std::size_t c = 0; c < classes; ++c) {
    if (per_class[c] == 0) {
      throw LabelError("class " + std::to_string(c) + " has no samples");
    }
  }

  TrainResult result{std::move(network), {}};
  Network& net = result.network;
  result.loss_history.push_back(mean_loss(net, dataset));

  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size();
         start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      Gradients sum;
      for (std::size_t k = start; k < end; ++k) {
        const auto& sample = dataset[order[k]];
        Gradients g = net.gradients(sample.image, sample.label);
        if (sum.weights.empty()) {
          sum = std::move(g);
          continue;
        }
        for (std::size_t i = 0; i < g.weights.size(); ++i) {
          for (std::size_t j = 0; j < g.weights[i].size(); ++j)
            sum.weights[i][j] += g.weights[i][j];
          for (std::size_t j = 0; j < g.biases[i].size(); ++j)
            sum.biases[i][j] += g.biases[i][j];
        }
      }
      const double step =
          config.learning_rate / static_cast<double>(end - start);
      if (step == 0.0) continue;
      for (std::size_t i = 0; i < sum.weights.size(); ++i) {
        if (sum.weights[i].empty()) continue;
        auto w = net.weights(i);
        auto b = net.biases(i);
        for (std::size_t j = 0; j < w.size(); ++j) w[j] -= step * sum.weights[i][j];
        for (std::size_t j = 0; j < b.size(); ++j) b[j] -= step * sum.biases[i][j];
      }
    }
    result.loss_history.push_back(mean_loss(net, dataset));
  }
  return result;
}

}  // namespace emfv
