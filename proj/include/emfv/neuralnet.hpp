#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "emfv/feature_vector.hpp"

namespace emfv {

struct Shape {
  std::size_t channels = 1;
  std::size_t height = 1;
  std::size_t width = 1;

  std::size_t size() const noexcept { return channels * height * width; }
  friend bool operator==(const Shape&, const Shape&) = default;
};

// Dense channel-major (c, y, x) tensor of doubles.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  const Shape& shape() const noexcept { return shape_; }
  std::span<const double> data() const noexcept { return data_; }
  std::span<double> data() noexcept { return data_; }
  std::size_t size() const noexcept { return data_.size(); }

  double& at(std::size_t c, std::size_t y, std::size_t x) {
    return data_[(c * shape_.height + y) * shape_.width + x];
  }
  double at(std::size_t c, std::size_t y, std::size_t x) const {
    return data_[(c * shape_.height + y) * shape_.width + x];
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

// Neurons that fit along one side: 1 + (W - K + 2P) / S. Throws
// LayerShapeError unless S divides W - K + 2P and K <= W + 2P.
std::size_t conv_output_size(std::size_t input_size, std::size_t kernel_size,
                             std::size_t padding, std::size_t stride);

struct ConvLayerSpec {
  std::size_t input_size = 1;
  std::size_t kernel_size = 1;
  std::size_t padding = 0;
  std::size_t stride = 1;
  std::size_t channels_in = 1;
  std::size_t channels_out = 1;

  std::size_t output_size() const {
    return conv_output_size(input_size, kernel_size, padding, stride);
  }
};

Tensor relu(const Tensor& t);
double relu(double x) noexcept;

// Non-overlapping window maximum per channel. Throws LayerShapeError when a
// side is not divisible by the window.
Tensor maxpool(const Tensor& t, std::size_t window);

// Max-subtracted exponential normalization.
std::vector<double> softmax(std::span<const double> logits);

enum class LayerKind : std::uint8_t {
  kConv = 1,
  kRelu = 2,
  kMaxPool = 3,
  kDense = 4,
  kSoftmax = 5,
};

struct Layer {
  LayerKind kind = LayerKind::kRelu;
  Shape input;
  Shape output;
  // kConv: kernel/padding/stride; kMaxPool: window.
  std::size_t kernel = 0;
  std::size_t padding = 0;
  std::size_t stride = 1;
  std::size_t window = 0;
  // kConv: [out][in][ky][kx]; kDense: [out][in]. One bias per output
  // channel (conv) or unit (dense).
  std::vector<double> weights;
  std::vector<double> biases;

  bool has_parameters() const noexcept {
    return kind == LayerKind::kConv || kind == LayerKind::kDense;
  }
  friend bool operator==(const Layer&, const Layer&) = default;
};

// Per-layer gradients, aligned with Network::layers(); empty for layers
// without parameters.
struct Gradients {
  std::vector<std::vector<double>> weights;
  std::vector<std::vector<double>> biases;
};

struct ForwardResult {
  std::vector<double> logits;
  std::vector<Tensor> activations;  // output of every layer, in order
};

struct ArchitectureConfig {
  std::size_t image_side = 32;
  std::size_t conv1_channels = 4;
  std::size_t conv2_channels = 8;
  std::size_t feature_dimension = kDefaultDimension;
  std::size_t num_classes = 4;
};

// A feed-forward stack of conv / relu / maxpool / dense / softmax layers.
// Built with the chaining methods below; every call checks that shapes
// compose and throws LayerShapeError otherwise. Weights start at zero until
// initialize() is called.
class Network {
 public:
  explicit Network(Shape input);

  Network& conv(std::size_t channels_out, std::size_t kernel,
                std::size_t padding, std::size_t stride);
  Network& relu();
  Network& maxpool(std::size_t window);
  Network& dense(std::size_t units);
  Network& softmax();

  // Uniform in [-0.1, 0.1] for weights, zero biases.
  void initialize(std::uint64_t seed);

  // The feature layer is a dense layer followed by a ReLU. Defaults to the
  // last such layer before the classifier head.
  void set_feature_layer(std::size_t index);
  std::size_t feature_layer_index() const;
  std::size_t feature_dimension() const;

  const Shape& input_shape() const noexcept { return input_; }
  Shape output_shape() const noexcept;
  std::span<const Layer> layers() const noexcept { return layers_; }
  std::size_t num_classes() const;
  std::size_t parameter_count() const noexcept;
  bool has_softmax_head() const noexcept;

  std::span<double> weights(std::size_t layer);
  std::span<double> biases(std::size_t layer);
  std::span<const double> weights(std::size_t layer) const;
  std::span<const double> biases(std::size_t layer) const;

  ForwardResult forward(const Tensor& input) const;

  // Post-ReLU activations of the feature layer.
  FeatureVector extract_features(const Tensor& input) const;

  // Softmax cross-entropy of the logits against `label`.
  double loss(const Tensor& input, std::size_t label) const;
  Gradients gradients(const Tensor& input, std::size_t label) const;

  std::size_t predict(const Tensor& input) const;

  friend bool operator==(const Network&, const Network&) = default;

 private:
  Shape tail_shape() const noexcept;
  const Layer& parameter_layer(std::size_t index) const;

  Shape input_;
  std::vector<Layer> layers_;
  std::size_t feature_layer_ = static_cast<std::size_t>(-1);
};

// Two conv+relu+maxpool stages, a dense feature layer with ReLU, and a
// dense+softmax classifier head.
Network default_network(const ArchitectureConfig& config, std::uint64_t seed);

struct LabeledImage {
  Tensor image;
  std::size_t label = 0;
};

struct TrainingConfig {
  double learning_rate = 0.05;
  std::size_t epochs = 20;
  std::size_t batch_size = 8;
  std::uint64_t seed = 0;
};

struct TrainResult {
  Network network;
  // Mean dataset loss before training, then after each epoch.
  std::vector<double> loss_history;
};

// Mini-batch SGD on softmax cross-entropy. Throws EmptyGalleryError for an
// empty dataset and LabelError for out-of-range labels or missing classes.
TrainResult train(Network network, std::span<const LabeledImage> dataset,
                  const TrainingConfig& config);

double mean_loss(const Network& network, std::span<const LabeledImage> dataset);
double accuracy(const Network& network, std::span<const LabeledImage> dataset);

}  // namespace emfv
