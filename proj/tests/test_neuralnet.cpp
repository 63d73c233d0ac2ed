#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "emfv/errors.hpp"
#include "emfv/neuralnet.hpp"
#include "emfv/oracle.hpp"

using namespace emfv;

namespace {

Tensor random_tensor(Shape s, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Tensor t(s);
  for (double& v : t.data()) v = u(rng);
  return t;
}

}  // namespace

TEST_CASE("conv output size") {
  CHECK(conv_output_size(32, 5, 2, 1) == 32);
  CHECK(conv_output_size(7, 7, 0, 1) == 1);
  CHECK(conv_output_size(28, 3, 0, 1) == 26);
  CHECK(conv_output_size(7, 3, 0, 2) == 3);
  CHECK_THROWS_AS(conv_output_size(8, 3, 0, 2), LayerShapeError);
  CHECK_THROWS_AS(conv_output_size(4, 7, 1, 1), LayerShapeError);
  CHECK_THROWS_AS(conv_output_size(4, 3, 0, 0), LayerShapeError);
  CHECK_THROWS_AS(conv_output_size(0, 1, 0, 1), LayerShapeError);
  CHECK_THROWS_AS(conv_output_size(4, 0, 0, 1), LayerShapeError);
}

TEST_CASE("relu") {
  CHECK(relu(-3.2) == 0.0);
  CHECK(relu(0.0) == 0.0);
  CHECK(relu(2.5) == 2.5);
  const Tensor t(Shape{1, 1, 3}, {-1.0, 0.0, 4.0});
  const Tensor r = relu(t);
  CHECK(r.shape() == t.shape());
  CHECK(r.data()[0] == 0.0);
  CHECK(r.data()[2] == 4.0);
}

TEST_CASE("maxpool") {
  const Tensor t(Shape{1, 2, 2}, {1, 2, 3, 4});
  const Tensor p = maxpool(t, 2);
  CHECK(p.shape() == Shape{1, 1, 1});
  CHECK(p.data()[0] == 4.0);

  const Tensor c(Shape{2, 4, 4}, 0.7);
  const Tensor pc = maxpool(c, 2);
  for (double v : pc.data()) CHECK(v == 0.7);

  std::mt19937_64 rng(4);
  const Tensor r = random_tensor(Shape{1, 4, 4}, rng);
  const Tensor q = maxpool(r, 2);
  for (std::size_t y = 0; y < 2; ++y) {
    for (std::size_t x = 0; x < 2; ++x) {
      double best = -1.0;
      for (std::size_t dy = 0; dy < 2; ++dy) {
        for (std::size_t dx = 0; dx < 2; ++dx) {
          best = std::max(best, r.at(0, 2 * y + dy, 2 * x + dx));
        }
      }
      CHECK(q.at(0, y, x) == best);
    }
  }
  CHECK_THROWS_AS(maxpool(Tensor(Shape{1, 5, 4}), 2), LayerShapeError);
}

TEST_CASE("softmax") {
  const std::vector<double> zero{0, 0};
  const auto a = softmax(zero);
  CHECK(a[0] == doctest::Approx(0.5));
  CHECK(a[1] == doctest::Approx(0.5));

  const std::vector<double> v{1, 2, 3};
  const auto s = softmax(v);
  const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  CHECK(s[0] == doctest::Approx(std::exp(1.0) / z).epsilon(1e-12));
  CHECK(s[1] == doctest::Approx(std::exp(2.0) / z).epsilon(1e-12));
  CHECK(s[2] == doctest::Approx(std::exp(3.0) / z).epsilon(1e-12));
  CHECK(s[0] == doctest::Approx(0.0900).epsilon(1e-3));
  CHECK(s[2] == doctest::Approx(0.6652).epsilon(1e-3));

  const std::vector<double> shifted{1001, 1002, 1003};
  const auto t = softmax(shifted);
  double sum = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(std::fabs(t[i] - s[i]) < 1e-9);
    sum += t[i];
  }
  CHECK(std::fabs(sum - 1.0) < 1e-9);
}

TEST_CASE("builder checks that shapes compose") {
  CHECK_THROWS_AS(Network(Shape{1, 5, 5}).maxpool(2), LayerShapeError);
  CHECK_THROWS_AS(Network(Shape{1, 4, 4}).conv(2, 3, 0, 2), LayerShapeError);
  Network ok(Shape{1, 8, 8});
  ok.conv(2, 3, 1, 1).relu().maxpool(2).dense(5).relu().dense(3).softmax();
  CHECK(ok.output_shape() == Shape{3, 1, 1});
  CHECK(ok.feature_layer_index() == 3);
  CHECK(ok.feature_dimension() == 5);
  CHECK(ok.num_classes() == 3);
  CHECK_THROWS_AS(ok.set_feature_layer(0), LayerShapeError);
  CHECK_THROWS_AS(ok.forward(Tensor(Shape{1, 4, 4})), LayerShapeError);
}

TEST_CASE("zero-weight network gives zero logits") {
  Network net(Shape{1, 4, 4});
  net.conv(2, 3, 1, 1).relu().dense(3).softmax();
  std::mt19937_64 rng(1);
  const auto r = net.forward(random_tensor(Shape{1, 4, 4}, rng));
  for (double v : r.logits) CHECK(v == 0.0);
}

TEST_CASE("identity dense layer passes the input through") {
  Network net(Shape{1, 1, 3});
  net.dense(3);
  auto w = net.weights(0);
  for (std::size_t i = 0; i < 3; ++i) w[i * 3 + i] = 1.0;
  const Tensor x(Shape{1, 1, 3}, {0.25, -1.5, 3.0});
  const auto r = net.forward(x);
  CHECK(r.logits == std::vector<double>{0.25, -1.5, 3.0});
}

TEST_CASE("seeded two-layer net matches a loop-free reimplementation") {
  Network net(Shape{1, 1, 3});
  net.dense(2).relu().dense(2);
  net.initialize(17);
  const auto w1 = net.weights(0);
  const auto b1 = net.biases(0);
  const auto w2 = net.weights(2);
  const auto b2 = net.biases(2);
  const double x0 = 0.3, x1 = 0.9, x2 = 0.1;
  const double h0 = std::max(0.0, b1[0] + w1[0] * x0 + w1[1] * x1 + w1[2] * x2);
  const double h1 = std::max(0.0, b1[1] + w1[3] * x0 + w1[4] * x1 + w1[5] * x2);
  const double l0 = b2[0] + w2[0] * h0 + w2[1] * h1;
  const double l1 = b2[1] + w2[2] * h0 + w2[3] * h1;
  const auto r = net.forward(Tensor(Shape{1, 1, 3}, {x0, x1, x2}));
  CHECK(r.logits[0] == doctest::Approx(l0).epsilon(1e-14));
  CHECK(r.logits[1] == doctest::Approx(l1).epsilon(1e-14));
  CHECK(r.activations.size() == 3);
}

TEST_CASE("conv forward matches a direct sum") {
  Network net(Shape{2, 4, 4});
  net.conv(3, 3, 1, 1);
  net.initialize(5);
  std::mt19937_64 rng(6);
  const Tensor x = random_tensor(Shape{2, 4, 4}, rng);
  const auto out = net.forward(x).activations[0];
  const auto w = net.weights(0);
  const auto b = net.biases(0);
  for (std::size_t o = 0; o < 3; ++o) {
    for (std::size_t y = 0; y < 4; ++y) {
      for (std::size_t xx = 0; xx < 4; ++xx) {
        double s = b[o];
        for (std::size_t c = 0; c < 2; ++c) {
          for (std::size_t ky = 0; ky < 3; ++ky) {
            for (std::size_t kx = 0; kx < 3; ++kx) {
              const long iy = static_cast<long>(y + ky) - 1;
              const long ix = static_cast<long>(xx + kx) - 1;
              if (iy < 0 || ix < 0 || iy >= 4 || ix >= 4) continue;
              s += w[((o * 2 + c) * 3 + ky) * 3 + kx] *
                   x.at(c, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix));
            }
          }
        }
        CHECK(out.at(o, y, xx) == doctest::Approx(s).epsilon(1e-13));
      }
    }
  }
}

TEST_CASE("extract features") {
  ArchitectureConfig cfg;
  cfg.image_side = 16;
  cfg.feature_dimension = 8;
  Network net = default_network(cfg, 3);
  std::mt19937_64 rng(7);
  for (int t = 0; t < 10; ++t) {
    const Tensor x = random_tensor(Shape{1, 16, 16}, rng);
    const FeatureVector f = net.extract_features(x);
    CHECK(f.dimension() == 8);
    for (double v : f.values()) CHECK(v >= 0.0);
    CHECK(net.extract_features(x) == f);
  }
}

TEST_CASE("default architecture reduces dimensionality") {
  const Network net = default_network(ArchitectureConfig{}, 1);
  CHECK(net.input_shape().size() > net.feature_dimension());
  CHECK(net.feature_dimension() == 256);
  CHECK(net.has_softmax_head());
}

TEST_CASE("initialization range") {
  Network net = default_network(ArchitectureConfig{}, 9);
  for (std::size_t i = 0; i < net.layers().size(); ++i) {
    if (!net.layers()[i].has_parameters()) continue;
    for (double w : net.weights(i)) CHECK(std::fabs(w) <= 0.1);
    for (double b : net.biases(i)) CHECK(b == 0.0);
  }
  CHECK(default_network(ArchitectureConfig{}, 9) == net);
}

namespace {

std::vector<LabeledImage> separable_points(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<LabeledImage> out;
  while (out.size() < n) {
    const double x = u(rng), y = u(rng);
    if (std::fabs(x + y - 1.0) < 0.1) continue;
    out.push_back({Tensor(Shape{1, 1, 2}, {x, y}), x + y > 1.0 ? 1u : 0u});
  }
  return out;
}

}  // namespace

TEST_CASE("training on a separable 2-D fixture") {
  Network net(Shape{1, 1, 2});
  net.dense(8).relu().dense(2).softmax();
  net.initialize(1);
  const auto data = separable_points(200, 2);
  TrainingConfig cfg;
  cfg.learning_rate = 0.5;
  cfg.epochs = 200;
  cfg.batch_size = 8;
  cfg.seed = 3;
  const auto r = train(net, data, cfg);
  // Accuracy by direct evaluation, not through the library helper.
  std::size_t right = 0;
  for (const auto& s : data) {
    const auto logits = r.network.forward(s.image).logits;
    const std::size_t pred = logits[1] > logits[0] ? 1 : 0;
    right += pred == s.label ? 1 : 0;
  }
  CHECK(static_cast<double>(right) / 200.0 >= 0.99);
  CHECK(r.loss_history.size() == 201);
  CHECK(r.loss_history.back() < r.loss_history.front());
  CHECK(train(net, data, cfg).network == r.network);
}

TEST_CASE("zero learning rate changes nothing") {
  Network net(Shape{1, 1, 2});
  net.dense(4).relu().dense(2).softmax();
  net.initialize(4);
  const auto data = separable_points(40, 5);
  TrainingConfig cfg;
  cfg.learning_rate = 0.0;
  cfg.epochs = 3;
  const auto r = train(net, data, cfg);
  CHECK(r.network == net);
  for (double l : r.loss_history) CHECK(l == r.loss_history.front());
}

TEST_CASE("training input errors") {
  Network net(Shape{1, 1, 2});
  net.dense(4).relu().dense(2).softmax();
  net.initialize(4);
  CHECK_THROWS_AS(train(net, std::vector<LabeledImage>{}, {}), EmptyGalleryError);
  std::vector<LabeledImage> bad{{Tensor(Shape{1, 1, 2}, {0.1, 0.2}), 0},
                                {Tensor(Shape{1, 1, 2}, {0.1, 0.2}), 5}};
  CHECK_THROWS_AS(train(net, bad, {}), LabelError);
}

TEST_CASE("finite differences: zero-weight net, symmetric input") {
  Network net(Shape{1, 1, 4});
  net.dense(3).softmax();
  const Tensor x(Shape{1, 1, 4}, {0.5, 0.5, 0.5, 0.5});
  const auto analytic = net.gradients(x, 1);
  const auto numeric = oracle::finite_difference_gradient(net, x, 1, 1e-5);
  CHECK(oracle::compare_gradients(analytic, numeric).max_relative_error < 1e-4);
}

TEST_CASE("finite differences: dead weight has zero gradient") {
  Network net(Shape{1, 1, 3});
  net.dense(2).relu().dense(2).softmax();
  net.initialize(8);
  net.biases(0)[0] = -10.0;  // unit 0 never fires for inputs in [0, 1]
  const Tensor x(Shape{1, 1, 3}, {0.2, 0.4, 0.6});
  const auto numeric = oracle::finite_difference_gradient(net, x, 0, 1e-5);
  const auto analytic = net.gradients(x, 0);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(std::fabs(numeric.weights[0][i]) <= 1e-8);
    CHECK(analytic.weights[0][i] == 0.0);
  }
}

TEST_CASE("finite differences converge as epsilon shrinks") {
  Network net(Shape{1, 1, 5});
  net.dense(4).softmax();
  net.initialize(12);
  const Tensor x(Shape{1, 1, 5}, {0.9, 0.1, 0.4, 0.7, 0.3});
  const auto analytic = net.gradients(x, 2);
  auto max_diff = [&](double eps) {
    const auto n = oracle::finite_difference_gradient(net, x, 2, eps);
    double m = 0.0;
    for (std::size_t i = 0; i < n.weights[0].size(); ++i) {
      m = std::max(m, std::fabs(n.weights[0][i] - analytic.weights[0][i]));
    }
    return m;
  };
  CHECK(max_diff(5e-4) < max_diff(1e-3));
  CHECK_THROWS_AS(oracle::finite_difference_gradient(net, x, 2, 1.0),
                  InvalidArgumentError);
}
