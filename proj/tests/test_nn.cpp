#include <cmath>
#include <functional>
#include <random>

#include <gtest/gtest.h>

#include "infocluster/nn/layers.hpp"
#include "infocluster/nn/losses.hpp"
#include "infocluster/nn/optim.hpp"

using namespace infocluster;
using namespace infocluster::nn;
using Md = Matrix<double>;

namespace {

Activation<double> random_activation(std::mt19937_64& rng, int batch, int channels, int h, int w) {
  std::normal_distribution<double> n(0, 1);
  Activation<double> a;
  a.batch = batch;
  a.channels = channels;
  a.height = h;
  a.width = w;
  a.data.resize(channels, static_cast<Eigen::Index>(batch) * h * w);
  for (Eigen::Index i = 0; i < a.data.size(); ++i) a.data.data()[i] = n(rng);
  return a;
}

double value_at(const Activation<double>& a, int c, int n, int y, int x) {
  return a.data(c, (static_cast<Eigen::Index>(n) * a.height + y) * a.width + x);
}

// Checks input and parameter gradients of L = Σ r ⊙ layer(x) against central
// differences.
void check_layer(Layer<double>& layer, Activation<double> x, std::mt19937_64& rng, double tol = 1e-6) {
  const auto y = layer.forward(x);
  std::normal_distribution<double> n(0, 1);
  Md r(y.data.rows(), y.data.cols());
  for (Eigen::Index i = 0; i < r.size(); ++i) r.data()[i] = n(rng);
  auto loss = [&] { return (layer.forward(x).data.array() * r.array()).sum(); };

  for (auto* p : layer.parameters()) p->zero_grad();
  layer.forward(x);
  Activation<double> dy = y;
  dy.data = r;
  const auto dx = layer.backward(dy, true, true);

  const double h = 1e-6;
  for (Eigen::Index i = 0; i < x.data.size(); ++i) {
    const double keep = x.data.data()[i];
    x.data.data()[i] = keep + h;
    const double up = loss();
    x.data.data()[i] = keep - h;
    const double down = loss();
    x.data.data()[i] = keep;
    EXPECT_NEAR(dx.data.data()[i], (up - down) / (2 * h), tol) << "input " << i;
  }
  for (auto* p : layer.parameters()) {
    for (Eigen::Index i = 0; i < p->value.size(); ++i) {
      const double keep = p->value.data()[i];
      p->value.data()[i] = keep + h;
      const double up = loss();
      p->value.data()[i] = keep - h;
      const double down = loss();
      p->value.data()[i] = keep;
      EXPECT_NEAR(p->grad.data()[i], (up - down) / (2 * h), tol) << p->name << " " << i;
    }
  }
}

void randomize(Layer<double>& layer, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0, 0.5);
  for (auto* p : layer.parameters())
    for (Eigen::Index i = 0; i < p->value.size(); ++i) p->value.data()[i] = n(rng);
}

}  // namespace

TEST(ConvGeometry, HalvesWithK4S2P1) {
  const auto g = conv_geometry(3, 32, 64, 4, 2, 1);
  EXPECT_EQ(g.out_h, 16);
  EXPECT_EQ(g.out_w, 32);
}

TEST(Im2Col, Col2ImIsTheAdjoint) {
  std::mt19937_64 rng(1);
  const auto g = conv_geometry(2, 6, 8, 4, 2, 1);
  const auto x = random_activation(rng, 3, 2, 6, 8);
  Md cols;
  im2col(x.data.data(), g, 3, cols);
  Md r = Md::Random(cols.rows(), cols.cols());
  Md back(2, 3 * 6 * 8);
  col2im(r, g, 3, back.data());
  // <im2col(x), r> == <x, col2im(r)>
  EXPECT_NEAR((cols.array() * r.array()).sum(), (x.data.array() * back.array()).sum(), 1e-10);
}

TEST(Conv2d, MatchesDirectConvolution) {
  std::mt19937_64 rng(2);
  Conv2d<double> conv("c", 2, 3, rng);
  randomize(conv, rng);
  const auto x = random_activation(rng, 2, 2, 6, 8);
  const auto y = conv.forward(x);
  ASSERT_EQ(y.height, 3);
  ASSERT_EQ(y.width, 4);
  const auto& w = conv.parameters()[0]->value;
  const auto& b = conv.parameters()[1]->value;
  for (int n = 0; n < 2; ++n)
    for (int o = 0; o < 3; ++o)
      for (int oy = 0; oy < 3; ++oy)
        for (int ox = 0; ox < 4; ++ox) {
          double s = b(o, 0);
          for (int c = 0; c < 2; ++c)
            for (int ky = 0; ky < 4; ++ky)
              for (int kx = 0; kx < 4; ++kx) {
                const int iy = oy * 2 - 1 + ky, ix = ox * 2 - 1 + kx;
                if (iy < 0 || iy >= 6 || ix < 0 || ix >= 8) continue;
                s += w(o, (c * 4 + ky) * 4 + kx) * value_at(x, c, n, iy, ix);
              }
          EXPECT_NEAR(value_at(y, o, n, oy, ox), s, 1e-12);
        }
}

TEST(ConvTranspose2d, MatchesDirectScatter) {
  std::mt19937_64 rng(3);
  ConvTranspose2d<double> up("u", 3, 2, rng);
  randomize(up, rng);
  const auto x = random_activation(rng, 2, 3, 2, 3);
  const auto y = up.forward(x);
  ASSERT_EQ(y.height, 4);
  ASSERT_EQ(y.width, 6);
  const auto& w = up.parameters()[0]->value;
  const auto& b = up.parameters()[1]->value;
  std::vector<double> expect(2 * 2 * 4 * 6, 0.0);
  auto at = [&](int o, int n, int yy, int xx) -> double& { return expect[((o * 2 + n) * 4 + yy) * 6 + xx]; };
  for (int o = 0; o < 2; ++o)
    for (int n = 0; n < 2; ++n)
      for (int yy = 0; yy < 4; ++yy)
        for (int xx = 0; xx < 6; ++xx) at(o, n, yy, xx) = b(o, 0);
  for (int i = 0; i < 3; ++i)
    for (int n = 0; n < 2; ++n)
      for (int iy = 0; iy < 2; ++iy)
        for (int ix = 0; ix < 3; ++ix)
          for (int o = 0; o < 2; ++o)
            for (int ky = 0; ky < 4; ++ky)
              for (int kx = 0; kx < 4; ++kx) {
                const int yy = iy * 2 - 1 + ky, xx = ix * 2 - 1 + kx;
                if (yy < 0 || yy >= 4 || xx < 0 || xx >= 6) continue;
                at(o, n, yy, xx) += w(i, (o * 4 + ky) * 4 + kx) * value_at(x, i, n, iy, ix);
              }
  for (int o = 0; o < 2; ++o)
    for (int n = 0; n < 2; ++n)
      for (int yy = 0; yy < 4; ++yy)
        for (int xx = 0; xx < 6; ++xx) EXPECT_NEAR(value_at(y, o, n, yy, xx), at(o, n, yy, xx), 1e-12);
}

TEST(Gradients, Linear) {
  std::mt19937_64 rng(4);
  Linear<double> layer("l", 5, 3, rng);
  randomize(layer, rng);
  check_layer(layer, random_activation(rng, 4, 5, 1, 1), rng);
}

TEST(Gradients, Conv2d) {
  std::mt19937_64 rng(5);
  Conv2d<double> layer("c", 2, 3, rng);
  randomize(layer, rng);
  check_layer(layer, random_activation(rng, 2, 2, 4, 6), rng);
}

TEST(Gradients, ConvTranspose2d) {
  std::mt19937_64 rng(6);
  ConvTranspose2d<double> layer("u", 3, 2, rng);
  randomize(layer, rng);
  check_layer(layer, random_activation(rng, 2, 3, 2, 3), rng);
}

TEST(Gradients, BatchNormTraining) {
  std::mt19937_64 rng(7);
  BatchNorm<double> layer("bn", 3, rng);
  randomize(layer, rng);
  check_layer(layer, random_activation(rng, 4, 3, 2, 2), rng, 1e-5);
}

TEST(Gradients, PointwiseActivations) {
  std::mt19937_64 rng(8);
  LeakyRelu<double> leaky(0.1);
  Relu<double> relu;
  Tanh<double> tanh_layer;
  check_layer(leaky, random_activation(rng, 3, 2, 2, 2), rng);
  check_layer(relu, random_activation(rng, 3, 2, 2, 2), rng);
  check_layer(tanh_layer, random_activation(rng, 3, 2, 2, 2), rng);
}

TEST(BatchNorm, EvalModeUsesRunningStatistics) {
  std::mt19937_64 rng(9);
  BatchNorm<double> bn("bn", 2, rng);
  auto x = random_activation(rng, 8, 2, 2, 2);
  x.data.array() = x.data.array() * 3.0 + 5.0;
  bn.forward(x);
  const auto buffers = bn.buffers();
  ASSERT_EQ(buffers.size(), 2u);
  // One update with momentum 0.1 from (0, 1).
  for (int c = 0; c < 2; ++c) {
    const double mean = x.data.row(c).mean();
    const double var = (x.data.row(c).array() - mean).square().sum() / (x.data.cols() - 1);
    EXPECT_NEAR((*buffers[0].value)(c, 0), 0.1 * mean, 1e-12);
    EXPECT_NEAR((*buffers[1].value)(c, 0), 0.9 + 0.1 * var, 1e-9);
  }
  bn.set_training(false);
  const auto a = bn.forward(x);
  const auto b = bn.forward(x);
  EXPECT_EQ(a.data, b.data);
}

TEST(Sequential, FlattenUnflattenRoundTrip) {
  std::mt19937_64 rng(10);
  const auto x = random_activation(rng, 3, 2, 2, 4);
  const auto f = flatten(x);
  EXPECT_EQ(f.channels, 16);
  EXPECT_EQ(f.batch, 3);
  const auto back = unflatten(f, 2, 2, 4);
  EXPECT_EQ(back.data, x.data);
}

TEST(Sequential, GradientThroughStack) {
  std::mt19937_64 rng(11);
  Sequential<double> net;
  net.add<Conv2d<double>>("c0", 2, 4, rng);
  net.add<LeakyRelu<double>>(0.2);
  net.add<Flatten<double>>();
  net.add<Linear<double>>("fc", 4 * 2 * 3, 2, rng);
  for (auto* p : net.parameters())
    for (Eigen::Index i = 0; i < p->value.size(); ++i) p->value.data()[i] = std::normal_distribution<double>(0, 0.5)(rng);
  auto x = random_activation(rng, 2, 2, 4, 6);
  Md r = Md::Random(2, 2);
  auto loss = [&] { return (net.forward(x).data.array() * r.array()).sum(); };
  zero_grads(net.parameters());
  net.forward(x);
  net.backward(make_flat(r), true, false);
  const double h = 1e-6;
  for (auto* p : net.parameters())
    for (Eigen::Index i = 0; i < p->value.size(); i += 3) {
      const double keep = p->value.data()[i];
      p->value.data()[i] = keep + h;
      const double up = loss();
      p->value.data()[i] = keep - h;
      const double down = loss();
      p->value.data()[i] = keep;
      EXPECT_NEAR(p->grad.data()[i], (up - down) / (2 * h), 1e-6) << p->name;
    }
  EXPECT_EQ(parameter_count(net.parameters()), static_cast<size_t>(4 * 2 * 16 + 4 + 2 * 24 + 2));
}

TEST(Adam, FirstStepMovesByLearningRate) {
  // With bias correction the first step is lr · g/|g| per coordinate.
  Parameter<double> p{"p", Md::Constant(1, 3, 1.0), Md::Zero(1, 3)};
  p.grad << 0.5, -2.0, 1e-3;
  Adam<double> opt({&p}, {0.1, 0.5, 0.999, 1e-12});
  opt.step();
  EXPECT_NEAR(p.value(0, 0), 0.9, 1e-9);
  EXPECT_NEAR(p.value(0, 1), 1.1, 1e-9);
  EXPECT_NEAR(p.value(0, 2), 0.9, 1e-6);
  EXPECT_EQ(opt.steps(), 1);
}

TEST(Adam, SecondStepMatchesHandComputation) {
  Parameter<double> p{"p", Md::Constant(1, 1, 0.0), Md::Zero(1, 1)};
  Adam<double> opt({&p}, {0.01, 0.5, 0.999, 1e-8});
  p.grad(0, 0) = 1.0;
  opt.step();
  p.grad(0, 0) = 3.0;
  opt.step();
  const double m = 0.5 * 0.5 * 1.0 + 0.5 * 3.0;                // 1.75
  const double v = 0.999 * 0.001 * 1.0 + 0.001 * 9.0;          // 0.009999
  const double m_hat = m / (1 - 0.25), v_hat = v / (1 - 0.999 * 0.999);
  const double first = -0.01 * 1.0 / (1.0 + 1e-8);  // m_hat = v_hat = 1 after one step
  const double expected = first - 0.01 * m_hat / (std::sqrt(v_hat) + 1e-8);
  EXPECT_NEAR(p.value(0, 0), expected, 1e-10);
}

TEST(Losses, SoftplusIsStable) {
  EXPECT_NEAR(softplus(0.0), std::log(2.0), 1e-15);
  EXPECT_NEAR(softplus(1000.0), 1000.0, 1e-12);
  EXPECT_NEAR(softplus(-1000.0), 0.0, 1e-300);
  EXPECT_TRUE(std::isfinite(softplus(-1e6)));
}

TEST(Losses, CrossEntropyHandValues) {
  Md logits(3, 2);
  logits << 0, 1, 0, 2, 0, 3;
  const double l0 = std::log(3.0);
  const double l1 = std::log(std::exp(1) + std::exp(2) + std::exp(3)) - 3;
  Md grad;
  EXPECT_NEAR(softmax_cross_entropy(logits, {1, 2}, &grad), (l0 + l1) / 2, 1e-12);
  EXPECT_NEAR(grad(1, 0), (1.0 / 3 - 1) / 2, 1e-12);
  EXPECT_NEAR(grad.colwise().sum().cwiseAbs().maxCoeff(), 0.0, 1e-15);
}

TEST(Losses, SoftmaxColumnsAreDistributions) {
  Md logits = Md::Random(5, 7) * 50.0;
  const auto p = softmax_columns(logits);
  for (Eigen::Index j = 0; j < 7; ++j) EXPECT_NEAR(p.col(j).sum(), 1.0, 1e-12);
  EXPECT_GE(p.minCoeff(), 0.0);
}
