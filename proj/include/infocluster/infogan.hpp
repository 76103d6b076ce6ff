#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "infocluster/error.hpp"
#include "infocluster/image.hpp"
#include "infocluster/nn/layers.hpp"
#include "infocluster/nn/losses.hpp"

namespace infocluster {

using nn::Activation;
using nn::Matrix;

/// Generator input layout: categorical code, continuous code, incompressible noise.
struct LatentSpec {
  int k_dis = 25;
  int n_con = 2;
  int n_noise = 70;

  int total() const noexcept { return k_dis + n_con + n_noise; }
  friend bool operator==(const LatentSpec&, const LatentSpec&) = default;
};

inline void validate(const LatentSpec& spec) {
  if (spec.k_dis < 2) throw Error(ErrorCode::ConfigError, "latent.k_dis: must be >= 2");
  if (spec.n_con < 0) throw Error(ErrorCode::ConfigError, "latent.n_con: must be >= 0");
  if (spec.n_noise < 1) throw Error(ErrorCode::ConfigError, "latent.n_noise: must be >= 1");
}

struct LatentCode {
  std::vector<double> c_dis;  // one-hot
  std::vector<double> c_con;  // in [-1, 1]
  std::vector<double> z_rnd;
};

/// A batch of latent codes stored column-per-sample.
template <typename T>
struct LatentBatch {
  std::vector<int> category;
  Matrix<T> c_dis;  // k_dis × n
  Matrix<T> c_con;  // n_con × n
  Matrix<T> z_rnd;  // n_noise × n

  int size() const noexcept { return static_cast<int>(category.size()); }

  Matrix<T> stacked() const {
    Matrix<T> out(c_dis.rows() + c_con.rows() + z_rnd.rows(), c_dis.cols());
    out << c_dis, c_con, z_rnd;
    return out;
  }

  LatentCode code(int i) const {
    LatentCode c;
    for (Eigen::Index r = 0; r < c_dis.rows(); ++r) c.c_dis.push_back(c_dis(r, i));
    for (Eigen::Index r = 0; r < c_con.rows(); ++r) c.c_con.push_back(c_con(r, i));
    for (Eigen::Index r = 0; r < z_rnd.rows(); ++r) c.z_rnd.push_back(z_rnd(r, i));
    return c;
  }

  static LatentBatch zeros(int n, const LatentSpec& spec) {
    LatentBatch b;
    b.category.assign(n, 0);
    b.c_dis = Matrix<T>::Zero(spec.k_dis, n);
    b.c_con = Matrix<T>::Zero(spec.n_con, n);
    b.z_rnd = Matrix<T>::Zero(spec.n_noise, n);
    return b;
  }

  void set_category(int i, int k) {
    category[i] = k;
    c_dis.col(i).setZero();
    c_dis(k, i) = T(1);
  }
};

/// c_dis uniform categorical, c_con ~ U(-1, 1), z_rnd ~ N(0, 1); drawn
/// sample by sample so a batch is a prefix-stable function of the rng state.
template <typename T>
LatentBatch<T> sample_latent(int n, const LatentSpec& spec, std::mt19937_64& rng) {
  if (n < 1) throw Error(ErrorCode::ConfigError, "sample_latent: batch size must be >= 1");
  validate(spec);
  auto batch = LatentBatch<T>::zeros(n, spec);
  std::uniform_int_distribution<int> cat(0, spec.k_dis - 1);
  std::uniform_real_distribution<double> con(-1.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (int i = 0; i < n; ++i) {
    batch.set_category(i, cat(rng));
    for (int d = 0; d < spec.n_con; ++d) batch.c_con(d, i) = static_cast<T>(con(rng));
    for (int d = 0; d < spec.n_noise; ++d) batch.z_rnd(d, i) = static_cast<T>(noise(rng));
  }
  return batch;
}

// ---------------------------------------------------------------------------
// Configuration

struct TrainConfig {
  double lambda = 1.0;
  double lr_d = 2e-4;
  double lr_gq = 2e-3;
  int batch = 100;
  int epochs = 200;
  double leak = 0.1;
  uint64_t seed = 0;
  Size2 image_size{32, 64};
  double beta1 = 0.5;
  double beta2 = 0.999;
  int width = 64;  // trunk width of the first convolution
  int depth = 4;   // stride-2 stages in trunk and generator
  int sample_every = 10;
  // When set, the discriminator step also minimises λ·(cat + con) on the fake
  // half through the shared trunk and the Q head. Off: the trunk follows the
  // discriminator loss only and Q trains alongside G.
  bool info_updates_trunk = false;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

inline void validate(const TrainConfig& cfg) {
  auto fail = [](const std::string& field, const std::string& why) {
    throw Error(ErrorCode::ConfigError, "train." + field + ": " + why);
  };
  if (!(cfg.lr_d > 0)) fail("lr_d", "must be > 0");
  if (!(cfg.lr_gq > 0)) fail("lr_gq", "must be > 0");
  if (cfg.batch < 2) fail("batch", "must be >= 2");
  if (cfg.epochs < 0) fail("epochs", "must be >= 0");
  if (!(cfg.lambda >= 0)) fail("lambda", "must be >= 0");
  if (!(cfg.leak >= 0 && cfg.leak < 1)) fail("leak", "must be in [0, 1)");
  if (cfg.width < 1) fail("width", "must be >= 1");
  if (cfg.depth < 1) fail("depth", "must be >= 1");
  const int scale = 1 << cfg.depth;
  if (cfg.image_size.height % scale != 0 || cfg.image_size.width % scale != 0 ||
      cfg.image_size.height < scale || cfg.image_size.width < scale)
    fail("image_size", "must be a positive multiple of 2^depth in both dimensions");
}

// ---------------------------------------------------------------------------
// Networks

template <typename T>
struct DiscOutput {
  Matrix<T> real_logit;  // 1 × n
  Matrix<T> q_logits;    // k_dis × n
  Matrix<T> q_con_mean;  // n_con × n
};

/// G, and D/Q sharing one convolutional trunk. `d_parameters()` and
/// `q_parameters()` return pointers into the same trunk tensors.
template <typename T>
class InfoGanModel {
 public:
  InfoGanModel(const LatentSpec& latent, const TrainConfig& cfg, std::mt19937_64& rng)
      : latent_(latent), cfg_(cfg) {
    validate(latent);
    validate(cfg);
    const int depth = cfg.depth;
    base_h_ = cfg.image_size.height >> depth;
    base_w_ = cfg.image_size.width >> depth;
    const int top = cfg.width << (depth - 1);

    // Generator: projection, then up-convolutions halving channels.
    generator_.template add<nn::Linear<T>>("g.fc", latent.total(), top * base_h_ * base_w_, rng);
    generator_.template add<nn::Unflatten<T>>(top, base_h_, base_w_);
    generator_.template add<nn::BatchNorm<T>>("g.bn0", top, rng);
    generator_.template add<nn::Relu<T>>();
    int channels = top;
    for (int i = 1; i < depth; ++i) {
      generator_.template add<nn::ConvTranspose2d<T>>("g.up" + std::to_string(i), channels,
                                                      channels / 2, rng);
      generator_.template add<nn::BatchNorm<T>>("g.bn" + std::to_string(i), channels / 2, rng);
      generator_.template add<nn::Relu<T>>();
      channels /= 2;
    }
    generator_.template add<nn::ConvTranspose2d<T>>("g.up" + std::to_string(depth), channels, 3,
                                                    rng);
    generator_.template add<nn::Tanh<T>>();

    // Shared trunk: stride-2 convolutions doubling channels.
    channels = 3;
    for (int i = 0; i < depth; ++i) {
      const int out = cfg.width << i;
      trunk_.template add<nn::Conv2d<T>>("trunk.conv" + std::to_string(i), channels, out, rng);
      trunk_.template add<nn::LeakyRelu<T>>(cfg.leak);
      channels = out;
    }
    trunk_.template add<nn::Flatten<T>>();
    features_ = top * base_h_ * base_w_;
    d_head_ = std::make_unique<nn::Linear<T>>("d.head", features_, 1, rng);
    q_head_ = std::make_unique<nn::Linear<T>>("q.head", features_, latent.k_dis + latent.n_con, rng);
  }

  const LatentSpec& latent() const noexcept { return latent_; }
  const TrainConfig& config() const noexcept { return cfg_; }
  Size2 image_size() const noexcept { return cfg_.image_size; }

  void set_training(bool training) {
    generator_.set_training(training);
    trunk_.set_training(training);
  }

  /// Sign pattern of every rectifier input from the most recent forward passes.
  std::vector<char> activation_pattern() const {
    std::vector<char> out;
    generator_.activation_pattern(out);
    trunk_.activation_pattern(out);
    return out;
  }

  /// (3, n·H·W) images in (-1, 1).
  Activation<T> generate(const LatentBatch<T>& z) {
    if (z.c_dis.rows() != latent_.k_dis || z.c_con.rows() != latent_.n_con ||
        z.z_rnd.rows() != latent_.n_noise)
      throw Error(ErrorCode::ShapeMismatch, "generator: latent dimensions do not match LatentSpec");
    return generator_.forward(nn::make_flat(z.stacked()));
  }

  void generator_backward(const Activation<T>& d_images) {
    generator_.backward(d_images, true, false);
  }

  DiscOutput<T> discriminate(const Activation<T>& x) {
    const auto size = cfg_.image_size;
    if (x.channels != 3 || x.height != size.height || x.width != size.width)
      throw Error(ErrorCode::ShapeMismatch,
                  "discriminator: expected (n, 3, " + std::to_string(size.height) + ", " +
                      std::to_string(size.width) + "), got (" + std::to_string(x.batch) + ", " +
                      std::to_string(x.channels) + ", " + std::to_string(x.height) + ", " +
                      std::to_string(x.width) + ")");
    auto features = trunk_.forward(x);
    DiscOutput<T> out;
    out.real_logit = d_head_->forward(features).data;
    Matrix<T> q = q_head_->forward(features).data;
    out.q_logits = q.topRows(latent_.k_dis);
    out.q_con_mean = q.bottomRows(latent_.n_con);
    return out;
  }

  struct BackwardFlags {
    bool trunk = true;
    bool d_head = true;
    bool q_head = true;
    bool input = false;
  };

  /// Back-propagates head gradients (either may be empty) through the trunk.
  Activation<T> discriminate_backward(const Matrix<T>& d_real_logit, const Matrix<T>& d_q_logits,
                                      const Matrix<T>& d_q_con, BackwardFlags flags) {
    Matrix<T> d_features;
    auto accumulate = [&](const Matrix<T>& g) {
      if (d_features.size() == 0)
        d_features = g;
      else
        d_features += g;
    };
    if (d_real_logit.size() > 0)
      accumulate(d_head_->backward(nn::make_flat(d_real_logit), flags.d_head, true).data);
    if (d_q_logits.size() > 0 || d_q_con.size() > 0) {
      const auto n = d_q_logits.size() > 0 ? d_q_logits.cols() : d_q_con.cols();
      Matrix<T> dq = Matrix<T>::Zero(latent_.k_dis + latent_.n_con, n);
      if (d_q_logits.size() > 0) dq.topRows(latent_.k_dis) = d_q_logits;
      if (d_q_con.size() > 0) dq.bottomRows(latent_.n_con) = d_q_con;
      accumulate(q_head_->backward(nn::make_flat(dq), flags.q_head, true).data);
    }
    return trunk_.backward(nn::make_flat(std::move(d_features)), flags.trunk, flags.input);
  }

  std::vector<nn::Parameter<T>*> g_parameters() { return generator_.parameters(); }
  std::vector<nn::Parameter<T>*> trunk_parameters() { return trunk_.parameters(); }
  std::vector<nn::Parameter<T>*> d_head_parameters() { return d_head_->parameters(); }
  std::vector<nn::Parameter<T>*> q_head_parameters() { return q_head_->parameters(); }

  std::vector<nn::Parameter<T>*> d_parameters() {
    auto p = trunk_.parameters();
    for (auto* h : d_head_->parameters()) p.push_back(h);
    return p;
  }

  std::vector<nn::Parameter<T>*> q_parameters() {
    auto p = trunk_.parameters();
    for (auto* h : q_head_->parameters()) p.push_back(h);
    return p;
  }

  /// Every distinct trainable tensor, in checkpoint order.
  std::vector<nn::Parameter<T>*> all_parameters() {
    auto p = generator_.parameters();
    for (auto* t : d_parameters()) p.push_back(t);
    for (auto* h : q_head_->parameters()) p.push_back(h);
    return p;
  }

  std::vector<nn::Buffer<T>> buffers() {
    auto b = generator_.buffers();
    for (auto& t : trunk_.buffers()) b.push_back(t);
    return b;
  }

 private:
  LatentSpec latent_;
  TrainConfig cfg_;
  int base_h_ = 0, base_w_ = 0, features_ = 0;
  nn::Sequential<T> generator_;
  nn::Sequential<T> trunk_;
  std::unique_ptr<nn::Linear<T>> d_head_, q_head_;
};

// ---------------------------------------------------------------------------
// Losses

template <typename T>
struct DiscriminatorLoss {
  T value = 0;
  Matrix<T> d_real;  // dL/d real_logit
  Matrix<T> d_fake;
};

/// mean BCE(real → 1) + mean BCE(fake → 0), on logits.
template <typename T>
DiscriminatorLoss<T> loss_discriminator(const Matrix<T>& real_logits, const Matrix<T>& fake_logits) {
  DiscriminatorLoss<T> out;
  const auto nr = static_cast<T>(real_logits.size()), nf = static_cast<T>(fake_logits.size());
  T real_term = 0, fake_term = 0;
  out.d_real.resize(real_logits.rows(), real_logits.cols());
  out.d_fake.resize(fake_logits.rows(), fake_logits.cols());
  for (Eigen::Index i = 0; i < real_logits.size(); ++i) {
    const T x = real_logits.data()[i];
    real_term += nn::softplus(-x);
    out.d_real.data()[i] = -nn::sigmoid(-x) / nr;
  }
  for (Eigen::Index i = 0; i < fake_logits.size(); ++i) {
    const T x = fake_logits.data()[i];
    fake_term += nn::softplus(x);
    out.d_fake.data()[i] = nn::sigmoid(x) / nf;
  }
  out.value = real_term / nr + fake_term / nf;
  if (!std::isfinite(out.value))
    throw Error(ErrorCode::NonFiniteLoss, "discriminator loss is not finite");
  return out;
}

template <typename T>
struct GeneratorQLoss {
  T total = 0;
  T adv = 0;
  T cat = 0;
  T con = 0;
  Matrix<T> d_fake_logit;  // dtotal/d fake logit
  Matrix<T> d_q_logits;    // dtotal/d q_logits
  Matrix<T> d_q_con;       // dtotal/d q_con_mean
};

/// adv = mean BCE(fake → 1); cat = mean CE(q_logits, c_dis);
/// con = mean ½‖q_con_mean − c_con‖²; total = adv + λ(cat + con).
template <typename T>
GeneratorQLoss<T> loss_generator_q(const Matrix<T>& fake_logit, const Matrix<T>& q_logits,
                                   const Matrix<T>& q_con_mean, const LatentBatch<T>& target,
                                   double lambda) {
  const auto n = fake_logit.size();
  if (q_logits.cols() != n || q_con_mean.cols() != n || target.size() != n ||
      q_logits.rows() != target.c_dis.rows() || q_con_mean.rows() != target.c_con.rows())
    throw Error(ErrorCode::ShapeMismatch, "loss_generator_q: inconsistent batch shapes");
  const T lam = static_cast<T>(lambda);
  GeneratorQLoss<T> out;
  out.d_fake_logit.resize(fake_logit.rows(), fake_logit.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    const T x = fake_logit.data()[i];
    out.adv += nn::softplus(-x);
    out.d_fake_logit.data()[i] = -nn::sigmoid(-x) / static_cast<T>(n);
  }
  out.adv /= static_cast<T>(n);

  out.cat = nn::softmax_cross_entropy(q_logits, target.category, &out.d_q_logits);
  out.d_q_logits *= lam;

  Matrix<T> diff = q_con_mean - target.c_con;
  out.con = diff.size() > 0 ? T(0.5) * diff.squaredNorm() / static_cast<T>(n) : T(0);
  out.d_q_con = diff * (lam / static_cast<T>(n));

  out.total = out.adv + lam * (out.cat + out.con);
  if (!std::isfinite(out.total))
    throw Error(ErrorCode::NonFiniteLoss, "generator/Q loss is not finite");
  return out;
}

// ---------------------------------------------------------------------------
// Image batches

/// Records [first, last) → (3, n·H·W) network input in [-1, 1].
template <typename T>
Activation<T> to_network_batch(std::span<const ImageRecord* const> records, Size2 size) {
  Activation<T> x;
  x.batch = static_cast<int>(records.size());
  x.channels = 3;
  x.height = size.height;
  x.width = size.width;
  const Eigen::Index sp = static_cast<Eigen::Index>(size.height) * size.width;
  x.data.resize(3, x.batch * sp);
  for (int n = 0; n < x.batch; ++n) {
    const auto& img = records[n]->pixels;
    if (img.size() != size)
      throw Error(ErrorCode::ShapeMismatch,
                  records[n]->id + ": image is " + std::to_string(img.height()) + "x" +
                      std::to_string(img.width()) + ", network expects " +
                      std::to_string(size.height) + "x" + std::to_string(size.width));
    const float* px = img.data().data();
    for (Eigen::Index p = 0; p < sp; ++p)
      for (int c = 0; c < 3; ++c) x.data(c, n * sp + p) = static_cast<T>(2.0f * px[p * 3 + c] - 1.0f);
  }
  return x;
}

/// Sample `index` of a (3, n·H·W) batch in (-1, 1) → [0, 1] image.
template <typename T>
Image from_network_batch(const Activation<T>& x, int index) {
  Image img(x.height, x.width);
  const Eigen::Index sp = x.spatial();
  for (Eigen::Index p = 0; p < sp; ++p)
    for (int c = 0; c < 3; ++c)
      img.data()[p * 3 + c] =
          std::clamp(static_cast<float>((x.data(c, index * sp + p) + T(1)) / T(2)), 0.0f, 1.0f);
  return img;
}

}  // namespace infocluster
