#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <memory>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "infocluster/error.hpp"

/// Minimal reverse-mode network layers. Activations are stored channel-major
/// ("CNHW"): a `channels × (batch·height·width)` matrix, so a convolution over
/// the whole batch is a single matrix product. Flat features are the special
/// case height = width = 1, i.e. `features × batch`.
namespace infocluster::nn {

template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
struct Activation {
  Matrix<T> data;
  int batch = 0;
  int channels = 0;
  int height = 1;
  int width = 1;

  int spatial() const noexcept { return height * width; }
};

template <typename T>
Activation<T> make_flat(Matrix<T> data) {
  Activation<T> a;
  a.batch = static_cast<int>(data.cols());
  a.channels = static_cast<int>(data.rows());
  a.data = std::move(data);
  return a;
}

template <typename T>
struct Parameter {
  std::string name;
  Matrix<T> value;
  Matrix<T> grad;

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

/// Non-trainable state that still belongs in a checkpoint (running statistics).
template <typename T>
struct Buffer {
  std::string name;
  Matrix<T>* value;
};

template <typename T>
class Layer {
 public:
  virtual ~Layer() = default;
  virtual Activation<T> forward(const Activation<T>& x) = 0;
  /// Returns dL/dx when `input_grad`; accumulates parameter gradients when
  /// `param_grads`.
  virtual Activation<T> backward(const Activation<T>& dy, bool param_grads, bool input_grad) = 0;
  virtual std::vector<Parameter<T>*> parameters() { return {}; }
  virtual std::vector<Buffer<T>> buffers() { return {}; }
  virtual void set_training(bool) {}
  // Piecewise-linear layers append one sign bit per input of the last forward
  // pass, so callers can tell whether two evaluations share a linear region.
  virtual void activation_pattern(std::vector<char>&) const {}
};

template <typename T>
void normal_init(Matrix<T>& m, std::mt19937_64& rng, double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(dist(rng));
}

// ---------------------------------------------------------------------------
// Convolution geometry shared by Conv2d and ConvTranspose2d.

struct ConvGeometry {
  int channels, in_h, in_w, kernel, stride, pad, out_h, out_w;
};

inline ConvGeometry conv_geometry(int channels, int in_h, int in_w, int kernel, int stride,
                                  int pad) {
  return {channels, in_h, in_w, kernel, stride, pad, (in_h + 2 * pad - kernel) / stride + 1,
          (in_w + 2 * pad - kernel) / stride + 1};
}

/// (C, N·H·W) image → (C·k·k, N·Ho·Wo) patch matrix.
template <typename T>
void im2col(const T* x, const ConvGeometry& g, int batch, Matrix<T>& cols) {
  const int k = g.kernel;
  const Eigen::Index out_sp = static_cast<Eigen::Index>(g.out_h) * g.out_w;
  const Eigen::Index in_sp = static_cast<Eigen::Index>(g.in_h) * g.in_w;
  cols.resize(static_cast<Eigen::Index>(g.channels) * k * k, batch * out_sp);
  for (int c = 0; c < g.channels; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        T* row = cols.row((static_cast<Eigen::Index>(c) * k + ky) * k + kx).data();
        for (int n = 0; n < batch; ++n) {
          const T* img = x + (static_cast<Eigen::Index>(c) * batch + n) * in_sp;
          T* dst = row + n * out_sp;
          for (int oy = 0; oy < g.out_h; ++oy) {
            const int iy = oy * g.stride - g.pad + ky;
            T* d = dst + static_cast<Eigen::Index>(oy) * g.out_w;
            if (iy < 0 || iy >= g.in_h) {
              std::fill(d, d + g.out_w, T(0));
              continue;
            }
            const T* src = img + static_cast<Eigen::Index>(iy) * g.in_w;
            for (int ox = 0; ox < g.out_w; ++ox) {
              const int ix = ox * g.stride - g.pad + kx;
              d[ox] = (ix >= 0 && ix < g.in_w) ? src[ix] : T(0);
            }
          }
        }
      }
    }
  }
}

/// Adjoint of im2col: scatters-adds patches back into a zeroed (C, N·H·W) image.
template <typename T>
void col2im(const Matrix<T>& cols, const ConvGeometry& g, int batch, T* x) {
  const int k = g.kernel;
  const Eigen::Index out_sp = static_cast<Eigen::Index>(g.out_h) * g.out_w;
  const Eigen::Index in_sp = static_cast<Eigen::Index>(g.in_h) * g.in_w;
  std::fill(x, x + static_cast<Eigen::Index>(g.channels) * batch * in_sp, T(0));
  for (int c = 0; c < g.channels; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const T* row = cols.row((static_cast<Eigen::Index>(c) * k + ky) * k + kx).data();
        for (int n = 0; n < batch; ++n) {
          T* img = x + (static_cast<Eigen::Index>(c) * batch + n) * in_sp;
          const T* src = row + n * out_sp;
          for (int oy = 0; oy < g.out_h; ++oy) {
            const int iy = oy * g.stride - g.pad + ky;
            if (iy < 0 || iy >= g.in_h) continue;
            T* dst = img + static_cast<Eigen::Index>(iy) * g.in_w;
            const T* s = src + static_cast<Eigen::Index>(oy) * g.out_w;
            for (int ox = 0; ox < g.out_w; ++ox) {
              const int ix = ox * g.stride - g.pad + kx;
              if (ix >= 0 && ix < g.in_w) dst[ix] += s[ox];
            }
          }
        }
      }
    }
  }
}

// ---------------------------------------------------------------------------

template <typename T>
class Linear final : public Layer<T> {
 public:
  Linear(std::string name, int in, int out, std::mt19937_64& rng, double init_std = 0.02)
      : in_(in), out_(out) {
    weight_.name = name + ".weight";
    bias_.name = name + ".bias";
    weight_.value.resize(out, in);
    normal_init(weight_.value, rng, init_std);
    bias_.value = Matrix<T>::Zero(out, 1);
    weight_.zero_grad();
    bias_.zero_grad();
  }

  Activation<T> forward(const Activation<T>& x) override {
    if (x.channels * x.spatial() != in_ || x.spatial() != 1)
      throw Error(ErrorCode::ShapeMismatch, weight_.name + ": expected " + std::to_string(in_) +
                                                " input features, got " +
                                                std::to_string(x.channels * x.spatial()));
    input_ = x.data;
    Matrix<T> y = weight_.value * x.data;
    y.colwise() += bias_.value.col(0);
    return make_flat(std::move(y));
  }

  Activation<T> backward(const Activation<T>& dy, bool param_grads, bool input_grad) override {
    if (param_grads) {
      weight_.grad.noalias() += dy.data * input_.transpose();
      bias_.grad.col(0) += dy.data.rowwise().sum();
    }
    if (!input_grad) return {};
    return make_flat(Matrix<T>(weight_.value.transpose() * dy.data));
  }

  std::vector<Parameter<T>*> parameters() override { return {&weight_, &bias_}; }

 private:
  int in_, out_;
  Parameter<T> weight_, bias_;
  Matrix<T> input_;
};

/// Strided convolution, weight laid out (out, in·k·k).
template <typename T>
class Conv2d final : public Layer<T> {
 public:
  Conv2d(std::string name, int in, int out, std::mt19937_64& rng, int kernel = 4, int stride = 2,
         int pad = 1)
      : in_(in), out_(out), kernel_(kernel), stride_(stride), pad_(pad) {
    weight_.name = name + ".weight";
    bias_.name = name + ".bias";
    weight_.value.resize(out, in * kernel * kernel);
    normal_init(weight_.value, rng, 0.02);
    bias_.value = Matrix<T>::Zero(out, 1);
    weight_.zero_grad();
    bias_.zero_grad();
  }

  Activation<T> forward(const Activation<T>& x) override {
    if (x.channels != in_)
      throw Error(ErrorCode::ShapeMismatch, weight_.name + ": expected " + std::to_string(in_) +
                                                " channels, got " + std::to_string(x.channels));
    geom_ = conv_geometry(in_, x.height, x.width, kernel_, stride_, pad_);
    batch_ = x.batch;
    im2col(x.data.data(), geom_, batch_, cols_);
    Activation<T> y;
    y.batch = batch_;
    y.channels = out_;
    y.height = geom_.out_h;
    y.width = geom_.out_w;
    y.data.noalias() = weight_.value * cols_;
    y.data.colwise() += bias_.value.col(0);
    return y;
  }

  Activation<T> backward(const Activation<T>& dy, bool param_grads, bool input_grad) override {
    if (param_grads) {
      weight_.grad.noalias() += dy.data * cols_.transpose();
      bias_.grad.col(0) += dy.data.rowwise().sum();
    }
    if (!input_grad) return {};
    Matrix<T> dcols = weight_.value.transpose() * dy.data;
    Activation<T> dx;
    dx.batch = batch_;
    dx.channels = in_;
    dx.height = geom_.in_h;
    dx.width = geom_.in_w;
    dx.data.resize(in_, static_cast<Eigen::Index>(batch_) * geom_.in_h * geom_.in_w);
    col2im(dcols, geom_, batch_, dx.data.data());
    return dx;
  }

  std::vector<Parameter<T>*> parameters() override { return {&weight_, &bias_}; }

 private:
  int in_, out_, kernel_, stride_, pad_;
  int batch_ = 0;
  ConvGeometry geom_{};
  Parameter<T> weight_, bias_;
  Matrix<T> cols_;
};

/// Up-convolution (the adjoint of Conv2d in its input), weight laid out
/// (in, out·k·k). With k=4, s=2, p=1 it doubles height and width.
template <typename T>
class ConvTranspose2d final : public Layer<T> {
 public:
  ConvTranspose2d(std::string name, int in, int out, std::mt19937_64& rng, int kernel = 4,
                  int stride = 2, int pad = 1)
      : in_(in), out_(out), kernel_(kernel), stride_(stride), pad_(pad) {
    weight_.name = name + ".weight";
    bias_.name = name + ".bias";
    weight_.value.resize(in, out * kernel * kernel);
    normal_init(weight_.value, rng, 0.02);
    bias_.value = Matrix<T>::Zero(out, 1);
    weight_.zero_grad();
    bias_.zero_grad();
  }

  Activation<T> forward(const Activation<T>& x) override {
    if (x.channels != in_)
      throw Error(ErrorCode::ShapeMismatch, weight_.name + ": expected " + std::to_string(in_) +
                                                " channels, got " + std::to_string(x.channels));
    const int out_h = (x.height - 1) * stride_ - 2 * pad_ + kernel_;
    const int out_w = (x.width - 1) * stride_ - 2 * pad_ + kernel_;
    // Geometry of the equivalent forward convolution: output image → input image.
    geom_ = conv_geometry(out_, out_h, out_w, kernel_, stride_, pad_);
    batch_ = x.batch;
    input_ = x.data;
    Matrix<T> cols = weight_.value.transpose() * x.data;
    Activation<T> y;
    y.batch = batch_;
    y.channels = out_;
    y.height = out_h;
    y.width = out_w;
    y.data.resize(out_, static_cast<Eigen::Index>(batch_) * out_h * out_w);
    col2im(cols, geom_, batch_, y.data.data());
    y.data.colwise() += bias_.value.col(0);
    return y;
  }

  Activation<T> backward(const Activation<T>& dy, bool param_grads, bool input_grad) override {
    Matrix<T> dcols;
    im2col(dy.data.data(), geom_, batch_, dcols);
    if (param_grads) {
      weight_.grad.noalias() += input_ * dcols.transpose();
      bias_.grad.col(0) += dy.data.rowwise().sum();
    }
    if (!input_grad) return {};
    Activation<T> dx;
    dx.batch = batch_;
    dx.channels = in_;
    dx.height = geom_.out_h;
    dx.width = geom_.out_w;
    dx.data.noalias() = weight_.value * dcols;
    return dx;
  }

  std::vector<Parameter<T>*> parameters() override { return {&weight_, &bias_}; }

 private:
  int in_, out_, kernel_, stride_, pad_;
  int batch_ = 0;
  ConvGeometry geom_{};
  Parameter<T> weight_, bias_;
  Matrix<T> input_;
};

/// Per-channel batch normalisation over batch and spatial positions.
template <typename T>
class BatchNorm final : public Layer<T> {
 public:
  BatchNorm(std::string name, int channels, std::mt19937_64& rng, double momentum = 0.1,
            double eps = 1e-5)
      : channels_(channels), momentum_(momentum), eps_(eps) {
    gamma_.name = name + ".gamma";
    beta_.name = name + ".beta";
    gamma_.value.resize(channels, 1);
    normal_init(gamma_.value, rng, 0.02);
    gamma_.value.array() += T(1);
    beta_.value = Matrix<T>::Zero(channels, 1);
    gamma_.zero_grad();
    beta_.zero_grad();
    running_mean_ = Matrix<T>::Zero(channels, 1);
    running_var_ = Matrix<T>::Ones(channels, 1);
    mean_name_ = name + ".running_mean";
    var_name_ = name + ".running_var";
  }

  Activation<T> forward(const Activation<T>& x) override {
    if (x.channels != channels_)
      throw Error(ErrorCode::ShapeMismatch, gamma_.name + ": channel count mismatch");
    Activation<T> y = x;
    const auto m = static_cast<T>(x.data.cols());
    if (training_) {
      Matrix<T> mean = x.data.rowwise().sum() / m;
      xhat_ = x.data;
      xhat_.colwise() -= mean.col(0);
      Matrix<T> var = xhat_.array().square().rowwise().sum() / m;
      inv_std_ = (var.array() + T(eps_)).rsqrt().matrix();
      running_mean_ = (1 - T(momentum_)) * running_mean_ + T(momentum_) * mean;
      const T unbias = m > 1 ? m / (m - 1) : T(1);
      running_var_ = (1 - T(momentum_)) * running_var_ + T(momentum_) * unbias * var;
    } else {
      xhat_ = x.data;
      xhat_.colwise() -= running_mean_.col(0);
      inv_std_ = (running_var_.array() + T(eps_)).rsqrt().matrix();
    }
    xhat_ = inv_std_.col(0).asDiagonal() * xhat_;
    y.data = gamma_.value.col(0).asDiagonal() * xhat_;
    y.data.colwise() += beta_.value.col(0);
    return y;
  }

  Activation<T> backward(const Activation<T>& dy, bool param_grads, bool input_grad) override {
    if (param_grads) {
      gamma_.grad.col(0) += dy.data.cwiseProduct(xhat_).rowwise().sum();
      beta_.grad.col(0) += dy.data.rowwise().sum();
    }
    if (!input_grad) return {};
    Activation<T> dx = dy;
    Matrix<T> dxhat = gamma_.value.col(0).asDiagonal() * dy.data;
    if (!training_) {
      dx.data = inv_std_.col(0).asDiagonal() * dxhat;
      return dx;
    }
    const auto m = static_cast<T>(dy.data.cols());
    Matrix<T> mean_dxhat = dxhat.rowwise().sum() / m;
    Matrix<T> mean_dxhat_xhat = dxhat.cwiseProduct(xhat_).rowwise().sum() / m;
    dx.data = dxhat;
    dx.data.colwise() -= mean_dxhat.col(0);
    dx.data -= mean_dxhat_xhat.col(0).asDiagonal() * xhat_;
    dx.data = inv_std_.col(0).asDiagonal() * dx.data;
    return dx;
  }

  std::vector<Parameter<T>*> parameters() override { return {&gamma_, &beta_}; }
  std::vector<Buffer<T>> buffers() override {
    return {{mean_name_, &running_mean_}, {var_name_, &running_var_}};
  }
  void set_training(bool training) override { training_ = training; }

 private:
  int channels_;
  double momentum_, eps_;
  bool training_ = true;
  Parameter<T> gamma_, beta_;
  Matrix<T> running_mean_, running_var_;
  std::string mean_name_, var_name_;
  Matrix<T> xhat_, inv_std_;
};

template <typename T>
class LeakyRelu final : public Layer<T> {
 public:
  explicit LeakyRelu(double slope) : slope_(static_cast<T>(slope)) {}

  Activation<T> forward(const Activation<T>& x) override {
    input_ = x.data;
    Activation<T> y = x;
    y.data = x.data.unaryExpr([s = slope_](T v) { return v > T(0) ? v : s * v; });
    return y;
  }

  Activation<T> backward(const Activation<T>& dy, bool, bool input_grad) override {
    if (!input_grad) return {};
    Activation<T> dx = dy;
    dx.data = dy.data.binaryExpr(input_, [s = slope_](T g, T v) { return v > T(0) ? g : s * g; });
    return dx;
  }

  void activation_pattern(std::vector<char>& out) const override {
    for (Eigen::Index i = 0; i < input_.size(); ++i) out.push_back(input_.data()[i] > T(0));
  }

 private:
  T slope_;
  Matrix<T> input_;
};

template <typename T>
class Relu final : public Layer<T> {
 public:
  Activation<T> forward(const Activation<T>& x) override {
    input_ = x.data;
    Activation<T> y = x;
    y.data = x.data.cwiseMax(T(0));
    return y;
  }

  Activation<T> backward(const Activation<T>& dy, bool, bool input_grad) override {
    if (!input_grad) return {};
    Activation<T> dx = dy;
    dx.data = dy.data.binaryExpr(input_, [](T g, T v) { return v > T(0) ? g : T(0); });
    return dx;
  }

  void activation_pattern(std::vector<char>& out) const override {
    for (Eigen::Index i = 0; i < input_.size(); ++i) out.push_back(input_.data()[i] > T(0));
  }

 private:
  Matrix<T> input_;
};

template <typename T>
class Tanh final : public Layer<T> {
 public:
  Activation<T> forward(const Activation<T>& x) override {
    Activation<T> y = x;
    y.data = x.data.array().tanh().matrix();
    output_ = y.data;
    return y;
  }

  Activation<T> backward(const Activation<T>& dy, bool, bool input_grad) override {
    if (!input_grad) return {};
    Activation<T> dx = dy;
    dx.data = dy.data.cwiseProduct((T(1) - output_.array().square()).matrix());
    return dx;
  }

 private:
  Matrix<T> output_;
};

/// (C, N·H·W) → (C·H·W, N).
template <typename T>
Activation<T> flatten(const Activation<T>& x) {
  const int sp = x.spatial();
  Matrix<T> out(static_cast<Eigen::Index>(x.channels) * sp, x.batch);
  for (int c = 0; c < x.channels; ++c)
    for (int n = 0; n < x.batch; ++n)
      for (int p = 0; p < sp; ++p)
        out(static_cast<Eigen::Index>(c) * sp + p, n) = x.data(c, static_cast<Eigen::Index>(n) * sp + p);
  return make_flat(std::move(out));
}

/// (C·H·W, N) → (C, N·H·W).
template <typename T>
Activation<T> unflatten(const Activation<T>& x, int channels, int height, int width) {
  const int sp = height * width;
  Activation<T> out;
  out.batch = x.batch;
  out.channels = channels;
  out.height = height;
  out.width = width;
  out.data.resize(channels, static_cast<Eigen::Index>(x.batch) * sp);
  for (int c = 0; c < channels; ++c)
    for (int n = 0; n < x.batch; ++n)
      for (int p = 0; p < sp; ++p)
        out.data(c, static_cast<Eigen::Index>(n) * sp + p) = x.data(static_cast<Eigen::Index>(c) * sp + p, n);
  return out;
}

template <typename T>
class Flatten final : public Layer<T> {
 public:
  Activation<T> forward(const Activation<T>& x) override {
    channels_ = x.channels;
    height_ = x.height;
    width_ = x.width;
    return flatten(x);
  }
  Activation<T> backward(const Activation<T>& dy, bool, bool input_grad) override {
    if (!input_grad) return {};
    return unflatten(dy, channels_, height_, width_);
  }

 private:
  int channels_ = 0, height_ = 1, width_ = 1;
};

template <typename T>
class Unflatten final : public Layer<T> {
 public:
  Unflatten(int channels, int height, int width)
      : channels_(channels), height_(height), width_(width) {}
  Activation<T> forward(const Activation<T>& x) override {
    return unflatten(x, channels_, height_, width_);
  }
  Activation<T> backward(const Activation<T>& dy, bool, bool input_grad) override {
    if (!input_grad) return {};
    return flatten(dy);
  }

 private:
  int channels_, height_, width_;
};

/// Layers applied in order; owns them.
template <typename T>
class Sequential {
 public:
  template <typename L, typename... Args>
  L& add(Args&&... args) {
    auto layer = std::make_unique<L>(std::forward<Args>(args)...);
    L& ref = *layer;
    layers_.push_back(std::move(layer));
    return ref;
  }

  Activation<T> forward(Activation<T> x) {
    for (auto& layer : layers_) x = layer->forward(x);
    return x;
  }

  void activation_pattern(std::vector<char>& out) const {
    for (const auto& layer : layers_) layer->activation_pattern(out);
  }

  /// `input_grad` only controls the first layer; inner layers always
  /// propagate.
  Activation<T> backward(Activation<T> dy, bool param_grads, bool input_grad) {
    for (size_t i = layers_.size(); i-- > 0;)
      dy = layers_[i]->backward(dy, param_grads, i > 0 || input_grad);
    return dy;
  }

  std::vector<Parameter<T>*> parameters() {
    std::vector<Parameter<T>*> out;
    for (auto& layer : layers_)
      for (auto* p : layer->parameters()) out.push_back(p);
    return out;
  }

  std::vector<Buffer<T>> buffers() {
    std::vector<Buffer<T>> out;
    for (auto& layer : layers_)
      for (auto& b : layer->buffers()) out.push_back(b);
    return out;
  }

  void set_training(bool training) {
    for (auto& layer : layers_) layer->set_training(training);
  }

 private:
  std::vector<std::unique_ptr<Layer<T>>> layers_;
};

template <typename T>
void zero_grads(const std::vector<Parameter<T>*>& params) {
  for (auto* p : params) p->zero_grad();
}

template <typename T>
size_t parameter_count(const std::vector<Parameter<T>*>& params) {
  size_t n = 0;
  for (auto* p : params) n += static_cast<size_t>(p->value.size());
  return n;
}

}  // namespace infocluster::nn
