#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "infocluster/nn/layers.hpp"

namespace infocluster::nn {

struct AdamOptions {
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam over a fixed parameter list. Moments are exposed so checkpoints can
/// persist them.
template <typename T>
class Adam {
 public:
  Adam(std::vector<Parameter<T>*> params, AdamOptions opts) : params_(std::move(params)), opts_(opts) {
    for (auto* p : params_) {
      first_.push_back(Matrix<T>::Zero(p->value.rows(), p->value.cols()));
      second_.push_back(Matrix<T>::Zero(p->value.rows(), p->value.cols()));
    }
  }

  void zero_grad() { zero_grads(params_); }

  void step() {
    ++steps_;
    const T b1 = static_cast<T>(opts_.beta1), b2 = static_cast<T>(opts_.beta2);
    const T correction1 = T(1) - static_cast<T>(std::pow(opts_.beta1, steps_));
    const T correction2 = T(1) - static_cast<T>(std::pow(opts_.beta2, steps_));
    const T step = static_cast<T>(opts_.lr) / correction1;
    const T eps = static_cast<T>(opts_.eps);
    for (size_t i = 0; i < params_.size(); ++i) {
      auto& g = params_[i]->grad;
      first_[i] = b1 * first_[i] + (T(1) - b1) * g;
      second_[i] = b2 * second_[i] + (T(1) - b2) * g.cwiseProduct(g);
      params_[i]->value.array() -=
          step * first_[i].array() / ((second_[i].array() / correction2).sqrt() + eps);
    }
  }

  long steps() const noexcept { return steps_; }
  void set_steps(long s) noexcept { steps_ = s; }
  const std::vector<Parameter<T>*>& parameters() const noexcept { return params_; }

  /// Named moment tensors, prefixed for checkpointing.
  std::vector<Buffer<T>> state(const std::string& prefix) {
    std::vector<Buffer<T>> out;
    for (size_t i = 0; i < params_.size(); ++i) {
      out.push_back({prefix + "." + params_[i]->name + ".m", &first_[i]});
      out.push_back({prefix + "." + params_[i]->name + ".v", &second_[i]});
    }
    return out;
  }

 private:
  std::vector<Parameter<T>*> params_;
  AdamOptions opts_;
  std::vector<Matrix<T>> first_, second_;
  long steps_ = 0;
};

}  // namespace infocluster::nn
