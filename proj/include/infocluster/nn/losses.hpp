#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "infocluster/nn/layers.hpp"

namespace infocluster::nn {

/// log(1 + e^x) without overflow.
template <typename T>
T softplus(T x) {
  return std::max(x, T(0)) + std::log1p(std::exp(-std::abs(x)));
}

template <typename T>
T sigmoid(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

/// Column-wise softmax of a `classes × batch` logit matrix.
template <typename T>
Matrix<T> softmax_columns(const Matrix<T>& logits) {
  Matrix<T> out(logits.rows(), logits.cols());
  for (Eigen::Index j = 0; j < logits.cols(); ++j) {
    const T mx = logits.col(j).maxCoeff();
    out.col(j) = (logits.col(j).array() - mx).exp().matrix();
    out.col(j) /= out.col(j).sum();
  }
  return out;
}

/// Mean softmax cross-entropy against integer targets; writes dL/dlogits.
template <typename T>
T softmax_cross_entropy(const Matrix<T>& logits, const std::vector<int>& targets, Matrix<T>* grad) {
  const auto n = logits.cols();
  Matrix<T> p = softmax_columns(logits);
  T loss = 0;
  for (Eigen::Index j = 0; j < n; ++j) {
    const T mx = logits.col(j).maxCoeff();
    const T lse = mx + std::log((logits.col(j).array() - mx).exp().sum());
    loss += lse - logits(targets[j], j);
  }
  if (grad) {
    *grad = p;
    for (Eigen::Index j = 0; j < n; ++j) (*grad)(targets[j], j) -= T(1);
    *grad /= static_cast<T>(n);
  }
  return loss / static_cast<T>(n);
}

}  // namespace infocluster::nn
