#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "infocluster/error.hpp"
#include "infocluster/kmeans.hpp"

namespace infocluster {

/// Mean silhouette with Euclidean distance. Members of singleton clusters
/// score 0.
inline double silhouette(const SampleMatrix& x, const std::vector<int>& labels) {
  const Eigen::Index n = x.rows();
  if (n < 2) throw Error(ErrorCode::TooFewSamples, "silhouette needs at least 2 samples");
  if (static_cast<Eigen::Index>(labels.size()) != n)
    throw Error(ErrorCode::LengthMismatch, "silhouette: labels and samples differ in length");

  std::map<int, int> index_of;
  for (int l : labels) index_of.emplace(l, 0);
  if (index_of.size() < 2) throw Error(ErrorCode::SingleCluster, "silhouette needs >= 2 clusters");
  int next = 0;
  for (auto& [label, idx] : index_of) idx = next++;
  const int k = next;
  std::vector<int> cluster(n), size(k, 0);
  for (Eigen::Index i = 0; i < n; ++i) ++size[cluster[i] = index_of[labels[i]]];

  double total = 0;
  std::vector<double> sums(k);
  Eigen::VectorXd dist(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    dist = (x.rowwise() - x.row(i)).rowwise().norm();
    std::fill(sums.begin(), sums.end(), 0.0);
    for (Eigen::Index j = 0; j < n; ++j) sums[cluster[j]] += dist[j];
    const int own = cluster[i];
    if (size[own] == 1) continue;
    const double a = sums[own] / (size[own] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (int c = 0; c < k; ++c)
      if (c != own) b = std::min(b, sums[c] / size[c]);
    const double m = std::max(a, b);
    if (m > 0) total += (b - a) / m;
  }
  return total / static_cast<double>(n);
}

namespace detail {

struct Contingency {
  std::map<std::pair<int, int>, double> joint;
  std::map<int, double> pred, truth;
  double n = 0;
};

inline Contingency contingency(const std::vector<int>& pred, const std::vector<int>& truth) {
  if (pred.size() != truth.size())
    throw Error(ErrorCode::LengthMismatch, "prediction and truth differ in length");
  if (pred.empty()) throw Error(ErrorCode::LengthMismatch, "empty label vectors");
  Contingency c;
  for (size_t i = 0; i < pred.size(); ++i) {
    c.joint[{pred[i], truth[i]}] += 1;
    c.pred[pred[i]] += 1;
    c.truth[truth[i]] += 1;
  }
  c.n = static_cast<double>(pred.size());
  return c;
}

inline double entropy(const std::map<int, double>& counts, double n) {
  double h = 0;
  for (const auto& [label, count] : counts) h -= count / n * std::log(count / n);
  return h;
}

}  // namespace detail

/// Fraction of samples that fall in the majority truth class of their cluster.
inline double purity(const std::vector<int>& pred, const std::vector<int>& truth) {
  const auto c = detail::contingency(pred, truth);
  std::map<int, double> best;
  for (const auto& [key, count] : c.joint) best[key.first] = std::max(best[key.first], count);
  double sum = 0;
  for (const auto& [label, count] : best) sum += count;
  return sum / c.n;
}

/// Mutual information over the arithmetic mean of the two entropies (nats);
/// 0 when either labelling has zero entropy.
inline double nmi(const std::vector<int>& pred, const std::vector<int>& truth) {
  const auto c = detail::contingency(pred, truth);
  const double hp = detail::entropy(c.pred, c.n), ht = detail::entropy(c.truth, c.n);
  if (hp <= 0 || ht <= 0) return 0.0;
  double mi = 0;
  for (const auto& [key, count] : c.joint)
    mi += count / c.n * std::log(count * c.n / (c.pred.at(key.first) * c.truth.at(key.second)));
  return std::clamp(mi / (0.5 * (hp + ht)), 0.0, 1.0);
}

}  // namespace infocluster
