#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "infocluster/error.hpp"
#include "infocluster/image.hpp"

namespace infocluster {

/// n×d sample matrix, one sample per row.
using SampleMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Row i = record i's pixels flattened row-major (y, x, channel); d = 3·H·W.
inline SampleMatrix flatten_images(const std::vector<ImageRecord>& records) {
  if (records.empty()) return {};
  const Size2 size = records.front().pixels.size();
  const Eigen::Index d = static_cast<Eigen::Index>(size.height) * size.width * 3;
  SampleMatrix out(static_cast<Eigen::Index>(records.size()), d);
  for (size_t i = 0; i < records.size(); ++i) {
    if (records[i].pixels.size() != size)
      throw Error(ErrorCode::MixedSizes, records[i].id + ": image size differs from " + records.front().id);
    const auto& px = records[i].pixels.data();
    for (Eigen::Index j = 0; j < d; ++j) out(static_cast<Eigen::Index>(i), j) = px[j];
  }
  return out;
}

struct KMeansResult {
  std::vector<int> labels;
  SampleMatrix centroids;  // k×d
  double inertia = 0;
  int iterations = 0;
};

namespace detail {

// Nearest centroid per row (lowest index on ties) and the squared distance.
inline double assign_nearest(const SampleMatrix& x, const SampleMatrix& centroids,
                             std::vector<int>& labels, std::vector<double>& dist2) {
  const Eigen::Index n = x.rows(), k = centroids.rows();
  labels.resize(n);
  dist2.resize(n);
  double inertia = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (Eigen::Index c = 0; c < k; ++c) {
      const double d = (x.row(i) - centroids.row(c)).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = static_cast<int>(c);
      }
    }
    labels[i] = best;
    dist2[i] = best_d;
    inertia += best_d;
  }
  return inertia;
}

}  // namespace detail

/// k-means++ seeding then Lloyd iterations until the largest centroid move is
/// below `tol` or `max_iter` is reached. An empty cluster is re-seeded at the
/// point farthest from its current centroid.
inline KMeansResult kmeans(const SampleMatrix& x, int k, uint64_t seed, int max_iter = 300,
                           double tol = 1e-4) {
  const Eigen::Index n = x.rows();
  if (k < 2 || n < k)
    throw Error(ErrorCode::TooFewSamples, "kmeans needs n >= k >= 2 (n=" + std::to_string(n) +
                                              ", k=" + std::to_string(k) + ")");
  if (!x.allFinite()) throw Error(ErrorCode::NonFiniteInput, "kmeans input contains NaN or inf");

  std::mt19937_64 rng(seed);
  KMeansResult result;
  result.centroids.resize(k, x.cols());

  // k-means++: D² weighting against the centroids chosen so far.
  std::uniform_int_distribution<Eigen::Index> first(0, n - 1);
  result.centroids.row(0) = x.row(first(rng));
  std::vector<double> nearest(n);
  for (Eigen::Index i = 0; i < n; ++i) nearest[i] = (x.row(i) - result.centroids.row(0)).squaredNorm();
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int c = 1; c < k; ++c) {
    double total = 0;
    for (double d : nearest) total += d;
    Eigen::Index pick = 0;
    if (total > 0) {
      double target = unit(rng) * total;
      for (pick = 0; pick < n - 1; ++pick) {
        target -= nearest[pick];
        if (target < 0) break;
      }
      while (nearest[pick] == 0 && pick > 0) --pick;  // never pick a zero-weight point
    } else {
      pick = c;  // all points coincide with a centroid already
    }
    result.centroids.row(c) = x.row(pick);
    for (Eigen::Index i = 0; i < n; ++i)
      nearest[i] = std::min(nearest[i], (x.row(i) - result.centroids.row(c)).squaredNorm());
  }

  std::vector<double> dist2;
  double inertia = detail::assign_nearest(x, result.centroids, result.labels, dist2);
  for (int it = 1; it <= max_iter; ++it) {
    SampleMatrix next = SampleMatrix::Zero(k, x.cols());
    std::vector<Eigen::Index> counts(k, 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      next.row(result.labels[i]) += x.row(i);
      ++counts[result.labels[i]];
    }
    std::vector<char> taken(n, 0);
    for (int c = 0; c < k; ++c) {
      if (counts[c] > 0) {
        next.row(c) /= static_cast<double>(counts[c]);
        continue;
      }
      Eigen::Index far = -1;
      for (Eigen::Index i = 0; i < n; ++i)
        if (!taken[i] && (far < 0 || dist2[i] > dist2[far])) far = i;
      taken[far] = 1;
      next.row(c) = x.row(far);
    }
    double shift = 0;
    for (int c = 0; c < k; ++c) shift = std::max(shift, (next.row(c) - result.centroids.row(c)).norm());
    result.centroids = std::move(next);

    const double updated = detail::assign_nearest(x, result.centroids, result.labels, dist2);
    if (updated > inertia * (1 + 1e-12) + 1e-12)
      throw std::logic_error("kmeans: inertia increased from " + std::to_string(inertia) + " to " +
                             std::to_string(updated));
    inertia = updated;
    result.iterations = it;
    if (shift < tol) break;
  }
  result.inertia = inertia;
  return result;
}

}  // namespace infocluster
