#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "infocluster/error.hpp"
#include "infocluster/gan_training.hpp"
#include "infocluster/image.hpp"
#include "infocluster/png_io.hpp"

namespace infocluster {

namespace fs = std::filesystem;

/// CSV: `image_id,category,post_0..post_{k-1},con_0..con_{m-1}`, six decimals,
/// rows in input order.
inline void export_assignments(const std::vector<ClusterAssignment>& assignments,
                               const fs::path& out_path) {
  if (assignments.empty()) throw Error(ErrorCode::EmptyInput, "no assignments to export");
  const size_t k = assignments.front().posterior.size();
  const size_t m = assignments.front().con_estimate.size();
  if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
  std::ofstream out(out_path);
  if (!out) throw Error(ErrorCode::IoError, out_path.string() + ": cannot write");
  out << "image_id,category";
  for (size_t i = 0; i < k; ++i) out << ",post_" << i;
  for (size_t i = 0; i < m; ++i) out << ",con_" << i;
  out << '\n';
  char buf[64];
  for (const auto& a : assignments) {
    if (a.posterior.size() != k || a.con_estimate.size() != m)
      throw Error(ErrorCode::ShapeMismatch, a.image_id + ": inconsistent assignment width");
    out << a.image_id << ',' << a.category;
    for (double p : a.posterior) {
      std::snprintf(buf, sizeof buf, ",%.6f", p);
      out << buf;
    }
    for (double c : a.con_estimate) {
      std::snprintf(buf, sizeof buf, ",%.6f", c);
      out << buf;
    }
    out << '\n';
  }
}

inline std::vector<ClusterAssignment> read_assignments(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, path.string() + ": cannot open assignments");
  std::string line;
  std::getline(in, line);
  size_t k = 0, m = 0;
  {
    std::stringstream header(line);
    std::string col;
    while (std::getline(header, col, ',')) {
      if (col.rfind("post_", 0) == 0) ++k;
      if (col.rfind("con_", 0) == 0) ++m;
    }
  }
  std::vector<ClusterAssignment> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream row(line);
    std::string cell;
    ClusterAssignment a;
    std::getline(row, a.image_id, ',');
    std::getline(row, cell, ',');
    a.category = std::stoi(cell);
    for (size_t i = 0; i < k; ++i) {
      std::getline(row, cell, ',');
      a.posterior.push_back(std::stod(cell));
    }
    for (size_t i = 0; i < m; ++i) {
      std::getline(row, cell, ',');
      a.con_estimate.push_back(std::stod(cell));
    }
    out.push_back(std::move(a));
  }
  if (out.empty()) throw Error(ErrorCode::EmptyInput, path.string() + ": no rows");
  return out;
}

/// Hard labels as assignments with one-hot posteriors and no continuous columns.
inline std::vector<ClusterAssignment> one_hot_assignments(const std::vector<ImageRecord>& records,
                                                          const std::vector<int>& labels, int k) {
  if (records.size() != labels.size())
    throw Error(ErrorCode::LengthMismatch, "records and labels differ in length");
  std::vector<ClusterAssignment> out;
  for (size_t i = 0; i < records.size(); ++i) {
    ClusterAssignment a;
    a.image_id = records[i].id;
    a.category = labels[i];
    a.posterior.assign(k, 0.0);
    a.posterior.at(labels[i]) = 1.0;
    out.push_back(std::move(a));
  }
  return out;
}

struct ClusterMontage {
  Image image;
  std::vector<int> row_category;              // category shown in each row
  std::vector<std::vector<std::string>> ids;  // exemplar ids per row, left to right
};

/// One row per occupied category (ascending), up to `per_cluster` exemplars
/// ordered by posterior confidence, highest first.
inline ClusterMontage render_cluster_montage(const std::vector<ImageRecord>& records,
                                             const std::vector<ClusterAssignment>& assignments,
                                             int per_cluster) {
  if (records.empty() || per_cluster < 1)
    throw Error(ErrorCode::EmptyInput, "montage needs records and per_cluster >= 1");
  std::map<std::string, const ImageRecord*> by_id;
  for (const auto& r : records) by_id[r.id] = &r;
  std::map<int, std::vector<const ClusterAssignment*>> members;
  for (const auto& a : assignments) {
    if (!by_id.contains(a.image_id))
      throw Error(ErrorCode::EmptyInput, a.image_id + ": assignment without a record");
    members[a.category].push_back(&a);
  }

  ClusterMontage out;
  for (auto& [category, list] : members) {
    std::stable_sort(list.begin(), list.end(), [c = category](const auto* a, const auto* b) {
      return a->posterior.at(c) > b->posterior.at(c);
    });
    out.row_category.push_back(category);
    std::vector<std::string> ids;
    for (size_t i = 0; i < list.size() && static_cast<int>(i) < per_cluster; ++i)
      ids.push_back(list[i]->image_id);
    out.ids.push_back(std::move(ids));
  }

  const Size2 tile = records.front().pixels.size();
  constexpr int gap = 1;
  const int rows = static_cast<int>(out.ids.size());
  out.image = Image(rows * tile.height + (rows - 1) * gap,
                    per_cluster * tile.width + (per_cluster - 1) * gap, 1.0f);
  for (int r = 0; r < rows; ++r) {
    for (size_t c = 0; c < out.ids[r].size(); ++c) {
      const auto& img = by_id[out.ids[r][c]]->pixels;
      if (img.size() != tile) throw Error(ErrorCode::MixedSizes, out.ids[r][c]);
      const int oy = r * (tile.height + gap), ox = static_cast<int>(c) * (tile.width + gap);
      for (int y = 0; y < tile.height; ++y)
        for (int x = 0; x < tile.width; ++x)
          for (int ch = 0; ch < 3; ++ch) out.image.at(oy + y, ox + x, ch) = img.at(y, x, ch);
    }
  }
  return out;
}

inline void export_cluster_montage(const std::vector<ImageRecord>& records,
                                   const std::vector<ClusterAssignment>& assignments, int per_cluster,
                                   const fs::path& out_path) {
  const auto montage = render_cluster_montage(records, assignments, per_cluster);
  if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
  png::write_rgb(out_path, montage.image);
}

}  // namespace infocluster
