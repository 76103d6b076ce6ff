#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "infocluster/error.hpp"
#include "infocluster/image.hpp"
#include "infocluster/png_io.hpp"
#include "infocluster/preprocess.hpp"

namespace infocluster {

namespace fs = std::filesystem;

inline constexpr Size2 kNetworkSize{32, 64};

struct Factor {
  std::string name;
  int cardinality = 0;

  friend bool operator==(const Factor&, const Factor&) = default;
};

struct SynthSpec {
  int n_images = 0;
  std::vector<Factor> factors;
  Size2 image_size = kNetworkSize;
  uint64_t seed = 0;
};

inline void validate(const SynthSpec& spec) {
  if (spec.n_images < 1) throw Error(ErrorCode::InvalidSpec, "n_images must be >= 1");
  if (spec.factors.empty()) throw Error(ErrorCode::InvalidSpec, "factor list is empty");
  if (spec.image_size.height < 8 || spec.image_size.width < 8)
    throw Error(ErrorCode::InvalidSpec, "image_size must be at least 8x8");
  std::set<std::string> seen;
  for (const auto& f : spec.factors) {
    if (f.name != "perspective" && f.name != "color_system" && f.name != "gray_scale")
      throw Error(ErrorCode::InvalidSpec, "unknown factor '" + f.name + "'");
    if (!seen.insert(f.name).second)
      throw Error(ErrorCode::InvalidSpec, "duplicate factor '" + f.name + "'");
    if (f.cardinality < 2)
      throw Error(ErrorCode::InvalidSpec, f.name + ": cardinality must be >= 2");
    if (f.name == "perspective" && f.cardinality > 4)
      throw Error(ErrorCode::InvalidSpec, "perspective supports at most 4 layouts");
  }
}

enum class Perspective { Left = 0, Right = 1, Center = 2, Bilateral = 3 };

namespace detail {

inline std::array<float, 3> hsv_to_rgb(double h, double s, double v) {
  h = std::fmod(std::fmod(h, 360.0) + 360.0, 360.0) / 60.0;
  const int sector = static_cast<int>(h) % 6;
  const double f = h - std::floor(h);
  const double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
  double r = v, g = t, b = p;
  switch (sector) {
    case 0: r = v, g = t, b = p; break;
    case 1: r = q, g = v, b = p; break;
    case 2: r = p, g = v, b = t; break;
    case 3: r = p, g = q, b = v; break;
    case 4: r = t, g = p, b = v; break;
    default: r = v, g = p, b = q; break;
  }
  return {static_cast<float>(r), static_cast<float>(g), static_cast<float>(b)};
}

struct BlockSpan {
  double x0, x1;       // horizontal extent, pixels
  double top0, top1;   // roofline height at x0 and x1
};

}  // namespace detail

/// Procedural street scene: sky, road and one or two building blocks whose
/// placement, hue and brightness follow the factor labels. Every factor is
/// stratified: class i of a factor with cardinality k appears exactly
/// floor(n/k) or ceil(n/k) times.
inline std::vector<ImageRecord> generate_synthetic(const SynthSpec& spec) {
  validate(spec);
  std::mt19937_64 rng(spec.seed);
  const int n = spec.n_images;

  std::map<std::string, std::vector<int>> labels;
  for (const auto& f : spec.factors) {
    std::vector<int> v(n);
    for (int i = 0; i < n; ++i) v[i] = i % f.cardinality;
    std::shuffle(v.begin(), v.end(), rng);
    labels[f.name] = std::move(v);
  }
  auto cardinality = [&](const std::string& name) {
    for (const auto& f : spec.factors)
      if (f.name == name) return f.cardinality;
    return 0;
  };

  const int H = spec.image_size.height, W = spec.image_size.width;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

  std::vector<ImageRecord> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    ImageRecord rec;
    rec.id = "synth_" + std::to_string(i);
    for (const auto& f : spec.factors) rec.truth[f.name] = labels[f.name][i];

    const auto perspective = labels.contains("perspective")
                                 ? static_cast<Perspective>(labels["perspective"][i])
                                 : Perspective::Center;
    double hue = 35.0, sat = 0.25;
    if (labels.contains("color_system")) {
      hue = 20.0 + 360.0 * labels["color_system"][i] / cardinality("color_system");
      sat = 0.55;
    }
    double brightness = 1.0;
    if (labels.contains("gray_scale"))
      brightness = 0.4 + 0.6 * labels["gray_scale"][i] / (cardinality("gray_scale") - 1);

    const auto base = detail::hsv_to_rgb(hue + uniform(-6, 6), sat + uniform(-0.05, 0.05),
                                         0.8 * brightness);

    // Scene layout.
    const int road_top = static_cast<int>(std::lround(H * uniform(0.74, 0.84)));
    std::vector<detail::BlockSpan> blocks;
    const double slope = uniform(0.05, 0.2) * H;
    switch (perspective) {
      case Perspective::Left: {
        const double x1 = W * uniform(0.35, 0.6), top = H * uniform(0.05, 0.3);
        blocks.push_back({0, x1, top, top + slope});
        break;
      }
      case Perspective::Right: {
        const double x0 = W * uniform(0.4, 0.65), top = H * uniform(0.05, 0.3);
        blocks.push_back({x0, double(W), top + slope, top});
        break;
      }
      case Perspective::Center: {
        const double width = W * uniform(0.3, 0.75), cx = W * (0.5 + uniform(-0.1, 0.1));
        const double top = H * uniform(0.08, 0.45);
        blocks.push_back({cx - width / 2, cx + width / 2, top, top});
        break;
      }
      case Perspective::Bilateral: {
        const double a = W * uniform(0.2, 0.35), b = W * uniform(0.2, 0.35);
        const double ta = H * uniform(0.05, 0.3), tb = H * uniform(0.05, 0.3);
        blocks.push_back({0, a, ta, ta + slope});
        blocks.push_back({W - b, double(W), tb + slope, tb});
        break;
      }
    }

    const int win_period_x = 4 + static_cast<int>(unit(rng) * 3);
    const int win_period_y = 4 + static_cast<int>(unit(rng) * 3);
    const int win_phase_x = static_cast<int>(unit(rng) * win_period_x);
    const int win_phase_y = static_cast<int>(unit(rng) * win_period_y);
    const std::array<float, 3> sky_top{0.50f, 0.66f, 0.88f}, sky_bottom{0.80f, 0.88f, 0.97f};
    const float road_gray = static_cast<float>(uniform(0.3, 0.45));

    rec.pixels = Image(H, W);
    rec.seg = SegmentationMap(H, W, kSkyClass, {kBuildingClass});
    auto& seg = *rec.seg;
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        const double xc = x + 0.5;
        bool building = false;
        if (y < road_top) {
          for (const auto& b : blocks) {
            if (xc < b.x0 || xc >= b.x1) continue;
            const double t = (xc - b.x0) / std::max(1e-9, b.x1 - b.x0);
            if (y + 0.5 >= b.top0 + t * (b.top1 - b.top0)) building = true;
          }
        }
        if (building) {
          seg.at(y, x) = kBuildingClass;
          const bool window = (x + win_phase_x) % win_period_x < 2 &&
                              (y + win_phase_y) % win_period_y < 2;
          const float shade = window ? 0.55f : 1.0f;
          for (int c = 0; c < 3; ++c)
            rec.pixels.at(y, x, c) = std::clamp(
                static_cast<float>(base[c] * shade + uniform(-0.05, 0.05)), 0.0f, 1.0f);
        } else if (y >= road_top) {
          seg.at(y, x) = kRoadClass;
          for (int c = 0; c < 3; ++c) rec.pixels.at(y, x, c) = road_gray;
        } else {
          const float t = static_cast<float>(y) / std::max(1, road_top - 1);
          for (int c = 0; c < 3; ++c)
            rec.pixels.at(y, x, c) = sky_top[c] + t * (sky_bottom[c] - sky_top[c]);
        }
      }
    }
    // The roofline can exceed the road line for a very short block; force one
    // building pixel so every record is usable downstream.
    if (seg.building_count() == 0) {
      const int x = std::clamp(static_cast<int>(blocks.front().x0), 0, W - 1);
      seg.at(road_top - 1, x) = kBuildingClass;
      for (int c = 0; c < 3; ++c) rec.pixels.at(road_top - 1, x, c) = base[c];
    }
    out.push_back(std::move(rec));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Ingestion and manifests

struct IngestResult {
  std::vector<ImageRecord> records;
  std::vector<std::string> dropped;  // ids with no building pixels
};

/// Pairs every `*.png` under `image_dir` with the same-named label image in
/// `seg_dir`, resizes both to `size` and drops records without building pixels.
inline IngestResult ingest(const fs::path& image_dir, const fs::path& seg_dir,
                           const std::set<int>& building_classes, Size2 size = kNetworkSize) {
  if (building_classes.empty())
    throw Error(ErrorCode::ConfigError, "building_classes: must not be empty");
  std::vector<fs::path> files;
  if (fs::is_directory(image_dir)) {
    for (const auto& entry : fs::directory_iterator(image_dir))
      if (entry.is_regular_file() && entry.path().extension() == ".png")
        files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());

  IngestResult result;
  for (const auto& file : files) {
    const std::string id = file.stem().string();
    const fs::path seg_file = seg_dir / file.filename();
    if (!fs::exists(seg_file)) throw Error(ErrorCode::MissingSegmentation, id);
    ImageRecord rec;
    rec.id = id;
    try {
      rec.pixels = png::read_rgb(file);
    } catch (const Error&) {
      throw Error(ErrorCode::UnreadableImage, id);
    }
    int h = 0, w = 0;
    std::vector<int> labels;
    try {
      labels = png::read_labels(seg_file, h, w);
    } catch (const Error&) {
      throw Error(ErrorCode::UnreadableImage, id + " (segmentation)");
    }
    SegmentationMap seg(h, w, 0, building_classes);
    seg.labels = std::move(labels);
    seg = resize_nearest(seg, rec.pixels.size());
    rec.seg = std::move(seg);
    rec = resize_uniform(rec, size);
    if (rec.seg->building_count() == 0) {
      result.dropped.push_back(id);
      continue;
    }
    validate(rec);
    result.records.push_back(std::move(rec));
  }
  if (result.records.empty())
    throw Error(ErrorCode::EmptyCorpus, image_dir.string() + ": no usable image/segmentation pairs");
  return result;
}

/// Writes `images/<id>.png`, `segs/<id>.png` and `manifest.json` under `dir`.
inline fs::path write_corpus(const fs::path& dir, const std::vector<ImageRecord>& records) {
  fs::create_directories(dir / "images");
  fs::create_directories(dir / "segs");
  nlohmann::json manifest;
  manifest["format_version"] = 1;
  nlohmann::json items = nlohmann::json::array();
  std::set<int> building;
  for (const auto& rec : records) {
    nlohmann::json item;
    item["id"] = rec.id;
    item["image"] = "images/" + rec.id + ".png";
    png::write_rgb(dir / "images" / (rec.id + ".png"), rec.pixels);
    if (rec.seg) {
      item["seg"] = "segs/" + rec.id + ".png";
      png::write_labels(dir / "segs" / (rec.id + ".png"), *rec.seg);
      building.insert(rec.seg->building_classes.begin(), rec.seg->building_classes.end());
    } else {
      item["seg"] = nullptr;
    }
    item["stage"] = stage_name(rec.stage);
    item["truth"] = rec.truth;
    items.push_back(std::move(item));
  }
  manifest["building_classes"] = building;
  manifest["records"] = std::move(items);
  const fs::path path = dir / "manifest.json";
  std::ofstream(path) << manifest.dump(2) << "\n";
  return path;
}

inline std::vector<ImageRecord> read_corpus(const fs::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw Error(ErrorCode::IoError, manifest_path.string() + ": cannot open manifest");
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ConfigError, manifest_path.string() + ": " + e.what());
  }
  const fs::path root = manifest_path.parent_path();
  const auto building = manifest.value("building_classes", std::set<int>{kBuildingClass});
  std::vector<ImageRecord> records;
  for (const auto& item : manifest.at("records")) {
    ImageRecord rec;
    rec.id = item.at("id").get<std::string>();
    rec.pixels = png::read_rgb(root / item.at("image").get<std::string>());
    if (item.contains("seg") && !item["seg"].is_null()) {
      int h = 0, w = 0;
      SegmentationMap seg;
      seg.labels = png::read_labels(root / item["seg"].get<std::string>(), h, w);
      seg.height = h;
      seg.width = w;
      seg.building_classes = building;
      rec.seg = std::move(seg);
    }
    rec.stage = parse_stage(item.value("stage", std::string("O")));
    if (item.contains("truth")) rec.truth = item["truth"].get<std::map<std::string, int>>();
    validate(rec);
    records.push_back(std::move(rec));
  }
  if (records.empty()) throw Error(ErrorCode::EmptyCorpus, manifest_path.string());
  return records;
}

}  // namespace infocluster
