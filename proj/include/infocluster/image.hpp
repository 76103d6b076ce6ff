#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "infocluster/error.hpp"

namespace infocluster {

struct Size2 {
  int height = 0;
  int width = 0;

  friend bool operator==(const Size2&, const Size2&) = default;
};

/// Row-major H×W×3 RGB image with channel values in [0, 1].
class Image {
 public:
  Image() = default;
  Image(int height, int width, float fill = 0.0f)
      : height_(height), width_(width), data_(static_cast<size_t>(height) * width * 3, fill) {}

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  Size2 size() const noexcept { return {height_, width_}; }
  size_t pixel_count() const noexcept { return static_cast<size_t>(height_) * width_; }

  float& at(int y, int x, int c) { return data_[(static_cast<size_t>(y) * width_ + x) * 3 + c]; }
  float at(int y, int x, int c) const {
    return data_[(static_cast<size_t>(y) * width_ + x) * 3 + c];
  }

  std::vector<float>& data() noexcept { return data_; }
  const std::vector<float>& data() const noexcept { return data_; }

  bool finite_in_unit_range() const {
    return std::all_of(data_.begin(), data_.end(),
                       [](float v) { return std::isfinite(v) && v >= 0.0f && v <= 1.0f; });
  }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<float> data_;
};

/// Per-pixel integer class ids plus the ids that count as architecture.
struct SegmentationMap {
  int height = 0;
  int width = 0;
  std::vector<int> labels;
  std::set<int> building_classes;

  SegmentationMap() = default;
  SegmentationMap(int h, int w, int fill, std::set<int> building)
      : height(h), width(w), labels(static_cast<size_t>(h) * w, fill),
        building_classes(std::move(building)) {}

  int& at(int y, int x) { return labels[static_cast<size_t>(y) * width + x]; }
  int at(int y, int x) const { return labels[static_cast<size_t>(y) * width + x]; }

  bool is_building(size_t index) const { return building_classes.contains(labels[index]); }

  size_t building_count() const {
    size_t n = 0;
    for (size_t i = 0; i < labels.size(); ++i) n += is_building(i) ? 1 : 0;
    return n;
  }

  friend bool operator==(const SegmentationMap&, const SegmentationMap&) = default;
};

// Cityscapes label ids used by the synthetic generator.
inline constexpr int kRoadClass = 7;
inline constexpr int kBuildingClass = 11;
inline constexpr int kSkyClass = 23;

/// Pipeline stage: original, masked, interpolated, raster-fairy.
enum class Stage { O, M, I, R };

inline std::string stage_name(Stage s) {
  switch (s) {
    case Stage::O: return "O";
    case Stage::M: return "M";
    case Stage::I: return "I";
    case Stage::R: return "R";
  }
  return "O";
}

inline Stage parse_stage(const std::string& s) {
  if (s == "O") return Stage::O;
  if (s == "M") return Stage::M;
  if (s == "I") return Stage::I;
  if (s == "R") return Stage::R;
  throw Error(ErrorCode::ConfigError, "stage: unknown value '" + s + "'");
}

struct ImageRecord {
  std::string id;
  Image pixels;
  std::optional<SegmentationMap> seg;
  Stage stage = Stage::O;
  std::map<std::string, int> truth;

  friend bool operator==(const ImageRecord&, const ImageRecord&) = default;
};

/// Checks the record invariants; throws on the first violation.
inline void validate(const ImageRecord& rec) {
  if (!rec.pixels.finite_in_unit_range())
    throw Error(ErrorCode::NonFiniteInput, rec.id + ": pixels outside [0,1] or non-finite");
  if (rec.stage != Stage::O && !rec.seg)
    throw Error(ErrorCode::MissingSegmentation, rec.id);
  if (rec.seg) {
    const auto& seg = *rec.seg;
    if (seg.height != rec.pixels.height() || seg.width != rec.pixels.width())
      throw Error(ErrorCode::SizeMismatch, rec.id + ": segmentation shape differs from image");
    if (seg.building_classes.empty())
      throw Error(ErrorCode::InvalidSpec, rec.id + ": empty building class set");
    if (std::any_of(seg.labels.begin(), seg.labels.end(), [](int v) { return v < 0; }))
      throw Error(ErrorCode::InvalidSpec, rec.id + ": negative class id");
  }
}

inline const SegmentationMap& require_building(const ImageRecord& rec) {
  if (!rec.seg) throw Error(ErrorCode::MissingSegmentation, rec.id);
  if (rec.seg->building_count() == 0) throw Error(ErrorCode::NoBuildingPixels, rec.id);
  return *rec.seg;
}

}  // namespace infocluster
