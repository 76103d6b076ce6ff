#pragma once

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "infocluster/error.hpp"
#include "infocluster/image.hpp"

namespace infocluster::png {

namespace detail {

inline std::vector<uint8_t> read_raw(const std::filesystem::path& path, uint32_t format, int& h,
                                     int& w) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.string().c_str()))
    throw Error(ErrorCode::UnreadableImage, path.string() + ": " + img.message);
  img.format = format;
  std::vector<uint8_t> buf(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
    png_image_free(&img);
    throw Error(ErrorCode::UnreadableImage, path.string() + ": " + img.message);
  }
  h = static_cast<int>(img.height);
  w = static_cast<int>(img.width);
  return buf;
}

inline void write_raw(const std::filesystem::path& path, uint32_t format, int h, int w,
                      const std::vector<uint8_t>& buf) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(w);
  img.height = static_cast<png_uint_32>(h);
  img.format = format;
  if (!png_image_write_to_file(&img, path.string().c_str(), 0, buf.data(), 0, nullptr))
    throw Error(ErrorCode::IoError, path.string() + ": " + img.message);
}

}  // namespace detail

inline uint8_t to_byte(float v) {
  return static_cast<uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

/// Reads any PNG as 8-bit RGB, rescaled to [0, 1].
inline Image read_rgb(const std::filesystem::path& path) {
  int h = 0, w = 0;
  auto buf = detail::read_raw(path, PNG_FORMAT_RGB, h, w);
  Image out(h, w);
  for (size_t i = 0; i < buf.size(); ++i) out.data()[i] = buf[i] / 255.0f;
  return out;
}

inline void write_rgb(const std::filesystem::path& path, const Image& image) {
  std::vector<uint8_t> buf(image.data().size());
  for (size_t i = 0; i < buf.size(); ++i) buf[i] = to_byte(image.data()[i]);
  detail::write_raw(path, PNG_FORMAT_RGB, image.height(), image.width(), buf);
}

/// Reads an 8-bit single-channel label image.
inline std::vector<int> read_labels(const std::filesystem::path& path, int& h, int& w) {
  auto buf = detail::read_raw(path, PNG_FORMAT_GRAY, h, w);
  return {buf.begin(), buf.end()};
}

inline void write_labels(const std::filesystem::path& path, const SegmentationMap& seg) {
  std::vector<uint8_t> buf(seg.labels.size());
  for (size_t i = 0; i < buf.size(); ++i) {
    if (seg.labels[i] < 0 || seg.labels[i] > 255)
      throw Error(ErrorCode::IoError, path.string() + ": class id does not fit in 8 bits");
    buf[i] = static_cast<uint8_t>(seg.labels[i]);
  }
  detail::write_raw(path, PNG_FORMAT_GRAY, seg.height, seg.width, buf);
}

}  // namespace infocluster::png
