#pragma once

#include <algorithm>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "segsense/errors.hpp"

namespace segsense {

/// Anything with a row-major value buffer and 2D extents. Masks, soft masks
/// and gray images all satisfy it, so the metric kernels are written once.
template <class G>
concept PixelGrid = requires(const G& g) {
  { g.width() } -> std::convertible_to<std::size_t>;
  { g.height() } -> std::convertible_to<std::size_t>;
  g.values();
  requires std::is_arithmetic_v<typename decltype(g.values())::value_type>;
};

/// 8-bit grayscale raster. Intensities are inherently within [0, 255].
class GrayImage {
 public:
  GrayImage() = default;
  GrayImage(std::size_t width, std::size_t height, std::uint8_t fill = 0)
      : width_(width), height_(height), data_(width * height, fill) {}
  GrayImage(std::size_t width, std::size_t height, std::vector<std::uint8_t> data)
      : width_(width), height_(height), data_(std::move(data)) {
    if (data_.size() != width_ * height_) {
      throw DataError("gray image buffer size does not match " + std::to_string(width_) + "x" +
                      std::to_string(height_));
    }
  }

  std::size_t width() const noexcept { return width_; }
  std::size_t height() const noexcept { return height_; }
  std::size_t size() const noexcept { return data_.size(); }
  std::span<const std::uint8_t> values() const noexcept { return data_; }
  std::uint8_t operator()(std::size_t y, std::size_t x) const { return data_[y * width_ + x]; }
  std::uint8_t& operator()(std::size_t y, std::size_t x) { return data_[y * width_ + x]; }

 private:
  std::size_t width_ = 0;
  std::size_t height_ = 0;
  std::vector<std::uint8_t> data_;
};

/// Binary foreground/background grid. Every stored value is 0 or 1.
class Mask {
 public:
  Mask() = default;
  Mask(std::size_t width, std::size_t height)
      : width_(width), height_(height), data_(width * height, 0) {}

  /// Validating constructor: rejects buffers of the wrong length or with
  /// values outside {0, 1}.
  Mask(std::size_t width, std::size_t height, std::vector<std::uint8_t> data,
       std::string source_id = {})
      : width_(width), height_(height), data_(std::move(data)), source_id_(std::move(source_id)) {
    if (data_.size() != width_ * height_) {
      throw DataError("mask buffer size does not match " + std::to_string(width_) + "x" +
                      std::to_string(height_));
    }
    if (std::any_of(data_.begin(), data_.end(), [](std::uint8_t v) { return v > 1; })) {
      throw DataError("mask values must be 0 or 1");
    }
  }

  std::size_t width() const noexcept { return width_; }
  std::size_t height() const noexcept { return height_; }
  std::size_t size() const noexcept { return data_.size(); }
  std::span<const std::uint8_t> values() const noexcept { return data_; }

  bool operator()(std::size_t y, std::size_t x) const { return data_[y * width_ + x] != 0; }
  void set(std::size_t y, std::size_t x, bool on) { data_[y * width_ + x] = on ? 1 : 0; }

  const std::string& source_id() const noexcept { return source_id_; }
  void set_source_id(std::string id) { source_id_ = std::move(id); }

  bool same_pixels(const Mask& other) const {
    return width_ == other.width_ && height_ == other.height_ && data_ == other.data_;
  }

 private:
  std::size_t width_ = 0;
  std::size_t height_ = 0;
  std::vector<std::uint8_t> data_;
  std::string source_id_;
};

/// Prediction map with per-pixel foreground probability in [0, 1].
class SoftMask {
 public:
  SoftMask() = default;
  SoftMask(std::size_t width, std::size_t height, double fill = 0.0)
      : width_(width), height_(height), data_(width * height, fill) {}
  SoftMask(std::size_t width, std::size_t height, std::vector<double> data)
      : width_(width), height_(height), data_(std::move(data)) {
    if (data_.size() != width_ * height_) {
      throw DataError("soft mask buffer size does not match " + std::to_string(width_) + "x" +
                      std::to_string(height_));
    }
    if (std::any_of(data_.begin(), data_.end(), [](double v) { return !(v >= 0.0 && v <= 1.0); })) {
      throw DataError("soft mask values must lie in [0, 1]");
    }
  }
  explicit SoftMask(const Mask& m)
      : width_(m.width()), height_(m.height()), data_(m.values().begin(), m.values().end()) {}

  std::size_t width() const noexcept { return width_; }
  std::size_t height() const noexcept { return height_; }
  std::size_t size() const noexcept { return data_.size(); }
  std::span<const double> values() const noexcept { return data_; }
  double operator()(std::size_t y, std::size_t x) const { return data_[y * width_ + x]; }

  /// Hard mask from probabilities: foreground iff value >= cutoff.
  Mask threshold(double cutoff = 0.5) const {
    std::vector<std::uint8_t> out(data_.size());
    std::transform(data_.begin(), data_.end(), out.begin(),
                   [cutoff](double v) -> std::uint8_t { return v >= cutoff ? 1 : 0; });
    return Mask(width_, height_, std::move(out));
  }

 private:
  std::size_t width_ = 0;
  std::size_t height_ = 0;
  std::vector<double> data_;
};

/// Ordered B-scan sequence forming one 3D volume.
class MaskStack {
 public:
  MaskStack() = default;
  MaskStack(std::string stack_id, int slice_index_origin = 0)
      : stack_id_(std::move(stack_id)), origin_(slice_index_origin) {}

  void push_back(Mask slice) {
    if (!slices_.empty() &&
        (slice.width() != slices_.front().width() || slice.height() != slices_.front().height())) {
      throw DataError("stack '" + stack_id_ + "': slice " + std::to_string(slices_.size()) +
                      " is " + std::to_string(slice.width()) + "x" + std::to_string(slice.height()) +
                      ", expected " + std::to_string(slices_.front().width()) + "x" +
                      std::to_string(slices_.front().height()));
    }
    slices_.push_back(std::move(slice));
  }

  std::span<const Mask> slices() const noexcept { return slices_; }
  std::size_t size() const noexcept { return slices_.size(); }
  bool empty() const noexcept { return slices_.empty(); }
  const std::string& stack_id() const noexcept { return stack_id_; }
  int slice_index_origin() const noexcept { return origin_; }

 private:
  std::vector<Mask> slices_;
  std::string stack_id_;
  int origin_ = 0;
};

inline constexpr int kDefaultBinaryCutoff = 127;
inline constexpr std::size_t kDefaultMinForeground = 50;

/// Pixel is foreground iff intensity > cutoff.
inline Mask to_binary(const GrayImage& img, int cutoff = kDefaultBinaryCutoff) {
  if (cutoff < 0 || cutoff > 255) {
    throw UsageError("binarization cutoff must be within [0, 255], got " + std::to_string(cutoff));
  }
  std::vector<std::uint8_t> out(img.size());
  std::transform(img.values().begin(), img.values().end(), out.begin(),
                 [cutoff](std::uint8_t v) -> std::uint8_t { return v > cutoff ? 1 : 0; });
  return Mask(img.width(), img.height(), std::move(out));
}

inline std::size_t foreground_count(const Mask& m) {
  return static_cast<std::size_t>(std::count(m.values().begin(), m.values().end(), std::uint8_t{1}));
}

/// Keeps masks whose foreground count reaches min_count, in input order.
inline std::vector<Mask> filter_informative(std::span<const Mask> masks,
                                            std::size_t min_count = kDefaultMinForeground) {
  std::vector<Mask> kept;
  for (const auto& m : masks) {
    if (foreground_count(m) >= min_count) kept.push_back(m);
  }
  return kept;
}

/// Nearest-neighbour downscale. Output extents are floor(scale * input);
/// destination pixel x samples source column floor((x + 0.5) * in / out).
inline Mask resize_mask(const Mask& m, double scale) {
  if (!(scale > 0.0 && scale <= 1.0)) {
    throw UsageError("resize scale must be in (0, 1], got " + std::to_string(scale));
  }
  // The epsilon absorbs representation error in products like 0.29 * 100.
  const auto scaled = [scale](std::size_t n) {
    return static_cast<std::size_t>(static_cast<double>(n) * scale + 1e-9);
  };
  const std::size_t out_w = scaled(m.width());
  const std::size_t out_h = scaled(m.height());
  if (out_w == 0 || out_h == 0) {
    throw DataError("resizing " + std::to_string(m.width()) + "x" + std::to_string(m.height()) +
                    " by " + std::to_string(scale) + " yields an empty mask");
  }
  Mask out(out_w, out_h);
  out.set_source_id(m.source_id());
  for (std::size_t y = 0; y < out_h; ++y) {
    const std::size_t sy = ((2 * y + 1) * m.height()) / (2 * out_h);
    for (std::size_t x = 0; x < out_w; ++x) {
      const std::size_t sx = ((2 * x + 1) * m.width()) / (2 * out_w);
      out.set(y, x, m(sy, sx));
    }
  }
  return out;
}

}  // namespace segsense
