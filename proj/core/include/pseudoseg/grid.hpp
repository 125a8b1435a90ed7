#pragma once

// Dense 2-D grids shared by every stage of the pipeline.
//
// Storage is row-major and channel-interleaved: element (x, y, c) lives at
// (y * width + x) * channels + c. All loops in the library walk pixels in
// that order so results are reproducible bit for bit.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pseudoseg/error.hpp"

namespace pseudoseg {

template <typename T, typename Tag>
class Grid {
 public:
  using value_type = T;

  Grid() = default;
  Grid(int width, int height, int channels = 1, T fill = T{})
      : width_(width), height_(height), channels_(channels) {
    if (width < 0 || height < 0 || channels < 1) {
      throw InvalidArgument("grid dimensions must be non-negative with >= 1 channel");
    }
    values_.assign(static_cast<std::size_t>(width) * height * channels, fill);
  }
  Grid(int width, int height, int channels, std::vector<T> values)
      : width_(width), height_(height), channels_(channels), values_(std::move(values)) {
    if (width < 0 || height < 0 || channels < 1 ||
        values_.size() != static_cast<std::size_t>(width) * height * channels) {
      throw InvalidArgument("grid value count does not match its dimensions");
    }
  }

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_; }
  std::size_t pixel_count() const { return static_cast<std::size_t>(width_) * height_; }
  bool empty() const { return pixel_count() == 0; }

  std::size_t pixel_index(int x, int y) const {
    return static_cast<std::size_t>(y) * width_ + x;
  }

  T& operator()(int x, int y, int c = 0) {
    return values_[pixel_index(x, y) * channels_ + c];
  }
  const T& operator()(int x, int y, int c = 0) const {
    return values_[pixel_index(x, y) * channels_ + c];
  }

  // Flat element access (pixel index when channels == 1).
  T& operator[](std::size_t i) { return values_[i]; }
  const T& operator[](std::size_t i) const { return values_[i]; }

  std::span<T> pixel(std::size_t index) {
    return {values_.data() + index * channels_, static_cast<std::size_t>(channels_)};
  }
  std::span<const T> pixel(std::size_t index) const {
    return {values_.data() + index * channels_, static_cast<std::size_t>(channels_)};
  }

  std::span<T> values() { return values_; }
  std::span<const T> values() const { return values_; }

  template <typename OtherGrid>
  bool same_size(const OtherGrid& other) const {
    return width_ == other.width() && height_ == other.height();
  }

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  int channels_ = 1;
  std::vector<T> values_;
};

struct ImageTag {};
struct LabelTag {};
struct MaskTag {};
struct ProbTag {};
struct FeatureTag {};
struct RegionTag {};

// RGB image, 3 channels, intensities in [0, 1].
using Image = Grid<double, ImageTag>;
// Per-pixel class id, 0 = background.
using LabelMap = Grid<std::int32_t, LabelTag>;
// Per-pixel {0, 1} membership.
using BinaryMask = Grid<std::uint8_t, MaskTag>;
// Per-pixel foreground probability in [0, 1].
using ProbMask = Grid<double, ProbTag>;
// Per-pixel d-dimensional feature vectors.
using FeatureMap = Grid<double, FeatureTag>;

inline Image make_image(int width, int height) { return Image(width, height, 3, 0.0); }
inline BinaryMask make_mask(int width, int height, std::uint8_t fill = 0) {
  return BinaryMask(width, height, 1, fill);
}

// Throws InvalidArgument naming `what` unless a and b share width and height.
template <typename A, typename B>
void require_same_size(const A& a, const B& b, const char* what) {
  if (!a.same_size(b)) {
    throw InvalidArgument(std::string(what) + ": dimension mismatch (" +
                          std::to_string(a.width()) + "x" + std::to_string(a.height()) +
                          " vs " + std::to_string(b.width()) + "x" +
                          std::to_string(b.height()) + ")");
  }
}

// Throws InvalidArgument unless every value is in [0, 1] and there are 3 channels.
void validate_image(const Image& img);

// Separable Gaussian blur per channel. Kernel radius ceil(4 * sigma), borders
// replicate the edge value. sigma must be positive.
Image gaussian_smooth(const Image& img, double sigma);

// Normalized 1-D Gaussian taps for offsets -radius..radius.
std::vector<double> gaussian_kernel(double sigma);

// Per-channel mean of f over pixels where m == 1. Throws on an empty mask.
std::vector<double> masked_mean(const FeatureMap& f, const BinaryMask& m);

std::size_t mask_area(const BinaryMask& m);
BinaryMask invert(const BinaryMask& m);
// 1 exactly where labels == class_id.
BinaryMask class_mask(const LabelMap& labels, std::int32_t class_id);

}  // namespace pseudoseg
