#include "pseudoseg/grid.hpp"

#include <algorithm>
#include <cmath>

namespace pseudoseg {

void validate_image(const Image& img) {
  if (img.channels() != 3) throw InvalidArgument("image must have 3 channels");
  for (double v : img.values()) {
    if (!(v >= 0.0 && v <= 1.0)) throw InvalidArgument("image intensity outside [0, 1]");
  }
}

std::vector<double> gaussian_kernel(double sigma) {
  if (!(sigma > 0.0)) throw InvalidArgument("gaussian sigma must be positive");
  const int radius = static_cast<int>(std::ceil(4.0 * sigma));
  std::vector<double> taps(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    const double t = i / sigma;
    taps[i + radius] = std::exp(-0.5 * t * t);
    sum += taps[i + radius];
  }
  for (double& t : taps) t /= sum;
  return taps;
}

Image gaussian_smooth(const Image& img, double sigma) {
  const std::vector<double> taps = gaussian_kernel(sigma);
  const int radius = static_cast<int>(taps.size() / 2);
  const int w = img.width();
  const int h = img.height();
  const int ch = img.channels();

  Image horizontal(w, h, ch, 0.0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < ch; ++c) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i) {
          const int xs = std::clamp(x + i, 0, w - 1);
          acc += taps[i + radius] * img(xs, y, c);
        }
        horizontal(x, y, c) = acc;
      }
    }
  }

  Image out(w, h, ch, 0.0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < ch; ++c) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i) {
          const int ys = std::clamp(y + i, 0, h - 1);
          acc += taps[i + radius] * horizontal(x, ys, c);
        }
        out(x, y, c) = acc;
      }
    }
  }
  return out;
}

std::vector<double> masked_mean(const FeatureMap& f, const BinaryMask& m) {
  require_same_size(f, m, "masked_mean");
  const auto d = static_cast<std::size_t>(f.channels());
  std::vector<double> mean(d, 0.0);
  std::size_t count = 0;
  for (std::size_t i = 0; i < m.pixel_count(); ++i) {
    if (!m[i]) continue;
    const auto px = f.pixel(i);
    for (std::size_t z = 0; z < d; ++z) mean[z] += px[z];
    ++count;
  }
  if (count == 0) throw DegenerateSupport("masked_mean: mask has no foreground pixels");
  for (double& v : mean) v /= static_cast<double>(count);
  return mean;
}

std::size_t mask_area(const BinaryMask& m) {
  return static_cast<std::size_t>(std::count_if(m.values().begin(), m.values().end(),
                                                [](std::uint8_t v) { return v != 0; }));
}

BinaryMask invert(const BinaryMask& m) {
  BinaryMask out(m.width(), m.height(), 1, 0);
  for (std::size_t i = 0; i < m.pixel_count(); ++i) out[i] = m[i] ? 0 : 1;
  return out;
}

BinaryMask class_mask(const LabelMap& labels, std::int32_t class_id) {
  BinaryMask out(labels.width(), labels.height(), 1, 0);
  for (std::size_t i = 0; i < labels.pixel_count(); ++i) out[i] = labels[i] == class_id ? 1 : 0;
  return out;
}

}  // namespace pseudoseg
