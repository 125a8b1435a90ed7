#include "pseudoseg/png_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <memory>
#include <vector>

namespace pseudoseg {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

// Decoded PNG samples before conversion to a grid type.
struct RawPng {
  int width = 0;
  int height = 0;
  int channels = 0;
  int bit_depth = 0;
  std::vector<std::uint16_t> samples;
};

RawPng decode(const std::filesystem::path& path, bool keep_16bit) {
  FilePtr file(std::fopen(path.string().c_str(), "rb"));
  if (!file) throw DataError("cannot open PNG: " + path.string());

  png_byte signature[8];
  if (std::fread(signature, 1, 8, file.get()) != 8 || png_sig_cmp(signature, 0, 8) != 0) {
    throw DataError("not a PNG file: " + path.string());
  }

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("libpng initialization failed");
  }

  RawPng raw;
  std::vector<png_bytep> rows;
  std::vector<png_byte> buffer;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("corrupt PNG: " + path.string());
  }

  png_init_io(png, file.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  const png_byte color = png_get_color_type(png, info);
  const png_byte depth = png_get_bit_depth(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color & PNG_COLOR_MASK_ALPHA || png_get_valid(png, info, PNG_INFO_tRNS)) {
    png_set_strip_alpha(png);
  }
  if (depth == 16 && !keep_16bit) png_set_strip_16(png);
  if (depth == 16 && keep_16bit) png_set_swap(png);  // little-endian host order
  png_read_update_info(png, info);

  raw.width = static_cast<int>(png_get_image_width(png, info));
  raw.height = static_cast<int>(png_get_image_height(png, info));
  raw.channels = png_get_channels(png, info);
  raw.bit_depth = png_get_bit_depth(png, info);
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  buffer.resize(rowbytes * raw.height);
  rows.resize(raw.height);
  for (int y = 0; y < raw.height; ++y) rows[y] = buffer.data() + rowbytes * y;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  const std::size_t n = static_cast<std::size_t>(raw.width) * raw.height * raw.channels;
  raw.samples.resize(n);
  if (raw.bit_depth == 16) {
    for (std::size_t i = 0; i < n; ++i) {
      raw.samples[i] = static_cast<std::uint16_t>(buffer[2 * i] | (buffer[2 * i + 1] << 8));
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) raw.samples[i] = buffer[i];
  }
  return raw;
}

void encode(const std::filesystem::path& path, int width, int height, int channels,
            int bit_depth, const std::vector<std::uint16_t>& samples) {
  FilePtr file(std::fopen(path.string().c_str(), "wb"));
  if (!file) throw DataError("cannot write PNG: " + path.string());

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw DataError("libpng initialization failed");
  }

  const std::size_t bytes_per_sample = bit_depth == 16 ? 2 : 1;
  const std::size_t rowbytes = static_cast<std::size_t>(width) * channels * bytes_per_sample;
  std::vector<png_byte> buffer(rowbytes * height);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (bit_depth == 16) {
      buffer[2 * i] = static_cast<png_byte>(samples[i] >> 8);  // PNG is big-endian
      buffer[2 * i + 1] = static_cast<png_byte>(samples[i] & 0xff);
    } else {
      buffer[i] = static_cast<png_byte>(samples[i]);
    }
  }
  std::vector<png_bytep> rows(height);
  for (int y = 0; y < height; ++y) rows[y] = buffer.data() + rowbytes * y;

  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw DataError("PNG encoding failed: " + path.string());
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, width, height, bit_depth,
               channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace

Image read_image_png(const std::filesystem::path& path) {
  RawPng raw = decode(path, false);
  Image img = make_image(raw.width, raw.height);
  for (std::size_t p = 0; p < img.pixel_count(); ++p) {
    for (int c = 0; c < 3; ++c) {
      const int src = raw.channels >= 3 ? c : 0;
      img[p * 3 + c] = raw.samples[p * raw.channels + src] / 255.0;
    }
  }
  return img;
}

void write_image_png(const std::filesystem::path& path, const Image& img) {
  if (img.channels() != 3) throw InvalidArgument("write_image_png: image must be RGB");
  std::vector<std::uint16_t> samples(img.values().size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    samples[i] = static_cast<std::uint16_t>(std::lround(std::clamp(img[i], 0.0, 1.0) * 255.0));
  }
  encode(path, img.width(), img.height(), 3, 8, samples);
}

LabelMap read_label_png(const std::filesystem::path& path) {
  RawPng raw = decode(path, true);
  if (raw.channels != 1) throw DataError("label PNG must be single-channel: " + path.string());
  LabelMap labels(raw.width, raw.height, 1, 0);
  for (std::size_t i = 0; i < labels.pixel_count(); ++i) labels[i] = raw.samples[i];
  return labels;
}

void write_label_png(const std::filesystem::path& path, const LabelMap& labels,
                     bool force_16bit) {
  std::vector<std::uint16_t> samples(labels.pixel_count());
  std::int32_t max_id = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (labels[i] < 0 || labels[i] > 0xffff) {
      throw InvalidArgument("label id does not fit a 16-bit PNG");
    }
    samples[i] = static_cast<std::uint16_t>(labels[i]);
    max_id = std::max(max_id, labels[i]);
  }
  const int depth = force_16bit || max_id > 255 ? 16 : 8;
  encode(path, labels.width(), labels.height(), 1, depth, samples);
}

BinaryMask read_mask_png(const std::filesystem::path& path) {
  RawPng raw = decode(path, false);
  if (raw.channels != 1) throw DataError("mask PNG must be single-channel: " + path.string());
  BinaryMask mask = make_mask(raw.width, raw.height);
  for (std::size_t i = 0; i < mask.pixel_count(); ++i) mask[i] = raw.samples[i] ? 1 : 0;
  return mask;
}

void write_mask_png(const std::filesystem::path& path, const BinaryMask& mask) {
  std::vector<std::uint16_t> samples(mask.pixel_count());
  for (std::size_t i = 0; i < samples.size(); ++i) samples[i] = mask[i] ? 255 : 0;
  encode(path, mask.width(), mask.height(), 1, 8, samples);
}

}  // namespace pseudoseg
