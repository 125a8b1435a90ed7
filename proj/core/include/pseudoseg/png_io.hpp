#pragma once

#include <filesystem>

#include "pseudoseg/grid.hpp"

namespace pseudoseg {

// 8-bit RGB on write; any 8/16-bit gray, RGB, palette or alpha PNG on read.
// Intensities are mapped to [0, 1] by dividing by 255.
Image read_image_png(const std::filesystem::path& path);
void write_image_png(const std::filesystem::path& path, const Image& img);

// Single-channel PNG where the pixel value is the class id. Written as 8-bit
// when every id fits, otherwise 16-bit; force_16bit always writes 16-bit.
LabelMap read_label_png(const std::filesystem::path& path);
void write_label_png(const std::filesystem::path& path, const LabelMap& labels,
                     bool force_16bit = false);

// Single-channel {0, 255}; any nonzero value reads back as 1.
BinaryMask read_mask_png(const std::filesystem::path& path);
void write_mask_png(const std::filesystem::path& path, const BinaryMask& mask);

}  // namespace pseudoseg
