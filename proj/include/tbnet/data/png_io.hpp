#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "tbnet/core/sample.hpp"

namespace tbnet {

/// 8-bit single-channel PNG. Color inputs are converted to gray on read.
Grid<std::uint8_t> read_gray_png(const std::string& path);
void write_gray_png(const std::string& path, const Grid<std::uint8_t>& pixels);

/// 8-bit RGB PNG; `rgb` holds 3 bytes per pixel.
void write_rgb_png(const std::string& path, int height, int width, const std::vector<std::uint8_t>& rgb);

}  // namespace tbnet
