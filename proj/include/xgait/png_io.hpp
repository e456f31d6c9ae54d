#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "xgait/frames.hpp"
#include "xgait/grid.hpp"

namespace xgait {

// Fixed 12-color palette for parsing PNGs; palette index = parsing label.
extern const std::array<std::array<uint8_t, 3>, kNumParsingLabels> kParsingPalette;

// 8-bit grayscale PNG; pixel values are written verbatim.
void write_gray_png(const std::string& path, const ByteGrid& img);

// 8-bit palette PNG; grid values are palette indices and must be < 12.
void write_palette_png(const std::string& path, const ByteGrid& indices);

// Reads a grayscale PNG; values >= 128 map to 1, else 0.
ByteGrid read_silhouette_png(const std::string& path);

// Reads a palette PNG and returns the raw palette indices.
ByteGrid read_parsing_png(const std::string& path);

}  // namespace xgait
