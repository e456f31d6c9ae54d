#include "xgait/png_io.hpp"

#include <png.h>

#include <cstdio>
#include <memory>
#include <vector>

#include "xgait/errors.hpp"

namespace xgait {

const std::array<std::array<uint8_t, 3>, kNumParsingLabels> kParsingPalette = {{
    {0, 0, 0},        // background
    {255, 220, 177},  // head
    {200, 30, 30},    // torso
    {40, 160, 40},    // left arm
    {90, 220, 90},    // right arm
    {220, 200, 40},   // left hand
    {250, 240, 120},  // right hand
    {160, 40, 200},   // dress
    {40, 60, 200},    // left leg
    {100, 140, 250},  // right leg
    {230, 120, 30},   // left foot
    {40, 200, 210},   // right foot
}};

namespace {

struct FileCloser {
  void operator()(FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

void write_png(const std::string& path, const ByteGrid& img, bool palette) {
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw IOFailure("cannot open for writing: " + path);

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IOFailure("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IOFailure("png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IOFailure("libpng write error: " + path);
  }

  png_init_io(png, fp.get());
  // pinned so regeneration stays byte-identical
  png_set_compression_level(png, 6);
  png_set_filter(png, 0, PNG_FILTER_NONE);
  png_set_IHDR(png, info, img.w, img.h, 8,
               palette ? PNG_COLOR_TYPE_PALETTE : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);

  std::vector<png_color> plte(kNumParsingLabels);
  if (palette) {
    for (int i = 0; i < kNumParsingLabels; ++i) {
      plte[i].red = kParsingPalette[i][0];
      plte[i].green = kParsingPalette[i][1];
      plte[i].blue = kParsingPalette[i][2];
    }
    png_set_PLTE(png, info, plte.data(), kNumParsingLabels);
  }
  png_write_info(png, info);

  std::vector<png_bytep> rows(img.h);
  for (int r = 0; r < img.h; ++r)
    rows[r] = const_cast<png_bytep>(img.v.data() + static_cast<size_t>(r) * img.w);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

ByteGrid read_png(const std::string& path, bool expect_palette) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw IOFailure("cannot open for reading: " + path);

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IOFailure("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw IOFailure("png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IOFailure("libpng read error: " + path);
  }

  png_init_io(png, fp.get());
  png_read_info(png, info);

  int color = png_get_color_type(png, info);
  int depth = png_get_bit_depth(png, info);
  if (expect_palette && color != PNG_COLOR_TYPE_PALETTE) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("expected palette PNG: " + path);
  }
  if (!expect_palette && color != PNG_COLOR_TYPE_GRAY) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("expected grayscale PNG: " + path);
  }
  if (depth < 8) {
    // palette indices or gray values packed below one byte
    if (color == PNG_COLOR_TYPE_PALETTE)
      png_set_packing(png);
    else
      png_set_expand_gray_1_2_4_to_8(png);
  } else if (depth == 16) {
    png_set_strip_16(png);
  }
  png_read_update_info(png, info);

  ByteGrid img((int)png_get_image_height(png, info), (int)png_get_image_width(png, info));
  std::vector<png_bytep> rows(img.h);
  for (int r = 0; r < img.h; ++r)
    rows[r] = img.v.data() + static_cast<size_t>(r) * img.w;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

}  // namespace

void write_gray_png(const std::string& path, const ByteGrid& img) { write_png(path, img, false); }

void write_palette_png(const std::string& path, const ByteGrid& indices) {
  for (uint8_t v : indices.v)
    if (v >= kNumParsingLabels) throw DataError("palette index out of range in " + path);
  write_png(path, indices, true);
}

ByteGrid read_silhouette_png(const std::string& path) {
  ByteGrid img = read_png(path, false);
  for (auto& v : img.v) v = v >= 128 ? 1 : 0;
  return img;
}

ByteGrid read_parsing_png(const std::string& path) {
  ByteGrid img = read_png(path, true);
  for (uint8_t v : img.v)
    if (v >= kNumParsingLabels) throw DataError("parsing label out of range in " + path);
  return img;
}

}  // namespace xgait
