#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nightcast/common.hpp"

namespace nightcast {

struct RgbImage {
  long height = 0;
  long width = 0;
  std::vector<std::uint8_t> pixels;  // row-major RGB triplets

  RgbImage() = default;
  RgbImage(long h, long w)
      : height(h), width(w),
        pixels(static_cast<std::size_t>(h * w * 3), 255) {}

  void set(long r, long c, std::uint8_t red, std::uint8_t green,
           std::uint8_t blue) {
    auto o = static_cast<std::size_t>((r * width + c) * 3);
    pixels[o] = red;
    pixels[o + 1] = green;
    pixels[o + 2] = blue;
  }
};

// Encodes 8-bit RGB with a fixed zlib setting, so identical pixels always
// produce identical bytes.
std::vector<std::uint8_t> encode_png(const RgbImage& img);
void write_png(const std::string& path, const RgbImage& img);

struct Rgb {
  std::uint8_t r, g, b;
};

// Diverging red -> yellow -> green ramp over [0, 100]; inputs are clamped.
Rgb severity_color(double percent);

// Draws text with a built-in 5x7 digit/percent font (what the map legend uses).
void draw_text(RgbImage& img, long row, long col, const std::string& text,
               Rgb color);

}  // namespace nightcast
