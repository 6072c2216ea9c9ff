#include "nightcast/png.hpp"

#include <zlib.h>

#include <cstring>
#include <filesystem>
#include <fstream>

namespace nightcast {

namespace {

void be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

void chunk(std::vector<std::uint8_t>& out, const char type[5],
           const std::vector<std::uint8_t>& payload) {
  be32(out, static_cast<std::uint32_t>(payload.size()));
  const std::size_t crc_start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), payload.begin(), payload.end());
  const std::uint32_t crc = static_cast<std::uint32_t>(
      crc32(0, out.data() + crc_start, static_cast<uInt>(out.size() - crc_start)));
  be32(out, crc);
}

}  // namespace

std::vector<std::uint8_t> encode_png(const RgbImage& img) {
  if (img.height <= 0 || img.width <= 0) {
    throw ValidationError("png: non-positive dimensions");
  }
  // filter byte 0 before each row
  std::vector<std::uint8_t> raw;
  raw.reserve(static_cast<std::size_t>(img.height * (img.width * 3 + 1)));
  for (long r = 0; r < img.height; ++r) {
    raw.push_back(0);
    const auto* row = img.pixels.data() + r * img.width * 3;
    raw.insert(raw.end(), row, row + img.width * 3);
  }

  uLongf bound = compressBound(static_cast<uLong>(raw.size()));
  std::vector<std::uint8_t> z(bound);
  if (compress2(z.data(), &bound, raw.data(), static_cast<uLong>(raw.size()),
                6) != Z_OK) {
    throw IoError("png: deflate failed");
  }
  z.resize(bound);

  std::vector<std::uint8_t> out = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  std::vector<std::uint8_t> ihdr;
  be32(ihdr, static_cast<std::uint32_t>(img.width));
  be32(ihdr, static_cast<std::uint32_t>(img.height));
  ihdr.push_back(8);   // bit depth
  ihdr.push_back(2);   // color type: truecolor
  ihdr.push_back(0);
  ihdr.push_back(0);
  ihdr.push_back(0);
  chunk(out, "IHDR", ihdr);
  chunk(out, "IDAT", z);
  chunk(out, "IEND", {});
  return out;
}

void write_png(const std::string& path, const RgbImage& img) {
  namespace fs = std::filesystem;
  fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  fs::path tmp = target;
  tmp += ".tmp";
  const std::vector<std::uint8_t> bytes = encode_png(img);
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
  }
  fs::rename(tmp, target);
}

Rgb severity_color(double percent) {
  double p = percent;
  if (p < 0.0) p = 0.0;
  if (p > 100.0) p = 100.0;
  // RdYlGn-style anchors: 0 severe (red), 50 (yellow), 100 normal (green)
  const double r0[3] = {165, 0, 38};
  const double r1[3] = {255, 255, 190};
  const double r2[3] = {0, 104, 55};
  double c[3];
  if (p <= 50.0) {
    const double t = p / 50.0;
    for (int i = 0; i < 3; ++i) c[i] = r0[i] + t * (r1[i] - r0[i]);
  } else {
    const double t = (p - 50.0) / 50.0;
    for (int i = 0; i < 3; ++i) c[i] = r1[i] + t * (r2[i] - r1[i]);
  }
  return {static_cast<std::uint8_t>(c[0] + 0.5),
          static_cast<std::uint8_t>(c[1] + 0.5),
          static_cast<std::uint8_t>(c[2] + 0.5)};
}

namespace {

// 5x7 glyphs, one bit per pixel, top row first.
struct Glyph {
  char ch;
  std::uint8_t rows[7];
};

constexpr Glyph kFont[] = {
    {'0', {0x0e, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0e}},
    {'1', {0x04, 0x0c, 0x04, 0x04, 0x04, 0x04, 0x0e}},
    {'2', {0x0e, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1f}},
    {'3', {0x1f, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0e}},
    {'4', {0x02, 0x06, 0x0a, 0x12, 0x1f, 0x02, 0x02}},
    {'5', {0x1f, 0x10, 0x1e, 0x01, 0x01, 0x11, 0x0e}},
    {'6', {0x06, 0x08, 0x10, 0x1e, 0x11, 0x11, 0x0e}},
    {'7', {0x1f, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08}},
    {'8', {0x0e, 0x11, 0x11, 0x0e, 0x11, 0x11, 0x0e}},
    {'9', {0x0e, 0x11, 0x11, 0x0f, 0x01, 0x02, 0x0c}},
    {'%', {0x19, 0x19, 0x02, 0x04, 0x08, 0x13, 0x13}},
    {'.', {0x00, 0x00, 0x00, 0x00, 0x00, 0x0c, 0x0c}},
    {'-', {0x00, 0x00, 0x00, 0x1f, 0x00, 0x00, 0x00}},
    {' ', {0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00}},
};

const Glyph* find_glyph(char c) {
  for (const Glyph& g : kFont) {
    if (g.ch == c) return &g;
  }
  return nullptr;
}

}  // namespace

void draw_text(RgbImage& img, long row, long col, const std::string& text,
               Rgb color) {
  long x = col;
  for (char c : text) {
    const Glyph* g = find_glyph(c);
    if (g) {
      for (int r = 0; r < 7; ++r) {
        for (int b = 0; b < 5; ++b) {
          if (g->rows[r] & (1 << (4 - b))) {
            const long pr = row + r, pc = x + b;
            if (pr >= 0 && pr < img.height && pc >= 0 && pc < img.width) {
              img.set(pr, pc, color.r, color.g, color.b);
            }
          }
        }
      }
    }
    x += 6;
  }
}

}  // namespace nightcast
