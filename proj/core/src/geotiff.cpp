#include "nightcast/geotiff.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>

namespace nightcast {

namespace {

constexpr std::uint16_t kTypeShort = 3;
constexpr std::uint16_t kTypeLong = 4;
constexpr std::uint16_t kTypeAscii = 2;
constexpr std::uint16_t kTypeDouble = 12;

constexpr std::uint16_t kTagWidth = 256;
constexpr std::uint16_t kTagLength = 257;
constexpr std::uint16_t kTagBitsPerSample = 258;
constexpr std::uint16_t kTagCompression = 259;
constexpr std::uint16_t kTagPhotometric = 262;
constexpr std::uint16_t kTagStripOffsets = 273;
constexpr std::uint16_t kTagSamplesPerPixel = 277;
constexpr std::uint16_t kTagRowsPerStrip = 278;
constexpr std::uint16_t kTagStripByteCounts = 279;
constexpr std::uint16_t kTagTileWidth = 322;
constexpr std::uint16_t kTagSampleFormat = 339;
constexpr std::uint16_t kTagModelPixelScale = 33550;
constexpr std::uint16_t kTagModelTiepoint = 33922;
constexpr std::uint16_t kTagGeoKeyDirectory = 34735;
constexpr std::uint16_t kTagGdalNodata = 42113;

struct Writer {
  std::vector<std::uint8_t> bytes;

  void u16(std::uint16_t v) {
    bytes.push_back(static_cast<std::uint8_t>(v & 0xff));
    bytes.push_back(static_cast<std::uint8_t>(v >> 8));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    for (int i = 0; i < 8; ++i) bytes.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
  }
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    bytes.insert(bytes.end(), b, b + n);
  }
};

struct TagEntry {
  std::uint16_t tag;
  std::uint16_t type;
  std::uint32_t count;
  std::uint32_t value;  // inline value or offset, already resolved
};

void atomic_write(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  namespace fs = std::filesystem;
  fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write to " + tmp.string());
  }
  fs::rename(tmp, target);
}

}  // namespace

std::vector<std::uint8_t> encode_geotiff(const GeoTiffImage& img) {
  if (img.height <= 0 || img.width <= 0) {
    throw ValidationError("geotiff: non-positive dimensions");
  }
  if (static_cast<long>(img.samples.size()) != img.height * img.width) {
    throw ValidationError("geotiff: sample count does not match dimensions");
  }

  const std::uint32_t pixel_bytes =
      static_cast<std::uint32_t>(img.samples.size() * sizeof(float));
  const std::uint32_t data_offset = 8;
  const std::uint32_t ifd_offset = data_offset + pixel_bytes;

  std::string nodata_str;
  if (img.nodata) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", *img.nodata);
    nodata_str = buf;
    nodata_str.push_back('\0');
  }

  const std::uint16_t n_tags = img.nodata ? 14 : 13;
  const std::uint32_t ifd_bytes = 2 + 12u * n_tags + 4;
  std::uint32_t payload = ifd_offset + ifd_bytes;

  const std::uint32_t scale_off = payload;
  payload += 3 * 8;
  const std::uint32_t tiepoint_off = payload;
  payload += 6 * 8;
  const std::uint32_t geokey_off = payload;
  payload += 16 * 2;
  const std::uint32_t nodata_off = payload;

  std::vector<TagEntry> tags = {
      {kTagWidth, kTypeLong, 1, static_cast<std::uint32_t>(img.width)},
      {kTagLength, kTypeLong, 1, static_cast<std::uint32_t>(img.height)},
      {kTagBitsPerSample, kTypeShort, 1, 32},
      {kTagCompression, kTypeShort, 1, 1},
      {kTagPhotometric, kTypeShort, 1, 1},
      {kTagStripOffsets, kTypeLong, 1, data_offset},
      {kTagSamplesPerPixel, kTypeShort, 1, 1},
      {kTagRowsPerStrip, kTypeLong, 1, static_cast<std::uint32_t>(img.height)},
      {kTagStripByteCounts, kTypeLong, 1, pixel_bytes},
      {kTagSampleFormat, kTypeShort, 1, 3},
      {kTagModelPixelScale, kTypeDouble, 3, scale_off},
      {kTagModelTiepoint, kTypeDouble, 6, tiepoint_off},
      {kTagGeoKeyDirectory, kTypeShort, 16, geokey_off},
  };
  if (img.nodata) {
    tags.push_back({kTagGdalNodata, kTypeAscii,
                    static_cast<std::uint32_t>(nodata_str.size()), nodata_off});
  }

  Writer w;
  w.bytes.reserve(payload + nodata_str.size());
  w.u16(0x4949);   // "II"
  w.u16(42);
  w.u32(ifd_offset);
  w.raw(img.samples.data(), pixel_bytes);

  w.u16(n_tags);
  for (const TagEntry& t : tags) {
    w.u16(t.tag);
    w.u16(t.type);
    w.u32(t.count);
    w.u32(t.value);
  }
  w.u32(0);  // no next IFD

  w.f64(img.georef.pixel_w);
  w.f64(img.georef.pixel_h);
  w.f64(0.0);

  w.f64(0.0);
  w.f64(0.0);
  w.f64(0.0);
  w.f64(img.georef.origin_x);
  w.f64(img.georef.origin_y);
  w.f64(0.0);

  std::uint16_t epsg = 4326;
  if (img.georef.crs.rfind("EPSG:", 0) == 0) {
    epsg = static_cast<std::uint16_t>(std::stoi(img.georef.crs.substr(5)));
  }
  const std::uint16_t geokeys[16] = {1,    1, 0, 3,     1024, 0, 1, 2,
                                     1025, 0, 1, 1,     2048, 0, 1, epsg};
  for (std::uint16_t k : geokeys) w.u16(k);

  if (img.nodata) w.raw(nodata_str.data(), nodata_str.size());

  return std::move(w.bytes);
}

void write_geotiff(const std::string& path, const GeoTiffImage& img) {
  atomic_write(path, encode_geotiff(img));
}

namespace {

struct Reader {
  std::vector<std::uint8_t> bytes;
  bool big_endian = false;

  std::uint16_t u16(std::size_t off) const {
    check(off, 2);
    return big_endian
               ? static_cast<std::uint16_t>((bytes[off] << 8) | bytes[off + 1])
               : static_cast<std::uint16_t>(bytes[off] | (bytes[off + 1] << 8));
  }
  std::uint32_t u32(std::size_t off) const {
    check(off, 4);
    std::uint32_t v = 0;
    if (big_endian) {
      for (int i = 0; i < 4; ++i) v = (v << 8) | bytes[off + static_cast<std::size_t>(i)];
    } else {
      for (int i = 3; i >= 0; --i) v = (v << 8) | bytes[off + static_cast<std::size_t>(i)];
    }
    return v;
  }
  double f64(std::size_t off) const {
    check(off, 8);
    std::uint64_t v = 0;
    if (big_endian) {
      for (int i = 0; i < 8; ++i) v = (v << 8) | bytes[off + static_cast<std::size_t>(i)];
    } else {
      for (int i = 7; i >= 0; --i) v = (v << 8) | bytes[off + static_cast<std::size_t>(i)];
    }
    double d;
    std::memcpy(&d, &v, 8);
    return d;
  }
  float f32(std::size_t off) const {
    check(off, 4);
    std::uint32_t v = u32(off);
    float f;
    std::memcpy(&f, &v, 4);
    return f;
  }
  void check(std::size_t off, std::size_t n) const {
    if (off + n > bytes.size()) throw IoError("geotiff: truncated file");
  }
};

struct RawTag {
  std::uint16_t type = 0;
  std::uint32_t count = 0;
  std::size_t data_off = 0;  // offset of the value data in the file
};

}  // namespace

GeoTiffImage read_geotiff(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in),
                                  std::istreambuf_iterator<char>()};
  return read_geotiff_bytes(std::move(bytes), path);
}

GeoTiffImage read_geotiff_bytes(std::vector<std::uint8_t> bytes,
                                const std::string& path) {
  Reader r;
  r.bytes = std::move(bytes);
  if (r.bytes.size() < 8) throw IoError("geotiff: " + path + " too small");
  const std::uint16_t order = static_cast<std::uint16_t>(r.bytes[0] | (r.bytes[1] << 8));
  if (order == 0x4949) {
    r.big_endian = false;
  } else if (order == 0x4d4d) {
    r.big_endian = true;
  } else {
    throw IoError("geotiff: " + path + " is not a TIFF (bad byte order mark)");
  }
  if (r.u16(2) != 42) throw IoError("geotiff: " + path + " bad magic");

  const std::uint32_t ifd = r.u32(4);
  const std::uint16_t n_tags = r.u16(ifd);
  std::map<std::uint16_t, RawTag> tags;
  for (std::uint16_t i = 0; i < n_tags; ++i) {
    const std::size_t e = ifd + 2 + 12u * i;
    const std::uint16_t tag = r.u16(e);
    RawTag t;
    t.type = r.u16(e + 2);
    t.count = r.u32(e + 4);
    std::size_t type_size = t.type == kTypeShort  ? 2
                            : t.type == kTypeLong ? 4
                            : t.type == kTypeDouble ? 8
                                                    : 1;
    t.data_off = (type_size * t.count <= 4) ? e + 8 : r.u32(e + 8);
    tags[tag] = t;
  }

  auto get_uint = [&](std::uint16_t tag, std::uint32_t def,
                      bool required = false) -> std::uint32_t {
    auto it = tags.find(tag);
    if (it == tags.end()) {
      if (required) throw IoError("geotiff: missing tag " + std::to_string(tag));
      return def;
    }
    return it->second.type == kTypeShort ? r.u16(it->second.data_off)
                                         : r.u32(it->second.data_off);
  };
  auto get_uint_at = [&](const RawTag& t, std::uint32_t idx) -> std::uint32_t {
    return t.type == kTypeShort ? r.u16(t.data_off + 2 * idx)
                                : r.u32(t.data_off + 4 * idx);
  };

  if (tags.count(kTagTileWidth)) {
    throw IoError("geotiff: tiled layout not supported: " + path);
  }
  if (get_uint(kTagCompression, 1) != 1) {
    throw IoError("geotiff: compressed data not supported: " + path);
  }
  if (get_uint(kTagSamplesPerPixel, 1) != 1) {
    throw IoError("geotiff: expected a single band: " + path);
  }
  const std::uint32_t bits = get_uint(kTagBitsPerSample, 32);
  if (bits != 32 && bits != 64) {
    throw IoError("geotiff: unsupported BitsPerSample " + std::to_string(bits));
  }
  if (get_uint(kTagSampleFormat, 3) != 3) {
    throw IoError("geotiff: expected IEEE float samples: " + path);
  }

  GeoTiffImage img;
  img.width = get_uint(kTagWidth, 0, true);
  img.height = get_uint(kTagLength, 0, true);
  if (img.width <= 0 || img.height <= 0) {
    throw IoError("geotiff: bad dimensions in " + path);
  }
  img.samples.resize(static_cast<std::size_t>(img.width * img.height));

  const RawTag& offs = tags.at(kTagStripOffsets);
  const std::uint32_t rows_per_strip =
      get_uint(kTagRowsPerStrip, static_cast<std::uint32_t>(img.height));
  const std::size_t bytes_per_sample = bits / 8;
  std::size_t sample = 0;
  for (std::uint32_t s = 0; s < offs.count; ++s) {
    const std::size_t strip_off = get_uint_at(offs, s);
    const long first_row = static_cast<long>(s) * rows_per_strip;
    const long n_rows = std::min<long>(rows_per_strip, img.height - first_row);
    for (long i = 0; i < n_rows * img.width; ++i, ++sample) {
      const std::size_t off = strip_off + static_cast<std::size_t>(i) * bytes_per_sample;
      img.samples[sample] = bits == 32 ? r.f32(off) : static_cast<float>(r.f64(off));
    }
  }
  if (sample != img.samples.size()) {
    throw IoError("geotiff: strip data does not cover the image: " + path);
  }

  if (auto it = tags.find(kTagGdalNodata); it != tags.end()) {
    std::string s;
    for (std::uint32_t i = 0; i + 1 < it->second.count; ++i) {
      char c = static_cast<char>(r.bytes[it->second.data_off + i]);
      if (c == '\0') break;
      s.push_back(c);
    }
    if (!s.empty()) img.nodata = std::stod(s);
  }
  if (auto it = tags.find(kTagModelPixelScale); it != tags.end()) {
    img.georef.pixel_w = r.f64(it->second.data_off);
    img.georef.pixel_h = r.f64(it->second.data_off + 8);
  }
  if (auto it = tags.find(kTagModelTiepoint); it != tags.end()) {
    img.georef.origin_x = r.f64(it->second.data_off + 3 * 8);
    img.georef.origin_y = r.f64(it->second.data_off + 4 * 8);
  }
  if (auto it = tags.find(kTagGeoKeyDirectory); it != tags.end()) {
    const std::uint32_t n_keys = r.u16(it->second.data_off + 6);
    for (std::uint32_t k = 1; k <= n_keys; ++k) {
      if (r.u16(it->second.data_off + 8 * k) == 2048) {
        img.georef.crs =
            "EPSG:" + std::to_string(r.u16(it->second.data_off + 8 * k + 6));
      }
    }
  }
  return img;
}

}  // namespace nightcast
