#include "mctnet/raster.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

namespace mctnet {

namespace {

void write_header(std::ostream& os, const char* magic, int64_t w, int64_t h) {
  os << magic << "\n" << w << " " << h << "\n255\n";
}

struct Parser {
  std::ifstream is;
  std::string path;
  int64_t offset = 0;

  explicit Parser(const std::string& p) : is(p, std::ios::binary), path(p) {
    if (!is) throw IoError("raster: cannot open '" + p + "'");
  }

  [[noreturn]] void fail(const std::string& why) const {
    throw IoError("raster: '" + path + "': " + why + " at byte offset " +
                  std::to_string(offset));
  }

  int get() {
    const int c = is.get();
    if (c != EOF) ++offset;
    return c;
  }

  // Skips PNM whitespace and '#' comments, then parses a decimal integer.
  int64_t next_int(const char* what) {
    int c = get();
    while (true) {
      if (c == '#') {
        while (c != '\n' && c != EOF) c = get();
      } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
        c = get();
      } else {
        break;
      }
    }
    if (c == EOF) fail(std::string("unexpected end of file before ") + what);
    if (c < '0' || c > '9') fail(std::string("expected digit for ") + what);
    int64_t v = 0;
    while (c >= '0' && c <= '9') {
      v = v * 10 + (c - '0');
      c = get();
    }
    // The single whitespace byte after the value is already consumed.
    if (c == EOF) fail(std::string("unexpected end of file after ") + what);
    return v;
  }
};

}  // namespace

RawImage read_raster(const std::string& path) {
  Parser p(path);
  const int m0 = p.get();
  const int m1 = p.get();
  if (m0 != 'P' || (m1 != '5' && m1 != '6')) {
    p.offset = 0;
    p.fail("bad magic (want P5 or P6)");
  }
  RawImage img;
  img.channels = (m1 == '6') ? 3 : 1;
  img.w = p.next_int("width");
  img.h = p.next_int("height");
  const int64_t maxval = p.next_int("maxval");
  if (img.w <= 0 || img.h <= 0) p.fail("non-positive image extents");
  if (maxval != 255) p.fail("unsupported maxval " + std::to_string(maxval));
  const size_t payload = size_t(img.w) * size_t(img.h) * size_t(img.channels);
  img.bytes.resize(payload);
  p.is.read(reinterpret_cast<char*>(img.bytes.data()), std::streamsize(payload));
  if (size_t(p.is.gcount()) != payload) {
    p.offset += p.is.gcount();
    p.fail("truncated pixel payload");
  }
  return img;
}

void write_pgm(const BinaryMask& mask, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("raster: cannot open '" + path + "' for writing");
  write_header(os, "P5", mask.w, mask.h);
  std::vector<uint8_t> row(size_t(mask.w));
  for (int64_t y = 0; y < mask.h; ++y) {
    for (int64_t x = 0; x < mask.w; ++x) row[size_t(x)] = mask.at(y, x) ? 255 : 0;
    os.write(reinterpret_cast<const char*>(row.data()), mask.w);
  }
  if (!os) throw IoError("raster: write to '" + path + "' failed");
}

BinaryMask read_mask(const std::string& path) {
  RawImage img = read_raster(path);
  if (img.channels != 1)
    throw IoError("raster: '" + path + "' is not a graymap");
  BinaryMask mask;
  mask.h = img.h;
  mask.w = img.w;
  mask.v.resize(img.bytes.size());
  for (size_t i = 0; i < img.bytes.size(); ++i) {
    const uint8_t b = img.bytes[i];
    if (b != 0 && b != 255)
      throw DataError("raster: '" + path + "' holds non-binary value " +
                      std::to_string(int(b)));
    mask.v[i] = b ? 1 : 0;
  }
  return mask;
}

void write_ppm(const Raster& image, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("raster: cannot open '" + path + "' for writing");
  write_header(os, "P6", image.w, image.h);
  std::vector<uint8_t> bytes(image.rgb.size());
  for (size_t i = 0; i < image.rgb.size(); ++i) {
    const double v = std::min(1.0, std::max(0.0, image.rgb[i]));
    bytes[i] = uint8_t(std::lround(v * 255.0));
  }
  os.write(reinterpret_cast<const char*>(bytes.data()),
           std::streamsize(bytes.size()));
  if (!os) throw IoError("raster: write to '" + path + "' failed");
}

Raster read_ppm(const std::string& path) {
  RawImage img = read_raster(path);
  if (img.channels != 3)
    throw IoError("raster: '" + path + "' is not a pixmap");
  Raster r;
  r.h = img.h;
  r.w = img.w;
  r.rgb.resize(img.bytes.size());
  for (size_t i = 0; i < img.bytes.size(); ++i)
    r.rgb[i] = double(img.bytes[i]) / 255.0;
  return r;
}

void write_change_map(const BinaryMask& pred, const BinaryMask* truth,
                      const std::string& path) {
  if (!truth) {
    write_pgm(pred, path);
    return;
  }
  if (pred.h != truth->h || pred.w != truth->w)
    throw DimensionError("write_change_map: mask extents disagree");
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("raster: cannot open '" + path + "' for writing");
  write_header(os, "P6", pred.w, pred.h);
  std::vector<uint8_t> row(size_t(pred.w) * 3);
  for (int64_t y = 0; y < pred.h; ++y) {
    for (int64_t x = 0; x < pred.w; ++x) {
      const bool p = pred.at(y, x), t = truth->at(y, x);
      uint8_t r = 0, g = 0, b = 0;
      if (p && t) {
        r = g = b = 255;  // true positive: white
      } else if (p && !t) {
        r = 255;          // false positive: red
      } else if (!p && t) {
        g = 255;          // false negative: green
      }                   // true negative stays black
      row[size_t(x) * 3] = r;
      row[size_t(x) * 3 + 1] = g;
      row[size_t(x) * 3 + 2] = b;
    }
    os.write(reinterpret_cast<const char*>(row.data()),
             std::streamsize(row.size()));
  }
  if (!os) throw IoError("raster: write to '" + path + "' failed");
}

}  // namespace mctnet
