#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mctnet/dataset.hpp"

namespace mctnet {

// Binary portable graymap/pixmap I/O (P5/P6, maxval 255). Chosen for
// bit-exact, dependency-free golden files.

/// Raw decoded P5/P6 payload.
struct RawImage {
  int64_t w = 0, h = 0;
  int channels = 1;  // 1 for P5, 3 for P6
  std::vector<uint8_t> bytes;
};

/// Parses a P5 or P6 file; malformed input raises IoError with the byte
/// offset of the problem.
RawImage read_raster(const std::string& path);

void write_pgm(const BinaryMask& mask, const std::string& path);  // 0/255
BinaryMask read_mask(const std::string& path);

void write_ppm(const Raster& image, const std::string& path);
Raster read_ppm(const std::string& path);

/// Without truth: binary graymap of the prediction. With truth: pixmap with
/// the comparison color code — white TP, black TN, red FP, green FN.
void write_change_map(const BinaryMask& pred, const BinaryMask* truth,
                      const std::string& path);

}  // namespace mctnet
