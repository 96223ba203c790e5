#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mctnet/tensor.hpp"

namespace mctnet {

/// H x W x 3 raster, row-major, values in [0,1] on the 1/255 grid so 8-bit
/// file round-trips are exact.
struct Raster {
  int64_t h = 0;
  int64_t w = 0;
  std::vector<double> rgb;  // h*w*3

  double& at(int64_t y, int64_t x, int c) { return rgb[(y * w + x) * 3 + c]; }
  double at(int64_t y, int64_t x, int c) const {
    return rgb[(y * w + x) * 3 + c];
  }
};

struct BinaryMask {
  int64_t h = 0;
  int64_t w = 0;
  std::vector<uint8_t> v;  // 0 or 1

  uint8_t& at(int64_t y, int64_t x) { return v[y * w + x]; }
  uint8_t at(int64_t y, int64_t x) const { return v[y * w + x]; }
  int64_t count() const;
};

/// A planted change region: analytic shape plus bookkeeping. Pixel
/// membership is defined by the shape geometry, so masks and region-level
/// scoring derive from the same predicate.
struct Region {
  enum class ShapeType { kDisc, kRect, kPolyline };
  enum class Kind { kAdd, kRemove };

  ShapeType type = ShapeType::kDisc;
  Kind kind = Kind::kAdd;
  double cx = 0, cy = 0;
  double scale = 0;      // size-class radius parameter
  double ax = 0, ay = 0;             // rect half extents
  std::vector<std::pair<double, double>> pts;  // polyline vertices
  double thickness = 0;              // polyline half-width
  std::string size_class;

  bool contains(int64_t px, int64_t py) const;
  /// Pixels of the region clipped to a w x h raster.
  std::vector<std::pair<int64_t, int64_t>> pixels(int64_t w, int64_t h) const;
  /// Copy with coordinates shifted by (-dx, -dy) (tile cropping).
  Region shifted(double dx, double dy) const;
};

/// Bi-temporal pair plus ground truth; the unit of training and evaluation.
struct ChangeSample {
  std::string stem;
  Raster t1, t2;
  BinaryMask mask;
  std::vector<Region> regions;
};

/// Row-major tiling with edge tiles anchored to the image boundary
/// (last-window shift). Pair, mask and region metadata are cropped
/// congruently; regions keep their original size class.
std::vector<ChangeSample> tile(const ChangeSample& sample, int64_t size,
                               int64_t stride);

/// Tile anchor offsets along one axis.
std::vector<int64_t> tile_anchors(int64_t extent, int64_t size, int64_t stride);

// ---- on-disk dataset: t1/ t2/ mask/ regions/ + manifest.txt ----

struct ManifestEntry {
  std::string stem;
  std::string split;  // train | val | test
};

void write_dataset(const std::string& dir,
                   const std::vector<ChangeSample>& samples,
                   const std::vector<std::string>& splits);
std::vector<ManifestEntry> read_manifest(const std::string& dir);
ChangeSample load_sample(const std::string& dir, const std::string& stem);
std::vector<ChangeSample> load_split(const std::string& dir,
                                     const std::string& split);

std::string region_json(const std::vector<Region>& regions);
std::vector<Region> parse_region_json(const std::string& text);

// ---- batching ----

struct Batch {
  Tensor t1;    // [N,3,H,W]
  Tensor t2;    // [N,3,H,W]
  Tensor mask;  // [N,H,W]
};

Batch to_batch(const std::vector<const ChangeSample*>& samples);
BinaryMask mask_from_tensor(const Tensor& pred, int64_t batch_index);

}  // namespace mctnet
