#include "mctnet/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "mctnet/raster.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace mctnet {

int64_t BinaryMask::count() const {
  int64_t n = 0;
  for (uint8_t b : v) n += b;
  return n;
}

// ---- region geometry ----

namespace {
double point_segment_dist(double px, double py, double x0, double y0, double x1,
                          double y1) {
  const double dx = x1 - x0, dy = y1 - y0;
  const double len2 = dx * dx + dy * dy;
  double t = len2 == 0.0 ? 0.0 : ((px - x0) * dx + (py - y0) * dy) / len2;
  t = std::clamp(t, 0.0, 1.0);
  const double qx = x0 + t * dx, qy = y0 + t * dy;
  return std::hypot(px - qx, py - qy);
}

struct Bbox {
  double x0, y0, x1, y1;
};

Bbox region_bbox(const Region& r) {
  switch (r.type) {
    case Region::ShapeType::kDisc:
      return {r.cx - r.scale, r.cy - r.scale, r.cx + r.scale, r.cy + r.scale};
    case Region::ShapeType::kRect:
      return {r.cx - r.ax, r.cy - r.ay, r.cx + r.ax, r.cy + r.ay};
    case Region::ShapeType::kPolyline: {
      Bbox b{r.pts.front().first, r.pts.front().second, r.pts.front().first,
             r.pts.front().second};
      for (auto [x, y] : r.pts) {
        b.x0 = std::min(b.x0, x);
        b.y0 = std::min(b.y0, y);
        b.x1 = std::max(b.x1, x);
        b.y1 = std::max(b.y1, y);
      }
      b.x0 -= r.thickness;
      b.y0 -= r.thickness;
      b.x1 += r.thickness;
      b.y1 += r.thickness;
      return b;
    }
  }
  throw UsageError("region: unknown shape");
}
}  // namespace

bool Region::contains(int64_t px, int64_t py) const {
  const double x = double(px), y = double(py);
  switch (type) {
    case ShapeType::kDisc: {
      const double dx = x - cx, dy = y - cy;
      return dx * dx + dy * dy <= scale * scale;
    }
    case ShapeType::kRect:
      return std::fabs(x - cx) <= ax && std::fabs(y - cy) <= ay;
    case ShapeType::kPolyline: {
      for (size_t i = 0; i + 1 < pts.size(); ++i) {
        if (point_segment_dist(x, y, pts[i].first, pts[i].second,
                               pts[i + 1].first, pts[i + 1].second) <= thickness)
          return true;
      }
      return false;
    }
  }
  return false;
}

std::vector<std::pair<int64_t, int64_t>> Region::pixels(int64_t w,
                                                        int64_t h) const {
  const Bbox b = region_bbox(*this);
  const int64_t x0 = std::max<int64_t>(0, int64_t(std::floor(b.x0)));
  const int64_t y0 = std::max<int64_t>(0, int64_t(std::floor(b.y0)));
  const int64_t x1 = std::min<int64_t>(w - 1, int64_t(std::ceil(b.x1)));
  const int64_t y1 = std::min<int64_t>(h - 1, int64_t(std::ceil(b.y1)));
  std::vector<std::pair<int64_t, int64_t>> out;
  for (int64_t y = y0; y <= y1; ++y)
    for (int64_t x = x0; x <= x1; ++x)
      if (contains(x, y)) out.emplace_back(x, y);
  return out;
}

Region Region::shifted(double dx, double dy) const {
  Region r = *this;
  r.cx -= dx;
  r.cy -= dy;
  for (auto& [x, y] : r.pts) {
    x -= dx;
    y -= dy;
  }
  return r;
}

// ---- tiling ----

std::vector<int64_t> tile_anchors(int64_t extent, int64_t size, int64_t stride) {
  if (extent < size)
    throw DataError("tile: image extent " + std::to_string(extent) +
                    " smaller than tile size " + std::to_string(size));
  if (stride < 1) throw ConfigError("tile: stride must be >= 1");
  std::vector<int64_t> anchors;
  for (int64_t a = 0;; a += stride) {
    if (a + size >= extent) {
      anchors.push_back(extent - size);  // last window shifts to the boundary
      break;
    }
    anchors.push_back(a);
  }
  return anchors;
}

namespace {
Raster crop_raster(const Raster& src, int64_t x0, int64_t y0, int64_t size) {
  Raster out;
  out.h = out.w = size;
  out.rgb.resize(size_t(size * size * 3));
  for (int64_t y = 0; y < size; ++y)
    for (int64_t x = 0; x < size; ++x)
      for (int c = 0; c < 3; ++c)
        out.at(y, x, c) = src.at(y0 + y, x0 + x, c);
  return out;
}

BinaryMask crop_mask(const BinaryMask& src, int64_t x0, int64_t y0,
                     int64_t size) {
  BinaryMask out;
  out.h = out.w = size;
  out.v.resize(size_t(size * size));
  for (int64_t y = 0; y < size; ++y)
    for (int64_t x = 0; x < size; ++x) out.at(y, x) = src.at(y0 + y, x0 + x);
  return out;
}
}  // namespace

std::vector<ChangeSample> tile(const ChangeSample& sample, int64_t size,
                               int64_t stride) {
  const auto ys = tile_anchors(sample.t1.h, size, stride);
  const auto xs = tile_anchors(sample.t1.w, size, stride);
  std::vector<ChangeSample> tiles;
  tiles.reserve(ys.size() * xs.size());
  int64_t idx = 0;
  for (int64_t y0 : ys)
    for (int64_t x0 : xs) {
      ChangeSample t;
      t.stem = sample.stem + "_tile" + std::to_string(idx++);
      t.t1 = crop_raster(sample.t1, x0, y0, size);
      t.t2 = crop_raster(sample.t2, x0, y0, size);
      t.mask = crop_mask(sample.mask, x0, y0, size);
      for (const Region& r : sample.regions) {
        Region s = r.shifted(double(x0), double(y0));
        if (!s.pixels(size, size).empty()) t.regions.push_back(std::move(s));
      }
      tiles.push_back(std::move(t));
    }
  return tiles;
}

// ---- region json ----

namespace {
const char* shape_name(Region::ShapeType t) {
  switch (t) {
    case Region::ShapeType::kDisc:
      return "disc";
    case Region::ShapeType::kRect:
      return "rect";
    case Region::ShapeType::kPolyline:
      return "polyline";
  }
  return "?";
}

Region::ShapeType shape_from_name(const std::string& s) {
  if (s == "disc") return Region::ShapeType::kDisc;
  if (s == "rect") return Region::ShapeType::kRect;
  if (s == "polyline") return Region::ShapeType::kPolyline;
  throw DataError("regions: unknown shape '" + s + "'");
}
}  // namespace

std::string region_json(const std::vector<Region>& regions) {
  json arr = json::array();
  for (const Region& r : regions) {
    json j;
    j["shape"] = shape_name(r.type);
    j["kind"] = r.kind == Region::Kind::kAdd ? "add" : "remove";
    j["cx"] = r.cx;
    j["cy"] = r.cy;
    j["scale"] = r.scale;
    j["size_class"] = r.size_class;
    if (r.type == Region::ShapeType::kRect) {
      j["ax"] = r.ax;
      j["ay"] = r.ay;
    } else if (r.type == Region::ShapeType::kPolyline) {
      json pts = json::array();
      for (auto [x, y] : r.pts) pts.push_back(json::array({x, y}));
      j["pts"] = pts;
      j["thickness"] = r.thickness;
    }
    arr.push_back(std::move(j));
  }
  return arr.dump(2) + "\n";
}

std::vector<Region> parse_region_json(const std::string& text) {
  json arr;
  try {
    arr = json::parse(text);
  } catch (const json::exception& e) {
    throw DataError(std::string("regions: malformed json: ") + e.what());
  }
  if (!arr.is_array()) throw DataError("regions: expected a json array");
  std::vector<Region> out;
  for (const auto& j : arr) {
    Region r;
    r.type = shape_from_name(j.at("shape").get<std::string>());
    const std::string kind = j.at("kind").get<std::string>();
    if (kind != "add" && kind != "remove")
      throw DataError("regions: unknown kind '" + kind + "'");
    r.kind = kind == "add" ? Region::Kind::kAdd : Region::Kind::kRemove;
    r.cx = j.at("cx").get<double>();
    r.cy = j.at("cy").get<double>();
    r.scale = j.at("scale").get<double>();
    r.size_class = j.at("size_class").get<std::string>();
    if (r.type == Region::ShapeType::kRect) {
      r.ax = j.at("ax").get<double>();
      r.ay = j.at("ay").get<double>();
    } else if (r.type == Region::ShapeType::kPolyline) {
      for (const auto& p : j.at("pts"))
        r.pts.emplace_back(p.at(0).get<double>(), p.at(1).get<double>());
      r.thickness = j.at("thickness").get<double>();
    }
    out.push_back(std::move(r));
  }
  return out;
}

// ---- on-disk dataset ----

void write_dataset(const std::string& dir,
                   const std::vector<ChangeSample>& samples,
                   const std::vector<std::string>& splits) {
  if (samples.size() != splits.size())
    throw UsageError("write_dataset: one split label per sample required");
  fs::create_directories(fs::path(dir) / "t1");
  fs::create_directories(fs::path(dir) / "t2");
  fs::create_directories(fs::path(dir) / "mask");
  fs::create_directories(fs::path(dir) / "regions");

  std::ostringstream manifest;
  for (size_t i = 0; i < samples.size(); ++i) {
    const ChangeSample& s = samples[i];
    write_ppm(s.t1, (fs::path(dir) / "t1" / (s.stem + ".ppm")).string());
    write_ppm(s.t2, (fs::path(dir) / "t2" / (s.stem + ".ppm")).string());
    write_pgm(s.mask, (fs::path(dir) / "mask" / (s.stem + ".pgm")).string());
    std::ofstream rj((fs::path(dir) / "regions" / (s.stem + ".json")).string(),
                     std::ios::trunc);
    rj << region_json(s.regions);
    manifest << s.stem << '\t' << splits[i] << '\n';
  }
  std::ofstream mf((fs::path(dir) / "manifest.txt").string(), std::ios::trunc);
  if (!mf) throw IoError("write_dataset: cannot write manifest in '" + dir + "'");
  mf << manifest.str();
}

std::vector<ManifestEntry> read_manifest(const std::string& dir) {
  std::ifstream is((fs::path(dir) / "manifest.txt").string());
  if (!is) throw IoError("dataset: no manifest.txt under '" + dir + "'");
  std::vector<ManifestEntry> entries;
  std::string line;
  size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw DataError("dataset: manifest line " + std::to_string(lineno) +
                      " is not '<stem>\\t<split>'");
    entries.push_back({line.substr(0, tab), line.substr(tab + 1)});
  }
  return entries;
}

ChangeSample load_sample(const std::string& dir, const std::string& stem) {
  ChangeSample s;
  s.stem = stem;
  s.t1 = read_ppm((fs::path(dir) / "t1" / (stem + ".ppm")).string());
  s.t2 = read_ppm((fs::path(dir) / "t2" / (stem + ".ppm")).string());
  s.mask = read_mask((fs::path(dir) / "mask" / (stem + ".pgm")).string());
  const auto rpath = fs::path(dir) / "regions" / (stem + ".json");
  if (fs::exists(rpath)) {
    std::ifstream rj(rpath.string());
    std::ostringstream buf;
    buf << rj.rdbuf();
    s.regions = parse_region_json(buf.str());
  }
  if (s.t1.h != s.t2.h || s.t1.w != s.t2.w || s.mask.h != s.t1.h ||
      s.mask.w != s.t1.w)
    throw DataError("dataset: extents of t1/t2/mask disagree for '" + stem + "'");
  return s;
}

std::vector<ChangeSample> load_split(const std::string& dir,
                                     const std::string& split) {
  std::vector<ChangeSample> out;
  for (const auto& e : read_manifest(dir)) {
    if (e.split == split) out.push_back(load_sample(dir, e.stem));
  }
  return out;
}

// ---- batching ----

Batch to_batch(const std::vector<const ChangeSample*>& samples) {
  if (samples.empty()) throw UsageError("to_batch: empty batch");
  const int64_t h = samples.front()->t1.h, w = samples.front()->t1.w;
  const int64_t n = int64_t(samples.size());
  Batch b{Tensor({n, 3, h, w}), Tensor({n, 3, h, w}), Tensor({n, h, w})};
  for (int64_t i = 0; i < n; ++i) {
    const ChangeSample& s = *samples[size_t(i)];
    if (s.t1.h != h || s.t1.w != w)
      throw DimensionError("to_batch: sample extents disagree");
    double* d1 = b.t1.data().data() + i * 3 * h * w;
    double* d2 = b.t2.data().data() + i * 3 * h * w;
    double* dm = b.mask.data().data() + i * h * w;
    for (int64_t y = 0; y < h; ++y)
      for (int64_t x = 0; x < w; ++x) {
        for (int c = 0; c < 3; ++c) {
          d1[(c * h + y) * w + x] = s.t1.at(y, x, c);
          d2[(c * h + y) * w + x] = s.t2.at(y, x, c);
        }
        dm[y * w + x] = double(s.mask.at(y, x));
      }
  }
  return b;
}

BinaryMask mask_from_tensor(const Tensor& pred, int64_t batch_index) {
  if (pred.ndim() != 3)
    throw DimensionError("mask_from_tensor: expected [N,H,W]");
  BinaryMask m;
  m.h = pred.dim(1);
  m.w = pred.dim(2);
  m.v.resize(size_t(m.h * m.w));
  const double* src = pred.data().data() + batch_index * m.h * m.w;
  for (size_t i = 0; i < m.v.size(); ++i) m.v[i] = src[i] != 0.0 ? 1 : 0;
  return m;
}

}  // namespace mctnet
