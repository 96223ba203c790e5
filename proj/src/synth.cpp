#include "mctnet/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace mctnet {

void SynthConfig::validate() const {
  if (image_size < 16) throw ConfigError("synth: image_size must be >= 16");
  if (num_samples < 1) throw ConfigError("synth: num_samples must be >= 1");
  if (min_changes < 0 || max_changes < min_changes)
    throw ConfigError("synth: invalid change count range");
  if (size_classes.empty()) throw ConfigError("synth: no size classes");
  if (size_mix.size() != size_classes.size())
    throw ConfigError("synth: size_mix must match size_classes");
  for (const auto& c : size_classes) {
    if (!(c.r_min > 0) || c.r_max < c.r_min)
      throw ConfigError("synth: bad radius range for class '" + c.name + "'");
  }
  // Disjoint radius ranges keep the classes unambiguous.
  for (size_t i = 0; i < size_classes.size(); ++i)
    for (size_t j = i + 1; j < size_classes.size(); ++j) {
      const auto& a = size_classes[i];
      const auto& b = size_classes[j];
      if (std::max(a.r_min, b.r_min) <= std::min(a.r_max, b.r_max))
        throw ConfigError("synth: size classes '" + a.name + "' and '" + b.name +
                          "' overlap");
    }
  if (min_static < 0 || max_static < min_static)
    throw ConfigError("synth: invalid static object range");
  if (jitter < 0 || jitter > 0.5)
    throw ConfigError("synth: jitter must be in [0,0.5]");
  if (illum_field < 0 || illum_field > 0.5)
    throw ConfigError("synth: illum_field must be in [0,0.5]");
  if (min_contrast < 0 || min_contrast > 1)
    throw ConfigError("synth: min_contrast must be in [0,1]");
  double s = 0;
  for (double f : splits) {
    if (f < 0) throw ConfigError("synth: split fractions must be >= 0");
    s += f;
  }
  if (std::fabs(s - 1.0) > 1e-9)
    throw ConfigError("synth: split fractions must sum to 1");
}

namespace {

double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

int64_t uniform_int(Rng& rng, int64_t lo, int64_t hi) {
  return std::uniform_int_distribution<int64_t>(lo, hi)(rng);
}

// Bilinearly upsampled random grid, values in [0,1].
std::vector<double> value_noise(int64_t size, int64_t cells, Rng& rng) {
  const int64_t g = cells + 1;
  std::vector<double> grid(size_t(g * g));
  for (double& v : grid) v = uniform(rng, 0.0, 1.0);
  std::vector<double> out(size_t(size * size));
  const double scale = double(cells) / double(size);
  for (int64_t y = 0; y < size; ++y) {
    const double fy = y * scale;
    const int64_t y0 = std::min<int64_t>(int64_t(fy), cells - 1);
    const double ty = fy - double(y0);
    for (int64_t x = 0; x < size; ++x) {
      const double fx = x * scale;
      const int64_t x0 = std::min<int64_t>(int64_t(fx), cells - 1);
      const double tx = fx - double(x0);
      const double v00 = grid[size_t(y0 * g + x0)];
      const double v01 = grid[size_t(y0 * g + x0 + 1)];
      const double v10 = grid[size_t((y0 + 1) * g + x0)];
      const double v11 = grid[size_t((y0 + 1) * g + x0 + 1)];
      out[size_t(y * size + x)] = (v00 * (1 - tx) + v01 * tx) * (1 - ty) +
                                  (v10 * (1 - tx) + v11 * tx) * ty;
    }
  }
  return out;
}

struct Bbox {
  double x0, y0, x1, y1;
};

Bbox bbox_of(const Region& r) {
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

bool bbox_overlap(const Bbox& a, const Bbox& b, double margin) {
  return a.x0 - margin <= b.x1 && b.x0 - margin <= a.x1 &&
         a.y0 - margin <= b.y1 && b.y0 - margin <= a.y1;
}

std::array<double, 3> color_at(const Raster& img, int64_t x, int64_t y) {
  return {img.at(y, x, 0), img.at(y, x, 1), img.at(y, x, 2)};
}

// Random color at least min_contrast (mean absolute channel difference) away
// from `reference`.
std::array<double, 3> pick_contrast_color(Rng& rng,
                                          const std::array<double, 3>& reference,
                                          double min_contrast) {
  std::array<double, 3> best{};
  double best_d = -1.0;
  for (int attempt = 0; attempt < 64; ++attempt) {
    std::array<double, 3> c = {uniform(rng, 0.05, 0.95), uniform(rng, 0.05, 0.95),
                               uniform(rng, 0.05, 0.95)};
    const double d = (std::fabs(c[0] - reference[0]) +
                      std::fabs(c[1] - reference[1]) +
                      std::fabs(c[2] - reference[2])) /
                     3.0;
    if (d >= min_contrast) return c;
    if (d > best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

void draw_region(Raster& img, const Region& r, const std::array<double, 3>& color) {
  for (auto [x, y] : r.pixels(img.w, img.h)) {
    img.at(y, x, 0) = color[0];
    img.at(y, x, 1) = color[1];
    img.at(y, x, 2) = color[2];
  }
}

Region random_shape(Rng& rng, double cx, double cy, double r,
                    Region::ShapeType type) {
  Region region;
  region.type = type;
  region.cx = cx;
  region.cy = cy;
  region.scale = r;
  switch (type) {
    case Region::ShapeType::kDisc:
      break;
    case Region::ShapeType::kRect: {
      // Aspect in [0.5,2], normalized so the larger half extent equals r.
      const double aspect = uniform(rng, 0.5, 2.0);
      region.ax = aspect >= 1.0 ? r : r * aspect;
      region.ay = aspect >= 1.0 ? r / aspect : r;
      break;
    }
    case Region::ShapeType::kPolyline: {
      const int n_pts = int(uniform_int(rng, 3, 4));
      for (int i = 0; i < n_pts; ++i)
        region.pts.emplace_back(cx + uniform(rng, -r, r), cy + uniform(rng, -r, r));
      region.thickness = std::max(1.0, r / 4.0);
      break;
    }
  }
  return region;
}

void quantize(Raster& img) {
  for (double& v : img.rgb)
    v = std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0;
}

}  // namespace

ChangeSample generate_one(const SynthConfig& cfg, Rng& rng,
                          const std::string& stem) {
  const int64_t size = cfg.image_size;
  ChangeSample sample;
  sample.stem = stem;
  sample.t1.h = sample.t1.w = size;
  sample.t1.rgb.assign(size_t(size * size * 3), 0.0);

  // Layered value-noise background with a per-channel tint.
  const auto coarse = value_noise(size, 4, rng);
  const auto mid = value_noise(size, 8, rng);
  const auto fine = value_noise(size, 16, rng);
  const std::array<double, 3> tint = {uniform(rng, 0.85, 1.15),
                                      uniform(rng, 0.85, 1.15),
                                      uniform(rng, 0.85, 1.15)};
  for (int64_t p = 0; p < size * size; ++p) {
    const double g = 0.35 + 0.3 * coarse[size_t(p)] + 0.15 * mid[size_t(p)] +
                     0.1 * fine[size_t(p)];
    for (int c = 0; c < 3; ++c)
      sample.t1.rgb[size_t(p * 3 + c)] = std::clamp(g * tint[size_t(c)], 0.0, 1.0);
  }

  // Static scene objects appear identically at both times.
  std::vector<Bbox> occupied;
  const int64_t n_static = uniform_int(rng, cfg.min_static, cfg.max_static);
  for (int64_t i = 0; i < n_static; ++i) {
    const double r = uniform(rng, 3.0, std::max(4.0, double(size) / 8.0));
    const double cx = uniform(rng, r, double(size - 1) - r);
    const double cy = uniform(rng, r, double(size - 1) - r);
    const auto type = uniform_int(rng, 0, 1) == 0 ? Region::ShapeType::kDisc
                                                  : Region::ShapeType::kRect;
    Region obj = random_shape(rng, cx, cy, r, type);
    const auto bg = color_at(sample.t1, int64_t(cx), int64_t(cy));
    draw_region(sample.t1, obj, pick_contrast_color(rng, bg, cfg.min_contrast));
  }

  sample.t2 = sample.t1;

  // Planted changes: "add" shapes appear only at t2, "remove" shapes only at
  // t1. Regions never overlap each other.
  const int64_t n_changes = uniform_int(rng, cfg.min_changes, cfg.max_changes);
  std::discrete_distribution<size_t> class_dist(cfg.size_mix.begin(),
                                                cfg.size_mix.end());
  for (int64_t i = 0; i < n_changes; ++i) {
    const size_t cls = class_dist(rng);
    const auto& spec = cfg.size_classes[cls];
    const double r_cap = std::min(spec.r_max, double(size) / 4.0);
    if (r_cap < spec.r_min)
      throw DataError("generate: class '" + spec.name +
                      "' does not fit a " + std::to_string(size) + "px image");
    Region region;
    bool placed = false;
    for (int attempt = 0; attempt < 200 && !placed; ++attempt) {
      const double r = uniform(rng, spec.r_min, r_cap);
      const double margin = r + 2.0;
      if (2 * margin >= double(size)) continue;
      const double cx = uniform(rng, margin, double(size - 1) - margin);
      const double cy = uniform(rng, margin, double(size - 1) - margin);
      const auto type = static_cast<Region::ShapeType>(uniform_int(rng, 0, 2));
      region = random_shape(rng, cx, cy, r, type);
      region.size_class = spec.name;
      region.kind = uniform_int(rng, 0, 1) == 0 ? Region::Kind::kAdd
                                                : Region::Kind::kRemove;
      const Bbox box = bbox_of(region);
      placed = std::none_of(occupied.begin(), occupied.end(),
                            [&](const Bbox& b) { return bbox_overlap(box, b, 1.0); });
    }
    if (!placed)
      throw DataError("generate: could not place a '" + spec.name +
                      "' change without overlap; image too crowded");
    occupied.push_back(bbox_of(region));

    Raster& target = region.kind == Region::Kind::kAdd ? sample.t2 : sample.t1;
    const auto bg = color_at(target, int64_t(region.cx), int64_t(region.cy));
    draw_region(target, region, pick_contrast_color(rng, bg, cfg.min_contrast));
    sample.regions.push_back(std::move(region));
  }

  // Photometric pseudo-change on t2: global affine jitter plus a smooth
  // multiplicative illumination field. The mask stays untouched.
  const double gain = uniform(rng, 1.0 - cfg.jitter, 1.0 + cfg.jitter);
  const double bias = uniform(rng, -cfg.jitter / 2.0, cfg.jitter / 2.0);
  const auto field = value_noise(size, 3, rng);
  for (int64_t p = 0; p < size * size; ++p) {
    const double f = 1.0 + cfg.illum_field * (2.0 * field[size_t(p)] - 1.0);
    for (int c = 0; c < 3; ++c) {
      double& v = sample.t2.rgb[size_t(p * 3 + c)];
      v = std::clamp((gain * v + bias) * f, 0.0, 1.0);
    }
  }

  quantize(sample.t1);
  quantize(sample.t2);

  // Mask support is exactly the union of the planted regions.
  sample.mask.h = sample.mask.w = size;
  sample.mask.v.assign(size_t(size * size), 0);
  for (const Region& region : sample.regions)
    for (auto [x, y] : region.pixels(size, size)) sample.mask.at(y, x) = 1;

  return sample;
}

std::vector<ChangeSample> generate(const SynthConfig& cfg, uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  std::vector<ChangeSample> samples;
  samples.reserve(size_t(cfg.num_samples));
  for (int64_t i = 0; i < cfg.num_samples; ++i) {
    char stem[32];
    std::snprintf(stem, sizeof stem, "sample_%05lld",
                  static_cast<long long>(i));
    samples.push_back(generate_one(cfg, rng, stem));
  }
  return samples;
}

std::vector<std::string> assign_splits(const SynthConfig& cfg, size_t count) {
  const auto n_train = size_t(std::llround(cfg.splits[0] * double(count)));
  const auto n_val = size_t(std::llround(cfg.splits[1] * double(count)));
  std::vector<std::string> out(count, "test");
  for (size_t i = 0; i < count; ++i) {
    if (i < n_train)
      out[i] = "train";
    else if (i < n_train + n_val)
      out[i] = "val";
  }
  return out;
}

}  // namespace mctnet
