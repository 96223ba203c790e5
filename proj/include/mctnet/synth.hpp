#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "mctnet/dataset.hpp"
#include "mctnet/nn.hpp"

namespace mctnet {

struct SizeClassSpec {
  std::string name;
  double r_min = 0;
  double r_max = 0;
};

/// Synthetic bi-temporal benchmark: textured background with static objects,
/// photometric pseudo-change on t2 (global jitter plus a smooth illumination
/// field), and planted change shapes with controlled size classes.
struct SynthConfig {
  int64_t image_size = 128;
  int64_t num_samples = 200;
  int64_t min_changes = 1;
  int64_t max_changes = 4;
  std::vector<SizeClassSpec> size_classes{
      {"small", 2, 6}, {"medium", 7, 20}, {"large", 21, 60}};
  std::vector<double> size_mix{1.0, 1.0, 1.0};  // per-class sampling weight
  int64_t min_static = 2;
  int64_t max_static = 6;
  double jitter = 0.12;       // global brightness/contrast jitter on t2
  double illum_field = 0.08;  // low-frequency multiplicative field on t2
  double min_contrast = 0.3;  // planted shape contrast vs local background
  std::array<double, 3> splits{0.7, 0.15, 0.15};  // train/val/test fractions

  void validate() const;
};

/// Deterministic generation: the same config and seed produce byte-identical
/// samples. Throws DataError when a change cannot be placed without
/// overlapping previously planted regions.
std::vector<ChangeSample> generate(const SynthConfig& cfg, uint64_t seed);

ChangeSample generate_one(const SynthConfig& cfg, Rng& rng,
                          const std::string& stem);

/// Split labels for generate()'s output, stable for a fixed config.
std::vector<std::string> assign_splits(const SynthConfig& cfg, size_t count);

}  // namespace mctnet
