#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mctnet/dataset.hpp"

namespace mctnet {

struct ConfusionCounts {
  int64_t tp = 0, tn = 0, fp = 0, fn = 0;

  int64_t total() const { return tp + tn + fp + fn; }
  ConfusionCounts& operator+=(const ConfusionCounts& o);
  friend ConfusionCounts operator+(ConfusionCounts a, const ConfusionCounts& b) {
    a += b;
    return a;
  }
};

ConfusionCounts confusion(const BinaryMask& pred, const BinaryMask& truth);

struct Metrics {
  double precision = 0, recall = 0, f1 = 0, oa = 0;
};

/// precision = TP/(TP+FP), recall = TP/(TP+FN), F1 = 2PR/(P+R),
/// OA = (TP+TN)/total; 0/0 ratios evaluate to 0.
Metrics metrics(const ConfusionCounts& c);

struct ClassRecall {
  int64_t regions = 0;
  int64_t detected = 0;
  double recall() const { return regions == 0 ? 0.0 : double(detected) / double(regions); }
};

using StratifiedRecall = std::map<std::string, ClassRecall>;

/// Region-level recall per size class: a region counts as detected when at
/// least `overlap` of its pixels are predicted positive.
StratifiedRecall size_stratified_metrics(const std::vector<BinaryMask>& preds,
                                         const std::vector<ChangeSample>& samples,
                                         double overlap = 0.5);

}  // namespace mctnet
