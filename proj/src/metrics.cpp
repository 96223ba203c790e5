#include "mctnet/metrics.hpp"

namespace mctnet {

ConfusionCounts& ConfusionCounts::operator+=(const ConfusionCounts& o) {
  tp += o.tp;
  tn += o.tn;
  fp += o.fp;
  fn += o.fn;
  return *this;
}

ConfusionCounts confusion(const BinaryMask& pred, const BinaryMask& truth) {
  if (pred.h != truth.h || pred.w != truth.w)
    throw DimensionError("confusion: mask extents disagree");
  ConfusionCounts c;
  for (size_t i = 0; i < pred.v.size(); ++i) {
    const uint8_t p = pred.v[i], t = truth.v[i];
    if (p > 1 || t > 1) throw DataError("confusion: masks must be binary");
    if (p && t)
      ++c.tp;
    else if (!p && !t)
      ++c.tn;
    else if (p && !t)
      ++c.fp;
    else
      ++c.fn;
  }
  return c;
}

namespace {
double ratio(int64_t num, int64_t den) {
  return den == 0 ? 0.0 : double(num) / double(den);
}
}  // namespace

Metrics metrics(const ConfusionCounts& c) {
  Metrics m;
  m.precision = ratio(c.tp, c.tp + c.fp);
  m.recall = ratio(c.tp, c.tp + c.fn);
  m.f1 = (m.precision + m.recall) == 0.0
             ? 0.0
             : 2.0 * m.precision * m.recall / (m.precision + m.recall);
  m.oa = ratio(c.tp + c.tn, c.total());
  return m;
}

StratifiedRecall size_stratified_metrics(const std::vector<BinaryMask>& preds,
                                         const std::vector<ChangeSample>& samples,
                                         double overlap) {
  if (preds.size() != samples.size())
    throw DimensionError("size_stratified_metrics: " +
                         std::to_string(preds.size()) + " predictions for " +
                         std::to_string(samples.size()) + " samples");
  StratifiedRecall out;
  for (size_t i = 0; i < samples.size(); ++i) {
    const auto& sample = samples[i];
    const auto& pred = preds[i];
    if (pred.h != sample.mask.h || pred.w != sample.mask.w)
      throw DimensionError("size_stratified_metrics: prediction extents disagree");
    for (const Region& region : sample.regions) {
      const auto px = region.pixels(pred.w, pred.h);
      if (px.empty()) continue;
      int64_t hit = 0;
      for (auto [x, y] : px) hit += pred.at(y, x);
      auto& cls = out[region.size_class];
      cls.regions += 1;
      if (double(hit) >= overlap * double(px.size())) cls.detected += 1;
    }
  }
  return out;
}

}  // namespace mctnet
