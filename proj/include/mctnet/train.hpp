#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "mctnet/dataset.hpp"
#include "mctnet/metrics.hpp"
#include "mctnet/network.hpp"
#include "mctnet/optim.hpp"

namespace mctnet {

struct EpochRecord {
  int64_t epoch = 0;
  double lr = 0;
  double train_loss = 0;
  Metrics val;
};

struct TrainResult {
  std::vector<EpochRecord> log;
  double best_f1 = 0.0;
  int64_t best_epoch = -1;
};

struct TrainOptions {
  std::string checkpoint_path;        // best-F1 checkpoint ("" keeps it off disk)
  std::ostream* log_stream = nullptr; // line-oriented epoch records
  std::ostream* console = nullptr;    // human progress
};

/// Header plus column order of the machine-parsable training log.
std::string train_log_header();
std::string train_log_line(const EpochRecord& r);

/// Seeded epoch loop: shuffle, forward, weighted CE, backward, SGD step;
/// evaluates the validation split each epoch and persists the best-F1
/// checkpoint. A non-finite loss aborts with epoch/batch/parameter
/// diagnostics. Deterministic for a fixed config and seed.
TrainResult train(MctNet& model, const std::vector<ChangeSample>& train_set,
                  const std::vector<ChangeSample>& val_set,
                  const OptimConfig& cfg, uint64_t config_digest,
                  const TrainOptions& opts);

/// Batched eval-mode predictions, one mask per sample.
std::vector<BinaryMask> predict_masks(MctNet& model,
                                      const std::vector<ChangeSample>& samples,
                                      int64_t batch_size);

struct EvalReport {
  Metrics overall;
  StratifiedRecall by_size;
};

EvalReport evaluate(MctNet& model, const std::vector<ChangeSample>& samples,
                    int64_t batch_size);

}  // namespace mctnet
