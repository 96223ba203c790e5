#include "mctnet/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>

#include "mctnet/checkpoint.hpp"

namespace mctnet {

std::string train_log_header() {
  return "epoch\tlr\ttrain_loss\tval_precision\tval_recall\tval_f1\tval_oa";
}

std::string train_log_line(const EpochRecord& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%lld\t%.8f\t%.8f\t%.6f\t%.6f\t%.6f\t%.6f",
                static_cast<long long>(r.epoch), r.lr, r.train_loss,
                r.val.precision, r.val.recall, r.val.f1, r.val.oa);
  return buf;
}

std::vector<BinaryMask> predict_masks(MctNet& model,
                                      const std::vector<ChangeSample>& samples,
                                      int64_t batch_size) {
  std::vector<BinaryMask> preds;
  preds.reserve(samples.size());
  for (size_t start = 0; start < samples.size(); start += size_t(batch_size)) {
    const size_t end = std::min(samples.size(), start + size_t(batch_size));
    std::vector<const ChangeSample*> ptrs;
    for (size_t i = start; i < end; ++i) ptrs.push_back(&samples[i]);
    Batch batch = to_batch(ptrs);
    Tensor logits = model.forward(batch.t1, batch.t2, /*training=*/false);
    Tensor pred = argmax_channel(logits);
    for (size_t i = 0; i < ptrs.size(); ++i)
      preds.push_back(mask_from_tensor(pred, int64_t(i)));
  }
  return preds;
}

EvalReport evaluate(MctNet& model, const std::vector<ChangeSample>& samples,
                    int64_t batch_size) {
  if (samples.empty()) throw UsageError("evaluate: empty sample set");
  const auto preds = predict_masks(model, samples, batch_size);
  ConfusionCounts counts;
  std::vector<BinaryMask> truths;
  for (size_t i = 0; i < samples.size(); ++i)
    counts += confusion(preds[i], samples[i].mask);
  EvalReport report;
  report.overall = metrics(counts);
  report.by_size = size_stratified_metrics(preds, samples);
  return report;
}

TrainResult train(MctNet& model, const std::vector<ChangeSample>& train_set,
                  const std::vector<ChangeSample>& val_set,
                  const OptimConfig& cfg, uint64_t config_digest,
                  const TrainOptions& opts) {
  cfg.validate();
  if (train_set.empty()) throw UsageError("train: empty training set");
  const std::vector<ChangeSample>& val =
      val_set.empty() ? train_set : val_set;

  if (opts.log_stream) *opts.log_stream << train_log_header() << '\n';

  TrainResult result;
  Rng rng(cfg.seed);
  std::vector<size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);

  for (int64_t epoch = 0; epoch < cfg.total_epochs; ++epoch) {
    const double lr = lr_at(epoch, cfg);
    std::shuffle(order.begin(), order.end(), rng);

    double loss_sum = 0.0;
    int64_t n_batches = 0;
    for (size_t start = 0; start < order.size();
         start += size_t(cfg.batch_size)) {
      const size_t end =
          std::min(order.size(), start + size_t(cfg.batch_size));
      std::vector<const ChangeSample*> ptrs;
      for (size_t i = start; i < end; ++i)
        ptrs.push_back(&train_set[order[i]]);
      Batch batch = to_batch(ptrs);

      Tape tape;
      double loss_value;
      {
        TapeScope scope(tape);
        Tensor logits = model.forward(batch.t1, batch.t2, /*training=*/true);
        Tensor loss =
            weighted_ce_loss(logits, batch.mask, model.loss_weights(batch.mask));
        loss_value = loss.item();
        if (!std::isfinite(loss_value)) {
          const auto culprit = model.params().first_non_finite();
          throw NumericError(
              "train: non-finite loss at epoch " + std::to_string(epoch) +
              ", batch " + std::to_string(n_batches) +
              (culprit ? ", first non-finite parameter: " + *culprit
                       : ", parameters still finite"));
        }
        model.params().zero_grads();
        tape.backward(loss);
      }
      if (cfg.clip_norm > 0) clip_gradients(model.params(), cfg.clip_norm);
      sgd_step(model.params(), lr, cfg);

      loss_sum += loss_value;
      ++n_batches;
    }

    EpochRecord record;
    record.epoch = epoch;
    record.lr = lr;
    record.train_loss = loss_sum / double(n_batches);
    record.val = evaluate(model, val, cfg.batch_size).overall;
    result.log.push_back(record);

    if (opts.log_stream) *opts.log_stream << train_log_line(record) << '\n';
    if (opts.console) {
      *opts.console << "epoch " << epoch << "  lr " << lr << "  loss "
                    << record.train_loss << "  val F1 " << record.val.f1
                    << '\n';
    }

    if (record.val.f1 > result.best_f1 || result.best_epoch < 0) {
      result.best_f1 = record.val.f1;
      result.best_epoch = epoch;
      if (!opts.checkpoint_path.empty())
        save_checkpoint(model.params(), config_digest, opts.checkpoint_path);
    }
  }
  return result;
}

}  // namespace mctnet
