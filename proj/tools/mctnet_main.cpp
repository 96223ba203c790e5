#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "mctnet/checkpoint.hpp"
#include "mctnet/config.hpp"
#include "mctnet/raster.hpp"
#include "mctnet/testhooks.hpp"
#include "mctnet/train.hpp"
#include "mctnet/verify.hpp"

namespace fs = std::filesystem;
using namespace mctnet;

namespace {

struct CommonArgs {
  std::string config_path;
  std::optional<uint64_t> seed_override;
  std::optional<int64_t> epochs_override;
};

RunConfig load_config(const CommonArgs& args) {
  RunConfig cfg = load_run_config(args.config_path);
  if (args.seed_override) {
    cfg.seed = *args.seed_override;
    cfg.optim.seed = *args.seed_override;
  }
  if (args.epochs_override) {
    cfg.optim.total_epochs = *args.epochs_override;
    cfg.optim.validate();
  }
  return cfg;
}

void dump_resolved(const RunConfig& cfg, const std::string& dir) {
  fs::create_directories(dir);
  write_text_file((fs::path(dir) / "config.resolved.json").string(),
                  resolved_json(cfg));
}

int cmd_gen(const CommonArgs& args) {
  RunConfig cfg = load_config(args);
  auto samples = generate(cfg.synth, cfg.seed);
  auto splits = assign_splits(cfg.synth, samples.size());
  write_dataset(cfg.paths.dataset_dir, samples, splits);
  dump_resolved(cfg, cfg.paths.dataset_dir);
  int64_t counts[3] = {0, 0, 0};
  for (const auto& s : splits)
    ++counts[s == "train" ? 0 : (s == "val" ? 1 : 2)];
  std::cout << "wrote " << samples.size() << " samples to "
            << cfg.paths.dataset_dir << " (train " << counts[0] << ", val "
            << counts[1] << ", test " << counts[2] << ")\n";
  return 0;
}

int cmd_train(const CommonArgs& args) {
  RunConfig cfg = load_config(args);
  auto train_set = load_split(cfg.paths.dataset_dir, "train");
  auto val_set = load_split(cfg.paths.dataset_dir, "val");
  if (train_set.empty())
    throw DataError("train: no 'train' samples under " + cfg.paths.dataset_dir);
  if (val_set.empty())
    std::cout << "note: empty val split, validating on the training set\n";

  MctNet model(cfg.network, cfg.seed);
  std::cout << "training " << model.params().trainable_numel()
            << " parameters on " << train_set.size() << " samples\n";

  fs::create_directories(cfg.paths.log_dir);
  std::ofstream log((fs::path(cfg.paths.log_dir) / "train_log.txt").string(),
                    std::ios::trunc);
  if (!log) throw IoError("train: cannot write the training log");
  log << "# started " << std::time(nullptr) << "\n";

  TrainOptions opts;
  opts.checkpoint_path = cfg.paths.checkpoint;
  opts.log_stream = &log;
  opts.console = &std::cout;
  TrainResult result =
      train(model, train_set, val_set, cfg.optim, config_digest(cfg), opts);
  dump_resolved(cfg, cfg.paths.log_dir);
  std::cout << "best val F1 " << result.best_f1 << " at epoch "
            << result.best_epoch << "; checkpoint: " << cfg.paths.checkpoint
            << "\n";
  return 0;
}

std::string eval_report_text(const EvalReport& report) {
  char buf[128];
  std::string out;
  auto kv = [&](const std::string& key, const std::string& value) {
    out += key + "\t" + value + "\n";
  };
  auto fmt = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return std::string(buf);
  };
  kv("precision", fmt(report.overall.precision));
  kv("recall", fmt(report.overall.recall));
  kv("f1", fmt(report.overall.f1));
  kv("oa", fmt(report.overall.oa));
  for (const auto& [cls, r] : report.by_size) {
    kv("regions_" + cls, std::to_string(r.regions));
    kv("detected_" + cls, std::to_string(r.detected));
    kv("recall_" + cls, fmt(r.recall()));
  }
  return out;
}

void print_eval_table(const EvalReport& report, std::ostream& os) {
  char line[160];
  std::snprintf(line, sizeof line,
                "%-12s %10s %10s %10s %10s\n", "", "precision", "recall", "f1",
                "oa");
  os << line;
  std::snprintf(line, sizeof line, "%-12s %10.4f %10.4f %10.4f %10.4f\n",
                "overall", report.overall.precision, report.overall.recall,
                report.overall.f1, report.overall.oa);
  os << line;
  for (const auto& [cls, r] : report.by_size) {
    std::snprintf(line, sizeof line,
                  "%-12s region recall %.4f  (%lld of %lld regions)\n",
                  cls.c_str(), r.recall(), static_cast<long long>(r.detected),
                  static_cast<long long>(r.regions));
    os << line;
  }
}

int cmd_eval(const CommonArgs& args, const std::string& checkpoint_override,
             const std::string& split) {
  RunConfig cfg = load_config(args);
  const std::string ckpt =
      checkpoint_override.empty() ? cfg.paths.checkpoint : checkpoint_override;

  MctNet model(cfg.network, cfg.seed);
  load_checkpoint(model.params(), ckpt, config_digest(cfg));

  auto samples = load_split(cfg.paths.dataset_dir, split);
  if (samples.empty())
    throw DataError("eval: no '" + split + "' samples under " +
                    cfg.paths.dataset_dir);
  EvalReport report = evaluate(model, samples, cfg.optim.batch_size);

  print_eval_table(report, std::cout);
  fs::create_directories(cfg.paths.log_dir);
  const std::string report_path =
      (fs::path(cfg.paths.log_dir) / ("eval_" + split + ".txt")).string();
  write_text_file(report_path, eval_report_text(report));
  std::cout << "report: " << report_path << "\n";
  return 0;
}

int cmd_predict(const CommonArgs& args, const std::string& checkpoint_override,
                const std::string& t1_path, const std::string& t2_path,
                const std::string& truth_path, const std::string& out_prefix) {
  RunConfig cfg = load_config(args);
  const std::string ckpt =
      checkpoint_override.empty() ? cfg.paths.checkpoint : checkpoint_override;

  MctNet model(cfg.network, cfg.seed);
  load_checkpoint(model.params(), ckpt, config_digest(cfg));

  ChangeSample sample;
  sample.stem = "predict";
  sample.t1 = read_ppm(t1_path);
  sample.t2 = read_ppm(t2_path);
  sample.mask.h = sample.t1.h;
  sample.mask.w = sample.t1.w;
  sample.mask.v.assign(size_t(sample.t1.h * sample.t1.w), 0);

  Batch batch = to_batch({&sample});
  Tensor logits = model.forward(batch.t1, batch.t2, /*training=*/false);
  BinaryMask pred = mask_from_tensor(argmax_channel(logits), 0);

  const std::string pred_path = out_prefix + "_pred.pgm";
  write_change_map(pred, nullptr, pred_path);
  std::cout << "prediction: " << pred_path << "\n";

  if (!truth_path.empty()) {
    BinaryMask truth = read_mask(truth_path);
    const std::string cmp_path = out_prefix + "_compare.ppm";
    write_change_map(pred, &truth, cmp_path);
    Metrics m = metrics(confusion(pred, truth));
    std::printf("precision %.4f  recall %.4f  f1 %.4f  oa %.4f\n", m.precision,
                m.recall, m.f1, m.oa);
    std::cout << "comparison: " << cmp_path << "\n";
  }
  return 0;
}

int cmd_verify(const CommonArgs& args, bool inject_conv_bug) {
  RunConfig cfg = load_config(args);
  testhooks::set_conv_backward_sign_flip(inject_conv_bug);
  auto results = verify::run_all(cfg.seed);
  testhooks::set_conv_backward_sign_flip(false);
  verify::print_results(results, std::cout);
  const bool ok = verify::all_ok(results);
  std::cout << (ok ? "verify: all checks passed\n"
                   : "verify: FAILURES detected\n");
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Siamese CNN-transformer change detection at desk scale"};
  app.require_subcommand(1);

  CommonArgs common;
  uint64_t seed_value = 0;
  int64_t epochs_value = 0;
  std::vector<CLI::Option*> seed_opts;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config_path, "Run configuration (json)")
        ->required();
    seed_opts.push_back(
        sub->add_option("--seed", seed_value, "Override the config seed"));
    return sub;
  };

  auto* gen = add_common(app.add_subcommand("gen", "Generate a synthetic dataset"));

  auto* train_cmd =
      add_common(app.add_subcommand("train", "Train and keep the best checkpoint"));
  auto* epochs_opt =
      train_cmd->add_option("--epochs", epochs_value, "Override total_epochs");

  std::string checkpoint_override, split = "val";
  auto* eval_cmd =
      add_common(app.add_subcommand("eval", "Evaluate a checkpoint on a split"));
  eval_cmd->add_option("--checkpoint", checkpoint_override,
                       "Checkpoint path (default: from config)");
  eval_cmd->add_option("--split", split, "train | val | test")
      ->check(CLI::IsMember({"train", "val", "test"}));

  std::string t1_path, t2_path, truth_path, out_prefix = "prediction";
  auto* predict_cmd =
      add_common(app.add_subcommand("predict", "Predict a change map for one pair"));
  predict_cmd->add_option("--checkpoint", checkpoint_override,
                          "Checkpoint path (default: from config)");
  predict_cmd->add_option("--t1", t1_path, "First image (ppm)")->required();
  predict_cmd->add_option("--t2", t2_path, "Second image (ppm)")->required();
  predict_cmd->add_option("--truth", truth_path, "Ground-truth mask (pgm)");
  predict_cmd->add_option("--out", out_prefix, "Output file prefix");

  bool inject_conv_bug = false;
  auto* verify_cmd = add_common(
      app.add_subcommand("verify", "Run the oracle and gradient-check suite"));
  verify_cmd
      ->add_flag("--inject-conv-backward-bug", inject_conv_bug,
                 "Fault injection for CI (flips the conv weight gradient)")
      ->group("");  // hidden

  CLI11_PARSE(app, argc, argv);

  for (const CLI::Option* o : seed_opts)
    if (o->count()) common.seed_override = seed_value;
  if (epochs_opt->count()) common.epochs_override = epochs_value;

  try {
    if (gen->parsed()) return cmd_gen(common);
    if (train_cmd->parsed()) return cmd_train(common);
    if (eval_cmd->parsed()) return cmd_eval(common, checkpoint_override, split);
    if (predict_cmd->parsed())
      return cmd_predict(common, checkpoint_override, t1_path, t2_path,
                         truth_path, out_prefix);
    if (verify_cmd->parsed()) return cmd_verify(common, inject_conv_bug);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
