#include "mctnet/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

using json = nlohmann::json;

namespace mctnet {

namespace {

[[noreturn]] void bad(const std::string& where, const std::string& why) {
  throw ConfigError("config: " + where + ": " + why);
}

void check_keys(const json& j, const std::string& where,
                std::initializer_list<const char*> allowed) {
  if (!j.is_object()) bad(where, "expected an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, _] : j.items()) {
    if (!ok.count(key)) bad(where, "unknown key '" + key + "'");
  }
}

template <typename T>
void read(const json& j, const std::string& where, const char* key, T* out) {
  if (!j.contains(key)) return;
  try {
    *out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    bad(where, std::string("bad value for '") + key + "': " + e.what());
  }
}

template <typename T, size_t N>
void read_array(const json& j, const std::string& where, const char* key,
                std::array<T, N>* out) {
  if (!j.contains(key)) return;
  const auto& a = j.at(key);
  if (!a.is_array() || a.size() != N)
    bad(where, std::string("'") + key + "' must be an array of " +
                   std::to_string(N) + " values");
  try {
    for (size_t i = 0; i < N; ++i) (*out)[i] = a.at(i).get<T>();
  } catch (const json::exception& e) {
    bad(where, std::string("bad value in '") + key + "': " + e.what());
  }
}

void parse_network(const json& j, NetworkConfig* net) {
  const std::string where = "network";
  check_keys(j, where,
             {"in_channels", "stage_channels", "stage_strides", "heads",
              "depth", "mlp_ratio", "fuse_reduction", "num_classes",
              "global_branch", "merge", "class_weights"});
  read(j, where, "in_channels", &net->in_channels);
  read_array(j, where, "stage_channels", &net->stage_channels);
  read_array(j, where, "stage_strides", &net->stage_strides);
  read_array(j, where, "heads", &net->heads);
  read_array(j, where, "depth", &net->depth);
  read(j, where, "mlp_ratio", &net->mlp_ratio);
  read(j, where, "fuse_reduction", &net->fuse_reduction);
  read(j, where, "num_classes", &net->num_classes);
  read(j, where, "global_branch", &net->global_branch);
  if (j.contains("merge")) {
    const std::string m = j.at("merge").get<std::string>();
    if (m == "absdiff")
      net->merge = MergeMode::kAbsDiff;
    else if (m == "concat")
      net->merge = MergeMode::kConcat;
    else
      bad(where, "merge must be 'absdiff' or 'concat', got '" + m + "'");
  }
  if (j.contains("class_weights")) {
    const auto& cw = j.at("class_weights");
    if (cw.is_string() && cw.get<std::string>() == "auto") {
      net->auto_class_weights = true;
    } else if (cw.is_array() && cw.size() == 2) {
      net->auto_class_weights = false;
      net->class_weights[0] = cw.at(0).get<double>();
      net->class_weights[1] = cw.at(1).get<double>();
    } else {
      bad(where, "class_weights must be \"auto\" or [w_unchanged, w_changed]");
    }
  }
}

void parse_optim(const json& j, OptimConfig* opt) {
  const std::string where = "optim";
  check_keys(j, where,
             {"lr0", "momentum", "weight_decay", "decay_factor", "total_epochs",
              "batch_size", "clip_norm"});
  read(j, where, "lr0", &opt->lr0);
  read(j, where, "momentum", &opt->momentum);
  read(j, where, "weight_decay", &opt->weight_decay);
  read(j, where, "decay_factor", &opt->decay_factor);
  read(j, where, "total_epochs", &opt->total_epochs);
  read(j, where, "batch_size", &opt->batch_size);
  read(j, where, "clip_norm", &opt->clip_norm);
}

void parse_synth(const json& j, SynthConfig* synth) {
  const std::string where = "synth";
  check_keys(j, where,
             {"image_size", "num_samples", "min_changes", "max_changes",
              "size_classes", "size_mix", "min_static", "max_static", "jitter",
              "illum_field", "min_contrast", "splits"});
  read(j, where, "image_size", &synth->image_size);
  read(j, where, "num_samples", &synth->num_samples);
  read(j, where, "min_changes", &synth->min_changes);
  read(j, where, "max_changes", &synth->max_changes);
  if (j.contains("size_classes")) {
    const auto& a = j.at("size_classes");
    if (!a.is_array() || a.empty())
      bad(where, "size_classes must be a non-empty array");
    synth->size_classes.clear();
    for (const auto& c : a) {
      check_keys(c, where + ".size_classes[]", {"name", "r_min", "r_max"});
      SizeClassSpec spec;
      spec.name = c.at("name").get<std::string>();
      spec.r_min = c.at("r_min").get<double>();
      spec.r_max = c.at("r_max").get<double>();
      synth->size_classes.push_back(std::move(spec));
    }
    if (!j.contains("size_mix"))
      synth->size_mix.assign(synth->size_classes.size(), 1.0);
  }
  if (j.contains("size_mix")) {
    synth->size_mix.clear();
    for (const auto& v : j.at("size_mix"))
      synth->size_mix.push_back(v.get<double>());
  }
  read(j, where, "min_static", &synth->min_static);
  read(j, where, "max_static", &synth->max_static);
  read(j, where, "jitter", &synth->jitter);
  read(j, where, "illum_field", &synth->illum_field);
  read(j, where, "min_contrast", &synth->min_contrast);
  read_array(j, where, "splits", &synth->splits);
}

void parse_paths(const json& j, Paths* paths) {
  const std::string where = "paths";
  check_keys(j, where, {"dataset_dir", "checkpoint", "log_dir"});
  read(j, where, "dataset_dir", &paths->dataset_dir);
  read(j, where, "checkpoint", &paths->checkpoint);
  read(j, where, "log_dir", &paths->log_dir);
}

json network_json(const NetworkConfig& n) {
  json j;
  j["in_channels"] = n.in_channels;
  j["stage_channels"] = n.stage_channels;
  j["stage_strides"] = n.stage_strides;
  j["heads"] = n.heads;
  j["depth"] = n.depth;
  j["mlp_ratio"] = n.mlp_ratio;
  j["fuse_reduction"] = n.fuse_reduction;
  j["num_classes"] = n.num_classes;
  j["global_branch"] = n.global_branch;
  j["merge"] = n.merge == MergeMode::kAbsDiff ? "absdiff" : "concat";
  if (n.auto_class_weights)
    j["class_weights"] = "auto";
  else
    j["class_weights"] = n.class_weights;
  return j;
}

json optim_json(const OptimConfig& o) {
  json j;
  j["lr0"] = o.lr0;
  j["momentum"] = o.momentum;
  j["weight_decay"] = o.weight_decay;
  j["decay_factor"] = o.decay_factor;
  j["total_epochs"] = o.total_epochs;
  j["batch_size"] = o.batch_size;
  j["clip_norm"] = o.clip_norm;
  return j;
}

json synth_json(const SynthConfig& s) {
  json j;
  j["image_size"] = s.image_size;
  j["num_samples"] = s.num_samples;
  j["min_changes"] = s.min_changes;
  j["max_changes"] = s.max_changes;
  json classes = json::array();
  for (const auto& c : s.size_classes) {
    classes.push_back(
        json{{"name", c.name}, {"r_min", c.r_min}, {"r_max", c.r_max}});
  }
  j["size_classes"] = classes;
  j["size_mix"] = s.size_mix;
  j["min_static"] = s.min_static;
  j["max_static"] = s.max_static;
  j["jitter"] = s.jitter;
  j["illum_field"] = s.illum_field;
  j["min_contrast"] = s.min_contrast;
  j["splits"] = s.splits;
  return j;
}

json paths_json(const Paths& p) {
  json j;
  j["dataset_dir"] = p.dataset_dir;
  j["checkpoint"] = p.checkpoint;
  j["log_dir"] = p.log_dir;
  return j;
}

}  // namespace

void RunConfig::validate() const {
  network.validate();
  optim.validate();
  synth.validate();
  if (paths.dataset_dir.empty() || paths.checkpoint.empty() ||
      paths.log_dir.empty())
    throw ConfigError("config: paths must be non-empty");
}

RunConfig parse_run_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: malformed json: ") + e.what());
  }
  check_keys(j, "top level", {"seed", "network", "optim", "synth", "paths"});
  RunConfig cfg;
  read(j, "top level", "seed", &cfg.seed);
  if (j.contains("network")) parse_network(j.at("network"), &cfg.network);
  if (j.contains("optim")) parse_optim(j.at("optim"), &cfg.optim);
  if (j.contains("synth")) parse_synth(j.at("synth"), &cfg.synth);
  if (j.contains("paths")) parse_paths(j.at("paths"), &cfg.paths);
  cfg.optim.seed = cfg.seed;
  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  return parse_run_config(read_text_file(path));
}

std::string resolved_json(const RunConfig& cfg) {
  json j;
  j["seed"] = cfg.seed;
  j["network"] = network_json(cfg.network);
  j["optim"] = optim_json(cfg.optim);
  j["synth"] = synth_json(cfg.synth);
  j["paths"] = paths_json(cfg.paths);
  return j.dump(2) + "\n";
}

namespace {
uint64_t fnv1a64(const std::string& text) {
  uint64_t h = 1469598103934665603ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}
}  // namespace

uint64_t network_digest(const NetworkConfig& cfg) {
  return fnv1a64(network_json(cfg).dump());
}

uint64_t config_digest(const RunConfig& cfg) {
  return network_digest(cfg.network);
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  os << text;
  if (!os) throw IoError("write to '" + path + "' failed");
}

std::string read_text_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open '" + path + "'");
  std::ostringstream buf;
  buf << is.rdbuf();
  return buf.str();
}

}  // namespace mctnet
