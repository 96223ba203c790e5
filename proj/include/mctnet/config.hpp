#pragma once

#include <cstdint>
#include <string>

#include "mctnet/network.hpp"
#include "mctnet/optim.hpp"
#include "mctnet/synth.hpp"

namespace mctnet {

struct Paths {
  std::string dataset_dir = "dataset";
  std::string checkpoint = "checkpoint.bin";
  std::string log_dir = "logs";
};

/// One declarative file drives every subcommand. Loading is strict: unknown
/// keys are rejected, every omitted key takes its documented default, and a
/// fully resolved copy is written next to outputs for reproducibility.
struct RunConfig {
  uint64_t seed = 0;
  NetworkConfig network;
  OptimConfig optim;
  SynthConfig synth;
  Paths paths;

  void validate() const;
};

RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::string& path);

/// Canonical JSON with all defaults materialized and sorted keys.
std::string resolved_json(const RunConfig& cfg);

/// FNV-1a 64-bit digest of the resolved "network" section. Embedded in
/// checkpoints to refuse silent architecture/weights mismatches.
uint64_t config_digest(const RunConfig& cfg);
uint64_t network_digest(const NetworkConfig& cfg);

void write_text_file(const std::string& path, const std::string& text);
std::string read_text_file(const std::string& path);

}  // namespace mctnet
