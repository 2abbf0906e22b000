#pragma once

#include <set>
#include <string>
#include <vector>

#include "cascalign/encoders.hpp"
#include "cascalign/eval.hpp"
#include "cascalign/losses.hpp"

namespace cascalign {

struct OptimizerConfig {
  double learning_rate = 1e-3;
  double weight_decay = 1e-5;
  int warmup_steps = 100;
  int total_steps = 2000;
  int batch_size = 16;
};

struct PathsConfig {
  std::string corpus;
  std::string checkpoint;
  std::string report;
};

// Everything a reproducible run needs. Serialization uses a fixed key order so
// serialize -> parse -> serialize is byte-identical.
struct RunConfig {
  EncoderConfig encoder;
  LossConfig loss;
  OptimizerConfig optimizer;
  std::string cascade_mode = "cascade";  // cascade | random | full
  bool use_l1 = true;                    // sentence-level loss in the objective
  bool use_l3 = true;                    // post-fusion loss in the objective
  bool symmetric_losses = false;
  bool mean_reduce = false;
  bool idf_weighted_cascade = false;
  std::vector<std::string> target_pos = {"NOUN", "VERB"};
  InferenceWeights inference;
  uint64_t seed = 1;
  PathsConfig paths;

  void validate() const;
  std::set<std::string> target_pos_set() const {
    return {target_pos.begin(), target_pos.end()};
  }

  std::string to_json_string() const;
  static RunConfig from_json_string(const std::string& text);
  static RunConfig from_json_file(const std::string& path);
};

// FNV-1a 64-bit hash of a file's bytes, as a hex string (manifest entries).
std::string fnv1a64_file_hex(const std::string& path);

// Writes `<output>.manifest.json`: the config, seed, and per-artifact hashes.
void write_manifest(const std::string& manifest_path, const RunConfig& config,
                    const std::vector<std::string>& artifact_paths);

}  // namespace cascalign
