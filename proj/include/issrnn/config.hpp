#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "issrnn/error.hpp"

namespace issrnn {

struct TrainConfig {
  int epochs = 12;
  int batch_size = 20;
  int unroll_steps = 32;
  double learning_rate = 1.0;
  double lr_decay = 0.7;         // multiplicative, per epoch past the warm period
  int decay_after_epoch = 8;
  double dropout_keep = 1.0;
  uint64_t seed = 1;
  double clip_norm = 5.0;        // global gradient-norm clip; <= 0 disables
  int threads = 1;
  int eval_batch = 8;
  int eval_unroll = 64;

  void validate() const;
};

struct RegConfig {
  enum class Mode { kNone, kGroupLasso, kL1 };
  Mode mode = Mode::kNone;
  double lambda = 0.0;
  double epsilon = 1e-8;
  double tau = 0.0;
  double l1_decay = 0.0;

  void validate() const;
};

struct ModelSpec {
  std::string kind = "lstm_stack";  // or "rhn"
  int embed_dim = 64;
  std::vector<int> hidden_sizes = {64, 64};  // lstm_stack
  int width = 64;                            // rhn
  int depth = 2;
  bool coupled_c = true;
  bool tied = false;

  void validate() const;
};

struct DataConfig {
  std::string corpus = "data/corpus.txt";
  double valid_fraction = 0.1;
};

struct RunConfig {
  ModelSpec model;
  TrainConfig train;
  RegConfig reg;
  DataConfig data;
  std::string fingerprint;  // hash of the canonical config JSON
};

// Strict parser: unknown keys anywhere are rejected.
RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::string& path);
std::string run_config_to_json(const RunConfig& cfg);

// FNV-1a over the canonical (sorted-key) JSON dump.
std::string config_fingerprint(const std::string& json_text);

const char* reg_mode_name(RegConfig::Mode mode);
RegConfig::Mode reg_mode_from_name(const std::string& name);

}  // namespace issrnn
