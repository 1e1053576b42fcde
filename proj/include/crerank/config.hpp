#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "crerank/corpus.hpp"
#include "crerank/errors.hpp"
#include "crerank/types.hpp"

namespace crerank {

struct ModelConfig {
  std::string generator = "cf";  // cf | stamp | stmo
  Index d = 100;
  Index d_cre = 0;               // 0 = same as d
  std::uint32_t k = 100;
  double alpha = 0.5;
  std::uint32_t table_width = 500;
  std::uint32_t cre_stride = 1;
  bool cre_enabled = true;
  bool attention_normalized = false;

  Index cre_dim() const { return d_cre == 0 ? d : d_cre; }
};

struct TrainConfig {
  double lr = 1e-3;
  std::uint32_t batch = 512;
  std::uint32_t epochs = 5;
  std::uint64_t seed = 42;
  double val_fraction = 0.05;
  std::uint32_t val_every = 1000;        // steps between validation checks
  std::uint32_t val_max_examples = 5000; // cap on the validation sample
  int val_n = 5;                         // model selection by Recall@val_n
  bool val_on_composed = true;           // re-ranker recall over the composed list
  double clip = 0.0;                     // 0 disables gradient clipping
};

// Flat dotted-key configuration: file values override recipe defaults, CLI
// --set overrides file values. The resolved snapshot is what gets hashed.
struct RunConfig {
  PreprocessConfig data;
  ModelConfig model;
  TrainConfig train;
  int eval_n = 20;
  int threads = 1;

  void apply(const std::string& key, const std::string& value);
  void validate() const;

  // All keys in sorted order, one "key = value" per line.
  std::string snapshot_text() const;
  std::uint64_t config_hash() const;

  static RunConfig load(const std::string* file_path,
                        const std::vector<std::string>& overrides);
};

// Parses "key = value" lines; '#' starts a comment, blank lines ignored.
std::vector<std::pair<std::string, std::string>> parse_config_text(const std::string& text);

}  // namespace crerank
