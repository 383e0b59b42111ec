#pragma once

#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "ifrec/synth.hpp"
#include "ifrec/train.hpp"

namespace ifrec {

// Flat key=value configuration. Precedence: built-in defaults, then the
// --config file, then command-line flags.
struct RunConfig {
  TrainConfig train;
  std::string interactions;
  std::string image_embeddings;
  std::string out = "run";
  std::string checkpoint;  // empty: <out>/checkpoints/best.ckpt
  std::string split = "test";
  double holdout_fraction = 0.2;
  std::size_t min_count = 10;
  std::size_t min_per_domain = 3;
  std::size_t threads = 1;
  // Evaluation-time overrides; unset means reuse the trained values.
  std::optional<double> eval_alpha;
  std::optional<double> eval_lambda1;
  std::optional<double> eval_lambda2;
  bool record_wall_time = false;

  std::set<std::string> explicit_keys;  // keys set by a file or a flag

  // Throws UsageError for unknown keys or unparsable values.
  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;
  static const std::vector<std::string>& keys();

  // Every key, sorted, one "key=value" per line.
  std::string to_text() const;
  void validate() const;
};

// Same mechanics for the synth command.
struct SynthConfig {
  SyntheticSpec spec;
  std::string out = "synthetic";

  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;
  static const std::vector<std::string>& keys();
  std::string to_text() const;
};

// Reads "key=value" lines ('#' comments, blank lines ignored) and applies them in order.
template <typename Config>
void apply_config_file(Config& config, const std::filesystem::path& path);

std::vector<std::pair<std::string, std::string>> read_key_values(const std::filesystem::path& path);

}  // namespace ifrec
