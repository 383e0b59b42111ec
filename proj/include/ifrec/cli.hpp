#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "ifrec/ablation.hpp"
#include "ifrec/config.hpp"
#include "ifrec/eval.hpp"

namespace ifrec::cli {

enum ExitCode : int { kSuccess = 0, kUsageError = 1, kDataError = 2, kNumericalAbort = 3 };

// Fixed layout under the output directory.
struct OutputLayout {
  std::filesystem::path root;

  std::filesystem::path catalog() const { return root / "catalog" / "catalog.tsv"; }
  std::filesystem::path split(const std::string& name) const { return root / "splits" / (name + ".tsv"); }
  std::filesystem::path stats() const { return root / "splits" / "stats.tsv"; }
  std::filesystem::path checkpoint(const std::string& name) const { return root / "checkpoints" / (name + ".ckpt"); }
  std::filesystem::path train_log() const { return root / "logs" / "train.log"; }
  std::filesystem::path config_echo(const std::string& command) const {
    return root / "logs" / (command + ".config");
  }
  std::filesystem::path report(const std::string& name) const { return root / "reports" / (name + ".csv"); }
};

void cmd_prepare(const RunConfig& config, std::ostream& out);
SyntheticPaths cmd_synth(const SynthConfig& config, std::ostream& out);
void cmd_train(RunConfig config, std::ostream& out);
EvalReport cmd_eval(RunConfig config, std::ostream& out);
AblationGrid cmd_ablate(RunConfig config, std::ostream& out);

// Parses arguments (argv[0] excluded), runs the command and maps errors to exit codes.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ifrec::cli
