#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>

#include "ifrec/cli.hpp"
#include "ifrec/error.hpp"

namespace ifrec::cli {

namespace {

void ensure_dirs(const OutputLayout& layout) {
  for (const char* sub : {"catalog", "splits", "checkpoints", "logs", "reports"}) {
    std::filesystem::create_directories(layout.root / sub);
  }
}

void echo_config(const std::filesystem::path& path, const std::string& text) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

struct PreparedData {
  ItemCatalog catalog;
  DatasetSplit split;
};

PreparedData load_prepared(const OutputLayout& layout) {
  if (!std::filesystem::exists(layout.catalog())) {
    throw DataError("no prepared dataset under " + layout.root.string() + " (missing " + layout.catalog().string() +
                    "); run 'prepare' first");
  }
  PreparedData data{ItemCatalog::load(layout.catalog()), {}};
  auto read = [&](const std::string& name) { return build_sequences(ingest(layout.split(name), data.catalog)); };
  data.split.train = read("train");
  data.split.valid = read("valid");
  data.split.test = read("test");
  return data;
}

EmbeddingTable load_images(const std::string& path, const ItemCatalog& catalog) {
  if (path.empty()) throw DataError("no image embedding file given (set image_embeddings)");
  if (!std::filesystem::exists(path)) throw DataError("image embedding file not found: " + path);
  return load_image_table(path, catalog);
}

// e follows the embedding file unless the user pinned it.
void resolve_image_dim(RunConfig& config, const EmbeddingTable& images) {
  if (config.explicit_keys.count("e") && config.train.e != images.dim()) {
    throw DataError("image embedding dimension " + std::to_string(images.dim()) + " differs from e=" +
                    std::to_string(config.train.e));
  }
  config.train.e = images.dim();
}

const std::vector<UserSequence>& select_split(const DatasetSplit& split, const std::string& name) {
  if (name == "train") return split.train;
  if (name == "valid") return split.valid;
  return split.test;
}

std::size_t count_cases(const std::vector<UserSequence>& seqs, Domain d) {
  std::size_t n = 0;
  for (const auto& s : seqs) n += evaluation_case(s, d) ? 1 : 0;
  return n;
}

std::map<std::string, std::string> checkpoint_meta(const RunConfig& config) {
  return {{"target_domain", std::string(to_string(config.train.target))},
          {"alpha", config.get("alpha")},
          {"lambda1", config.get("lambda1")},
          {"lambda2", config.get("lambda2")},
          {"multi_attention", config.get("multi_attention")},
          {"image_embeddings", config.image_embeddings},
          {"seed", config.get("seed")}};
}

}  // namespace

void cmd_prepare(const RunConfig& config, std::ostream& out) {
  config.validate();
  if (config.interactions.empty()) throw UsageError("prepare needs an interaction log (--interactions)");
  const OutputLayout layout{config.out};
  ensure_dirs(layout);
  echo_config(layout.config_echo("prepare"), config.to_text());

  const auto raw = read_interaction_log(config.interactions);
  const ItemCatalog full = catalog_from_log(raw);
  const auto interactions = resolve(raw, full);
  const auto filtered = filter_protocol(interactions, {config.min_count, config.min_per_domain});
  if (filtered.empty()) {
    throw DataError("empty dataset after filtering (min_count=" + std::to_string(config.min_count) +
                    ", min_per_domain=" + std::to_string(config.min_per_domain) + ")");
  }
  if (filtered.size() < 2) throw DataError("only one sequence survives filtering; need at least 2 to split");
  const CompactedData data = compact(filtered, full);
  const DatasetSplit split = split_train_valid_test(data.sequences, config.train.seed, config.holdout_fraction);

  data.catalog.save(layout.catalog());
  write_interaction_log(layout.split("train"), flatten(split.train), data.catalog);
  write_interaction_log(layout.split("valid"), flatten(split.valid), data.catalog);
  write_interaction_log(layout.split("test"), flatten(split.test), data.catalog);

  double total_len = 0.0;
  for (const auto& s : data.sequences) total_len += static_cast<double>(s.size());
  const double avg_len = total_len / static_cast<double>(data.sequences.size());

  std::ofstream stats(layout.stats());
  const char* header = "domain\titems\ttrain\tvalid\ttest\tavg_length\n";
  stats << header;
  out << header;
  for (Domain d : {Domain::X, Domain::Y}) {
    char line[256];
    std::snprintf(line, sizeof line, "%s\t%zu\t%zu\t%zu\t%zu\t%.2f\n", std::string(to_string(d)).c_str(),
                  data.catalog.count(d), split.train.size(), count_cases(split.valid, d), count_cases(split.test, d),
                  avg_len);
    stats << line;
    out << line;
  }
}

SyntheticPaths cmd_synth(const SynthConfig& config, std::ostream& out) {
  try {
    config.spec.validate();
  } catch (const InvalidArgument& e) {
    throw UsageError(e.what());
  }
  const SyntheticData data = generate_synthetic(config.spec);
  const SyntheticPaths paths = write_synthetic(data, config.out);
  echo_config(std::filesystem::path(config.out) / "logs" / "synth.config", config.to_text());
  out << "wrote " << data.interactions.size() << " interactions for " << data.user_keys.size() << " users, "
      << data.images.keys.size() << " items\n"
      << "  " << paths.interactions.string() << "\n  " << paths.images.string() << "\n  "
      << paths.ground_truth.string() << "\n";
  return paths;
}

void cmd_train(RunConfig config, std::ostream& out) {
  config.validate();
  const OutputLayout layout{config.out};
  const PreparedData data = load_prepared(layout);
  const EmbeddingTable images = load_images(config.image_embeddings, data.catalog);
  resolve_image_dim(config, images);
  ensure_dirs(layout);
  echo_config(layout.config_echo("train"), config.to_text());

  std::ofstream log(layout.train_log(), std::ios::trunc);
  if (!log) throw DataError("cannot write " + layout.train_log().string());
  FitOptions options;
  options.log = &log;
  options.record_wall_time = config.record_wall_time;
  options.eval_threads = config.threads;
  const FitResult result = fit(config.train, data.split, data.catalog, images, options);

  auto meta = checkpoint_meta(config);
  save_checkpoint(layout.checkpoint("final"), result.last, meta);
  meta["epoch"] = std::to_string(result.best_epoch);
  save_checkpoint(layout.checkpoint("best"), result.best, meta);
  const auto& last = result.history.back();
  out << "trained " << result.history.size() << " epochs, " << result.steps << " steps; final total loss "
      << last.total << "; best epoch " << result.best_epoch << " (valid MRR " << result.best_valid_mrr << ")\n";
  if (result.clamp_events > 0) out << "probability clamp events: " << result.clamp_events << "\n";
}

EvalReport cmd_eval(RunConfig config, std::ostream& out) {
  config.validate();
  const OutputLayout layout{config.out};
  const PreparedData data = load_prepared(layout);
  const std::filesystem::path ckpt_path =
      config.checkpoint.empty() ? layout.checkpoint("best") : std::filesystem::path(config.checkpoint);
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  const ModelShape shape = ckpt.params.shape();
  if (shape.num_items != data.catalog.size() || shape.num_x != data.catalog.count(Domain::X)) {
    throw DataError("checkpoint/catalog mismatch: checkpoint has " + std::to_string(shape.num_items) + " items (" +
                    std::to_string(shape.num_x) + " in X), catalog has " + std::to_string(data.catalog.size()) +
                    " (" + std::to_string(data.catalog.count(Domain::X)) + " in X)");
  }
  // Trained values first, then explicit alpha/lambda/target flags, then eval_* overrides.
  for (const char* key : {"alpha", "lambda1", "lambda2", "multi_attention", "target_domain", "image_embeddings"}) {
    auto it = ckpt.meta.find(key);
    if (it != ckpt.meta.end() && !config.explicit_keys.count(key)) {
      const auto keep = config.explicit_keys;
      config.set(key, it->second);
      config.explicit_keys = keep;
    }
  }
  ObjectiveConfig objective = config.train.objective();
  if (config.eval_alpha) objective.alpha = *config.eval_alpha;
  if (config.eval_lambda1) objective.lambda1 = *config.eval_lambda1;
  if (config.eval_lambda2) objective.lambda2 = *config.eval_lambda2;
  objective.dropout = 0.0;

  const EmbeddingTable images = load_images(config.image_embeddings, data.catalog);
  if (images.dim() != shape.image_dim) throw DataError("image embedding dimension differs from the checkpoint");
  echo_config(layout.config_echo("eval"), config.to_text());

  const EvalReport report =
      evaluate(ckpt.params, images, select_split(data.split, config.split), objective, config.threads);
  const auto csv_path = layout.report("eval_" + config.split + "_" + std::string(to_string(objective.target)));
  std::filesystem::create_directories(csv_path.parent_path());
  std::ofstream csv(csv_path);
  csv << kEvalCsvHeader << '\n' << eval_csv_row(config.split, report) << '\n';
  print_eval_table(out, config.split, report);
  return report;
}

AblationGrid cmd_ablate(RunConfig config, std::ostream& out) {
  config.validate();
  const OutputLayout layout{config.out};
  const PreparedData data = load_prepared(layout);
  const EmbeddingTable images = load_images(config.image_embeddings, data.catalog);
  resolve_image_dim(config, images);
  ensure_dirs(layout);
  echo_config(layout.config_echo("ablate"), config.to_text());
  const AblationGrid grid = run_ablation(config.train, data.split, data.catalog, images,
                                         select_split(data.split, config.split), config.threads);
  std::ofstream csv(layout.report("ablation"));
  csv << kAblationCsvHeader << '\n';
  for (const auto& cell : grid.cells) csv << ablation_csv_row(cell) << '\n';
  print_ablation_table(out, grid);
  return grid;
}

namespace {

std::string flag_names(const std::string& key) {
  std::string names = "--" + key;
  std::string dashed = key;
  std::replace(dashed.begin(), dashed.end(), '_', '-');
  if (dashed != key) names += ",--" + dashed;
  return names;
}

bool is_global(const std::string& key) { return key == "seed" || key == "out" || key == "threads"; }

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"ifrec: cross-domain sequential recommendation with frozen image embeddings"};
  app.require_subcommand(1);
  std::string config_path;
  std::map<std::string, std::string> global_values;
  std::map<std::string, CLI::Option*> global_opts;
  app.add_option("--config", config_path, "flat key=value config file");
  for (const std::string key : {"seed", "out", "threads"}) {
    global_opts[key] = app.add_option(flag_names(key), global_values[key]);
  }

  struct Sub {
    CLI::App* app;
    std::map<std::string, std::string> values;
    std::map<std::string, CLI::Option*> opts;
  };
  std::map<std::string, std::unique_ptr<Sub>> subs;
  const std::map<std::string, std::string> descriptions = {
      {"prepare", "filter an interaction log and write catalog and train/valid/test splits"},
      {"synth", "generate a synthetic interaction log and image-embedding file"},
      {"train", "train on a prepared dataset"},
      {"eval", "evaluate a checkpoint on a split"},
      {"ablate", "train and evaluate the three ablation variants"}};
  for (const auto& [name, description] : descriptions) {
    auto sub = std::make_unique<Sub>();
    sub->app = app.add_subcommand(name, description);
    sub->app->fallthrough();
    const auto& keys = name == "synth" ? SynthConfig::keys() : RunConfig::keys();
    for (const auto& key : keys) {
      if (is_global(key)) continue;
      sub->opts[key] = sub->app->add_option(flag_names(key), sub->values[key]);
    }
    subs[name] = std::move(sub);
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kSuccess;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n" << app.help();
    return kUsageError;
  }

  try {
    for (const auto& [name, sub] : subs) {
      if (!sub->app->parsed()) continue;
      if (name == "synth") {
        SynthConfig config;
        if (!config_path.empty()) apply_config_file(config, config_path);
        for (const auto& [key, opt] : global_opts) {
          if (opt->count() > 0 && key != "threads") config.set(key, global_values[key]);
        }
        for (const auto& [key, opt] : sub->opts) {
          if (opt->count() > 0) config.set(key, sub->values[key]);
        }
        cmd_synth(config, out);
        return kSuccess;
      }
      RunConfig config;
      if (!config_path.empty()) apply_config_file(config, config_path);
      for (const auto& [key, opt] : global_opts) {
        if (opt->count() > 0) config.set(key, global_values[key]);
      }
      for (const auto& [key, opt] : sub->opts) {
        if (opt->count() > 0) config.set(key, sub->values[key]);
      }
      if (name == "prepare") cmd_prepare(config, out);
      if (name == "train") cmd_train(config, out);
      if (name == "eval") cmd_eval(config, out);
      if (name == "ablate") cmd_ablate(config, out);
      return kSuccess;
    }
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kUsageError;
  } catch (const NumericalError& e) {
    err << "numerical abort: " << e.what() << "\n";
    return kNumericalAbort;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kDataError;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kDataError;
  }
  return kUsageError;
}

}  // namespace ifrec::cli
