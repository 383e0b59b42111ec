#include "ifrec/ablation.hpp"

#include <cstdio>
#include <ostream>

namespace ifrec {

std::vector<TrainConfig> ablation_configs(const TrainConfig& base) {
  const double fused_alpha = base.alpha < 1.0 ? base.alpha : 0.7;
  TrainConfig baseline = base;
  baseline.alpha = 1.0;
  baseline.multi_attention = false;
  TrainConfig image = base;
  image.alpha = fused_alpha;
  image.multi_attention = false;
  TrainConfig full = base;
  full.alpha = fused_alpha;
  full.multi_attention = true;
  return {baseline, image, full};
}

AblationGrid run_ablation(const TrainConfig& config, const DatasetSplit& data, const ItemCatalog& catalog,
                          const EmbeddingTable& image_table, const std::vector<UserSequence>& eval_split,
                          std::size_t threads) {
  static const char* const kNames[] = {"baseline", "+image", "+multi-attention"};
  AblationGrid grid;
  const auto configs = ablation_configs(config);
  for (std::size_t i = 0; i < configs.size(); ++i) {
    FitOptions options;
    options.eval_threads = threads;
    const FitResult trained = fit(configs[i], data, catalog, image_table, options);
    AblationCell cell;
    cell.variant = kNames[i];
    cell.image_fusion = configs[i].alpha < 1.0;
    cell.multiple_attention = configs[i].multi_attention;
    cell.report = evaluate(trained.best, image_table, eval_split, configs[i].objective(), threads);
    cell.best_epoch = trained.best_epoch;
    grid.cells.push_back(cell);
  }
  return grid;
}

std::string ablation_csv_row(const AblationCell& c) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%s,%d,%d,%s,%zu,%.10f,%.10f,%.10f", c.variant.c_str(), c.image_fusion ? 1 : 0,
                c.multiple_attention ? 1 : 0, std::string(to_string(c.report.target)).c_str(), c.report.num_cases,
                c.report.mrr, c.report.ndcg5, c.report.ndcg10);
  return buf;
}

void print_ablation_table(std::ostream& out, const AblationGrid& grid) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-18s %6s %6s %8s %10s %10s %10s\n", "variant", "image", "multi", "cases", "MRR",
                "NDCG@5", "NDCG@10");
  out << buf;
  for (const auto& c : grid.cells) {
    std::snprintf(buf, sizeof buf, "%-18s %6s %6s %8zu %10.4f %10.4f %10.4f\n", c.variant.c_str(),
                  c.image_fusion ? "yes" : "no", c.multiple_attention ? "yes" : "no", c.report.num_cases, c.report.mrr,
                  c.report.ndcg5, c.report.ndcg10);
    out << buf;
  }
}

}  // namespace ifrec
