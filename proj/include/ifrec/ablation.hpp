#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "ifrec/eval.hpp"
#include "ifrec/train.hpp"

namespace ifrec {

struct AblationCell {
  std::string variant;  // "baseline", "+image", "+multi-attention"
  bool image_fusion = false;
  bool multiple_attention = false;
  EvalReport report;
  std::size_t best_epoch = 0;
};

struct AblationGrid {
  std::vector<AblationCell> cells;
};

// Training configurations of the three cells, in row order:
// ID-only merged encoder; + image fusion (merged encoder, ID and image);
// + per-domain encoders (all six, lambda-weighted heads).
std::vector<TrainConfig> ablation_configs(const TrainConfig& base);

// Trains and evaluates every cell with the same seed on `eval_split`.
AblationGrid run_ablation(const TrainConfig& config, const DatasetSplit& data, const ItemCatalog& catalog,
                          const EmbeddingTable& image_table, const std::vector<UserSequence>& eval_split,
                          std::size_t threads = 1);

// CSV columns: variant,image_fusion,multiple_attention,target_domain,num_cases,mrr,ndcg5,ndcg10
inline constexpr const char* kAblationCsvHeader =
    "variant,image_fusion,multiple_attention,target_domain,num_cases,mrr,ndcg5,ndcg10";
std::string ablation_csv_row(const AblationCell& cell);
void print_ablation_table(std::ostream& out, const AblationGrid& grid);

}  // namespace ifrec
