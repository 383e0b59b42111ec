#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ifrec/catalog.hpp"
#include "ifrec/model.hpp"
#include "ifrec/seqdata.hpp"

namespace ifrec {

struct EvalReport {
  Domain target = Domain::X;
  double mrr = 0.0;
  double ndcg5 = 0.0;
  double ndcg10 = 0.0;
  std::size_t num_cases = 0;
};

// 1 + number of entries scoring at least as high as the target, excluding the
// target itself (ties count against the target).
std::size_t rank_of_target(std::span<const double> scores, std::size_t target_index);

double mrr(std::span<const std::size_t> ranks);
// Single relevant item per case, so the ideal DCG is 1.
double ndcg_at_k(std::span<const std::size_t> ranks, std::size_t k);

EvalReport report_from_ranks(Domain target, std::span<const std::size_t> ranks);

// The prediction case of a held-out sequence: its last target-domain item,
// predicted from every merged item before it.
struct EvalCase {
  std::size_t prefix_len = 0;
  ItemId target;
};

std::optional<EvalCase> evaluation_case(const UserSequence& seq, Domain target);
bool has_eligible_cases(std::span<const UserSequence> sequences, Domain target);

// Rank of each eligible case's target among the target-domain items.
std::vector<std::size_t> case_ranks(const ModelParams& params, const EmbeddingTable& image_table,
                                    std::span<const UserSequence> sequences, const ObjectiveConfig& config,
                                    std::size_t threads = 1);

// Throws InvalidArgument when no sequence yields a case.
EvalReport evaluate(const ModelParams& params, const EmbeddingTable& image_table,
                    std::span<const UserSequence> sequences, const ObjectiveConfig& config,
                    std::size_t threads = 1);

// CSV columns: split,target_domain,num_cases,mrr,ndcg5,ndcg10
inline constexpr const char* kEvalCsvHeader = "split,target_domain,num_cases,mrr,ndcg5,ndcg10";
std::string eval_csv_row(const std::string& split, const EvalReport& report);
void print_eval_table(std::ostream& out, const std::string& split, const EvalReport& report);

}  // namespace ifrec
