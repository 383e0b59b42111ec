#include "ifrec/eval.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>
#include <thread>

#include "ifrec/error.hpp"

namespace ifrec {

std::size_t rank_of_target(std::span<const double> scores, std::size_t target_index) {
  if (target_index >= scores.size()) throw InvalidArgument("rank_of_target: target not among the scores");
  const double target = scores[target_index];
  std::size_t rank = 1;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (i != target_index && scores[i] >= target) ++rank;
  }
  return rank;
}

double mrr(std::span<const std::size_t> ranks) {
  if (ranks.empty()) throw InvalidArgument("mrr: no ranks");
  double sum = 0.0;
  for (std::size_t r : ranks) {
    if (r == 0) throw InvalidArgument("mrr: ranks are 1-based");
    sum += 1.0 / static_cast<double>(r);
  }
  return sum / static_cast<double>(ranks.size());
}

double ndcg_at_k(std::span<const std::size_t> ranks, std::size_t k) {
  if (ranks.empty()) throw InvalidArgument("ndcg_at_k: no ranks");
  if (k == 0) throw InvalidArgument("ndcg_at_k: k must be >= 1");
  double sum = 0.0;
  for (std::size_t r : ranks) {
    if (r == 0) throw InvalidArgument("ndcg_at_k: ranks are 1-based");
    if (r <= k) sum += 1.0 / std::log2(static_cast<double>(r) + 1.0);
  }
  return sum / static_cast<double>(ranks.size());
}

EvalReport report_from_ranks(Domain target, std::span<const std::size_t> ranks) {
  return EvalReport{target, mrr(ranks), ndcg_at_k(ranks, 5), ndcg_at_k(ranks, 10), ranks.size()};
}

std::optional<EvalCase> evaluation_case(const UserSequence& seq, Domain target) {
  const auto& view = seq.view(target);
  if (view.empty() || view.back() == 0) return std::nullopt;
  return EvalCase{view.back(), seq.merged[view.back()]};
}

bool has_eligible_cases(std::span<const UserSequence> sequences, Domain target) {
  for (const auto& seq : sequences) {
    if (evaluation_case(seq, target)) return true;
  }
  return false;
}

std::vector<std::size_t> case_ranks(const ModelParams& params, const EmbeddingTable& image_table,
                                    std::span<const UserSequence> sequences, const ObjectiveConfig& config,
                                    std::size_t threads) {
  const ScoringContext ctx(params, image_table);
  const ItemRange target_range = ctx.range(view_of(config.target));
  std::vector<std::size_t> ranks(sequences.size(), 0);

  auto score_range = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const auto c = evaluation_case(sequences[i], config.target);
      if (!c) continue;
      const auto scores = predict_scores(ctx, sequences[i], c->prefix_len, config);
      if (!scores) continue;
      std::span<const double> restricted(scores->data() + target_range.begin, target_range.size());
      ranks[i] = rank_of_target(restricted, c->target.value - target_range.begin);
    }
  };
  threads = std::max<std::size_t>(1, std::min(threads, sequences.size()));
  if (threads == 1) {
    score_range(0, sequences.size());
  } else {
    std::vector<std::jthread> workers;
    const std::size_t chunk = (sequences.size() + threads - 1) / threads;
    for (std::size_t begin = 0; begin < sequences.size(); begin += chunk) {
      workers.emplace_back(score_range, begin, std::min(sequences.size(), begin + chunk));
    }
  }
  std::erase(ranks, 0);
  return ranks;
}

EvalReport evaluate(const ModelParams& params, const EmbeddingTable& image_table,
                    std::span<const UserSequence> sequences, const ObjectiveConfig& config, std::size_t threads) {
  const auto ranks = case_ranks(params, image_table, sequences, config, threads);
  if (ranks.empty()) throw InvalidArgument("evaluate: no eligible evaluation cases");
  return report_from_ranks(config.target, ranks);
}

std::string eval_csv_row(const std::string& split, const EvalReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%s,%s,%zu,%.10f,%.10f,%.10f", split.c_str(), std::string(to_string(r.target)).c_str(),
                r.num_cases, r.mrr, r.ndcg5, r.ndcg10);
  return buf;
}

void print_eval_table(std::ostream& out, const std::string& split, const EvalReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-8s %-6s %8s %10s %10s %10s\n", "split", "target", "cases", "MRR", "NDCG@5",
                "NDCG@10");
  out << buf;
  std::snprintf(buf, sizeof buf, "%-8s %-6s %8zu %10.4f %10.4f %10.4f\n", split.c_str(),
                std::string(to_string(r.target)).c_str(), r.num_cases, r.mrr, r.ndcg5, r.ndcg10);
  out << buf;
}

}  // namespace ifrec
