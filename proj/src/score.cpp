#include "ifrec/score.hpp"

#include <algorithm>
#include <cmath>

#include "ifrec/error.hpp"
#include "ifrec/kernels.hpp"

namespace ifrec {

SimilarityScores cosine_scores(std::span<const double> h, const EmbeddingTable& table, ItemRange candidates) {
  if (h.size() != table.dim()) throw InvalidArgument("cosine_scores: state dimension does not match the table");
  if (candidates.end > table.rows() || candidates.begin > candidates.end) {
    throw IndexError("cosine_scores: candidate range exceeds table rows");
  }
  const double h_norm = std::sqrt(kernels::squared_norm(h));
  if (!(h_norm > 0.0)) throw DegenerateInput("cosine_scores: zero-norm sequence state");
  SimilarityScores out{std::vector<double>(candidates.size()), candidates};
  const auto& kern = kernels::active();
  const double* base = table.values.row(candidates.begin).data();
  kern.gemv(base, candidates.size(), table.dim(), h.data(), out.values.data());
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto row = table.values.row(candidates.begin + i);
    const double row_norm = std::sqrt(kernels::squared_norm(row));
    if (!(row_norm > 0.0)) throw DegenerateInput("cosine_scores: zero-norm candidate row");
    out.values[i] = std::clamp(out.values[i] / (h_norm * row_norm), -1.0, 1.0);
  }
  return out;
}

ProbDist softmax_probs(const SimilarityScores& scores, double temperature) {
  if (!(temperature > 0.0)) throw InvalidArgument("softmax_probs: temperature must be positive");
  ProbDist out{std::vector<double>(scores.values.size()), scores.candidates};
  if (scores.values.empty()) return out;
  const double max_score = *std::max_element(scores.values.begin(), scores.values.end());
  double total = 0.0;
  for (std::size_t i = 0; i < scores.values.size(); ++i) {
    out.probs[i] = std::exp((scores.values[i] - max_score) / temperature);
    total += out.probs[i];
  }
  for (double& p : out.probs) p /= total;
  return out;
}

ProbDist fuse_modalities(const ProbDist& p_id, const ProbDist& p_img, double alpha) {
  if (p_id.candidates != p_img.candidates || p_id.probs.size() != p_img.probs.size()) {
    throw InvalidArgument("fuse_modalities: candidate sets differ");
  }
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw InvalidArgument("fuse_modalities: alpha must lie in [0, 1]");
  ProbDist out{std::vector<double>(p_id.probs.size()), p_id.candidates};
  for (std::size_t i = 0; i < out.probs.size(); ++i) {
    out.probs[i] = alpha * p_id.probs[i] + (1.0 - alpha) * p_img.probs[i];
  }
  return out;
}

std::vector<double> combine_domains(const ProbDist* p_x, const ProbDist* p_y, const ProbDist* p_xy, double lambda1,
                                    double lambda2, std::size_t num_items) {
  std::vector<double> scores(num_items, 0.0);
  auto add = [&](const ProbDist* dist, double weight) {
    if (dist == nullptr || weight == 0.0) return;
    if (dist->candidates.end > num_items) throw InvalidArgument("combine_domains: distribution exceeds catalog");
    for (std::size_t i = 0; i < dist->probs.size(); ++i) scores[dist->candidates.begin + i] += weight * dist->probs[i];
  };
  add(p_x, 1.0);
  add(p_y, lambda1);
  add(p_xy, lambda2);
  return scores;
}

ItemId recommend(std::span<const double> scores, ItemRange target) {
  if (target.empty()) throw InvalidArgument("recommend: empty target domain");
  if (target.end > scores.size()) throw IndexError("recommend: target range exceeds scores");
  std::uint32_t best = target.begin;
  for (std::uint32_t i = target.begin + 1; i < target.end; ++i) {
    if (scores[i] > scores[best]) best = i;
  }
  return ItemId{best};
}

}  // namespace ifrec
