#pragma once

#include <span>
#include <vector>

#include "ifrec/catalog.hpp"
#include "ifrec/matrix.hpp"

namespace ifrec {

// Cosine similarity of a sequence state against a contiguous candidate range.
struct SimilarityScores {
  std::vector<double> values;
  ItemRange candidates;
};

struct ProbDist {
  std::vector<double> probs;
  ItemRange candidates;

  double at(ItemId id) const { return probs[id.value - candidates.begin]; }
};

struct FusionWeights {
  double alpha = 0.7;
  double lambda1 = 0.1;
  double lambda2 = 0.4;
};

// value_i = h . row_i / (|h| |row_i|). Zero-norm h or candidate rows raise DegenerateInput.
SimilarityScores cosine_scores(std::span<const double> h, const EmbeddingTable& table, ItemRange candidates);

// Max-subtracted softmax of scores / temperature.
ProbDist softmax_probs(const SimilarityScores& scores, double temperature = 1.0);

// alpha * p_id + (1 - alpha) * p_img over identical candidate sets.
ProbDist fuse_modalities(const ProbDist& p_id, const ProbDist& p_img, double alpha);

// Scores over the whole catalog: pX on X items, lambda1 * pY on Y items, plus
// lambda2 * pXY everywhere. A missing (nullptr) head contributes nothing.
std::vector<double> combine_domains(const ProbDist* p_x, const ProbDist* p_y, const ProbDist* p_xy, double lambda1,
                                    double lambda2, std::size_t num_items);

// argmax over the target range; ties go to the smallest index.
ItemId recommend(std::span<const double> scores, ItemRange target);

}  // namespace ifrec
