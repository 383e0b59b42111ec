#pragma once

#include <array>
#include <concepts>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>

#include "ifrec/attention.hpp"
#include "ifrec/catalog.hpp"
#include "ifrec/score.hpp"
#include "ifrec/seqdata.hpp"

namespace ifrec {

enum class Modality : std::uint8_t { Id, Image };

inline constexpr std::size_t kNumEncoders = 6;

// Slots: X.id, X.img, Y.id, Y.img, XY.id, XY.img.
constexpr std::size_t encoder_slot(View view, Modality modality) {
  return static_cast<std::size_t>(view) * 2 + static_cast<std::size_t>(modality);
}
std::string encoder_name(std::size_t slot);

struct ModelShape {
  std::size_t num_items = 0;
  std::size_t num_x = 0;
  std::size_t id_dim = 0;
  std::size_t image_dim = 0;
  std::size_t max_len = 50;
  std::size_t num_layers = 1;
  std::size_t num_heads = 1;

  friend bool operator==(const ModelShape&, const ModelShape&) = default;
};

// Every learnable tensor: the ID table, six independent encoders and the log
// of the cosine-logit scale (log(1/temperature)).
struct ModelParams {
  EmbeddingTable id_table;
  std::array<AttentionParams, kNumEncoders> encoders;
  Matrix log_scale{1, 1};
  std::size_t num_x = 0;

  AttentionParams& encoder(View v, Modality m) { return encoders[encoder_slot(v, m)]; }
  const AttentionParams& encoder(View v, Modality m) const { return encoders[encoder_slot(v, m)]; }
  double logit_scale() const;
  ModelShape shape() const;

  friend bool operator==(const ModelParams& a, const ModelParams& b) {
    return a.id_table.values == b.id_table.values && a.encoders == b.encoders && a.log_scale == b.log_scale &&
           a.num_x == b.num_x;
  }
};

ModelParams init_model(const ModelShape& shape, double temperature, std::uint64_t seed);
ModelParams zeros_like(const ModelParams& params);

// Visits (name, tensor) for the ID table, every encoder tensor
// ("enc.<slot>.<tensor>") and "log_scale".
template <typename Params, typename Fn>
  requires std::same_as<std::remove_const_t<Params>, ModelParams>
void for_each_tensor(Params& params, Fn&& fn) {
  fn(std::string("id_table"), params.id_table.values);
  for (std::size_t s = 0; s < kNumEncoders; ++s) {
    const std::string prefix = "enc." + encoder_name(s) + ".";
    for_each_tensor(params.encoders[s], [&](const std::string& name, auto& m) { fn(prefix + name, m); });
  }
  fn(std::string("log_scale"), params.log_scale);
}

// Which heads exist and how their probabilities are mixed.
struct ObjectiveConfig {
  double alpha = 0.7;
  double lambda1 = 0.1;
  double lambda2 = 0.4;
  Domain target = Domain::X;
  // Three per-view heads (six encoders) when set; only the merged-sequence head otherwise.
  bool multi_attention = true;
  double dropout = 0.0;
};

// Per-view weight in the training objective and the evaluation combination.
double view_weight(const ObjectiveConfig& config, View view);

// Unit-normalized item tables for one parameter state.
class ScoringContext {
 public:
  ScoringContext(const ModelParams& params, const EmbeddingTable& image_table);

  const ModelParams& params() const { return params_; }
  const EmbeddingTable& table(Modality m) const { return m == Modality::Id ? params_.id_table : image_table_; }
  const Matrix& unit(Modality m) const { return m == Modality::Id ? id_unit_ : image_unit_; }
  const std::vector<double>& norms(Modality m) const { return m == Modality::Id ? id_norm_ : image_norm_; }
  ItemRange range(View v) const;
  std::size_t num_items() const { return params_.id_table.rows(); }

 private:
  const ModelParams& params_;
  const EmbeddingTable& image_table_;
  Matrix id_unit_, image_unit_;
  std::vector<double> id_norm_, image_norm_;
};

// Encoder input for the view restricted to merged positions < prefix_len:
// the most recent max_len items of that view.
std::vector<ItemId> view_inputs(const UserSequence& seq, View view, std::size_t prefix_len, std::size_t max_len);

// Softmax over the view's candidates of the scaled cosine between h and each item row.
ProbDist head_distribution(const ScoringContext& ctx, Modality modality, View view, std::span<const double> h);

// Fused (alpha) next-item distribution of one head given the first prefix_len
// merged items; nullopt when the view has no items in the prefix.
std::optional<ProbDist> predict_view(const ScoringContext& ctx, const UserSequence& seq, std::size_t prefix_len,
                                     View view, const ObjectiveConfig& config);

// Combined scores over all items for the item following the first prefix_len
// merged items. Returns nullopt when no enabled head has input.
std::optional<std::vector<double>> predict_scores(const ScoringContext& ctx, const UserSequence& seq,
                                                  std::size_t prefix_len, const ObjectiveConfig& config);

struct LossParts {
  double x = 0.0;
  double y = 0.0;
  double xy = 0.0;

  double& operator[](View v) { return v == View::X ? x : v == View::Y ? y : xy; }
  double operator[](View v) const { return v == View::X ? x : v == View::Y ? y : xy; }
};

inline constexpr double kProbabilityFloor = 1e-12;

struct StepResult {
  LossParts parts;  // summed over the batch
  double total = 0.0;
  ModelParams grads;
  std::size_t clamp_events = 0;
  std::size_t num_sequences = 0;
};

// Summed negative log-likelihood of every training target of every sequence,
// weighted per view, and its exact gradient (SUM reduction over the batch).
// The image table never receives a gradient.
StepResult backward_step(const ModelParams& params, const EmbeddingTable& image_table,
                         std::span<const UserSequence> batch, const ObjectiveConfig& config, Rng* dropout_rng,
                         bool learnable_scale = false);

// Same objective without gradients.
StepResult forward_loss(const ModelParams& params, const EmbeddingTable& image_table,
                        std::span<const UserSequence> batch, const ObjectiveConfig& config, Rng* dropout_rng);

// Versioned checkpoint of name-keyed f64 tensors plus string metadata.
struct Checkpoint {
  ModelParams params;
  std::map<std::string, std::string> meta;
};

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params,
                     const std::map<std::string, std::string>& meta = {});
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace ifrec
