#pragma once

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ifrec/catalog.hpp"
#include "ifrec/model.hpp"
#include "ifrec/seqdata.hpp"

namespace ifrec {

struct TrainConfig {
  std::size_t q = 256;
  std::size_t e = 512;
  double alpha = 0.7;
  double lambda1 = 0.1;
  double lambda2 = 0.4;
  std::size_t batch_size = 256;
  double dropout = 0.3;
  double l2 = 1e-5;
  double lr = 1e-3;
  std::size_t epochs = 100;
  std::size_t max_len = 50;
  std::uint64_t seed = 42;
  double temperature = 1.0;
  bool learnable_temperature = false;
  double clip_norm = 5.0;  // 0 disables clipping
  std::size_t num_layers = 1;
  std::size_t num_heads = 1;
  Domain target = Domain::X;
  bool multi_attention = true;

  ObjectiveConfig objective() const;
  // Throws InvalidArgument naming the first bad field.
  void validate() const;
};

struct LossReport {
  std::size_t epoch = 0;
  std::size_t step = 0;
  LossParts per_head;  // mean over the epoch's sequences
  double total = 0.0;
  double valid_mrr = std::numeric_limits<double>::quiet_NaN();
  double wall_ms = 0.0;
};

// "epoch=.. step=.. loss_x=.. loss_y=.. loss_xy=.. total=.. valid_mrr=.. wall_ms=.."
std::string format_log_record(const LossReport& report);
LossReport parse_log_record(const std::string& line);

// Sum over targets of -log P(target) for one head's fused distributions.
// Probabilities below 1e-12 are clamped and counted in `clamp_events`.
double nll_head_loss(std::span<const ProbDist> fused, std::span<const ItemId> targets,
                     std::size_t* clamp_events = nullptr);

double total_loss(double loss_x, double loss_y, double loss_xy, double lambda1, double lambda2);

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double l2 = 0.0;  // decoupled: param *= (1 - lr * l2) before the Adam update
};

struct AdamState {
  std::vector<Matrix> first;
  std::vector<Matrix> second;
  std::size_t step = 0;
};

// One Adam update with bias correction over parallel lists of tensors.
// State tensors are created on the first call.
void adam_step(std::span<Matrix* const> params, std::span<const Matrix* const> grads, AdamState& state,
               const AdamOptions& options);

// Updates every trainable tensor of the model. log_scale moves only when
// `learnable_scale` is set and is never decayed.
void adam_step(ModelParams& params, const ModelParams& grads, AdamState& state, const AdamOptions& options,
               bool learnable_scale);

// Scales all gradients so their global L2 norm is at most max_norm; returns the norm before clipping.
double clip_global_norm(ModelParams& grads, double max_norm);

// Throws NumericalError naming the first tensor holding a NaN or infinity.
void check_finite(const ModelParams& tensors, std::string_view what = "gradient");

struct FitOptions {
  std::ostream* log = nullptr;  // receives one formatted record per epoch
  bool record_wall_time = false;
  std::size_t eval_threads = 1;
};

struct FitResult {
  ModelParams best;
  ModelParams last;
  std::vector<LossReport> history;
  std::size_t best_epoch = 0;
  double best_valid_mrr = std::numeric_limits<double>::quiet_NaN();
  std::size_t steps = 0;
  std::size_t clamp_events = 0;
};

// Trains from a fresh initialization. Batches average per-sequence losses.
// Validation MRR in the target domain picks the best epoch; without eligible
// validation cases the last epoch is kept.
FitResult fit(const TrainConfig& config, const DatasetSplit& data, const ItemCatalog& catalog,
              const EmbeddingTable& image_table, const FitOptions& options = {});

}  // namespace ifrec
