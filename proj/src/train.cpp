#include "ifrec/train.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <sstream>

#include "ifrec/error.hpp"
#include "ifrec/eval.hpp"
#include "ifrec/kernels.hpp"

namespace ifrec {

ObjectiveConfig TrainConfig::objective() const {
  return ObjectiveConfig{alpha, lambda1, lambda2, target, multi_attention, dropout};
}

void TrainConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw InvalidArgument(std::string("invalid training config: ") + what);
  };
  require(q >= 1, "q must be >= 1");
  require(alpha >= 0.0 && alpha <= 1.0, "alpha must lie in [0, 1]");
  require(lambda1 >= 0.0 && lambda2 >= 0.0, "lambda1 and lambda2 must be non-negative");
  require(batch_size >= 1, "batch_size must be >= 1");
  require(dropout >= 0.0 && dropout < 1.0, "dropout must lie in [0, 1)");
  require(l2 >= 0.0, "l2 must be non-negative");
  require(lr > 0.0, "lr must be positive");
  require(max_len >= 1, "max_len must be >= 1");
  require(temperature > 0.0, "temperature must be positive");
  require(clip_norm >= 0.0, "clip_norm must be non-negative");
  require(num_layers >= 1 && num_heads >= 1, "num_layers and num_heads must be >= 1");
  require(q % num_heads == 0, "q must be divisible by num_heads");
}

std::string format_log_record(const LossReport& r) {
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "epoch=%zu step=%zu loss_x=%.12g loss_y=%.12g loss_xy=%.12g total=%.12g valid_mrr=%.12g wall_ms=%.0f",
                r.epoch, r.step, r.per_head.x, r.per_head.y, r.per_head.xy, r.total, r.valid_mrr, r.wall_ms);
  return buf;
}

LossReport parse_log_record(const std::string& line) {
  LossReport r;
  std::istringstream in(line);
  std::string field;
  while (in >> field) {
    const auto eq = field.find('=');
    if (eq == std::string::npos) throw FormatError("log record field without '=': " + field);
    const std::string key = field.substr(0, eq);
    const std::string value = field.substr(eq + 1);
    try {
      if (key == "epoch") r.epoch = std::stoull(value);
      else if (key == "step") r.step = std::stoull(value);
      else if (key == "loss_x") r.per_head.x = std::stod(value);
      else if (key == "loss_y") r.per_head.y = std::stod(value);
      else if (key == "loss_xy") r.per_head.xy = std::stod(value);
      else if (key == "total") r.total = std::stod(value);
      else if (key == "valid_mrr") r.valid_mrr = std::stod(value);
      else if (key == "wall_ms") r.wall_ms = std::stod(value);
      else throw FormatError("unknown log record key: " + key);
    } catch (const std::logic_error&) {
      throw FormatError("bad log record value: " + field);
    }
  }
  return r;
}

double nll_head_loss(std::span<const ProbDist> fused, std::span<const ItemId> targets, std::size_t* clamp_events) {
  if (fused.size() != targets.size()) throw InvalidArgument("nll_head_loss: one distribution per target expected");
  double loss = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (!fused[i].candidates.contains(targets[i])) {
      throw InvalidArgument("nll_head_loss: target " + std::to_string(targets[i].value) + " outside the candidate set");
    }
    double p = fused[i].at(targets[i]);
    if (!(p >= kProbabilityFloor)) {
      p = kProbabilityFloor;
      if (clamp_events != nullptr) ++*clamp_events;
    }
    loss -= std::log(p);
  }
  return loss;
}

double total_loss(double loss_x, double loss_y, double loss_xy, double lambda1, double lambda2) {
  for (double v : {loss_x, loss_y, loss_xy, lambda1, lambda2}) {
    if (!std::isfinite(v)) throw InvalidArgument("total_loss: non-finite input");
  }
  return loss_x + lambda1 * loss_y + lambda2 * loss_xy;
}

void adam_step(std::span<Matrix* const> params, std::span<const Matrix* const> grads, AdamState& state,
               const AdamOptions& options) {
  if (params.size() != grads.size()) throw InvalidArgument("adam_step: parameter/gradient count mismatch");
  if (state.first.empty()) {
    for (const Matrix* p : params) {
      state.first.emplace_back(p->rows(), p->cols());
      state.second.emplace_back(p->rows(), p->cols());
    }
  }
  if (state.first.size() != params.size()) throw InvalidArgument("adam_step: state size mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i]->same_shape(*grads[i]) || !params[i]->same_shape(state.first[i]) ||
        !params[i]->same_shape(state.second[i])) {
      throw InvalidArgument("adam_step: shape mismatch at tensor " + std::to_string(i));
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correct1 = 1.0 - std::pow(options.beta1, t);
  const double correct2 = 1.0 - std::pow(options.beta2, t);
  const double decay = 1.0 - options.lr * options.l2;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i]->values();
    auto g = grads[i]->values();
    auto m = state.first[i].values();
    auto v = state.second[i].values();
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = options.beta1 * m[k] + (1.0 - options.beta1) * g[k];
      v[k] = options.beta2 * v[k] + (1.0 - options.beta2) * g[k] * g[k];
      const double m_hat = m[k] / correct1;
      const double v_hat = v[k] / correct2;
      p[k] = p[k] * decay - options.lr * m_hat / (std::sqrt(v_hat) + options.eps);
    }
  }
}

void adam_step(ModelParams& params, const ModelParams& grads, AdamState& state, const AdamOptions& options,
               bool learnable_scale) {
  const double decay = 1.0 - options.lr * options.l2;
  std::vector<Matrix*> p;
  std::vector<const Matrix*> g;
  for_each_tensor(params, [&](const std::string& name, Matrix& m) {
    if (name == "log_scale") {
      if (learnable_scale) p.push_back(&m);
      return;
    }
    if (decay != 1.0) kernels::scale(decay, m.values());
    p.push_back(&m);
  });
  for_each_tensor(grads, [&](const std::string& name, const Matrix& m) {
    if (name != "log_scale" || learnable_scale) g.push_back(&m);
  });
  AdamOptions undecayed = options;
  undecayed.l2 = 0.0;
  adam_step(p, g, state, undecayed);
}

double clip_global_norm(ModelParams& grads, double max_norm) {
  double sq = 0.0;
  for_each_tensor(grads, [&](const std::string&, const Matrix& m) { sq += kernels::squared_norm(m.values()); });
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double factor = max_norm / norm;
    for_each_tensor(grads, [&](const std::string&, Matrix& m) { kernels::scale(factor, m.values()); });
  }
  return norm;
}

void check_finite(const ModelParams& tensors, std::string_view what) {
  for_each_tensor(tensors, [&](const std::string& name, const Matrix& m) {
    for (double v : m.values()) {
      if (!std::isfinite(v)) throw NumericalError("non-finite " + std::string(what) + " in tensor '" + name + "'");
    }
  });
}

FitResult fit(const TrainConfig& config, const DatasetSplit& data, const ItemCatalog& catalog,
              const EmbeddingTable& image_table, const FitOptions& options) {
  config.validate();
  if (image_table.rows() != catalog.size()) throw DataError("image table rows do not match the catalog size");
  if (config.e != 0 && image_table.dim() != config.e) {
    throw DataError("image embedding dimension " + std::to_string(image_table.dim()) + " differs from e=" +
                    std::to_string(config.e));
  }
  const ModelShape shape{catalog.size(), catalog.count(Domain::X), config.q,         image_table.dim(),
                         config.max_len, config.num_layers,        config.num_heads};
  ModelParams params = init_model(shape, config.temperature, config.seed);
  const ObjectiveConfig objective = config.objective();
  const AdamOptions adam{config.lr, 0.9, 0.999, 1e-8, config.l2};
  AdamState state;
  Rng shuffle_rng = substream(config.seed, "shuffle");
  Rng dropout_rng = substream(config.seed, "dropout");

  FitResult result;
  std::vector<std::size_t> order(data.train.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<UserSequence> batch;
  // A zero-norm state mid-training comes from overflowed parameters, not from the data.
  std::size_t epoch = 0;
  try {
    for (epoch = 1; epoch <= config.epochs; ++epoch) {
      const auto start = std::chrono::steady_clock::now();
      shuffle_rng.shuffle(std::span<std::size_t>(order));
      LossParts epoch_loss;
      for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
        const std::size_t end = std::min(order.size(), begin + config.batch_size);
        batch.clear();
        for (std::size_t i = begin; i < end; ++i) batch.push_back(data.train[order[i]]);
        StepResult step =
            backward_step(params, image_table, batch, objective, &dropout_rng, config.learnable_temperature);
        check_finite(step.grads);
        if (!std::isfinite(step.total)) throw NumericalError("non-finite training loss at epoch " + std::to_string(epoch));
        for_each_tensor(step.grads, [&](const std::string&, Matrix& m) {
          kernels::scale(1.0 / static_cast<double>(batch.size()), m.values());
        });
        clip_global_norm(step.grads, config.clip_norm);
        adam_step(params, step.grads, state, adam, config.learnable_temperature);
        check_finite(params, "parameter");
        ++result.steps;
        result.clamp_events += step.clamp_events;
        epoch_loss.x += step.parts.x;
        epoch_loss.y += step.parts.y;
        epoch_loss.xy += step.parts.xy;
      }
      LossReport report;
      report.epoch = epoch;
      report.step = result.steps;
      const double n = std::max<double>(1.0, static_cast<double>(data.train.size()));
      report.per_head = {epoch_loss.x / n, epoch_loss.y / n, epoch_loss.xy / n};
      report.total = 0.0;
      for (View v : {View::X, View::Y, View::XY}) report.total += view_weight(objective, v) * report.per_head[v];

      bool improved = false;
      if (has_eligible_cases(data.valid, objective.target)) {
        report.valid_mrr = evaluate(params, image_table, data.valid, objective, options.eval_threads).mrr;
        improved = !(result.best_valid_mrr >= report.valid_mrr);
      }
      if (improved || std::isnan(report.valid_mrr)) {
        if (improved) result.best_valid_mrr = report.valid_mrr;
        result.best = params;
        result.best_epoch = epoch;
      }
      if (options.record_wall_time) {
        report.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
      }
      if (options.log != nullptr) *options.log << format_log_record(report) << '\n' << std::flush;
      result.history.push_back(report);
    }
  } catch (const DegenerateInput& e) {
    throw NumericalError(std::string(e.what()) + " during training at epoch " + std::to_string(epoch));
  }
  if (result.best_epoch == 0) result.best = params;
  result.last = std::move(params);
  return result;
}

}  // namespace ifrec
