#include "ifrec/model.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <fstream>

#include "ifrec/error.hpp"
#include "ifrec/kernels.hpp"

namespace ifrec {

namespace {

constexpr std::array<View, 3> kViews{View::X, View::Y, View::XY};
constexpr std::array<Modality, 2> kModalities{Modality::Id, Modality::Image};

double modality_weight(const ObjectiveConfig& config, Modality m) {
  return m == Modality::Id ? config.alpha : 1.0 - config.alpha;
}

void normalize_rows(const Matrix& table, Matrix& unit, std::vector<double>& norms) {
  unit = table;
  norms.resize(table.rows());
  for (std::size_t r = 0; r < table.rows(); ++r) {
    const double norm = std::sqrt(kernels::squared_norm(table.row(r)));
    if (!(norm > 0.0)) throw DegenerateInput("zero-norm item embedding at row " + std::to_string(r));
    norms[r] = norm;
    kernels::scale(1.0 / norm, unit.row(r));
  }
}

// Writes softmax(scale * unit_rows . h_unit) into probs and the raw cosines into cosines.
void scaled_cosine_softmax(const ScoringContext& ctx, Modality modality, ItemRange range,
                           std::span<const double> h_unit, std::vector<double>& cosines, std::vector<double>& probs) {
  const Matrix& unit = ctx.unit(modality);
  cosines.resize(range.size());
  probs.resize(range.size());
  kernels::active().gemv(unit.row(range.begin).data(), range.size(), unit.cols(), h_unit.data(), cosines.data());
  const double scale = ctx.params().logit_scale();
  const double max_cos = *std::max_element(cosines.begin(), cosines.end());
  double total = 0.0;
  for (std::size_t i = 0; i < cosines.size(); ++i) {
    probs[i] = std::exp(scale * (cosines[i] - max_cos));
    total += probs[i];
  }
  for (double& p : probs) p /= total;
}

double unit_vector(std::span<const double> h, std::vector<double>& out) {
  const double norm = std::sqrt(kernels::squared_norm(h));
  if (!(norm > 0.0)) throw DegenerateInput("zero-norm sequence state");
  out.assign(h.begin(), h.end());
  kernels::scale(1.0 / norm, out);
  return norm;
}

struct GradientSink {
  ModelParams* grads = nullptr;
  Matrix unit_id_grad;  // dLoss / d(unit-normalized id rows)
};

// Runs one view of one sequence through its encoders, adds the weighted
// per-target NLL to `loss` and, when sink is set, the gradients.
void view_objective(const ScoringContext& ctx, const UserSequence& seq, View view, const ObjectiveConfig& config,
                    double weight, Rng* dropout_rng, GradientSink* sink, double& loss, std::size_t& clamps,
                    double& log_scale_grad) {
  const ModelParams& params = ctx.params();
  const std::size_t max_len = params.encoders[0].max_len();
  auto positions = seq.positions(view);
  if (positions.size() < 2) return;
  if (positions.size() > max_len + 1) positions.erase(positions.begin(), positions.end() - (max_len + 1));
  const std::size_t len = positions.size() - 1;
  std::vector<ItemId> inputs(len), targets(len);
  for (std::size_t t = 0; t < len; ++t) {
    inputs[t] = seq.merged[positions[t]];
    targets[t] = seq.merged[positions[t + 1]];
  }
  const ItemRange range = ctx.range(view);
  const bool training = dropout_rng != nullptr && config.dropout > 0.0;

  struct ModalityPass {
    Modality modality;
    double mix;
    EncodedSequence enc;
    std::vector<std::vector<double>> unit_states, cosines, probs;
    std::vector<double> state_norms;
  };
  std::vector<ModalityPass> passes;
  for (Modality m : kModalities) {
    const double mix = modality_weight(config, m);
    if (mix <= 0.0) continue;
    ModalityPass pass{m, mix, {}, {}, {}, {}, {}};
    const Matrix features = lookup(ctx.table(m), inputs);
    pass.enc = attend(params.encoder(view, m), features, training, config.dropout, dropout_rng);
    pass.unit_states.resize(len);
    pass.cosines.resize(len);
    pass.probs.resize(len);
    pass.state_norms.resize(len);
    for (std::size_t t = 0; t < len; ++t) {
      pass.state_norms[t] = unit_vector(pass.enc.hidden.row(t), pass.unit_states[t]);
      scaled_cosine_softmax(ctx, m, range, pass.unit_states[t], pass.cosines[t], pass.probs[t]);
    }
    passes.push_back(std::move(pass));
  }

  std::vector<double> fused(len, 0.0);
  for (std::size_t t = 0; t < len; ++t) {
    const std::size_t target = targets[t].value - range.begin;
    for (const auto& pass : passes) fused[t] += pass.mix * pass.probs[t][target];
    if (fused[t] < kProbabilityFloor) {
      ++clamps;
      loss += -std::log(kProbabilityFloor);
    } else {
      loss += -std::log(fused[t]);
    }
  }
  if (sink == nullptr || weight == 0.0) return;

  const double scale = params.logit_scale();
  const auto& kern = kernels::active();
  for (auto& pass : passes) {
    const Matrix& unit = ctx.unit(pass.modality);
    const std::size_t dim = unit.cols();
    Matrix grad_hidden(len, dim);
    std::vector<double> grad_cos(range.size()), grad_unit_state(dim);
    for (std::size_t t = 0; t < len; ++t) {
      if (fused[t] < kProbabilityFloor) continue;
      const std::size_t target = targets[t].value - range.begin;
      const auto& probs = pass.probs[t];
      // d(-w log P)/d logit_j with P = sum_m mix_m softmax_m[target]
      const double coef = -weight * pass.mix * probs[target] / fused[t];
      double scale_acc = 0.0;
      for (std::size_t j = 0; j < probs.size(); ++j) {
        const double grad_logit = coef * ((j == target ? 1.0 : 0.0) - probs[j]);
        scale_acc += grad_logit * pass.cosines[t][j];
        grad_cos[j] = grad_logit * scale;
      }
      log_scale_grad += scale_acc * scale;
      std::fill(grad_unit_state.begin(), grad_unit_state.end(), 0.0);
      kern.gemv_t_acc(unit.row(range.begin).data(), range.size(), dim, grad_cos.data(), grad_unit_state.data());
      if (pass.modality == Modality::Id) {
        kern.ger_acc(sink->unit_id_grad.row(range.begin).data(), range.size(), dim, grad_cos.data(),
                     pass.unit_states[t].data());
      }
      // Through h -> h / |h|.
      const auto& u = pass.unit_states[t];
      const double radial = kern.dot(grad_unit_state.data(), u.data(), dim);
      auto out = grad_hidden.row(t);
      for (std::size_t c = 0; c < dim; ++c) out[c] = (grad_unit_state[c] - radial * u[c]) / pass.state_norms[t];
    }
    Matrix grad_inputs;
    attend_backward(params.encoder(view, pass.modality), pass.enc, grad_hidden,
                    sink->grads->encoder(view, pass.modality), grad_inputs);
    if (pass.modality == Modality::Id) {
      for (std::size_t t = 0; t < len; ++t) {
        kernels::axpy(1.0, grad_inputs.row(t), sink->grads->id_table.values.row(inputs[t].value));
      }
    }
  }
}

StepResult run_batch(const ModelParams& params, const EmbeddingTable& image_table,
                     std::span<const UserSequence> batch, const ObjectiveConfig& config, Rng* dropout_rng,
                     bool with_grads, bool learnable_scale) {
  if (!(config.alpha >= 0.0 && config.alpha <= 1.0)) throw InvalidArgument("alpha must lie in [0, 1]");
  if (image_table.rows() != params.id_table.rows()) {
    throw InvalidArgument("image table rows do not match the ID table");
  }
  ScoringContext ctx(params, image_table);
  StepResult result;
  GradientSink sink;
  if (with_grads) {
    result.grads = zeros_like(params);
    sink.grads = &result.grads;
    sink.unit_id_grad = Matrix(params.id_table.rows(), params.id_table.dim());
  }
  double log_scale_grad = 0.0;
  for (const auto& seq : batch) {
    for (View view : kViews) {
      if (!config.multi_attention && view != View::XY) continue;
      double loss = 0.0;
      view_objective(ctx, seq, view, config, view_weight(config, view), dropout_rng, with_grads ? &sink : nullptr,
                     loss, result.clamp_events, log_scale_grad);
      result.parts[view] += loss;
    }
  }
  result.num_sequences = batch.size();
  for (View view : kViews) result.total += view_weight(config, view) * result.parts[view];

  if (with_grads) {
    const Matrix& unit = ctx.unit(Modality::Id);
    const auto& norms = ctx.norms(Modality::Id);
    auto& id_grad = result.grads.id_table.values;
    for (std::size_t r = 0; r < unit.rows(); ++r) {
      auto g = sink.unit_id_grad.row(r);
      auto u = unit.row(r);
      const double radial = kernels::dot(g, u);
      auto out = id_grad.row(r);
      for (std::size_t c = 0; c < out.size(); ++c) out[c] += (g[c] - radial * u[c]) / norms[r];
    }
    if (learnable_scale) result.grads.log_scale(0, 0) = log_scale_grad;
  }
  return result;
}

}  // namespace

std::string encoder_name(std::size_t slot) {
  static const std::array<std::string, kNumEncoders> names{"X.id", "X.img", "Y.id", "Y.img", "XY.id", "XY.img"};
  return names.at(slot);
}

double ModelParams::logit_scale() const { return std::exp(log_scale(0, 0)); }

ModelShape ModelParams::shape() const {
  const auto& id_enc = encoders[encoder_slot(View::X, Modality::Id)];
  const auto& img_enc = encoders[encoder_slot(View::X, Modality::Image)];
  return {id_table.rows(), num_x,           id_table.dim(),     img_enc.dim(),
          id_enc.max_len(), id_enc.layers.size(), id_enc.num_heads};
}

ModelParams init_model(const ModelShape& shape, double temperature, std::uint64_t seed) {
  if (!(temperature > 0.0)) throw InvalidArgument("temperature must be positive");
  if (shape.num_x > shape.num_items) throw InvalidArgument("num_x exceeds num_items");
  ModelParams params;
  params.num_x = shape.num_x;
  Rng id_rng = substream(seed, "init.id_table");
  params.id_table = init_id_table(shape.num_items, shape.id_dim, id_rng.next());
  for (std::size_t s = 0; s < kNumEncoders; ++s) {
    const bool image = s % 2 == 1;
    Rng rng = substream(seed, "init.enc." + encoder_name(s));
    params.encoders[s] = init_attention(
        {image ? shape.image_dim : shape.id_dim, shape.max_len, shape.num_layers, shape.num_heads}, rng);
  }
  params.log_scale(0, 0) = -std::log(temperature);
  return params;
}

ModelParams zeros_like(const ModelParams& params) {
  ModelParams out = params;
  out.id_table.trainable = true;
  for_each_tensor(out, [](const std::string&, Matrix& m) { m.fill(0.0); });
  return out;
}

double view_weight(const ObjectiveConfig& config, View view) {
  if (!config.multi_attention) return view == View::XY ? 1.0 : 0.0;
  if (view == View::XY) return config.lambda2;
  return view == view_of(config.target) ? 1.0 : config.lambda1;
}

ScoringContext::ScoringContext(const ModelParams& params, const EmbeddingTable& image_table)
    : params_(params), image_table_(image_table) {
  normalize_rows(params.id_table.values, id_unit_, id_norm_);
  normalize_rows(image_table.values, image_unit_, image_norm_);
}

ItemRange ScoringContext::range(View v) const {
  const auto n = static_cast<std::uint32_t>(num_items());
  const auto nx = static_cast<std::uint32_t>(params_.num_x);
  if (v == View::X) return {0, nx};
  if (v == View::Y) return {nx, n};
  return {0, n};
}

std::vector<ItemId> view_inputs(const UserSequence& seq, View view, std::size_t prefix_len, std::size_t max_len) {
  std::vector<ItemId> items;
  for (std::uint32_t pos : seq.positions(view)) {
    if (pos < prefix_len) items.push_back(seq.merged[pos]);
  }
  if (items.size() > max_len) items.erase(items.begin(), items.end() - static_cast<std::ptrdiff_t>(max_len));
  return items;
}

ProbDist head_distribution(const ScoringContext& ctx, Modality modality, View view, std::span<const double> h) {
  std::vector<double> unit_state, cosines;
  unit_vector(h, unit_state);
  ProbDist dist{{}, ctx.range(view)};
  scaled_cosine_softmax(ctx, modality, dist.candidates, unit_state, cosines, dist.probs);
  return dist;
}

std::optional<ProbDist> predict_view(const ScoringContext& ctx, const UserSequence& seq, std::size_t prefix_len,
                                     View view, const ObjectiveConfig& config) {
  const auto inputs = view_inputs(seq, view, prefix_len, ctx.params().encoders[0].max_len());
  if (inputs.empty()) return std::nullopt;
  std::optional<ProbDist> fused;
  for (Modality m : kModalities) {
    const double mix = modality_weight(config, m);
    if (mix <= 0.0) continue;
    const EncodedSequence enc = attend(ctx.params().encoder(view, m), lookup(ctx.table(m), inputs));
    ProbDist dist = head_distribution(ctx, m, view, last_state(enc));
    if (!fused) {
      fused = ProbDist{std::vector<double>(dist.probs.size(), 0.0), dist.candidates};
    }
    for (std::size_t i = 0; i < dist.probs.size(); ++i) fused->probs[i] += mix * dist.probs[i];
  }
  return fused;
}

std::optional<std::vector<double>> predict_scores(const ScoringContext& ctx, const UserSequence& seq,
                                                  std::size_t prefix_len, const ObjectiveConfig& config) {
  std::array<std::optional<ProbDist>, 3> heads;
  bool any = false;
  for (View v : kViews) {
    if (view_weight(config, v) == 0.0) continue;
    heads[static_cast<std::size_t>(v)] = predict_view(ctx, seq, prefix_len, v, config);
    any = any || heads[static_cast<std::size_t>(v)].has_value();
  }
  if (!any) return std::nullopt;
  auto ptr = [&](View v) { return heads[static_cast<std::size_t>(v)] ? &*heads[static_cast<std::size_t>(v)] : nullptr; };
  const View primary = view_of(config.target);
  const View secondary = view_of(other(config.target));
  if (!config.multi_attention) return combine_domains(nullptr, nullptr, ptr(View::XY), 0.0, 1.0, ctx.num_items());
  return combine_domains(ptr(primary), ptr(secondary), ptr(View::XY), config.lambda1, config.lambda2,
                         ctx.num_items());
}

StepResult backward_step(const ModelParams& params, const EmbeddingTable& image_table,
                         std::span<const UserSequence> batch, const ObjectiveConfig& config, Rng* dropout_rng,
                         bool learnable_scale) {
  return run_batch(params, image_table, batch, config, dropout_rng, true, learnable_scale);
}

StepResult forward_loss(const ModelParams& params, const EmbeddingTable& image_table,
                        std::span<const UserSequence> batch, const ObjectiveConfig& config, Rng* dropout_rng) {
  return run_batch(params, image_table, batch, config, dropout_rng, false, false);
}

// ---------------------------------------------------------------------------
// Checkpoint layout (all integers little-endian):
//   "IFCK1\n"  u32 version
//   u32 meta_count   { u16 key_len, key, u16 value_len, value }*
//   u32 tensor_count { u16 name_len, name, u64 rows, u64 cols, rows*cols f64 }*

namespace {

constexpr std::string_view kCheckpointMagic = "IFCK1\n";
constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
void put(std::ostream& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.put(static_cast<char>((value >> (8 * i)) & 0xff));
}

template <typename T>
T get(std::istream& in, const std::filesystem::path& path) {
  T value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    const int c = in.get();
    if (c == std::char_traits<char>::eof()) throw FormatError(path.string() + ": truncated checkpoint");
    value |= static_cast<T>(static_cast<unsigned char>(c)) << (8 * i);
  }
  return value;
}

void put_string(std::ostream& out, const std::string& s) {
  if (s.size() > 0xffff) throw InvalidArgument("checkpoint string too long");
  put<std::uint16_t>(out, static_cast<std::uint16_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& in, const std::filesystem::path& path) {
  const auto len = get<std::uint16_t>(in, path);
  std::string s(len, '\0');
  if (!in.read(s.data(), len)) throw FormatError(path.string() + ": truncated checkpoint");
  return s;
}

std::size_t meta_size(const std::map<std::string, std::string>& meta, const std::string& key,
                      const std::filesystem::path& path) {
  auto it = meta.find(key);
  if (it == meta.end()) throw FormatError(path.string() + ": checkpoint lacks '" + key + "'");
  try {
    return static_cast<std::size_t>(std::stoull(it->second));
  } catch (const std::exception&) {
    throw FormatError(path.string() + ": bad value for '" + key + "'");
  }
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params,
                     const std::map<std::string, std::string>& meta) {
  std::map<std::string, std::string> all = meta;
  const ModelShape shape = params.shape();
  all["num_items"] = std::to_string(shape.num_items);
  all["num_x"] = std::to_string(shape.num_x);
  all["id_dim"] = std::to_string(shape.id_dim);
  all["image_dim"] = std::to_string(shape.image_dim);
  all["max_len"] = std::to_string(shape.max_len);
  all["num_layers"] = std::to_string(shape.num_layers);
  all["num_heads"] = std::to_string(shape.num_heads);

  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  out.write(kCheckpointMagic.data(), kCheckpointMagic.size());
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(all.size()));
  for (const auto& [key, value] : all) {
    put_string(out, key);
    put_string(out, value);
  }
  std::uint32_t count = 0;
  for_each_tensor(params, [&](const std::string&, const Matrix&) { ++count; });
  put<std::uint32_t>(out, count);
  for_each_tensor(params, [&](const std::string& name, const Matrix& m) {
    put_string(out, name);
    put<std::uint64_t>(out, m.rows());
    put<std::uint64_t>(out, m.cols());
    for (double v : m.values()) put<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  });
  if (!out) throw DataError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  std::string magic(kCheckpointMagic.size(), '\0');
  if (!in.read(magic.data(), magic.size()) || magic != kCheckpointMagic) {
    throw FormatError(path.string() + ": not a checkpoint (bad magic)");
  }
  const auto version = get<std::uint32_t>(in, path);
  if (version != kCheckpointVersion) {
    throw FormatError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ckpt;
  const auto meta_count = get<std::uint32_t>(in, path);
  for (std::uint32_t i = 0; i < meta_count; ++i) {
    std::string key = get_string(in, path);
    ckpt.meta[key] = get_string(in, path);
  }
  ModelShape shape;
  shape.num_items = meta_size(ckpt.meta, "num_items", path);
  shape.num_x = meta_size(ckpt.meta, "num_x", path);
  shape.id_dim = meta_size(ckpt.meta, "id_dim", path);
  shape.image_dim = meta_size(ckpt.meta, "image_dim", path);
  shape.max_len = meta_size(ckpt.meta, "max_len", path);
  shape.num_layers = meta_size(ckpt.meta, "num_layers", path);
  shape.num_heads = meta_size(ckpt.meta, "num_heads", path);
  try {
    ckpt.params = zeros_like(init_model(shape, 1.0, 0));
  } catch (const InvalidArgument& e) {
    throw FormatError(path.string() + ": invalid shape metadata: " + e.what());
  }

  std::map<std::string, Matrix*> slots;
  for_each_tensor(ckpt.params, [&](const std::string& name, Matrix& m) { slots[name] = &m; });
  const auto count = get<std::uint32_t>(in, path);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = get_string(in, path);
    const auto rows = get<std::uint64_t>(in, path);
    const auto cols = get<std::uint64_t>(in, path);
    auto it = slots.find(name);
    if (it == slots.end()) throw FormatError(path.string() + ": unexpected tensor '" + name + "'");
    Matrix& m = *it->second;
    if (rows != m.rows() || cols != m.cols()) throw FormatError(path.string() + ": shape mismatch for '" + name + "'");
    for (double& v : m.values()) v = std::bit_cast<double>(get<std::uint64_t>(in, path));
    slots.erase(it);
  }
  if (!slots.empty()) throw FormatError(path.string() + ": missing tensor '" + slots.begin()->first + "'");
  return ckpt;
}

}  // namespace ifrec
