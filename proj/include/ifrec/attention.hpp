#pragma once

#include <concepts>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "ifrec/matrix.hpp"
#include "ifrec/rng.hpp"

namespace ifrec {

struct AttentionShape {
  std::size_t dim = 0;
  std::size_t max_len = 0;
  std::size_t num_layers = 1;
  std::size_t num_heads = 1;
};

struct AttentionLayer {
  Matrix query;   // dim x dim
  Matrix key;     // dim x dim
  Matrix value;   // dim x dim
  Matrix output;  // dim x dim

  friend bool operator==(const AttentionLayer&, const AttentionLayer&) = default;
};

// Causal self-attention encoder: learned positional rows are added to the
// input, then each layer applies scaled dot-product attention (per head),
// an output projection and a residual connection. No feed-forward block.
struct AttentionParams {
  std::size_t num_heads = 1;
  Matrix positional;  // max_len x dim
  std::vector<AttentionLayer> layers;

  std::size_t dim() const { return positional.cols(); }
  std::size_t max_len() const { return positional.rows(); }
  AttentionShape shape() const { return {dim(), max_len(), layers.size(), num_heads}; }

  friend bool operator==(const AttentionParams&, const AttentionParams&) = default;
};

AttentionParams init_attention(const AttentionShape& shape, Rng& rng);
AttentionParams zeros_like(const AttentionParams& params);

// Visits every tensor as (name, matrix). Names are "positional" and
// "layer<k>.{wq,wk,wv,wo}".
template <typename Params, typename Fn>
  requires std::same_as<std::remove_const_t<Params>, AttentionParams>
void for_each_tensor(Params& params, Fn&& fn) {
  fn(std::string("positional"), params.positional);
  for (std::size_t k = 0; k < params.layers.size(); ++k) {
    auto& layer = params.layers[k];
    const std::string prefix = "layer" + std::to_string(k) + ".";
    fn(prefix + "wq", layer.query);
    fn(prefix + "wk", layer.key);
    fn(prefix + "wv", layer.value);
    fn(prefix + "wo", layer.output);
  }
}

// Forward intermediates kept for the backward pass.
struct LayerCache {
  Matrix input;
  Matrix q, k, v;
  std::vector<Matrix> weights;       // per head, L x L, row t is a distribution over positions <= t
  std::vector<Matrix> keep_factors;  // per head dropout factors (0 or 1/(1-rate)); empty without dropout
  Matrix mixed;                      // concatenated head outputs, L x dim
};

struct EncodedSequence {
  Matrix hidden;  // H, L x dim
  std::vector<LayerCache> layers;

  std::size_t length() const { return hidden.rows(); }
  const Matrix& attention_weights(std::size_t layer = 0, std::size_t head = 0) const {
    return layers.at(layer).weights.at(head);
  }
};

// inputs: L x dim with 1 <= L <= max_len. Dropout on attention weights is
// applied only when training and rate > 0; it then draws masks from `rng`.
EncodedSequence attend(const AttentionParams& params, const Matrix& inputs, bool training = false,
                       double dropout_rate = 0.0, Rng* rng = nullptr);

std::span<const double> last_state(const EncodedSequence& enc);
std::span<const double> state_at(const EncodedSequence& enc, std::size_t t);

// Reverse pass for a recorded forward call. Parameter gradients are added to
// `param_grads`; `input_grad` is overwritten with dLoss/dinputs.
void attend_backward(const AttentionParams& params, const EncodedSequence& enc, const Matrix& upstream,
                     AttentionParams& param_grads, Matrix& input_grad);

struct AttentionGradients {
  AttentionParams params;
  Matrix inputs;
};

AttentionGradients attend_backward(const AttentionParams& params, const EncodedSequence& enc,
                                   const Matrix& upstream);

}  // namespace ifrec
