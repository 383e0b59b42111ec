#include "ifrec/attention.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ifrec/error.hpp"
#include "ifrec/kernels.hpp"

namespace ifrec {

namespace {

Matrix random_matrix(std::size_t rows, std::size_t cols, double bound, Rng& rng) {
  Matrix m(rows, cols);
  for (double& v : m.values()) v = rng.uniform(-bound, bound);
  return m;
}

void add_inplace(Matrix& acc, const Matrix& other) {
  kernels::axpy(1.0, other.values(), acc.values());
}

}  // namespace

AttentionParams init_attention(const AttentionShape& shape, Rng& rng) {
  if (shape.dim == 0 || shape.max_len == 0 || shape.num_layers == 0 || shape.num_heads == 0) {
    throw InvalidArgument("attention: dim, max_len, layers and heads must be positive");
  }
  if (shape.dim % shape.num_heads != 0) throw InvalidArgument("attention: dim must be divisible by num_heads");
  const double bound = 1.0 / std::sqrt(static_cast<double>(shape.dim));
  AttentionParams params;
  params.num_heads = shape.num_heads;
  params.positional = random_matrix(shape.max_len, shape.dim, 0.1 * bound, rng);
  for (std::size_t k = 0; k < shape.num_layers; ++k) {
    AttentionLayer layer;
    layer.query = random_matrix(shape.dim, shape.dim, bound, rng);
    layer.key = random_matrix(shape.dim, shape.dim, bound, rng);
    layer.value = random_matrix(shape.dim, shape.dim, bound, rng);
    layer.output = random_matrix(shape.dim, shape.dim, bound, rng);
    params.layers.push_back(std::move(layer));
  }
  return params;
}

AttentionParams zeros_like(const AttentionParams& params) {
  AttentionParams out = params;
  for_each_tensor(out, [](const std::string&, Matrix& m) { m.fill(0.0); });
  return out;
}

EncodedSequence attend(const AttentionParams& params, const Matrix& inputs, bool training, double dropout_rate,
                       Rng* rng) {
  const std::size_t len = inputs.rows();
  const std::size_t dim = params.dim();
  if (len == 0) throw InvalidArgument("attend: empty sequence");
  if (len > params.max_len()) {
    throw InvalidArgument("attend: length " + std::to_string(len) + " exceeds max_len " +
                          std::to_string(params.max_len()));
  }
  if (inputs.cols() != dim) throw InvalidArgument("attend: input dimension does not match parameters");
  const bool use_dropout = training && dropout_rate > 0.0;
  if (use_dropout && (dropout_rate >= 1.0 || rng == nullptr)) {
    throw InvalidArgument("attend: dropout needs a rate below 1 and a generator");
  }

  const std::size_t heads = params.num_heads;
  const std::size_t head_dim = dim / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
  const double keep = 1.0 - dropout_rate;
  const auto& kern = kernels::active();

  EncodedSequence enc;
  Matrix x = inputs;
  for (std::size_t t = 0; t < len; ++t) kernels::axpy(1.0, params.positional.row(t), x.row(t));

  std::vector<double> logits(len);
  for (const auto& layer : params.layers) {
    LayerCache cache;
    cache.q = matmul(x, layer.query);
    cache.k = matmul(x, layer.key);
    cache.v = matmul(x, layer.value);
    cache.mixed = Matrix(len, dim);
    for (std::size_t h = 0; h < heads; ++h) {
      const std::size_t off = h * head_dim;
      Matrix weights(len, len);
      Matrix factors;
      if (use_dropout) factors = Matrix(len, len);
      for (std::size_t i = 0; i < len; ++i) {
        double max_logit = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j <= i; ++j) {
          logits[j] = kern.dot(cache.q.row(i).data() + off, cache.k.row(j).data() + off, head_dim) * scale;
          max_logit = std::max(max_logit, logits[j]);
        }
        double total = 0.0;
        for (std::size_t j = 0; j <= i; ++j) {
          logits[j] = std::exp(logits[j] - max_logit);
          total += logits[j];
        }
        double* out = cache.mixed.row(i).data() + off;
        for (std::size_t j = 0; j <= i; ++j) {
          const double w = logits[j] / total;
          weights(i, j) = w;
          double applied = w;
          if (use_dropout) {
            factors(i, j) = rng->uniform() < keep ? 1.0 / keep : 0.0;
            applied *= factors(i, j);
          }
          if (applied != 0.0) kern.axpy(applied, cache.v.row(j).data() + off, out, head_dim);
        }
      }
      cache.weights.push_back(std::move(weights));
      if (use_dropout) cache.keep_factors.push_back(std::move(factors));
    }
    Matrix y = matmul(cache.mixed, layer.output);
    add_inplace(y, x);
    cache.input = std::move(x);
    enc.layers.push_back(std::move(cache));
    x = std::move(y);
  }
  enc.hidden = std::move(x);
  return enc;
}

std::span<const double> last_state(const EncodedSequence& enc) {
  if (enc.length() == 0) throw InvalidArgument("last_state: empty encoding");
  return enc.hidden.row(enc.length() - 1);
}

std::span<const double> state_at(const EncodedSequence& enc, std::size_t t) {
  if (t >= enc.length()) {
    throw IndexError("state_at: position " + std::to_string(t) + " out of range for length " +
                     std::to_string(enc.length()));
  }
  return enc.hidden.row(t);
}

void attend_backward(const AttentionParams& params, const EncodedSequence& enc, const Matrix& upstream,
                     AttentionParams& param_grads, Matrix& input_grad) {
  const std::size_t len = enc.length();
  const std::size_t dim = params.dim();
  if (!upstream.same_shape(enc.hidden) || enc.layers.size() != params.layers.size() ||
      param_grads.layers.size() != params.layers.size() || !param_grads.positional.same_shape(params.positional)) {
    throw InvalidArgument("attend_backward: shape mismatch");
  }
  const std::size_t heads = params.num_heads;
  const std::size_t head_dim = dim / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
  const auto& kern = kernels::active();

  Matrix grad_out = upstream;
  std::vector<double> grad_w(len);
  for (std::size_t li = params.layers.size(); li-- > 0;) {
    const auto& layer = params.layers[li];
    const auto& cache = enc.layers[li];
    auto& grads = param_grads.layers[li];

    Matrix grad_in = grad_out;  // residual
    matmul_tn_acc(cache.mixed, grad_out, grads.output);
    Matrix grad_mixed(len, dim);
    matmul_nt_acc(grad_out, layer.output, grad_mixed);

    Matrix grad_q(len, dim), grad_k(len, dim), grad_v(len, dim);
    const bool dropped = !cache.keep_factors.empty();
    for (std::size_t h = 0; h < heads; ++h) {
      const std::size_t off = h * head_dim;
      const Matrix& w = cache.weights[h];
      for (std::size_t i = 0; i < len; ++i) {
        const double* gm = grad_mixed.row(i).data() + off;
        double weighted = 0.0;
        for (std::size_t j = 0; j <= i; ++j) {
          const double factor = dropped ? cache.keep_factors[h](i, j) : 1.0;
          const double applied = w(i, j) * factor;
          if (applied != 0.0) kern.axpy(applied, gm, grad_v.row(j).data() + off, head_dim);
          grad_w[j] = factor == 0.0 ? 0.0 : kern.dot(gm, cache.v.row(j).data() + off, head_dim) * factor;
          weighted += w(i, j) * grad_w[j];
        }
        for (std::size_t j = 0; j <= i; ++j) {
          const double grad_logit = w(i, j) * (grad_w[j] - weighted) * scale;
          if (grad_logit == 0.0) continue;
          kern.axpy(grad_logit, cache.k.row(j).data() + off, grad_q.row(i).data() + off, head_dim);
          kern.axpy(grad_logit, cache.q.row(i).data() + off, grad_k.row(j).data() + off, head_dim);
        }
      }
    }
    matmul_tn_acc(cache.input, grad_q, grads.query);
    matmul_tn_acc(cache.input, grad_k, grads.key);
    matmul_tn_acc(cache.input, grad_v, grads.value);
    matmul_nt_acc(grad_q, layer.query, grad_in);
    matmul_nt_acc(grad_k, layer.key, grad_in);
    matmul_nt_acc(grad_v, layer.value, grad_in);
    grad_out = std::move(grad_in);
  }
  for (std::size_t t = 0; t < len; ++t) kernels::axpy(1.0, grad_out.row(t), param_grads.positional.row(t));
  input_grad = std::move(grad_out);
}

AttentionGradients attend_backward(const AttentionParams& params, const EncodedSequence& enc,
                                   const Matrix& upstream) {
  AttentionGradients grads{zeros_like(params), Matrix()};
  attend_backward(params, enc, upstream, grads.params, grads.inputs);
  return grads;
}

}  // namespace ifrec
