#include <doctest.h>

#include <cmath>

#include "ifrec/attention.hpp"
#include "ifrec/error.hpp"
#include "support.hpp"

using namespace ifrec;
using ifrec::testing::random_matrix;

namespace {

AttentionParams make_params(std::size_t dim, std::size_t max_len, std::uint64_t seed, std::size_t layers = 1,
                            std::size_t heads = 1) {
  Rng rng(seed);
  AttentionParams p = init_attention({dim, max_len, layers, heads}, rng);
  // Larger weights than the init so attention is far from uniform.
  for_each_tensor(p, [&](const std::string&, Matrix& m) {
    for (double& v : m.values()) v = rng.uniform(-0.8, 0.8);
  });
  return p;
}

double weighted_sum(const Matrix& h, const Matrix& upstream) {
  double s = 0.0;
  for (std::size_t i = 0; i < h.size(); ++i) s += h.values()[i] * upstream.values()[i];
  return s;
}

struct FdResult {
  double worst = 0.0;
  std::size_t checked = 0;
};

bool within(double analytic, double numeric) {
  return std::abs(analytic - numeric) <= 1e-4 * std::max(std::abs(analytic), std::abs(numeric)) + 1e-8;
}

// Central differences of <attend(p, F), upstream> against attend_backward.
void check_gradients(AttentionParams params, Matrix inputs, double dropout, std::uint64_t mask_seed) {
  Rng up_rng(mask_seed + 1000);
  const Matrix upstream = random_matrix(inputs.rows(), inputs.cols(), up_rng);
  auto forward = [&](const AttentionParams& p, const Matrix& f) {
    Rng mask(mask_seed);
    return attend(p, f, dropout > 0.0, dropout, dropout > 0.0 ? &mask : nullptr);
  };
  const EncodedSequence enc = forward(params, inputs);
  const AttentionGradients grads = attend_backward(params, enc, upstream);
  const double h = 1e-4;

  for_each_tensor(params, [&](const std::string& name, Matrix& m) {
    const Matrix* g = nullptr;
    for_each_tensor(grads.params, [&](const std::string& gname, const Matrix& gm) {
      if (gname == name) g = &gm;
    });
    REQUIRE(g != nullptr);
    for (std::size_t i = 0; i < m.size(); ++i) {
      const double saved = m.values()[i];
      m.values()[i] = saved + h;
      const double plus = weighted_sum(forward(params, inputs).hidden, upstream);
      m.values()[i] = saved - h;
      const double minus = weighted_sum(forward(params, inputs).hidden, upstream);
      m.values()[i] = saved;
      const double numeric = (plus - minus) / (2 * h);
      CAPTURE(name);
      CAPTURE(i);
      CHECK(within(g->values()[i], numeric));
    }
  });
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const double saved = inputs.values()[i];
    inputs.values()[i] = saved + h;
    const double plus = weighted_sum(forward(params, inputs).hidden, upstream);
    inputs.values()[i] = saved - h;
    const double minus = weighted_sum(forward(params, inputs).hidden, upstream);
    inputs.values()[i] = saved;
    CAPTURE(i);
    CHECK(within(grads.inputs.values()[i], (plus - minus) / (2 * h)));
  }
}

}  // namespace

TEST_CASE("single position attends to itself") {
  const AttentionParams p = make_params(4, 3, 1);
  Rng rng(2);
  const Matrix f = random_matrix(1, 4, rng);
  const EncodedSequence enc = attend(p, f);
  CHECK(enc.attention_weights()(0, 0) == 1.0);

  // H0 = Wo(Wv(F0 + pos0)) + (F0 + pos0), with row-vector convention x * W.
  std::vector<double> x(4), v(4, 0.0), o(4, 0.0);
  for (std::size_t c = 0; c < 4; ++c) x[c] = f(0, c) + p.positional(0, c);
  const auto& layer = p.layers[0];
  for (std::size_t c = 0; c < 4; ++c)
    for (std::size_t r = 0; r < 4; ++r) v[c] += x[r] * layer.value(r, c);
  for (std::size_t c = 0; c < 4; ++c)
    for (std::size_t r = 0; r < 4; ++r) o[c] += v[r] * layer.output(r, c);
  for (std::size_t c = 0; c < 4; ++c) CHECK(enc.hidden(0, c) == doctest::Approx(o[c] + x[c]).epsilon(1e-12));
}

TEST_CASE("attention rows are causal distributions") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    for (std::size_t heads : {1, 2}) {
      const AttentionParams p = make_params(6, 8, seed, 2, heads);
      Rng rng(seed + 50);
      const Matrix f = random_matrix(1 + seed % 8, 6, rng);
      for (bool training : {false, true}) {
        Rng mask(seed);
        const EncodedSequence enc = attend(p, f, training, 0.3, &mask);
        for (std::size_t l = 0; l < 2; ++l) {
          for (std::size_t hd = 0; hd < heads; ++hd) {
            const Matrix& w = enc.attention_weights(l, hd);
            for (std::size_t t = 0; t < w.rows(); ++t) {
              double s = 0.0;
              for (std::size_t j = 0; j < w.cols(); ++j) {
                CHECK(w(t, j) >= 0.0);
                if (j > t) CHECK(w(t, j) == 0.0);
                s += w(t, j);
              }
              CHECK(std::abs(s - 1.0) <= 1e-6);
            }
          }
        }
      }
    }
  }
}

TEST_CASE("later inputs never change earlier states") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const AttentionParams p = make_params(5, 6, seed, 1 + seed % 2, 1);
    Rng rng(seed + 7);
    Matrix f = random_matrix(6, 5, rng);
    const EncodedSequence base = attend(p, f);
    const std::size_t t = seed % 6;
    for (std::size_t c = 0; c < 5; ++c) f(t, c) += 3.0;
    const EncodedSequence moved = attend(p, f);
    for (std::size_t r = 0; r < t; ++r) {
      for (std::size_t c = 0; c < 5; ++c) CHECK(moved.hidden(r, c) == base.hidden(r, c));
    }
    bool changed = false;
    for (std::size_t c = 0; c < 5; ++c) changed |= moved.hidden(t, c) != base.hidden(t, c);
    CHECK(changed);

    // state at 0 of a length-3 input equals the last state of its length-1 prefix
    Matrix first(1, 5);
    for (std::size_t c = 0; c < 5; ++c) first(0, c) = f(0, c);
    const auto short_enc = attend(p, first);
    const auto s0 = state_at(moved, 0);
    const auto l0 = last_state(short_enc);
    for (std::size_t c = 0; c < 5; ++c) CHECK(s0[c] == l0[c]);
  }
}

TEST_CASE("state accessors") {
  const AttentionParams p = make_params(3, 5, 4);
  Rng rng(4);
  const EncodedSequence enc = attend(p, random_matrix(5, 3, rng));
  const auto last = last_state(enc);
  const auto at4 = state_at(enc, 4);
  for (std::size_t c = 0; c < 3; ++c) {
    CHECK(last[c] == enc.hidden(4, c));
    CHECK(at4[c] == last[c]);
  }
  CHECK_THROWS_AS(state_at(enc, 5), IndexError);
}

TEST_CASE("attend validates its input") {
  const AttentionParams p = make_params(3, 2, 5);
  Rng rng(5);
  CHECK_THROWS_AS(attend(p, Matrix(0, 3)), InvalidArgument);
  CHECK_THROWS_AS(attend(p, random_matrix(3, 3, rng)), InvalidArgument);
  CHECK_THROWS_AS(attend(p, random_matrix(2, 4, rng)), InvalidArgument);
  CHECK_THROWS_AS(attend(p, random_matrix(2, 3, rng), true, 0.3, nullptr), InvalidArgument);
  Rng bad(1);
  CHECK_THROWS_AS(init_attention({4, 3, 1, 3}, bad), InvalidArgument);
}

TEST_CASE("init draws positional rows within 0.1/sqrt(dim)") {
  Rng rng(6);
  const AttentionParams p = init_attention({16, 10, 1, 1}, rng);
  for (double v : p.positional.values()) CHECK(std::abs(v) <= 0.1 / 4.0);
  Rng again(6);
  CHECK(init_attention({16, 10, 1, 1}, again) == p);
}

TEST_CASE("zero upstream gives zero gradients") {
  const AttentionParams p = make_params(4, 4, 7);
  Rng rng(7);
  const EncodedSequence enc = attend(p, random_matrix(3, 4, rng));
  const auto g = attend_backward(p, enc, Matrix(3, 4));
  for_each_tensor(g.params, [](const std::string&, const Matrix& m) {
    for (double v : m.values()) CHECK(v == 0.0);
  });
  for (double v : g.inputs.values()) CHECK(v == 0.0);
  CHECK_THROWS_AS(attend_backward(p, enc, Matrix(2, 4)), InvalidArgument);
}

TEST_CASE("unused positional rows get no gradient") {
  const AttentionParams p = make_params(4, 6, 8);
  Rng rng(8);
  const EncodedSequence enc = attend(p, random_matrix(3, 4, rng));
  const auto g = attend_backward(p, enc, random_matrix(3, 4, rng));
  for (std::size_t r = 3; r < 6; ++r)
    for (double v : g.params.positional.row(r)) CHECK(v == 0.0);
}

TEST_CASE("backward matches central differences (L=3, dim=4)") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    CAPTURE(seed);
    Rng rng(seed + 300);
    check_gradients(make_params(4, 4, seed), random_matrix(3, 4, rng), 0.0, seed);
  }
}

TEST_CASE("backward matches central differences with layers, heads and dropout") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    CAPTURE(seed);
    Rng rng(seed + 400);
    const std::size_t len = 1 + seed % 4;
    check_gradients(make_params(4, 4, seed, 2, 2), random_matrix(len, 4, rng), seed % 2 ? 0.3 : 0.0, seed);
  }
}

TEST_CASE("accumulating overload adds into existing buffers") {
  const AttentionParams p = make_params(4, 4, 9);
  Rng rng(9);
  const EncodedSequence enc = attend(p, random_matrix(3, 4, rng));
  const Matrix up = random_matrix(3, 4, rng);
  const auto once = attend_backward(p, enc, up);
  AttentionParams acc = zeros_like(p);
  Matrix input_grad;
  attend_backward(p, enc, up, acc, input_grad);
  attend_backward(p, enc, up, acc, input_grad);
  for_each_tensor(acc, [&](const std::string& name, const Matrix& m) {
    for_each_tensor(once.params, [&](const std::string& n2, const Matrix& m2) {
      if (n2 != name) return;
      for (std::size_t i = 0; i < m.size(); ++i) CHECK(m.values()[i] == doctest::Approx(2 * m2.values()[i]));
    });
  });
}
