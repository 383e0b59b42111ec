#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "ifrec/model.hpp"
#include "support.hpp"

namespace ifrec::testing {

// |X| = 4, |Y| = 3, q = 6, e = 8, max_len = 4.
struct TinyModel {
  ItemCatalog catalog = make_catalog(4, 3);
  ModelParams params;
  EmbeddingTable image;
  std::vector<UserSequence> batch;
};

inline TinyModel make_tiny_model(std::uint64_t seed, std::size_t layers = 1, std::size_t heads = 1) {
  TinyModel m;
  const ModelShape shape{7, 4, 6, 8, 4, layers, heads};
  m.params = init_model(shape, 1.0, seed);
  Rng rng(seed * 31 + 5);
  // Spread the weights out so softmax and attention are far from uniform.
  for_each_tensor(m.params, [&](const std::string& name, Matrix& t) {
    if (name == "log_scale") return;
    for (double& v : t.values()) v = rng.uniform(-0.7, 0.7);
  });
  m.params.log_scale(0, 0) = rng.uniform(0.0, 1.5);
  m.image = random_image_table(7, 8, rng);
  for (int u = 0; u < 3; ++u) {
    std::vector<std::uint32_t> items;
    const std::size_t len = 3 + rng.below(6);
    for (std::size_t t = 0; t < len; ++t) items.push_back(static_cast<std::uint32_t>(rng.below(7)));
    // both domains present
    items[0] = static_cast<std::uint32_t>(rng.below(4));
    items[1] = static_cast<std::uint32_t>(4 + rng.below(3));
    m.batch.push_back(make_sequence(m.catalog, "u" + std::to_string(u), items));
  }
  return m;
}

struct GradientCheck {
  std::size_t checked = 0;
  std::size_t failed = 0;
  double worst_rel = 0.0;
  std::string worst_name;
};

// Compares backward_step gradients of the total loss against central differences.
// Dropout masks are frozen by reseeding the generator for every evaluation.
inline GradientCheck check_model_gradients(TinyModel& m, const ObjectiveConfig& config, bool learnable_scale,
                                           std::uint64_t mask_seed, double step = 1e-4, double tol = 1e-4) {
  auto run = [&](bool grads) {
    Rng mask(mask_seed);
    Rng* rng = config.dropout > 0.0 ? &mask : nullptr;
    return grads ? backward_step(m.params, m.image, m.batch, config, rng, learnable_scale)
                 : forward_loss(m.params, m.image, m.batch, config, rng);
  };
  const StepResult analytic = run(true);
  std::vector<std::pair<std::string, const Matrix*>> grads;
  for_each_tensor(analytic.grads, [&](const std::string& name, const Matrix& g) { grads.emplace_back(name, &g); });

  GradientCheck out;
  std::size_t k = 0;
  for_each_tensor(m.params, [&](const std::string& name, Matrix& p) {
    const Matrix& g = *grads[k++].second;
    if (name == "log_scale" && !learnable_scale) return;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double saved = p.values()[i];
      p.values()[i] = saved + step;
      const double plus = run(false).total;
      p.values()[i] = saved - step;
      const double minus = run(false).total;
      p.values()[i] = saved;
      const double numeric = (plus - minus) / (2 * step);
      const double a = g.values()[i];
      const double err = std::abs(a - numeric);
      const double scale = std::max(std::abs(a), std::abs(numeric));
      ++out.checked;
      if (err > tol * scale + 1e-8) ++out.failed;
      const double rel = scale > 0 ? err / scale : 0.0;
      if (scale > 1e-6 && rel > out.worst_rel) {
        out.worst_rel = rel;
        out.worst_name = name + "[" + std::to_string(i) + "]";
      }
    }
  });
  return out;
}

}  // namespace ifrec::testing
