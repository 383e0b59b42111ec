// Acceptance suite: one PASS/FAIL line per criterion.
//   acceptance            run everything
//   acceptance <name>...  run the named criteria only
//   acceptance --list     print the criterion names

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "ifrec/cli.hpp"
#include "ifrec/eval.hpp"
#include "ifrec/kernels.hpp"
#include "ifrec/score.hpp"
#include "ifrec/train.hpp"
#include "reference_model.hpp"
#include "support.hpp"
#include "synthetic_fixture.hpp"
#include "tiny_model.hpp"

namespace {

using namespace ifrec;
using ifrec::testing::TempDir;

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  std::string name;
  double limit_seconds;  // 0: no limit
  std::function<Outcome()> run;
};

std::string fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

// Runs the command-line front end; throws on a non-zero exit.
void cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  if (code != 0) {
    std::string joined;
    for (const auto& a : args) joined += a + " ";
    throw std::runtime_error("'" + joined + "' exited with " + std::to_string(code) + ": " + err.str());
  }
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// ---------------------------------------------------------------------------

Outcome gradient_correctness() {
  std::size_t checked = 0, failed = 0;
  double worst = 0.0;
  std::string worst_name;
  for (std::uint64_t seed = 1; seed <= 24; ++seed) {
    // Seeds past 16 use two layers, two heads and attention dropout.
    const bool deep = seed > 16;
    auto m = ifrec::testing::make_tiny_model(seed, deep ? 2 : 1, deep ? 2 : 1);
    ObjectiveConfig config;
    config.target = seed % 2 ? Domain::X : Domain::Y;
    config.multi_attention = seed % 5 != 0;
    config.alpha = 0.3 + 0.05 * static_cast<double>(seed % 8);
    config.dropout = deep ? 0.2 : 0.0;
    const auto g = ifrec::testing::check_model_gradients(m, config, true, seed + 1000);
    checked += g.checked;
    failed += g.failed;
    if (g.worst_rel > worst) {
      worst = g.worst_rel;
      worst_name = g.worst_name;
    }
  }
  return {failed == 0, fmt("24 seeds, %zu entries, %zu beyond 1e-4, worst rel %.2e (%s)", checked, failed, worst,
                           worst_name.c_str())};
}

Outcome frozen_image_table() {
  TempDir dir("acc_frozen");
  const std::string data = (dir / "data").string();
  const std::string run = (dir / "run").string();
  cli({"synth", "--out", data, "--users", "40", "--items-per-domain", "20", "--clusters", "4", "--image-dim", "16"});
  cli({"prepare", "--out", run, "--interactions", data + "/interactions.tsv", "--min-count", "1"});

  const cli::OutputLayout layout{run};
  const ItemCatalog catalog = ItemCatalog::load(layout.catalog());
  auto read = [&](const std::string& name) { return build_sequences(ingest(layout.split(name), catalog)); };
  const DatasetSplit split{read("train"), read("valid"), read("test")};
  const auto file = std::filesystem::path(data) / "image_embeddings.ifev";
  const EmbeddingTable images = load_image_table(file, catalog);
  const Matrix before = images.values;

  TrainConfig config;
  config.q = 16;
  config.e = images.dim();
  config.epochs = 10;
  config.batch_size = 8;
  config.lr = 0.01;
  config.learnable_temperature = true;
  const FitResult result = fit(config, split, catalog, images);

  const EmbeddingTable reloaded = load_image_table(file, catalog);
  const auto bytes = before.size() * sizeof(double);
  const bool same_as_before = std::memcmp(images.values.data(), before.data(), bytes) == 0;
  const bool same_as_file = images.values.same_shape(reloaded.values) &&
                            std::memcmp(images.values.data(), reloaded.values.data(), bytes) == 0;
  const bool trained = !(result.last.id_table.values == init_model(result.last.shape(), 1.0, config.seed).id_table.values);
  return {same_as_before && same_as_file && trained && result.history.size() == 10,
          fmt("%zu epochs, %zux%zu table, identical to pre-fit copy: %s, to fresh load: %s, ID table moved: %s",
              result.history.size(), images.rows(), images.dim(), same_as_before ? "yes" : "no",
              same_as_file ? "yes" : "no", trained ? "yes" : "no")};
}

Outcome scoring_oracles() {
  Rng rng(2024);
  std::size_t failures = 0;
  double worst_cos = 0.0, worst_norm = 0.0, worst_shift = 0.0, worst_fuse = 0.0, worst_combine = 0.0;
  auto random_probs = [&](std::size_t n, ItemRange range) {
    SimilarityScores s{{}, range};
    for (std::size_t i = 0; i < n; ++i) s.values.push_back(rng.uniform(-1.0, 1.0));
    return softmax_probs(s, rng.uniform(0.05, 2.0));
  };

  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t nx = 1 + rng.below(8), ny = 1 + rng.below(8), dim = 1 + rng.below(8);
    const std::size_t n = nx + ny;
    EmbeddingTable table{ifrec::testing::random_matrix(n, dim, rng, 2.0), false};
    std::vector<double> h(dim);
    for (double& v : h) v = rng.uniform(-2.0, 2.0);
    const ItemRange all{0, static_cast<std::uint32_t>(n)};

    // Cosine: range, agreement with the definition, identical direction, scale invariance.
    const auto base = cosine_scores(h, table, all);
    const std::size_t j = rng.below(n);
    std::vector<double> hs(h), same(table.values.row(j).begin(), table.values.row(j).end());
    const double c = std::exp(rng.uniform(-5.0, 5.0));
    for (double& v : hs) v *= c;
    for (double& v : same) v *= c;
    const auto scaled = cosine_scores(hs, table, all);
    const auto self = cosine_scores(same, table, all);
    for (std::size_t i = 0; i < n; ++i) {
      const auto r = table.values.row(i);
      const double dot = std::inner_product(h.begin(), h.end(), r.begin(), 0.0);
      const double direct = dot / std::sqrt(std::inner_product(h.begin(), h.end(), h.begin(), 0.0) *
                                            std::inner_product(r.begin(), r.end(), r.begin(), 0.0));
      const double err = std::max(std::abs(base.values[i] - direct), std::abs(scaled.values[i] - base.values[i]));
      worst_cos = std::max(worst_cos, err);
      if (err > 1e-9 || std::abs(base.values[i]) > 1.0 + 1e-12) ++failures;
    }
    if (std::abs(self.values[j] - 1.0) > 1e-9) ++failures;

    // Softmax: normalization and shift invariance.
    const double temperature = rng.uniform(0.05, 3.0);
    const auto p = softmax_probs(base, temperature);
    SimilarityScores shifted = base;
    const double shift = rng.uniform(-50.0, 50.0);
    for (double& v : shifted.values) v += shift;
    const auto ps = softmax_probs(shifted, temperature);
    const double sum = std::accumulate(p.probs.begin(), p.probs.end(), 0.0);
    worst_norm = std::max(worst_norm, std::abs(sum - 1.0));
    if (std::abs(sum - 1.0) > 1e-9) ++failures;
    for (std::size_t i = 0; i < n; ++i) {
      worst_shift = std::max(worst_shift, std::abs(p.probs[i] - ps.probs[i]));
      if (p.probs[i] < 0.0 || std::abs(p.probs[i] - ps.probs[i]) > 1e-12) ++failures;
    }

    // Modality fusion keeps a distribution.
    const double alpha = rng.uniform();
    const auto fused = fuse_modalities(random_probs(n, all), random_probs(n, all), alpha);
    const double fsum = std::accumulate(fused.probs.begin(), fused.probs.end(), 0.0);
    worst_fuse = std::max(worst_fuse, std::abs(fsum - 1.0));
    if (std::abs(fsum - 1.0) > 1e-9) ++failures;

    // Domain combination against a direct evaluation of the weighted sum.
    const ItemRange xr{0, static_cast<std::uint32_t>(nx)}, yr{static_cast<std::uint32_t>(nx), static_cast<std::uint32_t>(n)};
    const auto px = random_probs(nx, xr), py = random_probs(ny, yr), pxy = random_probs(n, all);
    const bool has_x = rng.bernoulli(0.8), has_y = rng.bernoulli(0.8), has_xy = rng.bernoulli(0.8);
    const double l1 = rng.uniform(0.0, 2.0), l2 = rng.uniform(0.0, 2.0);
    const auto combined = combine_domains(has_x ? &px : nullptr, has_y ? &py : nullptr, has_xy ? &pxy : nullptr, l1, l2, n);
    for (std::size_t i = 0; i < n; ++i) {
      double expect = has_xy ? l2 * pxy.probs[i] : 0.0;
      if (i < nx && has_x) expect += px.probs[i];
      if (i >= nx && has_y) expect += l1 * py.probs[i - nx];
      worst_combine = std::max(worst_combine, std::abs(combined[i] - expect));
      if (std::abs(combined[i] - expect) > 1e-12) ++failures;
    }
  }
  return {failures == 0, fmt("1000 instances, %zu violations; worst cosine %.1e, |sum-1| %.1e, shift %.1e, "
                             "fused |sum-1| %.1e, combination %.1e",
                             failures, worst_cos, worst_norm, worst_shift, worst_fuse, worst_combine)};
}

Outcome metric_oracles() {
  Rng rng(77);
  std::size_t failures = 0;
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<std::size_t> ranks(1 + rng.below(40));
    for (auto& r : ranks) r = 1 + rng.below(50);
    const double n = static_cast<double>(ranks.size());
    const double mrr_oracle = std::accumulate(ranks.begin(), ranks.end(), 0.0, [](double a, std::size_t r) { return a + 1.0 / r; }) / n;
    const std::size_t k = 1 + rng.below(20);
    const double ndcg_oracle = std::accumulate(ranks.begin(), ranks.end(), 0.0, [k](double a, std::size_t r) { return a + (r <= k ? 1.0 / std::log2(r + 1.0) : 0.0); }) / n;
    const double err = std::max({std::abs(mrr(ranks) - mrr_oracle), std::abs(ndcg_at_k(ranks, k) - ndcg_oracle)});
    worst = std::max(worst, err);
    if (err > 1e-12) ++failures;

    // Integer scores make ties common.
    std::vector<double> scores(1 + rng.below(30));
    for (double& s : scores) s = static_cast<double>(rng.below(6));
    const std::size_t t = rng.below(scores.size());
    std::size_t recount = 1;
    for (std::size_t i = 0; i < scores.size(); ++i) recount += i != t && scores[i] >= scores[t];
    if (rank_of_target(scores, t) != recount) ++failures;
  }
  return {failures == 0, fmt("1000 rank lists and score vectors, %zu mismatches, worst metric error %.1e", failures, worst)};
}

Outcome memorization() {
  SyntheticSpec spec;
  spec.num_users = 20;
  spec.items_per_domain = 30;
  spec.clusters = 3;
  spec.signal = 0.0;
  spec.branching = 1;
  spec.image_noise = 0.0;
  spec.min_length = 8;
  spec.max_length = 16;
  spec.image_dim = 16;
  spec.seed = 5;
  const auto d = ifrec::testing::make_synthetic_dataset(spec);
  const DatasetSplit split{d.sequences, {}, {}};

  TrainConfig config;
  config.q = 32;
  config.e = spec.image_dim;
  config.epochs = 200;
  config.batch_size = 20;
  config.lr = 0.01;
  config.l2 = 0.0;
  config.dropout = 0.0;
  config.temperature = 0.1;
  config.max_len = 20;
  config.seed = 5;
  const FitResult result = fit(config, split, d.catalog, d.image);
  const EvalReport r = evaluate(result.last, d.image, split.train, config.objective());
  return {r.mrr >= 0.95, fmt("20 users, 200 epochs, train-split MRR %.4f over %zu cases (need >= 0.95)", r.mrr, r.num_cases)};
}

Outcome random_baseline() {
  constexpr std::size_t kSeeds = 200, kUsers = 40, kX = 20, kY = 15;
  const ItemCatalog catalog = ifrec::testing::make_catalog(kX, kY);
  double sum_mrr = 0.0, variance_of_mean = 0.0;
  // Under uniform ranking 1/rank has mean H(n)/n and second moment H2(n)/n.
  double h1 = 0.0, h2 = 0.0;
  for (std::size_t r = 1; r <= kX; ++r) {
    h1 += 1.0 / r;
    h2 += 1.0 / (static_cast<double>(r) * r);
  }
  const double expected = h1 / kX;
  const double case_var = h2 / kX - expected * expected;
  std::size_t cases = 0;
  for (std::uint64_t seed = 1; seed <= kSeeds; ++seed) {
    Rng rng(seed);
    std::vector<UserSequence> seqs;
    for (std::size_t u = 0; u < kUsers; ++u) {
      std::vector<std::uint32_t> items(4 + rng.below(7));
      for (auto& i : items) i = static_cast<std::uint32_t>(rng.below(kX + kY));
      seqs.push_back(ifrec::testing::make_sequence(catalog, "u" + std::to_string(u), items));
    }
    const ModelParams params = init_model({kX + kY, kX, 16, 8, 10, 1, 1}, 1.0, seed);
    const EmbeddingTable images = ifrec::testing::random_image_table(kX + kY, 8, rng);
    const auto ranks = case_ranks(params, images, seqs, ObjectiveConfig{});
    sum_mrr += mrr(ranks);
    variance_of_mean += case_var / static_cast<double>(ranks.size());
    cases += ranks.size();
  }
  const double mean = sum_mrr / kSeeds;
  const double sigma = std::sqrt(variance_of_mean) / kSeeds;
  const double z = (mean - expected) / sigma;
  return {std::abs(z) <= 3.0, fmt("%zu seeds, %zu cases, mean MRR %.5f vs H(n)/n = %.5f (n=%zu), sigma %.5f, z=%+.2f",
                                  kSeeds, cases, mean, expected, kX, sigma, z)};
}

// Three ablation cells per seed, averaged over both target domains.
std::vector<std::array<double, 3>> ablation_runs(double signal, const std::filesystem::path& root) {
  std::vector<std::array<double, 3>> out;
  for (int seed = 1; seed <= 5; ++seed) {
    const std::string s = std::to_string(seed);
    const auto dir = root / (std::to_string(signal) + "_" + s);
    const std::string data = (dir / "data").string(), run = (dir / "run").string();
    cli({"synth", "--out", data, "--seed", s, "--users", "500", "--items-per-domain", "200", "--signal",
         std::to_string(signal), "--clusters", "40", "--branching", "1", "--min-length", "6", "--max-length", "10"});
    cli({"prepare", "--out", run, "--seed", s, "--interactions", data + "/interactions.tsv", "--min-count", "1",
         "--holdout-fraction", "0.5"});
    std::array<double, 3> mean{};
    for (const char* target : {"X", "Y"}) {
      cli({"ablate", "--out", run, "--seed", s, "--image-embeddings", data + "/image_embeddings.ifev",
           "--target-domain", target, "--q", "32", "--batch-size", "32", "--dropout", "0.1", "--temperature", "0.2",
           "--epochs", "40", "--lr", "0.005"});
      std::ifstream csv(std::filesystem::path(run) / "reports" / "ablation.csv");
      std::string line;
      std::getline(csv, line);
      for (int row = 0; row < 3 && std::getline(csv, line); ++row) {
        // variant,image_fusion,multiple_attention,target_domain,num_cases,mrr,...
        std::stringstream fields(line);
        std::string field;
        for (int col = 0; col <= 5; ++col) std::getline(fields, field, ',');
        mean[row] += std::stod(field) / 2.0;
      }
    }
    out.push_back(mean);
  }
  return out;
}

Outcome ablation_direction() {
  TempDir dir("acc_ablation");
  auto stats = [](const std::vector<std::array<double, 3>>& runs, int col) {
    double m = 0.0, v = 0.0;
    for (const auto& r : runs) m += r[col] / runs.size();
    for (const auto& r : runs) v += (r[col] - m) * (r[col] - m) / (runs.size() - 1);
    return std::pair{m, v};
  };
  auto pooled_se = [](double va, double vb, std::size_t n) { return std::sqrt(va / n + vb / n); };

  const auto signal = ablation_runs(0.8, dir.path());
  const auto [base, vbase] = stats(signal, 0);
  const auto [img, vimg] = stats(signal, 1);
  const auto [full, vfull] = stats(signal, 2);
  const double se1 = pooled_se(vbase, vimg, 5), se2 = pooled_se(vimg, vfull, 5);

  const auto control = ablation_runs(0.0, dir.path());
  const auto [cbase, vcbase] = stats(control, 0);
  const auto [cimg, vcimg] = stats(control, 1);
  const double se0 = pooled_se(vcbase, vcimg, 5);

  const bool ok = img - base > se1 && full - img > se2 && std::abs(cimg - cbase) <= se0;
  return {ok, fmt("s=0.8 MRR baseline %.4f, +image %.4f (gap %+.4f, se %.4f), full %.4f (gap %+.4f, se %.4f); "
                  "s=0 baseline %.4f, +image %.4f (diff %+.4f, se %.4f)",
                  base, img, img - base, se1, full, full - img, se2, cbase, cimg, cimg - cbase, se0)};
}

Outcome boundary_equivalence() {
  SyntheticSpec spec;
  spec.num_users = 120;
  spec.items_per_domain = 25;
  spec.clusters = 5;
  spec.image_dim = 8;
  spec.min_length = 6;
  spec.max_length = 40;
  spec.seed = 11;
  const auto d = ifrec::testing::make_synthetic_dataset(spec);
  const DatasetSplit split = split_train_valid_test(d.sequences, 11, 0.3);

  TrainConfig config;
  config.q = 12;
  config.e = spec.image_dim;
  config.epochs = 3;
  config.batch_size = 16;
  config.lr = 0.01;
  config.max_len = 10;  // shorter than many views, so truncation is exercised
  config.num_layers = 2;
  config.num_heads = 2;
  config.learnable_temperature = true;

  std::size_t compared = 0;
  double worst = 0.0;
  bool counts_match = true;
  for (const Domain target : {Domain::X, Domain::Y}) {
    config.target = target;
    const FitResult result = fit(config, split, d.catalog, d.image);
    ObjectiveConfig objective = config.objective();
    objective.alpha = 1.0;
    objective.lambda1 = 0.0;
    objective.lambda2 = 0.0;
    objective.dropout = 0.0;
    for (const auto& seqs : {split.test, d.sequences}) {
      const EvalReport got = evaluate(result.last, d.image, seqs, objective);
      const auto ref = acceptance::reference_single_domain(result.last, seqs, target);
      counts_match = counts_match && got.num_cases == ref.num_cases;
      worst = std::max({worst, std::abs(got.mrr - ref.mrr), std::abs(got.ndcg5 - ref.ndcg5),
                        std::abs(got.ndcg10 - ref.ndcg10)});
      compared += got.num_cases;
    }
  }
  return {counts_match && worst <= 1e-9,
          fmt("both targets, %zu cases, case counts agree: %s, worst metric difference %.1e", compared,
              counts_match ? "yes" : "no", worst)};
}

Outcome determinism() {
  TempDir dir("acc_determinism");
  const std::string data = (dir / "data").string(), run = (dir / "run").string();
  const std::vector<std::string> files = {"catalog/catalog.tsv", "splits/train.tsv",       "splits/valid.tsv",
                                          "splits/test.tsv",     "splits/stats.tsv",       "logs/prepare.config",
                                          "logs/train.config",   "logs/train.log",         "checkpoints/final.ckpt",
                                          "checkpoints/best.ckpt"};
  auto pipeline = [&](const std::string& seed) {
    std::filesystem::remove_all(data);
    std::filesystem::remove_all(run);
    cli({"--seed", seed, "--threads", "1", "synth", "--out", data, "--users", "60", "--items-per-domain", "30"});
    cli({"--seed", seed, "--threads", "1", "prepare", "--out", run, "--interactions", data + "/interactions.tsv",
         "--min-count", "1"});
    cli({"--seed", seed, "--threads", "1", "train", "--out", run, "--image-embeddings", data + "/image_embeddings.ifev",
         "--q", "16", "--epochs", "4", "--batch-size", "8", "--lr", "0.01"});
    std::vector<std::string> contents{slurp(std::filesystem::path(data) / "interactions.tsv"),
                                      slurp(std::filesystem::path(data) / "image_embeddings.ifev")};
    for (const auto& f : files) contents.push_back(slurp(std::filesystem::path(run) / f));
    return contents;
  };
  const kernels::Backend dispatched = kernels::active_backend();
  std::size_t compared = 0, differing = 0;
  bool seed_matters = true;
  std::string backends;
  for (const auto backend : {kernels::Backend::Scalar, dispatched}) {
    kernels::set_backend(backend);
    const auto first = pipeline("7");
    const auto second = pipeline("7");
    const auto other = pipeline("8");
    for (std::size_t i = 0; i < first.size(); ++i) differing += first[i] != second[i] || first[i].empty();
    compared += first.size();
    seed_matters = seed_matters && first.back() != other.back();
    backends += (backends.empty() ? "" : ", ") + std::string(kernels::name(backend));
    if (dispatched == kernels::Backend::Scalar) break;
  }
  kernels::set_backend(dispatched);
  return {differing == 0 && seed_matters,
          fmt("kernels %s: %zu artifacts compared byte for byte, %zu differ; another seed changes the checkpoint: %s",
              backends.c_str(), compared, differing, seed_matters ? "yes" : "no")};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria = {
      {"gradient_correctness", 60, gradient_correctness},
      {"frozen_image_table", 60, frozen_image_table},
      {"scoring_oracles", 60, scoring_oracles},
      {"metric_oracles", 60, metric_oracles},
      {"memorization", 300, memorization},
      {"random_baseline", 300, random_baseline},
      {"ablation_direction", 1800, ablation_direction},
      {"boundary_equivalence", 120, boundary_equivalence},
      {"determinism", 0, determinism},
  };
  std::vector<std::string> wanted(argv + 1, argv + argc);
  if (!wanted.empty() && wanted[0] == "--list") {
    for (const auto& c : criteria) std::cout << c.name << '\n';
    return 0;
  }
  for (const auto& w : wanted) {
    if (std::none_of(criteria.begin(), criteria.end(), [&](const Criterion& c) { return c.name == w; })) {
      std::cerr << "unknown criterion: " << w << '\n';
      return 2;
    }
  }

  int failed = 0;
  for (const auto& c : criteria) {
    if (!wanted.empty() && std::find(wanted.begin(), wanted.end(), c.name) == wanted.end()) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome outcome;
    try {
      outcome = c.run();
    } catch (const std::exception& e) {
      outcome = {false, std::string("error: ") + e.what()};
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = c.limit_seconds == 0 || seconds < c.limit_seconds;
    const bool pass = outcome.pass && in_time;
    failed += !pass;
    std::string limit = c.limit_seconds > 0 ? fmt(" (limit %.0fs)", c.limit_seconds) : "";
    std::cout << (pass ? "PASS " : "FAIL ") << c.name << fmt(" [%.1fs]", seconds) << limit << "  " << outcome.detail
              << (in_time ? "" : "  [over time limit]") << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
