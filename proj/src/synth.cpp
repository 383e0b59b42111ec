#include "ifrec/synth.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "ifrec/error.hpp"
#include "ifrec/kernels.hpp"
#include "ifrec/rng.hpp"

namespace ifrec {

namespace {

std::string numbered(char prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%c%04zu", prefix, i);
  return buf;
}

std::string_view source_name(EventSource s) {
  switch (s) {
    case EventSource::Start:
      return "start";
    case EventSource::Cluster:
      return "cluster";
    case EventSource::Markov:
      return "markov";
  }
  return "?";
}

}  // namespace

void SyntheticSpec::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw InvalidArgument(std::string("invalid synthetic spec: ") + what);
  };
  require(num_users >= 1, "num_users must be >= 1");
  require(items_per_domain >= 2, "items_per_domain must be >= 2");
  require(clusters >= 1 && clusters <= items_per_domain, "clusters must lie in [1, items_per_domain]");
  require(signal >= 0.0 && signal <= 1.0, "signal must lie in [0, 1]");
  require(min_per_domain >= 1, "min_per_domain must be >= 1");
  require(min_length >= 2 * min_per_domain, "min_length must be >= 2 * min_per_domain");
  require(max_length >= min_length, "max_length must be >= min_length");
  require(image_dim >= 1, "image_dim must be >= 1");
  require(branching >= 1 && branching < items_per_domain, "branching must lie in [1, items_per_domain)");
  require(image_noise >= 0.0, "image_noise must be non-negative");
}

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  Rng items_rng = substream(spec.seed, "synth.items");
  Rng image_rng = substream(spec.seed, "synth.images");
  Rng user_rng = substream(spec.seed, "synth.users");

  const std::size_t per = spec.items_per_domain;
  const std::size_t total = 2 * per;
  SyntheticData data;
  data.item_domain.resize(total);
  data.item_cluster.resize(total);
  data.successors.resize(total);
  data.images.values = Matrix(total, spec.image_dim);

  // members[domain][cluster] -> items
  std::vector<std::vector<std::vector<std::size_t>>> members(2, std::vector<std::vector<std::size_t>>(spec.clusters));
  for (std::size_t d = 0; d < 2; ++d) {
    std::vector<std::size_t> labels(per);
    for (std::size_t i = 0; i < per; ++i) labels[i] = i % spec.clusters;
    items_rng.shuffle(std::span<std::size_t>(labels));
    for (std::size_t i = 0; i < per; ++i) {
      const std::size_t item = d * per + i;
      data.item_domain[item] = d == 0 ? Domain::X : Domain::Y;
      data.item_cluster[item] = labels[i];
      members[d][labels[i]].push_back(item);
      data.images.keys.push_back(numbered(d == 0 ? 'x' : 'y', i));
      for (std::size_t b = 0; b < spec.branching; ++b) {
        std::size_t next = d * per + items_rng.below(per - 1);
        if (next >= item) ++next;  // never the item itself
        data.successors[item].push_back(next);
      }
    }
  }

  Matrix centroids(spec.clusters, spec.image_dim);
  for (std::size_t c = 0; c < spec.clusters; ++c) {
    auto row = centroids.row(c);
    for (double& v : row) v = image_rng.normal();
    kernels::scale(1.0 / std::sqrt(kernels::squared_norm(row)), row);
  }
  const double noise_scale = spec.image_noise / std::sqrt(static_cast<double>(spec.image_dim));
  for (std::size_t item = 0; item < total; ++item) {
    auto row = data.images.values.row(item);
    auto centroid = centroids.row(data.item_cluster[item]);
    for (std::size_t k = 0; k < row.size(); ++k) row[k] = centroid[k] + noise_scale * image_rng.normal();
  }

  for (std::size_t u = 0; u < spec.num_users; ++u) {
    const std::string user = numbered('u', u);
    const std::size_t cluster = user_rng.below(spec.clusters);
    data.user_keys.push_back(user);
    data.user_cluster.push_back(cluster);

    const std::size_t length = spec.min_length + user_rng.below(spec.max_length - spec.min_length + 1);
    std::vector<std::size_t> domains(length);
    std::size_t count_x = 0;
    do {
      count_x = 0;
      for (auto& d : domains) {
        d = user_rng.below(2);
        count_x += d == 0 ? 1 : 0;
      }
    } while (count_x < spec.min_per_domain || length - count_x < spec.min_per_domain);

    std::int64_t timestamp = static_cast<std::int64_t>(user_rng.below(1'000'000));
    std::size_t previous[2] = {total, total};
    for (std::size_t d : domains) {
      std::size_t item;
      EventSource source;
      if (user_rng.bernoulli(spec.signal)) {
        const auto& pool = members[d][cluster];
        item = pool[user_rng.below(pool.size())];
        source = EventSource::Cluster;
      } else if (previous[d] == total) {
        item = d * per + user_rng.below(per);
        source = EventSource::Start;
      } else {
        const auto& next = data.successors[previous[d]];
        item = next[user_rng.below(next.size())];
        source = EventSource::Markov;
      }
      previous[d] = item;
      timestamp += 1 + static_cast<std::int64_t>(user_rng.below(1000));
      data.interactions.push_back(
          RawInteraction{user, data.images.keys[item], timestamp, d == 0 ? Domain::X : Domain::Y, 0});
      data.sources.push_back(source);
    }
  }
  for (std::size_t i = 0; i < data.interactions.size(); ++i) data.interactions[i].line = i + 1;
  return data;
}

SyntheticPaths write_synthetic(const SyntheticData& data, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  SyntheticPaths paths{dir / "interactions.tsv", dir / "image_embeddings.ifev", dir / "ground_truth.tsv"};
  {
    std::ofstream out(paths.interactions);
    if (!out) throw DataError("cannot write " + paths.interactions.string());
    for (const auto& row : data.interactions) {
      out << row.user << '\t' << row.item << '\t' << row.timestamp << '\t' << to_string(row.domain) << '\n';
    }
  }
  write_embedding_file(paths.images, data.images);
  std::ofstream out(paths.ground_truth);
  if (!out) throw DataError("cannot write " + paths.ground_truth.string());
  out << "# item\tkey\tdomain\tcluster\tsuccessors\n";
  for (std::size_t i = 0; i < data.images.keys.size(); ++i) {
    out << "item\t" << data.images.keys[i] << '\t' << to_string(data.item_domain[i]) << '\t' << data.item_cluster[i]
        << '\t';
    for (std::size_t k = 0; k < data.successors[i].size(); ++k) {
      out << (k ? "," : "") << data.images.keys[data.successors[i][k]];
    }
    out << '\n';
  }
  out << "# user\tkey\tcluster\n";
  for (std::size_t u = 0; u < data.user_keys.size(); ++u) {
    out << "user\t" << data.user_keys[u] << '\t' << data.user_cluster[u] << '\n';
  }
  out << "# event\tuser\titem\ttimestamp\tsource\n";
  for (std::size_t i = 0; i < data.interactions.size(); ++i) {
    const auto& row = data.interactions[i];
    out << "event\t" << row.user << '\t' << row.item << '\t' << row.timestamp << '\t' << source_name(data.sources[i])
        << '\n';
  }
  return paths;
}

}  // namespace ifrec
