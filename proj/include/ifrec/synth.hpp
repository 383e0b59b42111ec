#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ifrec/catalog.hpp"
#include "ifrec/seqdata.hpp"

namespace ifrec {

// Users pick their next item in a domain from their preferred image cluster
// with probability `signal`, and otherwise follow a per-item successor list
// (an ID-only Markov process). Image embeddings are cluster centroids plus
// Gaussian noise, so with signal = 0 images carry no behavioural information.
struct SyntheticSpec {
  std::size_t num_users = 500;
  std::size_t items_per_domain = 200;
  std::size_t clusters = 10;
  double signal = 0.8;
  std::size_t min_length = 10;
  std::size_t max_length = 30;
  std::size_t min_per_domain = 3;
  std::size_t image_dim = 32;
  std::size_t branching = 3;
  double image_noise = 0.3;
  std::uint64_t seed = 1;

  void validate() const;
};

enum class EventSource : std::uint8_t { Start, Cluster, Markov };

struct SyntheticData {
  std::vector<RawInteraction> interactions;
  std::vector<EventSource> sources;  // parallel to interactions
  EmbeddingFile images;
  // Ground truth, indexed like images.keys (X items then Y items).
  std::vector<Domain> item_domain;
  std::vector<std::size_t> item_cluster;
  std::vector<std::vector<std::size_t>> successors;
  std::vector<std::string> user_keys;
  std::vector<std::size_t> user_cluster;
};

SyntheticData generate_synthetic(const SyntheticSpec& spec);

struct SyntheticPaths {
  std::filesystem::path interactions;
  std::filesystem::path images;
  std::filesystem::path ground_truth;
};

// Writes interactions.tsv, image_embeddings.ifev (binary) and ground_truth.tsv into dir.
SyntheticPaths write_synthetic(const SyntheticData& data, const std::filesystem::path& dir);

}  // namespace ifrec
