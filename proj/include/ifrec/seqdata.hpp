#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ifrec/catalog.hpp"

namespace ifrec {

// One line of an interaction log before item keys are resolved.
struct RawInteraction {
  std::string user;
  std::string item;
  std::int64_t timestamp = 0;
  Domain domain = Domain::X;
  std::size_t line = 0;
};

struct Interaction {
  std::string user;
  ItemId item;
  std::int64_t timestamp = 0;
  Domain domain = Domain::X;
};

// Sub-sequence selector: the per-domain views and the merged sequence.
enum class View : std::uint8_t { X, Y, XY };

std::string_view to_string(View view);
inline View view_of(Domain d) { return d == Domain::X ? View::X : View::Y; }

// A user's chronologically ordered interactions. x_view and y_view hold
// positions into `merged`.
struct UserSequence {
  std::string user;
  std::vector<ItemId> merged;
  std::vector<std::int64_t> timestamps;
  std::vector<Domain> domains;
  std::vector<std::uint32_t> x_view;
  std::vector<std::uint32_t> y_view;

  std::size_t size() const { return merged.size(); }
  const std::vector<std::uint32_t>& view(Domain d) const { return d == Domain::X ? x_view : y_view; }
  // Positions of the view, or all positions for View::XY.
  std::vector<std::uint32_t> positions(View v) const;
  std::int64_t last_timestamp() const { return timestamps.empty() ? 0 : timestamps.back(); }

  friend bool operator==(const UserSequence&, const UserSequence&) = default;
};

// Tab-separated: user, item key, integer timestamp, domain tag. '#' lines are comments.
std::vector<RawInteraction> read_interaction_log(const std::filesystem::path& path);

// Catalog over every item key in the log, in order of first appearance per domain.
// An item seen with two different domain tags is a ParseError.
ItemCatalog catalog_from_log(std::span<const RawInteraction> raw);

// Parses and resolves keys against the catalog. Unknown keys raise DataError
// listing each offending line.
std::vector<Interaction> ingest(const std::filesystem::path& path, const ItemCatalog& catalog);
std::vector<Interaction> resolve(std::span<const RawInteraction> raw, const ItemCatalog& catalog);

void write_interaction_log(const std::filesystem::path& path, std::span<const Interaction> interactions,
                           const ItemCatalog& catalog);

// Groups by user (first-appearance order) and sorts each user's interactions
// by timestamp, ties kept in input order.
std::vector<UserSequence> build_sequences(std::span<const Interaction> interactions);
std::vector<Interaction> flatten(std::span<const UserSequence> sequences);

struct FilterOptions {
  std::size_t min_count = 10;
  std::size_t min_per_domain = 3;
};

// Drops users and items with fewer than min_count interactions and users with
// fewer than min_per_domain interactions in either domain, repeating until
// nothing changes.
std::vector<UserSequence> filter_protocol(std::span<const Interaction> interactions, FilterOptions options = {});

struct DatasetSplit {
  std::vector<UserSequence> train;
  std::vector<UserSequence> valid;
  std::vector<UserSequence> test;
};

// Number of held-out sequences: round-half-up of fraction * n, clamped to [2, n].
std::size_t holdout_count(std::size_t num_sequences, double holdout_fraction);

// The sequences with the latest last interaction form the holdout, which is
// shuffled with the seed and dealt alternately to valid and test.
DatasetSplit split_train_valid_test(std::span<const UserSequence> sequences, std::uint64_t seed,
                                    double holdout_fraction = 0.2);

struct TrainingTarget {
  std::uint32_t prefix_end = 0;  // merged position of the anchor item (inclusive)
  ItemId target;
};

std::vector<TrainingTarget> training_targets(const UserSequence& seq, View view);

}  // namespace ifrec

namespace ifrec {

struct CompactedData {
  ItemCatalog catalog;
  std::vector<UserSequence> sequences;
};

// Catalog restricted to the items the sequences still reference (original
// relative order kept) and the sequences re-indexed against it.
CompactedData compact(std::span<const UserSequence> sequences, const ItemCatalog& catalog);

}  // namespace ifrec
