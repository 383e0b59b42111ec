#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ifrec/matrix.hpp"

namespace ifrec {

enum class Domain : std::uint8_t { X, Y };

std::string_view to_string(Domain domain);
std::optional<Domain> parse_domain(std::string_view text);
inline Domain other(Domain d) { return d == Domain::X ? Domain::Y : Domain::X; }

struct ItemId {
  std::uint32_t value = 0;
  friend auto operator<=>(ItemId, ItemId) = default;
};

// Half-open index interval of the catalog.
struct ItemRange {
  std::uint32_t begin = 0;
  std::uint32_t end = 0;

  std::size_t size() const { return end - begin; }
  bool empty() const { return begin == end; }
  bool contains(ItemId id) const { return id.value >= begin && id.value < end; }
  friend bool operator==(ItemRange, ItemRange) = default;
};

// The union item universe. Domain X items occupy [0, |X|) and domain Y items
// occupy [|X|, |X|+|Y|), so every per-domain candidate set is a contiguous range.
class ItemCatalog {
 public:
  ItemCatalog() = default;

  // X items keep their relative order and come first, then Y items.
  // Duplicate keys throw InvalidArgument.
  static ItemCatalog from_entries(std::span<const std::pair<std::string, Domain>> entries);

  std::size_t size() const { return keys_.size(); }
  std::size_t count(Domain d) const { return range(d).size(); }
  ItemRange range(Domain d) const;
  ItemRange all() const { return {0, static_cast<std::uint32_t>(keys_.size())}; }

  Domain domain(ItemId id) const;
  const std::string& key(ItemId id) const;
  std::optional<ItemId> find(std::string_view key) const;

  // One line per item: index, key, domain (tab-separated). Load rejects files
  // whose indices are not dense and ordered or whose domains are not contiguous.
  void save(const std::filesystem::path& path) const;
  static ItemCatalog load(const std::filesystem::path& path);

  friend bool operator==(const ItemCatalog& a, const ItemCatalog& b) {
    return a.keys_ == b.keys_ && a.num_x_ == b.num_x_;
  }

 private:
  std::vector<std::string> keys_;
  std::uint32_t num_x_ = 0;
  std::unordered_map<std::string, std::uint32_t> index_;
};

struct EmbeddingTable {
  Matrix values;
  bool trainable = false;

  std::size_t rows() const { return values.rows(); }
  std::size_t dim() const { return values.cols(); }
};

// Trainable table with entries uniform in [-1/sqrt(dim), 1/sqrt(dim)].
EmbeddingTable init_id_table(std::size_t num_items, std::size_t dim, std::uint64_t seed);

// Frozen table aligned with the catalog; rows are L2-normalized. Keys in the
// file that the catalog does not know are ignored.
EmbeddingTable load_image_table(const std::filesystem::path& path, const ItemCatalog& catalog);

// Gather rows in the given order.
Matrix lookup(const EmbeddingTable& table, std::span<const ItemId> ids);

// Raw contents of an image-embedding file, in file order.
struct EmbeddingFile {
  std::vector<std::string> keys;
  Matrix values;
};

// Binary ("IFEV1\n" magic) or text, detected from the leading bytes.
EmbeddingFile read_embedding_file(const std::filesystem::path& path);
void write_embedding_file(const std::filesystem::path& path, const EmbeddingFile& file, bool text = false);

}  // namespace ifrec
