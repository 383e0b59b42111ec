#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ifrec/catalog.hpp"
#include "ifrec/matrix.hpp"
#include "ifrec/rng.hpp"
#include "ifrec/seqdata.hpp"

namespace ifrec::testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("ifrec_" + tag + "_" + std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng, double scale = 1.0) {
  Matrix m(rows, cols);
  for (double& v : m.values()) v = rng.uniform(-scale, scale);
  return m;
}

// Catalog with keys x0.., y0..
inline ItemCatalog make_catalog(std::size_t nx, std::size_t ny) {
  std::vector<std::pair<std::string, Domain>> entries;
  for (std::size_t i = 0; i < nx; ++i) entries.emplace_back("x" + std::to_string(i), Domain::X);
  for (std::size_t i = 0; i < ny; ++i) entries.emplace_back("y" + std::to_string(i), Domain::Y);
  return ItemCatalog::from_entries(entries);
}

// Builds a sequence from merged item indices; domains follow the catalog.
inline UserSequence make_sequence(const ItemCatalog& catalog, const std::string& user,
                                  const std::vector<std::uint32_t>& items) {
  std::vector<Interaction> rows;
  for (std::size_t t = 0; t < items.size(); ++t) {
    rows.push_back({user, ItemId{items[t]}, static_cast<std::int64_t>(t), catalog.domain(ItemId{items[t]})});
  }
  return build_sequences(rows).at(0);
}

// Random table with unit rows, as load_image_table would produce.
inline EmbeddingTable random_image_table(std::size_t rows, std::size_t dim, Rng& rng) {
  EmbeddingTable t{Matrix(rows, dim), false};
  for (std::size_t r = 0; r < rows; ++r) {
    double sq = 0.0;
    for (double& v : t.values.row(r)) {
      v = rng.normal();
      sq += v * v;
    }
    for (double& v : t.values.row(r)) v /= std::sqrt(sq);
  }
  return t;
}

}  // namespace ifrec::testing
