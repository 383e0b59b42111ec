#include "ifrec/catalog.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "ifrec/error.hpp"
#include "ifrec/kernels.hpp"
#include "ifrec/rng.hpp"

namespace ifrec {

namespace {

constexpr std::string_view kEmbeddingMagic = "IFEV1\n";

template <typename T>
void write_le(std::ostream& out, T value) {
  static_assert(std::is_integral_v<T>);
  std::array<char, sizeof(T)> bytes{};
  for (std::size_t i = 0; i < sizeof(T); ++i) bytes[i] = static_cast<char>((value >> (8 * i)) & 0xff);
  out.write(bytes.data(), bytes.size());
}

template <typename T>
bool read_le(std::istream& in, T& value) {
  std::array<unsigned char, sizeof(T)> bytes{};
  if (!in.read(reinterpret_cast<char*>(bytes.data()), bytes.size())) return false;
  value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) value |= static_cast<T>(bytes[i]) << (8 * i);
  return true;
}

EmbeddingFile read_binary(std::istream& in, const std::filesystem::path& path) {
  std::uint32_t count = 0;
  std::uint32_t dim = 0;
  if (!read_le(in, count) || !read_le(in, dim)) {
    throw FormatError(path.string() + ": truncated header");
  }
  if (dim == 0) throw FormatError(path.string() + ": zero embedding dimension");
  EmbeddingFile file;
  file.keys.reserve(count);
  file.values = Matrix(count, dim);
  for (std::uint32_t r = 0; r < count; ++r) {
    std::uint16_t key_len = 0;
    if (!read_le(in, key_len)) throw FormatError(path.string() + ": truncated at record " + std::to_string(r));
    std::string key(key_len, '\0');
    if (!in.read(key.data(), key_len)) throw FormatError(path.string() + ": truncated at record " + std::to_string(r));
    auto row = file.values.row(r);
    for (std::uint32_t c = 0; c < dim; ++c) {
      std::uint32_t bits = 0;
      if (!read_le(in, bits)) throw FormatError(path.string() + ": truncated at record " + std::to_string(r));
      row[c] = static_cast<double>(std::bit_cast<float>(bits));
    }
    file.keys.push_back(std::move(key));
  }
  return file;
}

EmbeddingFile read_text(std::istream& in, const std::filesystem::path& path) {
  EmbeddingFile file;
  std::vector<double> values;
  std::size_t dim = 0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    std::istringstream fields(line);
    std::string key;
    fields >> key;
    if (key.empty()) continue;
    std::vector<double> row;
    std::string token;
    while (fields >> token) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(token, &used));
        if (used != token.size()) throw std::invalid_argument(token);
      } catch (const std::exception&) {
        throw FormatError(path.string() + ":" + std::to_string(line_no) + ": bad value '" + token + "'");
      }
    }
    if (row.empty()) throw FormatError(path.string() + ":" + std::to_string(line_no) + ": no values");
    if (dim == 0) dim = row.size();
    if (row.size() != dim) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": dimension " +
                        std::to_string(row.size()) + " differs from " + std::to_string(dim));
    }
    file.keys.push_back(std::move(key));
    values.insert(values.end(), row.begin(), row.end());
  }
  file.values = Matrix(file.keys.size(), dim);
  std::copy(values.begin(), values.end(), file.values.data());
  return file;
}

}  // namespace

std::string_view to_string(Domain domain) { return domain == Domain::X ? "X" : "Y"; }

std::optional<Domain> parse_domain(std::string_view text) {
  if (text == "X") return Domain::X;
  if (text == "Y") return Domain::Y;
  return std::nullopt;
}

ItemCatalog ItemCatalog::from_entries(std::span<const std::pair<std::string, Domain>> entries) {
  ItemCatalog catalog;
  for (Domain pass : {Domain::X, Domain::Y}) {
    for (const auto& [key, domain] : entries) {
      if (domain != pass) continue;
      const auto index = static_cast<std::uint32_t>(catalog.keys_.size());
      if (!catalog.index_.emplace(key, index).second) throw InvalidArgument("duplicate item key: " + key);
      catalog.keys_.push_back(key);
    }
    if (pass == Domain::X) catalog.num_x_ = static_cast<std::uint32_t>(catalog.keys_.size());
  }
  return catalog;
}

ItemRange ItemCatalog::range(Domain d) const {
  if (d == Domain::X) return {0, num_x_};
  return {num_x_, static_cast<std::uint32_t>(keys_.size())};
}

Domain ItemCatalog::domain(ItemId id) const {
  if (id.value >= keys_.size()) throw IndexError("item index " + std::to_string(id.value) + " out of range");
  return id.value < num_x_ ? Domain::X : Domain::Y;
}

const std::string& ItemCatalog::key(ItemId id) const {
  if (id.value >= keys_.size()) throw IndexError("item index " + std::to_string(id.value) + " out of range");
  return keys_[id.value];
}

std::optional<ItemId> ItemCatalog::find(std::string_view key) const {
  auto it = index_.find(std::string(key));
  if (it == index_.end()) return std::nullopt;
  return ItemId{it->second};
}

void ItemCatalog::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "# index\tkey\tdomain\n";
  for (std::uint32_t i = 0; i < keys_.size(); ++i) {
    out << i << '\t' << keys_[i] << '\t' << to_string(domain(ItemId{i})) << '\n';
  }
}

ItemCatalog ItemCatalog::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open catalog " + path.string());
  std::vector<std::pair<std::string, Domain>> entries;
  std::string line;
  std::size_t line_no = 0;
  bool seen_y = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    std::istringstream fields(line);
    std::size_t index = 0;
    std::string key;
    std::string tag;
    if (!(fields >> index >> key >> tag)) throw FormatError(path.string() + ":" + std::to_string(line_no) + ": malformed");
    auto domain = parse_domain(tag);
    if (!domain) throw FormatError(path.string() + ":" + std::to_string(line_no) + ": unknown domain " + tag);
    if (index != entries.size()) throw FormatError(path.string() + ":" + std::to_string(line_no) + ": index not dense");
    if (*domain == Domain::Y) seen_y = true;
    if (*domain == Domain::X && seen_y) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": X item after Y items");
    }
    entries.emplace_back(std::move(key), *domain);
  }
  return from_entries(entries);
}

EmbeddingTable init_id_table(std::size_t num_items, std::size_t dim, std::uint64_t seed) {
  if (num_items == 0 || dim == 0) throw InvalidArgument("init_id_table: zero items or zero dimension");
  EmbeddingTable table{Matrix(num_items, dim), true};
  Rng rng(seed);
  const double bound = 1.0 / std::sqrt(static_cast<double>(dim));
  for (double& v : table.values.values()) v = rng.uniform(-bound, bound);
  return table;
}

EmbeddingFile read_embedding_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open embedding file " + path.string());
  std::array<char, kEmbeddingMagic.size()> head{};
  in.read(head.data(), head.size());
  if (in.gcount() == static_cast<std::streamsize>(head.size()) &&
      std::string_view(head.data(), head.size()) == kEmbeddingMagic) {
    return read_binary(in, path);
  }
  in.clear();
  in.seekg(0);
  return read_text(in, path);
}

void write_embedding_file(const std::filesystem::path& path, const EmbeddingFile& file, bool text) {
  if (file.keys.size() != file.values.rows()) throw InvalidArgument("embedding file: key/row count mismatch");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  if (text) {
    out.precision(9);
    for (std::size_t r = 0; r < file.keys.size(); ++r) {
      out << file.keys[r];
      for (double v : file.values.row(r)) out << ' ' << static_cast<float>(v);
      out << '\n';
    }
    return;
  }
  out.write(kEmbeddingMagic.data(), kEmbeddingMagic.size());
  write_le(out, static_cast<std::uint32_t>(file.values.rows()));
  write_le(out, static_cast<std::uint32_t>(file.values.cols()));
  for (std::size_t r = 0; r < file.keys.size(); ++r) {
    if (file.keys[r].size() > 0xffff) throw InvalidArgument("embedding key too long: " + file.keys[r]);
    write_le(out, static_cast<std::uint16_t>(file.keys[r].size()));
    out.write(file.keys[r].data(), static_cast<std::streamsize>(file.keys[r].size()));
    for (double v : file.values.row(r)) write_le(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
}

EmbeddingTable load_image_table(const std::filesystem::path& path, const ItemCatalog& catalog) {
  const EmbeddingFile file = read_embedding_file(path);
  for (std::size_t r = 0; r < file.values.rows(); ++r) {
    for (double v : file.values.row(r)) {
      if (!std::isfinite(v)) throw FormatError(path.string() + ": non-finite value for key " + file.keys[r]);
    }
  }
  std::unordered_map<std::string_view, std::size_t> rows;
  rows.reserve(file.keys.size());
  for (std::size_t r = 0; r < file.keys.size(); ++r) rows.emplace(file.keys[r], r);

  EmbeddingTable table{Matrix(catalog.size(), file.values.cols()), false};
  for (std::uint32_t i = 0; i < catalog.size(); ++i) {
    const std::string& key = catalog.key(ItemId{i});
    auto it = rows.find(key);
    if (it == rows.end()) throw DataError(path.string() + ": missing embedding for item " + key);
    auto src = file.values.row(it->second);
    auto dst = table.values.row(i);
    const double norm = std::sqrt(kernels::squared_norm(src));
    if (norm == 0.0) throw FormatError(path.string() + ": zero-norm embedding for item " + key);
    for (std::size_t c = 0; c < dst.size(); ++c) dst[c] = src[c] / norm;
  }
  return table;
}

Matrix lookup(const EmbeddingTable& table, std::span<const ItemId> ids) {
  Matrix out(ids.size(), table.dim());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i].value >= table.rows()) {
      throw IndexError("lookup: item index " + std::to_string(ids[i].value) + " >= " + std::to_string(table.rows()));
    }
    auto src = table.values.row(ids[i].value);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

}  // namespace ifrec
