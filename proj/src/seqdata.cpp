#include "ifrec/seqdata.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <unordered_map>

#include "ifrec/error.hpp"
#include "ifrec/rng.hpp"

namespace ifrec {

namespace {

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t tab = line.find('\t', start);
    fields.push_back(line.substr(start, tab == std::string_view::npos ? std::string_view::npos : tab - start));
    if (tab == std::string_view::npos) break;
    start = tab + 1;
  }
  return fields;
}

}  // namespace

std::string_view to_string(View view) {
  switch (view) {
    case View::X:
      return "X";
    case View::Y:
      return "Y";
    case View::XY:
      return "XY";
  }
  return "?";
}

std::vector<std::uint32_t> UserSequence::positions(View v) const {
  if (v == View::X) return x_view;
  if (v == View::Y) return y_view;
  std::vector<std::uint32_t> all(merged.size());
  std::iota(all.begin(), all.end(), 0u);
  return all;
}

std::vector<RawInteraction> read_interaction_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open interaction log " + path.string());
  std::vector<RawInteraction> out;
  std::string line;
  std::size_t line_no = 0;
  auto fail = [&](const std::string& what) {
    throw ParseError(path.string() + ": line " + std::to_string(line_no) + ": " + what);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    const auto fields = split_tabs(line);
    if (fields.size() != 4) fail("expected 4 tab-separated fields, got " + std::to_string(fields.size()));
    if (fields[0].empty() || fields[1].empty()) fail("empty user or item key");
    RawInteraction row;
    row.user = std::string(fields[0]);
    row.item = std::string(fields[1]);
    const auto ts = fields[2];
    auto [ptr, ec] = std::from_chars(ts.data(), ts.data() + ts.size(), row.timestamp);
    if (ec != std::errc{} || ptr != ts.data() + ts.size()) fail("bad timestamp '" + std::string(ts) + "'");
    auto domain = parse_domain(fields[3]);
    if (!domain) fail("unknown domain tag '" + std::string(fields[3]) + "'");
    row.domain = *domain;
    row.line = line_no;
    out.push_back(std::move(row));
  }
  return out;
}

ItemCatalog catalog_from_log(std::span<const RawInteraction> raw) {
  std::vector<std::pair<std::string, Domain>> entries;
  std::unordered_map<std::string_view, Domain> seen;
  for (const auto& row : raw) {
    auto [it, inserted] = seen.emplace(row.item, row.domain);
    if (inserted) {
      entries.emplace_back(row.item, row.domain);
    } else if (it->second != row.domain) {
      throw ParseError("line " + std::to_string(row.line) + ": item " + row.item + " tagged with both domains");
    }
  }
  return ItemCatalog::from_entries(entries);
}

std::vector<Interaction> resolve(std::span<const RawInteraction> raw, const ItemCatalog& catalog) {
  std::vector<Interaction> out;
  out.reserve(raw.size());
  std::string unknown;
  std::size_t unknown_count = 0;
  for (const auto& row : raw) {
    auto id = catalog.find(row.item);
    if (!id) {
      if (unknown_count < 20) unknown += "\n  line " + std::to_string(row.line) + ": " + row.item;
      ++unknown_count;
      continue;
    }
    if (catalog.domain(*id) != row.domain) {
      throw ParseError("line " + std::to_string(row.line) + ": item " + row.item + " is tagged " +
                       std::string(to_string(row.domain)) + " but the catalog says " +
                       std::string(to_string(catalog.domain(*id))));
    }
    out.push_back(Interaction{row.user, *id, row.timestamp, row.domain});
  }
  if (unknown_count > 0) {
    throw DataError(std::to_string(unknown_count) + " interaction(s) reference unknown items:" + unknown);
  }
  return out;
}

std::vector<Interaction> ingest(const std::filesystem::path& path, const ItemCatalog& catalog) {
  return resolve(read_interaction_log(path), catalog);
}

void write_interaction_log(const std::filesystem::path& path, std::span<const Interaction> interactions,
                           const ItemCatalog& catalog) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& row : interactions) {
    out << row.user << '\t' << catalog.key(row.item) << '\t' << row.timestamp << '\t' << to_string(row.domain)
        << '\n';
  }
}

std::vector<UserSequence> build_sequences(std::span<const Interaction> interactions) {
  std::vector<UserSequence> sequences;
  std::unordered_map<std::string_view, std::size_t> slot;
  std::vector<std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < interactions.size(); ++i) {
    auto [it, inserted] = slot.emplace(interactions[i].user, sequences.size());
    if (inserted) {
      sequences.push_back(UserSequence{.user = interactions[i].user});
      members.emplace_back();
    }
    members[it->second].push_back(i);
  }
  for (std::size_t s = 0; s < sequences.size(); ++s) {
    auto& rows = members[s];
    std::stable_sort(rows.begin(), rows.end(), [&](std::size_t a, std::size_t b) {
      return interactions[a].timestamp < interactions[b].timestamp;
    });
    auto& seq = sequences[s];
    for (std::size_t i : rows) {
      const auto pos = static_cast<std::uint32_t>(seq.merged.size());
      seq.merged.push_back(interactions[i].item);
      seq.timestamps.push_back(interactions[i].timestamp);
      seq.domains.push_back(interactions[i].domain);
      (interactions[i].domain == Domain::X ? seq.x_view : seq.y_view).push_back(pos);
    }
  }
  return sequences;
}

std::vector<Interaction> flatten(std::span<const UserSequence> sequences) {
  std::vector<Interaction> out;
  for (const auto& seq : sequences) {
    for (std::size_t i = 0; i < seq.size(); ++i) {
      out.push_back(Interaction{seq.user, seq.merged[i], seq.timestamps[i], seq.domains[i]});
    }
  }
  return out;
}

std::vector<UserSequence> filter_protocol(std::span<const Interaction> interactions, FilterOptions options) {
  if (options.min_count < 1 || options.min_per_domain < 1) {
    throw InvalidArgument("filter_protocol: thresholds must be >= 1");
  }
  std::unordered_map<std::string_view, std::size_t> user_slot;
  std::vector<std::size_t> user_of(interactions.size());
  std::uint32_t max_item = 0;
  for (std::size_t i = 0; i < interactions.size(); ++i) {
    user_of[i] = user_slot.emplace(interactions[i].user, user_slot.size()).first->second;
    max_item = std::max(max_item, interactions[i].item.value + 1);
  }
  const std::size_t num_users = user_slot.size();

  std::vector<char> alive(interactions.size(), 1);
  std::vector<char> user_alive(num_users, 1);
  std::vector<char> item_alive(max_item, 1);
  bool changed = true;
  while (changed) {
    changed = false;
    std::vector<std::size_t> user_count(num_users, 0), user_x(num_users, 0), user_y(num_users, 0);
    std::vector<std::size_t> item_count(max_item, 0);
    for (std::size_t i = 0; i < interactions.size(); ++i) {
      if (!alive[i]) continue;
      ++user_count[user_of[i]];
      ++(interactions[i].domain == Domain::X ? user_x : user_y)[user_of[i]];
      ++item_count[interactions[i].item.value];
    }
    for (std::size_t u = 0; u < num_users; ++u) {
      if (user_alive[u] && (user_count[u] < options.min_count || user_x[u] < options.min_per_domain ||
                            user_y[u] < options.min_per_domain)) {
        user_alive[u] = 0;
        changed = true;
      }
    }
    for (std::size_t it = 0; it < max_item; ++it) {
      if (item_alive[it] && item_count[it] < options.min_count) {
        item_alive[it] = 0;
        changed = true;
      }
    }
    for (std::size_t i = 0; i < interactions.size(); ++i) {
      if (alive[i] && (!user_alive[user_of[i]] || !item_alive[interactions[i].item.value])) alive[i] = 0;
    }
  }

  std::vector<Interaction> kept;
  for (std::size_t i = 0; i < interactions.size(); ++i) {
    if (alive[i]) kept.push_back(interactions[i]);
  }
  return build_sequences(kept);
}

std::size_t holdout_count(std::size_t num_sequences, double holdout_fraction) {
  if (!(holdout_fraction >= 0.0 && holdout_fraction <= 1.0)) {
    throw InvalidArgument("holdout_fraction must lie in [0, 1]");
  }
  const auto rounded = static_cast<std::size_t>(std::floor(holdout_fraction * static_cast<double>(num_sequences) + 0.5));
  return std::clamp<std::size_t>(rounded, 2, num_sequences);
}

DatasetSplit split_train_valid_test(std::span<const UserSequence> sequences, std::uint64_t seed,
                                    double holdout_fraction) {
  if (sequences.size() < 2) throw InvalidArgument("split needs at least 2 sequences");
  const std::size_t held = holdout_count(sequences.size(), holdout_fraction);

  std::vector<std::size_t> order(sequences.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return sequences[a].last_timestamp() < sequences[b].last_timestamp();
  });
  std::vector<std::size_t> holdout(order.end() - static_cast<std::ptrdiff_t>(held), order.end());
  std::sort(holdout.begin(), holdout.end());
  Rng rng = substream(seed, "split");
  rng.shuffle(std::span<std::size_t>(holdout));

  // 0 = train, 1 = valid, 2 = test
  std::vector<int> bucket(sequences.size(), 0);
  for (std::size_t k = 0; k < holdout.size(); ++k) bucket[holdout[k]] = (k % 2 == 0) ? 1 : 2;

  DatasetSplit split;
  for (std::size_t i = 0; i < sequences.size(); ++i) {
    (bucket[i] == 0 ? split.train : bucket[i] == 1 ? split.valid : split.test).push_back(sequences[i]);
  }
  return split;
}

std::vector<TrainingTarget> training_targets(const UserSequence& seq, View view) {
  const auto positions = seq.positions(view);
  std::vector<TrainingTarget> targets;
  for (std::size_t t = 0; t + 1 < positions.size(); ++t) {
    targets.push_back(TrainingTarget{positions[t], seq.merged[positions[t + 1]]});
  }
  return targets;
}

}  // namespace ifrec

namespace ifrec {

CompactedData compact(std::span<const UserSequence> sequences, const ItemCatalog& catalog) {
  std::vector<char> used(catalog.size(), 0);
  for (const auto& seq : sequences) {
    for (ItemId id : seq.merged) used.at(id.value) = 1;
  }
  std::vector<std::pair<std::string, Domain>> entries;
  for (std::uint32_t i = 0; i < catalog.size(); ++i) {
    if (used[i]) entries.emplace_back(catalog.key(ItemId{i}), catalog.domain(ItemId{i}));
  }
  CompactedData out{ItemCatalog::from_entries(entries), {}};
  out.sequences.assign(sequences.begin(), sequences.end());
  for (auto& seq : out.sequences) {
    for (ItemId& id : seq.merged) id = *out.catalog.find(catalog.key(id));
  }
  return out;
}

}  // namespace ifrec
