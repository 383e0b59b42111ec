#include "ifrec/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "ifrec/error.hpp"

namespace ifrec {

namespace {

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used == value.size()) return v;
  } catch (const std::exception&) {
  }
  throw UsageError("config key '" + key + "': expected a number, got '" + value + "'");
}

std::uint64_t parse_unsigned(const std::string& key, const std::string& value) {
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc{} || ptr != value.data() + value.size()) {
    throw UsageError("config key '" + key + "': expected a non-negative integer, got '" + value + "'");
  }
  return v;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw UsageError("config key '" + key + "': expected true/false, got '" + value + "'");
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <typename Config>
struct Field {
  std::function<void(Config&, const std::string&, const std::string&)> set;
  std::function<std::string(const Config&)> get;
};

template <typename Config, typename Get>
Field<Config> real(Get member) {
  return {[member](Config& c, const std::string& k, const std::string& v) { member(c) = parse_double(k, v); },
          [member](const Config& c) { return format_double(member(c)); }};
}

template <typename Config, typename Get>
Field<Config> count(Get member) {
  return {[member](Config& c, const std::string& k, const std::string& v) {
            member(c) = static_cast<std::remove_reference_t<decltype(member(c))>>(parse_unsigned(k, v));
          },
          [member](const Config& c) { return std::to_string(member(c)); }};
}

template <typename Config, typename Get>
Field<Config> flag(Get member) {
  return {[member](Config& c, const std::string& k, const std::string& v) { member(c) = parse_bool(k, v); },
          [member](const Config& c) { return std::string(member(c) ? "true" : "false"); }};
}

template <typename Config, typename Get>
Field<Config> text(Get member) {
  return {[member](Config& c, const std::string&, const std::string& v) { member(c) = v; },
          [member](const Config& c) { return member(c); }};
}

template <typename Config, typename Get>
Field<Config> optional_real(Get member) {
  return {[member](Config& c, const std::string& k, const std::string& v) {
            if (v == "auto") {
              member(c).reset();
            } else {
              member(c) = parse_double(k, v);
            }
          },
          [member](const Config& c) {
            const auto& o = member(c);
            return o ? format_double(*o) : std::string("auto");
          }};
}

using RF = Field<RunConfig>;

const std::map<std::string, RF>& run_fields() {
  static const std::map<std::string, RF> fields = {
      {"q", count<RunConfig>([](auto& c) -> auto& { return c.train.q; })},
      {"e", count<RunConfig>([](auto& c) -> auto& { return c.train.e; })},
      {"alpha", real<RunConfig>([](auto& c) -> auto& { return c.train.alpha; })},
      {"lambda1", real<RunConfig>([](auto& c) -> auto& { return c.train.lambda1; })},
      {"lambda2", real<RunConfig>([](auto& c) -> auto& { return c.train.lambda2; })},
      {"batch_size", count<RunConfig>([](auto& c) -> auto& { return c.train.batch_size; })},
      {"dropout", real<RunConfig>([](auto& c) -> auto& { return c.train.dropout; })},
      {"l2", real<RunConfig>([](auto& c) -> auto& { return c.train.l2; })},
      {"lr", real<RunConfig>([](auto& c) -> auto& { return c.train.lr; })},
      {"epochs", count<RunConfig>([](auto& c) -> auto& { return c.train.epochs; })},
      {"max_len", count<RunConfig>([](auto& c) -> auto& { return c.train.max_len; })},
      {"seed", count<RunConfig>([](auto& c) -> auto& { return c.train.seed; })},
      {"temperature", real<RunConfig>([](auto& c) -> auto& { return c.train.temperature; })},
      {"learnable_temperature", flag<RunConfig>([](auto& c) -> auto& { return c.train.learnable_temperature; })},
      {"clip_norm", real<RunConfig>([](auto& c) -> auto& { return c.train.clip_norm; })},
      {"num_layers", count<RunConfig>([](auto& c) -> auto& { return c.train.num_layers; })},
      {"num_heads", count<RunConfig>([](auto& c) -> auto& { return c.train.num_heads; })},
      {"multi_attention", flag<RunConfig>([](auto& c) -> auto& { return c.train.multi_attention; })},
      {"target_domain",
       {[](RunConfig& c, const std::string& k, const std::string& v) {
          auto d = parse_domain(v);
          if (!d) throw UsageError("config key '" + k + "': expected X or Y, got '" + v + "'");
          c.train.target = *d;
        },
        [](const RunConfig& c) { return std::string(to_string(c.train.target)); }}},
      {"interactions", text<RunConfig>([](auto& c) -> auto& { return c.interactions; })},
      {"image_embeddings", text<RunConfig>([](auto& c) -> auto& { return c.image_embeddings; })},
      {"out", text<RunConfig>([](auto& c) -> auto& { return c.out; })},
      {"checkpoint", text<RunConfig>([](auto& c) -> auto& { return c.checkpoint; })},
      {"split", text<RunConfig>([](auto& c) -> auto& { return c.split; })},
      {"holdout_fraction", real<RunConfig>([](auto& c) -> auto& { return c.holdout_fraction; })},
      {"min_count", count<RunConfig>([](auto& c) -> auto& { return c.min_count; })},
      {"min_per_domain", count<RunConfig>([](auto& c) -> auto& { return c.min_per_domain; })},
      {"threads", count<RunConfig>([](auto& c) -> auto& { return c.threads; })},
      {"eval_alpha", optional_real<RunConfig>([](auto& c) -> auto& { return c.eval_alpha; })},
      {"eval_lambda1", optional_real<RunConfig>([](auto& c) -> auto& { return c.eval_lambda1; })},
      {"eval_lambda2", optional_real<RunConfig>([](auto& c) -> auto& { return c.eval_lambda2; })},
      {"record_wall_time", flag<RunConfig>([](auto& c) -> auto& { return c.record_wall_time; })},
  };
  return fields;
}

using SF = Field<SynthConfig>;

const std::map<std::string, SF>& synth_fields() {
  static const std::map<std::string, SF> fields = {
      {"users", count<SynthConfig>([](auto& c) -> auto& { return c.spec.num_users; })},
      {"items_per_domain", count<SynthConfig>([](auto& c) -> auto& { return c.spec.items_per_domain; })},
      {"clusters", count<SynthConfig>([](auto& c) -> auto& { return c.spec.clusters; })},
      {"signal", real<SynthConfig>([](auto& c) -> auto& { return c.spec.signal; })},
      {"min_length", count<SynthConfig>([](auto& c) -> auto& { return c.spec.min_length; })},
      {"max_length", count<SynthConfig>([](auto& c) -> auto& { return c.spec.max_length; })},
      {"min_per_domain", count<SynthConfig>([](auto& c) -> auto& { return c.spec.min_per_domain; })},
      {"image_dim", count<SynthConfig>([](auto& c) -> auto& { return c.spec.image_dim; })},
      {"branching", count<SynthConfig>([](auto& c) -> auto& { return c.spec.branching; })},
      {"image_noise", real<SynthConfig>([](auto& c) -> auto& { return c.spec.image_noise; })},
      {"seed", count<SynthConfig>([](auto& c) -> auto& { return c.spec.seed; })},
      {"out", text<SynthConfig>([](auto& c) -> auto& { return c.out; })},
  };
  return fields;
}

template <typename Map>
const typename Map::mapped_type& field(const Map& fields, const std::string& key) {
  auto it = fields.find(key);
  if (it == fields.end()) throw UsageError("unknown config key '" + key + "'");
  return it->second;
}

template <typename Map>
std::vector<std::string> key_list(const Map& fields) {
  std::vector<std::string> out;
  for (const auto& [k, _] : fields) out.push_back(k);
  return out;
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  field(run_fields(), key).set(*this, key, value);
  explicit_keys.insert(key);
}

std::string RunConfig::get(const std::string& key) const { return field(run_fields(), key).get(*this); }

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> k = key_list(run_fields());
  return k;
}

std::string RunConfig::to_text() const {
  std::string out;
  for (const auto& key : keys()) out += key + "=" + get(key) + "\n";
  return out;
}

void RunConfig::validate() const {
  try {
    train.validate();
  } catch (const InvalidArgument& e) {
    throw UsageError(e.what());
  }
  if (!(holdout_fraction >= 0.0 && holdout_fraction <= 1.0)) throw UsageError("holdout_fraction must lie in [0, 1]");
  if (min_count < 1 || min_per_domain < 1) throw UsageError("min_count and min_per_domain must be >= 1");
  if (split != "train" && split != "valid" && split != "test") {
    throw UsageError("split must be one of train, valid, test");
  }
  if (eval_alpha && !(*eval_alpha >= 0.0 && *eval_alpha <= 1.0)) throw UsageError("eval_alpha must lie in [0, 1]");
  if ((eval_lambda1 && *eval_lambda1 < 0.0) || (eval_lambda2 && *eval_lambda2 < 0.0)) {
    throw UsageError("eval_lambda1/eval_lambda2 must be non-negative");
  }
}

void SynthConfig::set(const std::string& key, const std::string& value) {
  field(synth_fields(), key).set(*this, key, value);
}

std::string SynthConfig::get(const std::string& key) const { return field(synth_fields(), key).get(*this); }

const std::vector<std::string>& SynthConfig::keys() {
  static const std::vector<std::string> k = key_list(synth_fields());
  return k;
}

std::string SynthConfig::to_text() const {
  std::string out;
  for (const auto& key : keys()) out += key + "=" + get(key) + "\n";
  return out;
}

std::vector<std::pair<std::string, std::string>> read_key_values(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file " + path.string());
  std::vector<std::pair<std::string, std::string>> pairs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw UsageError(path.string() + ":" + std::to_string(line_no) + ": expected key=value");
    }
    pairs.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return pairs;
}

template <typename Config>
void apply_config_file(Config& config, const std::filesystem::path& path) {
  for (const auto& [key, value] : read_key_values(path)) config.set(key, value);
}

template void apply_config_file<RunConfig>(RunConfig&, const std::filesystem::path&);
template void apply_config_file<SynthConfig>(SynthConfig&, const std::filesystem::path&);

}  // namespace ifrec
