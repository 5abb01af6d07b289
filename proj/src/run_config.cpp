#include "run_config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "checkpoint.hpp"
#include "error.hpp"

namespace biqe {

namespace {

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename N>
N parse_number(const std::string& key, const std::string& v) {
  N out{};
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || v.empty())
    fail(ErrorCode::invalid_argument, "config key '" + key + "': not a number: '" + v + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "on" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "off" || v == "no") return false;
  fail(ErrorCode::invalid_argument, "config key '" + key + "': not a boolean: '" + v + "'");
}

const std::vector<std::string> kIntegerKeys{
    "synthetic_entities", "synthetic_relations", "synthetic_types", "synthetic_triples",
    "path_limit", "walks_per_node", "min_depth", "max_depth", "max_branches",
    "num_layers", "num_heads", "hidden", "ff", "max_positions", "max_len",
    "epochs", "batch_size", "shards", "gqe_dim"};
const std::vector<std::string> kRealKeys{"synthetic_noise", "dev_fraction", "test_fraction",
                                         "dropout", "lr"};
const std::vector<std::string> kFlagKeys{"ablation", "oracle"};

bool contains(const std::vector<std::string>& v, const std::string& s) {
  return std::find(v.begin(), v.end(), s) != v.end();
}

void check_value(const std::string& key, const std::string& value) {
  if (key == "seed") {
    parse_number<std::uint64_t>(key, value);
  } else if (contains(kIntegerKeys, key)) {
    parse_number<std::int64_t>(key, value);
  } else if (contains(kRealKeys, key)) {
    parse_number<double>(key, value);
  } else if (contains(kFlagKeys, key)) {
    parse_bool(key, value);
  } else if (key == "model") {
    if (value != "biqe" && value != "gqe-mp")
      fail(ErrorCode::invalid_argument, "config key 'model' must be biqe or gqe-mp, got '" + value + "'");
  } else if (key == "heldout_walks") {
    parse_walk_graph(value);
  } else if (key == "train_kinds" || key == "eval_kinds") {
    std::stringstream ss(value);
    std::string k;
    while (std::getline(ss, k, ',')) {
      k = trim(k);
      if (k != "triples" && k != "paths" && k != "dags")
        fail(ErrorCode::invalid_argument, "config key '" + key + "': unknown query kind '" + k + "'");
    }
  } else if (key == "eval_split") {
    if (value != "train" && value != "dev" && value != "test")
      fail(ErrorCode::invalid_argument, "config key 'eval_split' must be train, dev or test");
  }
}

}  // namespace

const std::map<std::string, std::string>& RunConfig::defaults() {
  static const std::map<std::string, std::string> d{
      {"seed", "1"},
      {"model", "biqe"},
      {"input", "synthetic"},
      {"data", "data"},
      {"out", "out"},
      {"checkpoint", ""},
      {"synthetic_entities", "100"},
      {"synthetic_relations", "8"},
      {"synthetic_types", "10"},
      {"synthetic_triples", "600"},
      {"synthetic_noise", "0.1"},
      {"dev_fraction", "0.1"},
      {"test_fraction", "0.1"},
      {"path_limit", "50000"},
      {"walks_per_node", "1"},
      {"min_depth", "2"},
      {"max_depth", "5"},
      {"max_branches", "3"},
      {"heldout_walks", "split"},
      {"num_layers", "2"},
      {"num_heads", "4"},
      {"hidden", "64"},
      {"ff", "256"},
      {"max_positions", "16"},
      {"dropout", "0.1"},
      {"max_len", "64"},
      {"epochs", "20"},
      {"batch_size", "128"},
      {"lr", "0.001"},
      {"shards", "8"},
      {"gqe_dim", "64"},
      {"train_kinds", "triples,paths,dags"},
      {"eval_split", "test"},
      {"eval_kinds", "paths,dags"},
      {"ablation", "false"},
      {"oracle", "false"},
  };
  return d;
}

RunConfig::RunConfig() : values_(defaults()) {}

bool RunConfig::has_key(const std::string& key) const { return values_.count(key) > 0; }

void RunConfig::set(const std::string& key, const std::string& value) {
  if (!has_key(key)) fail(ErrorCode::invalid_argument, "unknown config key '" + key + "'");
  std::string v = trim(value);
  check_value(key, v);
  values_[key] = v;
}

const std::string& RunConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) fail(ErrorCode::invalid_argument, "unknown config key '" + key + "'");
  return it->second;
}

void RunConfig::load_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::io, "cannot open config file " + path.string());
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      fail(ErrorCode::parse, path.string() + ":" + std::to_string(lineno) + ": expected key=value");
    set(trim(line.substr(0, eq)), line.substr(eq + 1));
  }
}

std::string RunConfig::env_name(const std::string& key) {
  std::string out = "BIQE_";
  for (char c : key) out += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

void RunConfig::load_env() {
  for (const auto& [key, _] : defaults()) {
    if (const char* v = std::getenv(env_name(key).c_str())) set(key, v);
  }
}

std::int64_t RunConfig::integer(const std::string& key) const {
  return parse_number<std::int64_t>(key, get(key));
}
std::uint64_t RunConfig::unsigned_integer(const std::string& key) const {
  return parse_number<std::uint64_t>(key, get(key));
}
double RunConfig::real(const std::string& key) const { return parse_number<double>(key, get(key)); }
bool RunConfig::flag(const std::string& key) const { return parse_bool(key, get(key)); }

std::vector<std::string> RunConfig::list(const std::string& key) const {
  std::vector<std::string> out;
  std::stringstream ss(get(key));
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string RunConfig::dump() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + "=" + v + "\n";
  return out;
}

std::string RunConfig::hash() const { return string_checksum(dump()); }

ModelConfig RunConfig::model_config() const {
  ModelConfig c;
  c.num_layers = static_cast<int>(integer("num_layers"));
  c.num_heads = static_cast<int>(integer("num_heads"));
  c.hidden = static_cast<int>(integer("hidden"));
  c.ff = static_cast<int>(integer("ff"));
  c.max_positions = static_cast<int>(integer("max_positions"));
  c.dropout = real("dropout");
  c.seed = unsigned_integer("seed");
  return c;
}

TrainSchedule RunConfig::train_schedule() const {
  TrainSchedule s;
  s.epochs = static_cast<int>(integer("epochs"));
  s.batch_size = static_cast<std::size_t>(integer("batch_size"));
  s.adam.lr = real("lr");
  s.seed = unsigned_integer("seed");
  s.shards = static_cast<int>(integer("shards"));
  s.mode = flag("ablation") ? AttentionMode::no_future : AttentionMode::bidirectional;
  if (s.epochs < 0 || s.batch_size == 0 || s.shards < 1)
    fail(ErrorCode::invalid_argument, "epochs, batch_size and shards must be positive");
  return s;
}

GenerateOptions RunConfig::generate_options() const {
  GenerateOptions o;
  o.mine.limit = static_cast<std::size_t>(integer("path_limit"));
  o.mine.walks_per_node = static_cast<int>(integer("walks_per_node"));
  o.mine.min_depth = static_cast<int>(integer("min_depth"));
  o.mine.max_depth = static_cast<int>(integer("max_depth"));
  o.mine.seed = unsigned_integer("seed");
  o.max_branches = static_cast<int>(integer("max_branches"));
  o.heldout_walks = parse_walk_graph(get("heldout_walks"));
  return o;
}

SyntheticKgOptions RunConfig::synthetic_options() const {
  SyntheticKgOptions o;
  o.num_entities = static_cast<int>(integer("synthetic_entities"));
  o.num_relations = static_cast<int>(integer("synthetic_relations"));
  o.num_types = static_cast<int>(integer("synthetic_types"));
  o.num_triples = static_cast<int>(integer("synthetic_triples"));
  o.noise = real("synthetic_noise");
  o.seed = unsigned_integer("seed");
  return o;
}

}  // namespace biqe
