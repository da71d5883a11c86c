#include "tdanet/run_config.h"

#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "tdanet/error.h"
#include "tdanet/rng.h"

namespace tdanet {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

long long parse_int(const std::string& key, const std::string& v) {
  errno = 0;
  char* end = nullptr;
  const long long x = std::strtoll(v.c_str(), &end, 10);
  if (v.empty() || *end != '\0' || errno) throw ConfigError(key + ": expected an integer, got '" + v + "'");
  return x;
}

double parse_double(const std::string& key, const std::string& v) {
  errno = 0;
  char* end = nullptr;
  const double x = std::strtod(v.c_str(), &end);
  if (v.empty() || *end != '\0' || errno) throw ConfigError(key + ": expected a number, got '" + v + "'");
  return x;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(key + ": expected true/false, got '" + v + "'");
}

// Converts `v` to the JSON type of `like`.
nlohmann::json typed(const std::string& key, const std::string& v, const nlohmann::json& like) {
  if (like.is_boolean()) return parse_bool(key, v);
  if (like.is_number_unsigned()) {
    const long long x = parse_int(key, v);
    if (x < 0) throw ConfigError(key + ": must be non-negative");
    return static_cast<std::uint64_t>(x);
  }
  if (like.is_number_integer()) return parse_int(key, v);
  if (like.is_number_float()) return parse_double(key, v);
  return v;
}

std::string render(const nlohmann::json& v) {
  if (v.is_string()) return v.get<std::string>();
  return v.dump();
}

nlohmann::json train_schema() {
  nlohmann::json j = TrainConfig{}.to_json();
  j.erase("seed");
  return j;
}

}  // namespace

ModelConfig desk_config() {
  ModelConfig c;
  c.channels = 64;
  c.bottleneck = 64;
  c.depth = 3;
  c.unfolds = 4;
  return c;
}

ModelConfig RunConfig::model() const {
  ModelConfig base;
  if (preset == "large") {
    base = ModelConfig::large();
  } else if (preset == "desk") {
    base = desk_config();
  } else if (preset != "base") {
    throw ConfigError("preset: unknown value '" + preset + "' (base, large, desk)");
  }
  nlohmann::json j = base.to_json();
  for (const auto& [k, v] : model_overrides.items()) j[k] = v;
  ModelConfig c = ModelConfig::from_json(j).with_ablations(ablate);
  c.validate();
  return c;
}

std::uint64_t RunConfig::init_seed() const { return Rng(seed).split("init").seed(); }
std::uint64_t RunConfig::train_seed() const { return Rng(seed).split("train").seed(); }

TrainConfig RunConfig::train_config() const {
  TrainConfig t = train;
  t.seed = train_seed();
  t.validate();
  return t;
}

std::vector<std::string> RunConfig::schema_keys() {
  std::vector<std::string> keys = {"seed", "preset", "ablate"};
  const nlohmann::json model_json = ModelConfig{}.to_json();
  const nlohmann::json schema = train_schema();
  for (const auto& [k, v] : model_json.items()) keys.push_back("model." + k);
  for (const auto& [k, v] : schema.items()) keys.push_back("train." + k);
  for (const char* k : {"recipe", "duration_s", "train", "val", "test"}) keys.push_back(std::string("data.") + k);
  return keys;
}

void RunConfig::set(const std::string& raw_key, const std::string& raw_value) {
  const std::string key = trim(raw_key), v = trim(raw_value);
  if (key == "seed") {
    seed = typed(key, v, std::uint64_t{0}).get<std::uint64_t>();
  } else if (key == "preset") {
    if (v != "base" && v != "large" && v != "desk") throw ConfigError("preset: unknown value '" + v + "'");
    preset = v;
  } else if (key == "ablate") {
    ModelConfig{}.with_ablations(v);  // validates the names
    ablate = v;
  } else if (key.rfind("model.", 0) == 0) {
    const std::string field = key.substr(6);
    const nlohmann::json schema = ModelConfig{}.to_json();
    if (!schema.contains(field)) throw ConfigError("unknown config key '" + key + "'");
    model_overrides[field] = typed(key, v, schema[field]);
    if (field == "ga_input" && v != "fused" && v != "top") throw ConfigError(key + ": expected fused or top");
    if (field == "fusion" && v != "sum" && v != "concat") throw ConfigError(key + ": expected sum or concat");
  } else if (key.rfind("train.", 0) == 0) {
    const std::string field = key.substr(6);
    nlohmann::json j = train.to_json();
    const nlohmann::json schema = train_schema();
    if (!schema.contains(field)) throw ConfigError("unknown config key '" + key + "'");
    j[field] = typed(key, v, schema[field]);
    train = TrainConfig::from_json(j);
  } else if (key == "data.recipe") {
    parse_recipe(v);
    recipe = v;
  } else if (key == "data.duration_s") {
    duration_s = parse_double(key, v);
    if (duration_s < 0.0 || (duration_s > 0.0 && duration_s < 0.1)) {
      throw ConfigError(key + ": must be 0 (recipe default) or at least 0.1");
    }
  } else if (key == "data.train" || key == "data.val" || key == "data.test") {
    const long long n = parse_int(key, v);
    if (n < 0) throw ConfigError(key + ": must be non-negative");
    (key == "data.train" ? n_train : key == "data.val" ? n_val : n_test) = static_cast<std::size_t>(n);
  } else {
    throw ConfigError("unknown config key '" + key + "'");
  }
}

void RunConfig::apply_text(const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(n) + ": expected 'key = value'");
    }
    try {
      set(line.substr(0, eq), line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(origin + ":" + std::to_string(n) + ": " + e.what());
    }
  }
}

void RunConfig::apply_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FileError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  apply_text(ss.str(), path.string());
}

std::string RunConfig::to_text() const {
  std::ostringstream out;
  out << "# resolved configuration\n";
  out << "seed = " << seed << "\n";
  out << "preset = " << preset << "\n";
  out << "ablate = " << ablate << "\n";
  // The resolved model is written in full so the file stands alone.
  const nlohmann::json model_json = model().to_json();
  const nlohmann::json train_json = train.to_json();
  const nlohmann::json schema = train_schema();
  for (const auto& [k, v] : model_json.items()) out << "model." << k << " = " << render(v) << "\n";
  for (const auto& [k, v] : schema.items()) out << "train." << k << " = " << render(train_json[k]) << "\n";
  out << "data.recipe = " << recipe << "\n";
  out << "data.duration_s = " << duration_s << "\n";
  out << "data.train = " << n_train << "\n";
  out << "data.val = " << n_val << "\n";
  out << "data.test = " << n_test << "\n";
  return out.str();
}

void RunConfig::write(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FileError("cannot write " + path.string());
  out << to_text();
  if (!out) throw FileError("write failed for " + path.string());
}

}  // namespace tdanet
