#include "crerank/config.hpp"

#include <algorithm>
#include <sstream>

#include <nlohmann/json.hpp>

#include "crerank/rng.hpp"
#include "crerank/serial.hpp"

namespace crerank {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("bad boolean for " + key + ": " + v);
}

template <class T>
T parse_num(const std::string& key, const std::string& v) {
  std::istringstream ss(v);
  T out;
  ss >> out;
  if (ss.fail() || !ss.eof()) throw ConfigError("bad value for " + key + ": " + v);
  return out;
}

std::string fmt(double v) { return nlohmann::json(v).dump(); }
std::string fmt(bool v) { return v ? "true" : "false"; }
template <class T>
std::string fmt(T v) { return std::to_string(v); }

void apply_recipe_defaults(RunConfig& cfg, const std::string& recipe) {
  if (recipe == "yoochoose") {
    cfg.data.min_item_support = 5;
    cfg.data.test_window_days = 1;
    cfg.data.train_keep_fraction = 0.25;
  } else if (recipe == "diginetica") {
    cfg.data.min_item_support = 5;
    cfg.data.test_window_days = 7;
    cfg.data.train_keep_fraction = 1.0;
  } else if (recipe == "generic") {
    cfg.data.min_item_support = 5;
    cfg.data.test_window_days = 1;
    cfg.data.train_keep_fraction = 1.0;
  } else {
    throw ConfigError("unknown recipe: " + recipe);
  }
}

}  // namespace

std::vector<std::pair<std::string, std::string>> parse_config_text(const std::string& text) {
  std::vector<std::pair<std::string, std::string>> out;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(line_no) + " is not key = value");
    out.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return out;
}

void RunConfig::apply(const std::string& key, const std::string& value) {
  if (key == "data.dataset") data.dataset = value;
  else if (key == "data.recipe") { data.recipe = value; apply_recipe_defaults(*this, value); }
  else if (key == "data.min_item_support") data.min_item_support = parse_num<std::uint32_t>(key, value);
  else if (key == "data.test_window_days") data.test_window_days = parse_num<std::uint32_t>(key, value);
  else if (key == "data.train_keep_fraction") data.train_keep_fraction = parse_num<double>(key, value);
  else if (key == "data.max_len") data.max_len = parse_num<std::uint32_t>(key, value);
  else if (key == "model.generator") model.generator = value;
  else if (key == "model.d") model.d = parse_num<Index>(key, value);
  else if (key == "model.d_cre") model.d_cre = parse_num<Index>(key, value);
  else if (key == "model.k") model.k = parse_num<std::uint32_t>(key, value);
  else if (key == "model.alpha") model.alpha = parse_num<double>(key, value);
  else if (key == "model.table_width") model.table_width = parse_num<std::uint32_t>(key, value);
  else if (key == "model.cre_stride") model.cre_stride = parse_num<std::uint32_t>(key, value);
  else if (key == "model.cre_enabled") model.cre_enabled = parse_bool(key, value);
  else if (key == "model.attention_normalized") model.attention_normalized = parse_bool(key, value);
  else if (key == "train.lr") train.lr = parse_num<double>(key, value);
  else if (key == "train.batch") train.batch = parse_num<std::uint32_t>(key, value);
  else if (key == "train.epochs") train.epochs = parse_num<std::uint32_t>(key, value);
  else if (key == "train.seed") train.seed = parse_num<std::uint64_t>(key, value);
  else if (key == "train.val_fraction") train.val_fraction = parse_num<double>(key, value);
  else if (key == "train.val_every") train.val_every = parse_num<std::uint32_t>(key, value);
  else if (key == "train.val_max_examples") train.val_max_examples = parse_num<std::uint32_t>(key, value);
  else if (key == "train.val_n") train.val_n = parse_num<int>(key, value);
  else if (key == "train.val_on_composed") train.val_on_composed = parse_bool(key, value);
  else if (key == "train.clip") train.clip = parse_num<double>(key, value);
  else if (key == "eval.n") eval_n = parse_num<int>(key, value);
  else if (key == "threads") threads = parse_num<int>(key, value);
  else throw ConfigError("unknown config key: " + key);
}

void RunConfig::validate() const {
  if (data.recipe != "yoochoose" && data.recipe != "diginetica" && data.recipe != "generic")
    throw ConfigError("unknown recipe: " + data.recipe);
  if (model.generator != "cf" && model.generator != "stamp" && model.generator != "stmo")
    throw ConfigError("unknown generator: " + model.generator);
  if (model.d < 1 || model.d_cre < 0) throw ConfigError("model.d/model.d_cre must be positive");
  if (model.k < 1) throw ConfigError("model.k must be >= 1");
  if (!(model.alpha >= 0.0 && model.alpha <= 1.0))
    throw ConfigError("model.alpha must be in [0,1]");
  if (model.cre_stride < 1) throw ConfigError("model.cre_stride must be >= 1");
  if (model.table_width < 1) throw ConfigError("model.table_width must be >= 1");
  if (!(train.lr > 0.0)) throw ConfigError("train.lr must be > 0");
  if (train.batch < 1) throw ConfigError("train.batch must be >= 1");
  if (!(train.val_fraction >= 0.0 && train.val_fraction < 1.0))
    throw ConfigError("train.val_fraction must be in [0,1)");
  if (train.val_every < 1) throw ConfigError("train.val_every must be >= 1");
  if (train.val_n < 1) throw ConfigError("train.val_n must be >= 1");
  if (train.clip < 0.0) throw ConfigError("train.clip must be >= 0");
  if (!(data.train_keep_fraction > 0.0 && data.train_keep_fraction <= 1.0))
    throw ConfigError("data.train_keep_fraction must be in (0,1]");
  if (eval_n < 1) throw ConfigError("eval.n must be >= 1");
  if (threads < 1) throw ConfigError("threads must be >= 1");
}

std::string RunConfig::snapshot_text() const {
  std::map<std::string, std::string> kv;
  kv["data.dataset"] = data.dataset;
  kv["data.recipe"] = data.recipe;
  kv["data.min_item_support"] = fmt(data.min_item_support);
  kv["data.test_window_days"] = fmt(data.test_window_days);
  kv["data.train_keep_fraction"] = fmt(data.train_keep_fraction);
  kv["data.max_len"] = fmt(data.max_len);
  kv["model.generator"] = model.generator;
  kv["model.d"] = fmt(model.d);
  kv["model.d_cre"] = fmt(model.d_cre);
  kv["model.k"] = fmt(model.k);
  kv["model.alpha"] = fmt(model.alpha);
  kv["model.table_width"] = fmt(model.table_width);
  kv["model.cre_stride"] = fmt(model.cre_stride);
  kv["model.cre_enabled"] = fmt(model.cre_enabled);
  kv["model.attention_normalized"] = fmt(model.attention_normalized);
  kv["train.lr"] = fmt(train.lr);
  kv["train.batch"] = fmt(train.batch);
  kv["train.epochs"] = fmt(train.epochs);
  kv["train.seed"] = fmt(train.seed);
  kv["train.val_fraction"] = fmt(train.val_fraction);
  kv["train.val_every"] = fmt(train.val_every);
  kv["train.val_max_examples"] = fmt(train.val_max_examples);
  kv["train.val_n"] = fmt(train.val_n);
  kv["train.val_on_composed"] = fmt(train.val_on_composed);
  kv["train.clip"] = fmt(train.clip);
  kv["eval.n"] = fmt(eval_n);
  kv["threads"] = fmt(threads);
  std::ostringstream ss;
  for (const auto& [k, v] : kv) ss << k << " = " << v << '\n';
  return ss.str();
}

std::uint64_t RunConfig::config_hash() const { return fnv1a64(snapshot_text()); }

RunConfig RunConfig::load(const std::string* file_path,
                          const std::vector<std::string>& overrides) {
  RunConfig cfg;
  std::vector<std::pair<std::string, std::string>> entries;
  if (file_path) {
    for (auto& kv : parse_config_text(read_file_bytes(*file_path))) entries.push_back(kv);
  }
  for (const auto& item : overrides) {
    const std::size_t eq = item.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got: " + item);
    entries.emplace_back(trim(item.substr(0, eq)), trim(item.substr(eq + 1)));
  }
  // The recipe installs defaults, so apply it before everything else no
  // matter where it appears.
  for (const auto& [k, v] : entries)
    if (k == "data.recipe") cfg.apply(k, v);
  for (const auto& [k, v] : entries)
    if (k != "data.recipe") cfg.apply(k, v);
  cfg.validate();
  return cfg;
}

}  // namespace crerank
