#include "anoseg/config.hpp"

#include <fstream>
#include <sstream>

namespace anoseg {

namespace {

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

Config Config::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse(ss.str());
}

Config Config::parse(const std::string& text) {
  Config cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value, got '" + line + "'");
    std::string key = trim(line.substr(0, eq));
    std::string val = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
    cfg.kv_[key] = val;
  }
  return cfg;
}

std::string Config::get_str(const std::string& key, const std::string& def) const {
  auto it = kv_.find(key);
  return it == kv_.end() ? def : it->second;
}

std::string Config::require_str(const std::string& key) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) throw ConfigError("missing required config key: " + key);
  return it->second;
}

int64_t Config::get_int(const std::string& key, int64_t def) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) return def;
  try {
    size_t pos = 0;
    int64_t v = std::stoll(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument("");
    return v;
  } catch (...) {
    throw ConfigError("config key '" + key + "': not an integer: '" + it->second + "'");
  }
}

double Config::get_double(const std::string& key, double def) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) return def;
  try {
    size_t pos = 0;
    double v = std::stod(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument("");
    return v;
  } catch (...) {
    throw ConfigError("config key '" + key + "': not a number: '" + it->second + "'");
  }
}

bool Config::get_bool(const std::string& key, bool def) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) return def;
  const std::string& v = it->second;
  if (v == "1" || v == "true" || v == "on" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "off" || v == "no") return false;
  throw ConfigError("config key '" + key + "': not a boolean: '" + v + "'");
}

std::string Config::canonical() const {
  std::string out;
  for (const auto& [k, v] : kv_) {
    out += k;
    out += '=';
    out += v;
    out += '\n';
  }
  return out;
}

std::string Config::hash() const {
  uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : canonical()) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

FusionMode parse_fusion_mode(const std::string& s) {
  if (s == "product-similarity") return FusionMode::ProductSimilarity;
  if (s == "concat-ST") return FusionMode::ConcatST;
  if (s == "cosine-distance") return FusionMode::CosineDistance;
  throw ConfigError("unknown fusion mode: '" + s + "'");
}

std::string to_string(FusionMode m) {
  switch (m) {
    case FusionMode::ProductSimilarity: return "product-similarity";
    case FusionMode::ConcatST: return "concat-ST";
    case FusionMode::CosineDistance: return "cosine-distance";
  }
  return "?";
}

TrainConfig TrainConfig::from_config(const Config& cfg) {
  TrainConfig tc;
  tc.image_size = cfg.get_int("image_size", tc.image_size);
  tc.batch_size = cfg.get_int("batch_size", tc.batch_size);
  tc.step1_iters = cfg.get_int("step1_iters", tc.step1_iters);
  tc.step2_iters = cfg.get_int("step2_iters", tc.step2_iters);
  tc.lr_student = cfg.get_double("lr_student", tc.lr_student);
  tc.lr_seg = cfg.get_double("lr_seg", tc.lr_seg);
  tc.momentum = cfg.get_double("momentum", tc.momentum);
  tc.gamma = cfg.get_double("gamma", tc.gamma);
  tc.fusion_mode = parse_fusion_mode(cfg.get_str("fusion_mode", "product-similarity"));
  tc.den = cfg.get_bool("den", tc.den);
  tc.ed = cfg.get_bool("ed", tc.ed);
  tc.seg = cfg.get_bool("seg", tc.seg);
  tc.empirical_aggregate = cfg.get_str("empirical_aggregate", tc.empirical_aggregate);
  tc.seed = static_cast<uint64_t>(cfg.get_int("seed", 0));
  tc.mask_area_min = cfg.get_double("mask_area_min", tc.mask_area_min);
  tc.mask_area_max = cfg.get_double("mask_area_max", tc.mask_area_max);
  tc.perlin_threshold = cfg.get_double("perlin_threshold", tc.perlin_threshold);
  tc.mask_retries = cfg.get_int("mask_retries", tc.mask_retries);
  tc.normal_sample_prob = cfg.get_double("normal_sample_prob", tc.normal_sample_prob);
  tc.top_t = cfg.get_int("top_t", tc.top_t);
  tc.data_root = cfg.get_str("data_root", "");
  tc.source_pool = cfg.get_str("source_pool", "");
  tc.ckpt_dir = cfg.get_str("ckpt_dir", tc.ckpt_dir);
  tc.teacher_weights = cfg.get_str("teacher_weights", "");
  tc.num_threads = cfg.get_int("num_threads", tc.num_threads);
  tc.validate();
  return tc;
}

Config TrainConfig::to_config() const {
  Config c;
  c.set("image_size", std::to_string(image_size));
  c.set("batch_size", std::to_string(batch_size));
  c.set("step1_iters", std::to_string(step1_iters));
  c.set("step2_iters", std::to_string(step2_iters));
  c.set("lr_student", std::to_string(lr_student));
  c.set("lr_seg", std::to_string(lr_seg));
  c.set("momentum", std::to_string(momentum));
  c.set("gamma", std::to_string(gamma));
  c.set("fusion_mode", to_string(fusion_mode));
  c.set("den", den ? "1" : "0");
  c.set("ed", ed ? "1" : "0");
  c.set("seg", seg ? "1" : "0");
  c.set("empirical_aggregate", empirical_aggregate);
  c.set("seed", std::to_string(seed));
  c.set("mask_area_min", std::to_string(mask_area_min));
  c.set("mask_area_max", std::to_string(mask_area_max));
  c.set("perlin_threshold", std::to_string(perlin_threshold));
  c.set("mask_retries", std::to_string(mask_retries));
  c.set("normal_sample_prob", std::to_string(normal_sample_prob));
  c.set("top_t", std::to_string(top_t));
  c.set("data_root", data_root);
  c.set("source_pool", source_pool);
  c.set("ckpt_dir", ckpt_dir);
  c.set("teacher_weights", teacher_weights);
  c.set("num_threads", std::to_string(num_threads));
  return c;
}

void TrainConfig::validate() const {
  if (image_size < 32 || image_size % 32 != 0)
    throw ConfigError("image_size must be a positive multiple of 32");
  if (batch_size < 1) throw ConfigError("batch_size must be positive");
  if (gamma < 0) throw ConfigError("gamma must be non-negative");
  if (step1_iters < 1 || step2_iters < 1) throw ConfigError("iteration counts must be positive");
  if (mask_area_min < 0 || mask_area_max > 1 || mask_area_min >= mask_area_max)
    throw ConfigError("mask area bounds must satisfy 0 <= min < max <= 1");
  if (top_t < 1) throw ConfigError("top_t must be >= 1");
  if (empirical_aggregate != "sum" && empirical_aggregate != "product")
    throw ConfigError("empirical_aggregate must be 'sum' or 'product'");
}

}  // namespace anoseg
