#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>

namespace anoseg {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Flat key=value configuration. Lines are `key = value`, '#' starts a comment.
// CLI overrides are applied on top via set().
class Config {
 public:
  Config() = default;

  static Config load(const std::string& path);
  static Config parse(const std::string& text);

  void set(const std::string& key, const std::string& value) { kv_[key] = value; }
  bool has(const std::string& key) const { return kv_.count(key) != 0; }

  std::string get_str(const std::string& key, const std::string& def) const;
  std::string require_str(const std::string& key) const;
  int64_t get_int(const std::string& key, int64_t def) const;
  double get_double(const std::string& key, double def) const;
  bool get_bool(const std::string& key, bool def) const;

  // Sorted `key=value` lines; the canonical form that gets hashed.
  std::string canonical() const;
  // FNV-1a 64-bit of canonical(), hex encoded.
  std::string hash() const;

  const std::map<std::string, std::string>& items() const { return kv_; }

 private:
  std::map<std::string, std::string> kv_;
};

enum class FusionMode { ProductSimilarity, ConcatST, CosineDistance };

FusionMode parse_fusion_mode(const std::string& s);
std::string to_string(FusionMode m);

// Everything the two training phases and inference need. Built from a Config
// so that the config hash covers all of it.
struct TrainConfig {
  int64_t image_size = 256;
  int64_t batch_size = 32;
  int64_t step1_iters = 3000;
  int64_t step2_iters = 3000;
  double lr_student = 0.4;
  double lr_seg = 0.1;
  double momentum = 0.9;
  double gamma = 4.0;
  FusionMode fusion_mode = FusionMode::ProductSimilarity;
  bool den = true;   // student sees the corrupted image in step 1
  bool ed = true;    // encoder-decoder student (off: teacher-copy student)
  bool seg = true;   // segmentation head (off: empirical fusion at inference)
  std::string empirical_aggregate = "product";  // seg-off scoring: sum|product
  uint64_t seed = 0;
  double mask_area_min = 0.01;
  double mask_area_max = 0.5;
  double perlin_threshold = 0.3;
  int64_t mask_retries = 20;
  double normal_sample_prob = 0.0;  // chance of an uncorrupted sample in step 2
  int64_t top_t = 100;
  std::string data_root;
  std::string source_pool;
  std::string ckpt_dir = "runs";
  std::string teacher_weights;  // empty: fixed-seed random init
  int64_t num_threads = 1;

  static TrainConfig from_config(const Config& cfg);
  Config to_config() const;
  std::string hash() const { return to_config().hash(); }

  void validate() const;
};

}  // namespace anoseg
