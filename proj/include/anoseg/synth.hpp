#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace anoseg {

struct NoiseField {
  torch::Tensor values;                 // HxW float, unbounded, roughly zero-centered
  std::pair<int64_t, int64_t> grid_scales;  // lattice periods per axis (y, x)
  uint64_t seed = 0;
};

// Lattice gradient noise with quintic-fade interpolation. Deterministic in
// (shape, grid_scales, seed).
NoiseField generate_perlin(int64_t h, int64_t w, int64_t scale_y, int64_t scale_x,
                           uint64_t seed);

// mask = 1 where noise > threshold.
torch::Tensor binarize(const NoiseField& noise, double threshold);

// I_a = beta (M*A) + (1-beta)(M*I_n) + (1-M) I_n, clamped to [0,1].
// Images are CHW in [0,1], mask is HxW in {0,1} and broadcasts over channels.
torch::Tensor compose_anomaly(const torch::Tensor& normal, const torch::Tensor& source,
                              const torch::Tensor& mask, double beta);

// Pool of anomaly-source textures: any directory of PNG/JPEG files, resized
// and cached at the requested shape.
class SourcePool {
 public:
  explicit SourcePool(const std::string& dir);
  size_t size() const { return paths_.size(); }
  torch::Tensor get(size_t index, int64_t size) const;
  const std::vector<std::string>& paths() const { return paths_; }

 private:
  std::vector<std::string> paths_;
  mutable std::vector<torch::Tensor> cache_;
  mutable int64_t cache_size_ = -1;
};

struct SynthParams {
  std::vector<int64_t> grid_scale_choices = {2, 4, 8, 16};  // per axis, log-uniform
  double threshold = 0.3;
  double area_min = 0.01;
  double area_max = 0.5;
  int64_t retries = 20;
  double beta_min = 0.15;
  double beta_max = 1.0;
};

struct SyntheticSample {
  torch::Tensor normal;     // I_n, CHW
  torch::Tensor source;     // A, CHW
  torch::Tensor mask;       // M, HxW {0,1}
  double beta = 0;
  torch::Tensor anomalous;  // I_a, CHW
};

// Draws a source image, a Perlin mask (rejection-sampled into the area
// bounds) and beta ~ U[beta_min, beta_max], then composes the sample.
SyntheticSample synthesize(const torch::Tensor& normal, const SourcePool& pool,
                          std::mt19937_64& rng, const SynthParams& params);

}  // namespace anoseg
