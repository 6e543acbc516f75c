#include "anoseg/synth.hpp"

#include "anoseg/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <sstream>

namespace fs = std::filesystem;

namespace anoseg {

namespace {

bool is_image_file(const fs::path& p) {
  auto ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp";
}

// 6t^5 - 15t^4 + 10t^3
torch::Tensor fade(const torch::Tensor& t) {
  return t * t * t * (t * (t * 6.0 - 15.0) + 10.0);
}

}  // namespace

NoiseField generate_perlin(int64_t h, int64_t w, int64_t scale_y, int64_t scale_x,
                           uint64_t seed) {
  if (h < 8 || w < 8) throw std::invalid_argument("generate_perlin: shape must be at least 8x8");
  if (scale_y < 1 || scale_x < 1)
    throw std::invalid_argument("generate_perlin: grid scales must be >= 1");
  if (scale_y > h || scale_x > w)
    throw std::invalid_argument("generate_perlin: shape smaller than one lattice cell");

  // Unit gradients at lattice nodes, from the seed alone.
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> angle(0.0, 2.0 * M_PI);
  auto grad_x = torch::empty({scale_y + 1, scale_x + 1}, torch::kFloat64);
  auto grad_y = torch::empty({scale_y + 1, scale_x + 1}, torch::kFloat64);
  auto gx = grad_x.accessor<double, 2>();
  auto gy = grad_y.accessor<double, 2>();
  for (int64_t i = 0; i <= scale_y; ++i) {
    for (int64_t j = 0; j <= scale_x; ++j) {
      double a = angle(rng);
      gx[i][j] = std::cos(a);
      gy[i][j] = std::sin(a);
    }
  }

  auto ys = (torch::arange(h, torch::kFloat64) + 0.5) * (double(scale_y) / double(h));
  auto xs = (torch::arange(w, torch::kFloat64) + 0.5) * (double(scale_x) / double(w));
  auto iy = ys.floor().clamp(0, scale_y - 1).to(torch::kLong);
  auto ix = xs.floor().clamp(0, scale_x - 1).to(torch::kLong);
  auto fy = (ys - iy.to(torch::kFloat64)).unsqueeze(1);  // Hx1
  auto fx = (xs - ix.to(torch::kFloat64)).unsqueeze(0);  // 1xW

  auto iy0 = iy.unsqueeze(1).expand({h, w});
  auto ix0 = ix.unsqueeze(0).expand({h, w});
  auto corner_dot = [&](int64_t dy, int64_t dx) {
    auto cgx = grad_x.index({iy0 + dy, ix0 + dx});
    auto cgy = grad_y.index({iy0 + dy, ix0 + dx});
    return cgx * (fx - double(dx)) + cgy * (fy - double(dy));
  };
  auto n00 = corner_dot(0, 0);
  auto n01 = corner_dot(0, 1);
  auto n10 = corner_dot(1, 0);
  auto n11 = corner_dot(1, 1);

  auto u = fade(fx);
  auto v = fade(fy);
  auto top = n00 + u * (n01 - n00);
  auto bot = n10 + u * (n11 - n10);
  auto field = (top + v * (bot - top)) * std::sqrt(2.0);

  NoiseField out;
  out.values = field.to(torch::kFloat32);
  out.grid_scales = {scale_y, scale_x};
  out.seed = seed;
  return out;
}

torch::Tensor binarize(const NoiseField& noise, double threshold) {
  if (!std::isfinite(threshold)) throw std::invalid_argument("binarize: threshold must be finite");
  return (noise.values > threshold).to(torch::kFloat32);
}

torch::Tensor compose_anomaly(const torch::Tensor& normal, const torch::Tensor& source,
                              const torch::Tensor& mask, double beta) {
  if (normal.sizes() != source.sizes())
    throw std::invalid_argument("compose_anomaly: normal/source shape mismatch");
  if (normal.dim() != 3 || mask.dim() != 2 || normal.size(1) != mask.size(0) ||
      normal.size(2) != mask.size(1))
    throw std::invalid_argument("compose_anomaly: image/mask shape mismatch");
  if (beta < 0.0 || beta > 1.0)
    throw std::invalid_argument("compose_anomaly: beta out of [0,1]");
  auto m = mask.unsqueeze(0);
  auto out = beta * (m * source) + (1.0 - beta) * (m * normal) + (1.0 - m) * normal;
  return out.clamp(0, 1);
}

SourcePool::SourcePool(const std::string& dir) {
  if (!fs::is_directory(dir)) throw std::runtime_error("source pool is not a directory: " + dir);
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && is_image_file(e.path())) paths_.push_back(e.path().string());
  }
  std::sort(paths_.begin(), paths_.end());
  if (paths_.empty()) throw std::runtime_error("source pool is empty: " + dir);
}

torch::Tensor SourcePool::get(size_t index, int64_t size) const {
  if (index >= paths_.size()) throw std::out_of_range("source pool index");
  if (cache_size_ != size) {
    cache_.assign(paths_.size(), torch::Tensor());
    cache_size_ = size;
  }
  if (!cache_[index].defined()) cache_[index] = load_image_rgb(paths_[index], size);
  return cache_[index];
}

SyntheticSample synthesize(const torch::Tensor& normal, const SourcePool& pool,
                          std::mt19937_64& rng, const SynthParams& params) {
  const int64_t h = normal.size(1), w = normal.size(2);
  std::uniform_int_distribution<size_t> pick_source(0, pool.size() - 1);
  std::uniform_int_distribution<size_t> pick_scale(0, params.grid_scale_choices.size() - 1);
  std::uniform_real_distribution<double> pick_beta(params.beta_min, params.beta_max);

  SyntheticSample s;
  s.normal = normal;
  s.source = pool.get(pick_source(rng), h);  // square targets; h == w in practice
  s.beta = pick_beta(rng);

  for (int64_t attempt = 0; attempt < params.retries; ++attempt) {
    int64_t sy = params.grid_scale_choices[pick_scale(rng)];
    int64_t sx = params.grid_scale_choices[pick_scale(rng)];
    auto field = generate_perlin(h, w, sy, sx, rng());
    auto mask = binarize(field, params.threshold);
    double frac = mask.mean().item<double>();
    if (frac >= params.area_min && frac <= params.area_max) {
      s.mask = mask;
      s.anomalous = compose_anomaly(s.normal, s.source, s.mask, s.beta);
      return s;
    }
  }
  std::ostringstream msg;
  msg << "synthesize: no mask with area in [" << params.area_min << ", " << params.area_max
      << "] after " << params.retries << " draws (threshold " << params.threshold << ", " << h
      << "x" << w << ")";
  throw std::runtime_error(msg.str());
}

}  // namespace anoseg
