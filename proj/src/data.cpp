#include "anoseg/data.hpp"

#include "anoseg/image_io.hpp"
#include "anoseg/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>

namespace fs = std::filesystem;

namespace anoseg {

namespace {

std::vector<std::string> sorted_images(const fs::path& dir) {
  std::vector<std::string> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    auto ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
    if (ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp")
      out.push_back(e.path().string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

CategoryDataset load_mvtec_layout(const std::string& root, const std::string& category) {
  fs::path cat = fs::path(root) / category;
  if (!fs::is_directory(cat))
    throw std::runtime_error("category directory not found: " + cat.string());

  CategoryDataset ds;
  ds.name = category;
  ds.train_normals = sorted_images(cat / "train" / "good");
  if (ds.train_normals.empty())
    throw std::runtime_error("no training normals under " + (cat / "train" / "good").string());

  fs::path test_dir = cat / "test";
  if (!fs::is_directory(test_dir))
    throw std::runtime_error("test directory not found: " + test_dir.string());
  std::vector<std::string> defects;
  for (const auto& e : fs::directory_iterator(test_dir))
    if (e.is_directory()) defects.push_back(e.path().filename().string());
  std::sort(defects.begin(), defects.end());

  for (const auto& defect : defects) {
    bool normal = defect == "good";
    for (const auto& img : sorted_images(test_dir / defect)) {
      TestItem item;
      item.path = img;
      item.anomalous = !normal;
      if (item.anomalous) {
        std::string stem = fs::path(img).stem().string();
        fs::path gt_dir = cat / "ground_truth" / defect;
        for (const auto& cand : {gt_dir / (stem + "_mask.png"), gt_dir / (stem + ".png")}) {
          if (fs::exists(cand)) {
            item.gt_path = cand.string();
            break;
          }
        }
        if (!item.gt_path)
          throw std::runtime_error("anomalous test image without ground-truth mask: " + img);
      }
      ds.test_items.push_back(std::move(item));
    }
  }
  return ds;
}

namespace {

// Regular striped texture with a fainter cross grid; jitter comes from the
// caller's rng so the corpus stays pure in (seed, params).
torch::Tensor desk_normal_image(int64_t size, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double phase = unit(rng);
  double brightness = 0.9 + 0.2 * unit(rng);
  auto ys = torch::arange(size, torch::kFloat32).unsqueeze(1).expand({size, size});
  auto xs = torch::arange(size, torch::kFloat32).unsqueeze(0).expand({size, size});
  auto stripes = 0.5 + 0.22 * torch::sin(2.0 * M_PI * (xs / 8.0 + phase));
  auto grid = 0.08 * (torch::sin(2.0 * M_PI * ys / 16.0).abs() - 0.5);
  auto base = (stripes + grid) * brightness;

  std::normal_distribution<double> noise(0.0, 0.02);
  auto jitter = torch::empty({size, size}, torch::kFloat32);
  auto ja = jitter.accessor<float, 2>();
  for (int64_t y = 0; y < size; ++y)
    for (int64_t x = 0; x < size; ++x) ja[y][x] = static_cast<float>(noise(rng));

  auto gray = (base + jitter).clamp(0, 1);
  auto img = torch::stack({gray * 0.95f, gray, gray * 0.85f});  // mild green-ish tint
  return img.clamp(0, 1);
}

// A small set of visually distinct textures used as anomaly content.
torch::Tensor desk_source_image(int64_t size, int64_t kind, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto ys = torch::arange(size, torch::kFloat32).unsqueeze(1).expand({size, size});
  auto xs = torch::arange(size, torch::kFloat32).unsqueeze(0).expand({size, size});
  torch::Tensor g;
  switch (kind % 4) {
    case 0:  // checkerboard
      g = (((ys / 4).floor() + (xs / 4).floor()).remainder(2.0) * 0.8 + 0.1);
      break;
    case 1:  // diagonal stripes
      g = 0.5 + 0.45 * torch::sin(2.0 * M_PI * (xs + ys) / 6.0);
      break;
    case 2: {  // smooth random blobs
      auto field = generate_perlin(size, size, 4, 4, rng());
      g = (field.values * 0.5 + 0.5).clamp(0, 1);
      break;
    }
    default:  // flat saturated color
      g = torch::full({size, size}, 0.5f);
      break;
  }
  float r = static_cast<float>(unit(rng)), gg = static_cast<float>(unit(rng)),
        b = static_cast<float>(unit(rng));
  auto img = torch::stack({(g * 0.5 + 0.5) * r, (g * 0.5 + 0.5) * gg, (g * 0.5 + 0.5) * b});
  return img.clamp(0, 1);
}

std::string num_name(int64_t i) {
  char buf[16];
  snprintf(buf, sizeof(buf), "%03lld.png", static_cast<long long>(i));
  return buf;
}

}  // namespace

CategoryDataset generate_desk_corpus(const std::string& out_root, const DeskCorpusParams& params) {
  fs::path root(out_root);
  fs::path cat = root / "desk";
  fs::create_directories(cat / "train" / "good");
  fs::create_directories(cat / "test" / "good");
  fs::create_directories(cat / "test" / "defect");
  fs::create_directories(cat / "ground_truth" / "defect");
  fs::path src_dir = root / "desk_sources";
  fs::create_directories(src_dir);

  std::mt19937_64 rng(params.seed);

  for (int64_t i = 0; i < params.n_sources; ++i)
    save_image_png(desk_source_image(params.size, i, rng), (src_dir / num_name(i)).string());
  SourcePool pool(src_dir.string());

  for (int64_t i = 0; i < params.n_train; ++i)
    save_image_png(desk_normal_image(params.size, rng),
                   (cat / "train" / "good" / num_name(i)).string());

  SynthParams sp;
  sp.area_min = 0.02;
  sp.area_max = 0.3;
  sp.beta_min = 0.5;  // defects in the test split are kept clearly visible
  sp.retries = 100;

  const int64_t n_normal = params.n_test / 2;
  for (int64_t i = 0; i < params.n_test; ++i) {
    auto normal = desk_normal_image(params.size, rng);
    if (i < n_normal) {
      save_image_png(normal, (cat / "test" / "good" / num_name(i)).string());
    } else {
      auto sample = synthesize(normal, pool, rng, sp);
      save_image_png(sample.anomalous, (cat / "test" / "defect" / num_name(i)).string());
      save_image_png(sample.mask,
                     (cat / "ground_truth" / "defect" / (fs::path(num_name(i)).stem().string() +
                                                         "_mask.png")));
    }
  }
  return load_mvtec_layout(root.string(), "desk");
}

}  // namespace anoseg
