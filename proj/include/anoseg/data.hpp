#pragma once

#include <torch/torch.h>

#include <optional>
#include <string>
#include <vector>

namespace anoseg {

struct TestItem {
  std::string path;
  bool anomalous = false;
  std::optional<std::string> gt_path;  // set iff anomalous
};

struct CategoryDataset {
  std::string name;
  std::vector<std::string> train_normals;
  std::vector<TestItem> test_items;
};

// `<cat>/train/good`, `<cat>/test/<defect>`, `<cat>/ground_truth/<defect>`;
// the `good` test subdirectory holds normals, everything else needs a
// `<stem>_mask.png` (or `<stem>.png`) ground-truth file.
CategoryDataset load_mvtec_layout(const std::string& root, const std::string& category);

struct DeskCorpusParams {
  uint64_t seed = 0;
  int64_t n_train = 20;
  int64_t n_test = 20;  // half normal, half anomalous
  int64_t size = 64;
  int64_t n_sources = 8;  // anomaly-source textures written next to the corpus
};

// Procedural category ("desk"): striped/grid normal images with mild noise,
// defective test images composed with Perlin masks, exact GT masks, and a
// small source-texture pool. Byte-identical for a fixed seed.
CategoryDataset generate_desk_corpus(const std::string& out_root, const DeskCorpusParams& params);

}  // namespace anoseg
