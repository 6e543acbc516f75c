#pragma once

#include <string>
#include <vector>

#include "anoseg/config.hpp"
#include "anoseg/data.hpp"
#include "anoseg/infer.hpp"
#include "anoseg/metrics.hpp"
#include "anoseg/networks.hpp"

namespace anoseg {

struct RunRecord {
  std::string phase;
  std::vector<double> losses;  // one entry per iteration
  double wall_clock_sec = 0;
  std::string config_hash;
  std::string checkpoint;
};

void save_run_record(const RunRecord& record, const std::string& path);

// runs/<config hash>/
std::string run_dir_for(const TrainConfig& cfg);

// Step 1: distill the student against the frozen teacher. With den
// on, the student sees the synthetic anomalous image while the teacher sees
// the clean one. Writes <run_dir>/student.ckpt and run_student.json.
RunRecord train_student(const TrainConfig& cfg, const CategoryDataset& data);

// Step 2: freeze teacher and student, train the segmentation head
// on fused similarities of the corrupted image against the downsampled mask.
// Writes <run_dir>/seg.ckpt and run_seg.json.
RunRecord train_segmentation(const TrainConfig& cfg, const CategoryDataset& data);

// In-memory evaluation of a trained detector on a dataset's test split.
MetricsReport evaluate_detector(Detector& det, const CategoryDataset& data,
                                const EvalOptions& opts);

struct AblationRow {
  int exp = 0;
  bool den = false, ed = false, seg = false;
  std::string config_hash;
  bool uses_encoder_decoder = false;  // introspected from the built model
  bool uses_seg_head = false;
  double image_auc = 0, pixel_ap = 0, iap = 0;
};

// The 8-row den/ed/seg grid. Each row trains both phases from the base
// config with only the three flags changed, then evaluates the test split.
std::vector<AblationRow> run_ablation(const TrainConfig& base, const CategoryDataset& data);

void write_ablation_csv(const std::vector<AblationRow>& rows, const std::string& path);

}  // namespace anoseg
