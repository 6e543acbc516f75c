#pragma once

#include <torch/torch.h>

#include <optional>
#include <string>

#include "anoseg/config.hpp"
#include "anoseg/fusion_seg.hpp"
#include "anoseg/networks.hpp"

namespace anoseg {

struct PredictionResult {
  torch::Tensor full_map;  // HxW in [0,1], input resolution
  double image_score = 0;
};

// Mean of the T largest map values; T=1 is the max, T=numel the global mean.
double image_score(const torch::Tensor& full_map, int64_t top_t);

// Multi-level distance aggregate used when no segmentation head is trained:
// upsample each D_k to the input size, aggregate (sum or product), then
// min-max normalize per image. NxHxW in, NxHxW out.
torch::Tensor empirical_fusion_score(const FeaturePyramid& teacher, const FeaturePyramid& student,
                                     int64_t input_size, const std::string& aggregate = "product");

// Trained model bundle; loads checkpoints per the run's config.
class Detector {
 public:
  // run_dir: runs/<hash>/ produced by the trainer.
  static Detector load(const TrainConfig& cfg, const std::string& run_dir, bool force = false);
  // In-memory assembly (used by the trainer and tests).
  Detector(TeacherNet teacher, StudentNet student, SegmentationHead head, TrainConfig cfg);

  // NCHW batch or CHW single image in [0,1] -> per-image anomaly maps at the
  // input resolution.
  torch::Tensor predict_map(const torch::Tensor& image);
  PredictionResult predict(const torch::Tensor& image);  // single CHW image

  const TrainConfig& config() const { return cfg_; }
  TeacherNet& teacher() { return teacher_; }
  StudentNet& student() { return student_; }
  SegmentationHead& head() { return head_; }

 private:
  TeacherNet teacher_;
  StudentNet student_;
  SegmentationHead head_{nullptr};  // null when cfg.seg is off
  TrainConfig cfg_;
};

// Runs the detector over every test image of a dataset directory and writes
// per-image 16-bit score maps plus a JSON record.
void run_inference(Detector& det, const std::vector<std::string>& image_paths,
                   const std::string& out_dir);

}  // namespace anoseg
