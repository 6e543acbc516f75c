#pragma once

#include <torch/torch.h>

#include <string>
#include <utility>
#include <vector>

namespace anoseg {

enum class DownsampleMode { Round, Floor, Ceil, Nearest };

DownsampleMode parse_downsample_mode(const std::string& s);

// Bilinear resize of a strictly binary mask, then per-mode binarization:
//   round: >= 0.5 -> 1     floor: < 1 -> 0     ceil: > 0 -> 1
//   nearest: nearest-neighbor pick (no bilinear pass)
// Identity when the mask already has the target size.
torch::Tensor downsample_gt(const torch::Tensor& mask, int64_t out_size,
                            DownsampleMode mode = DownsampleMode::Round);

// Rank-based ROC area with tie averaging. Labels are 0/1; needs both classes.
double image_auc(const std::vector<double>& scores, const std::vector<int>& labels);

struct EvalPair {
  torch::Tensor prediction;  // HxW float
  torch::Tensor gt;          // HxW binary; empty (all-zero) for normal images
};

struct PixelMetrics {
  double auc = 0;
  double ap = 0;
};

// Pooled over all pixels of all pairs. AP is the step-sum over ranked pixels
// (threshold groups processed together).
PixelMetrics pixel_auc_ap(const std::vector<EvalPair>& pairs);

struct InstanceRegion {
  std::vector<int64_t> pixels;  // linear indices, row-major
  int64_t size() const { return static_cast<int64_t>(pixels.size()); }
};

// Maximal connected components of a binary mask; adjacency 4 or 8.
std::vector<InstanceRegion> connected_components(const torch::Tensor& mask, int adjacency = 8);

struct IapResult {
  double iap = 0;
  double iap_at_k = 0;
  // (instance recall, pixel precision), in descending-threshold sweep order.
  std::vector<std::pair<double, double>> curve;
};

// Instance average precision. An instance counts as detected at threshold t
// when more than 50% of its pixels score >= t; precision is pooled pixel
// precision. Thresholds: every distinct prediction value.
IapResult instance_ap(const std::vector<EvalPair>& pairs, double k_percent = 90,
                      int adjacency = 8);

struct MetricsReport {
  std::string category;
  double image_auc = 0;
  double pixel_auc = 0;
  double pixel_ap = 0;
  double iap = 0;
  double iap_at_k = 0;
  double k_percent = 90;
  int64_t n_images = 0;
  int64_t n_anomalous = 0;
  int64_t n_instances = 0;
  std::vector<std::pair<double, double>> roc_curve;  // (fpr, tpr)
  std::vector<std::pair<double, double>> pr_curve;   // (recall, precision)
  std::vector<std::pair<double, double>> iap_curve;  // (instance recall, precision)
};

struct EvalOptions {
  int64_t top_t = 100;
  double k_percent = 90;
  int adjacency = 8;
  DownsampleMode gt_mode = DownsampleMode::Round;
};

// Pairs 16-bit prediction PNGs in pred_dir with GT masks in gt_dir by file
// stem (`<stem>.png` or `<stem>_mask.png`); a prediction without a GT file is
// a normal image. GT is downsampled to the prediction size first.
MetricsReport evaluate_run(const std::string& pred_dir, const std::string& gt_dir,
                           const EvalOptions& opts);

// Pooled ROC / PR curves used by the report plots.
std::vector<std::pair<double, double>> pixel_roc_curve(const std::vector<EvalPair>& pairs);
std::vector<std::pair<double, double>> pixel_pr_curve(const std::vector<EvalPair>& pairs);

void write_report_csv(const std::vector<MetricsReport>& reports, const std::string& path);
void write_report_json(const std::vector<MetricsReport>& reports, const std::string& path);
// Simple SVG polyline plot of a curve in [0,1]^2.
void write_curve_svg(const std::vector<std::pair<double, double>>& curve,
                     const std::string& x_label, const std::string& y_label,
                     const std::string& path);

}  // namespace anoseg
