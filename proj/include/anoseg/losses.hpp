#pragma once

#include <torch/torch.h>

#include "anoseg/networks.hpp"

namespace anoseg {

inline constexpr double kNormEps = 1e-8;

// X_k: elementwise product of L2-normalized teacher/student features, per
// location. Channel-sums lie in [-1, 1].
torch::Tensor similarity_map(const torch::Tensor& teacher_feat, const torch::Tensor& student_feat,
                             double eps = kNormEps);

// D_k = 1 - sum_c X_k; values in [0, 2].
torch::Tensor distance_map(const torch::Tensor& similarity);

// L_cos: sum over the three levels of the spatial mean of D_k. In [0, 6].
torch::Tensor distillation_loss(const FeaturePyramid& teacher, const FeaturePyramid& student,
                                double eps = kNormEps);

// Focal loss over a binary mask, p = M*Y + (1-M)(1-Y), clamped by eps.
torch::Tensor focal_loss(const torch::Tensor& y_hat, const torch::Tensor& mask, double gamma,
                         double eps = kNormEps);

// Mean absolute deviation |M - Y|.
torch::Tensor l1_loss(const torch::Tensor& y_hat, const torch::Tensor& mask);

// L_seg = L_focal + L_l1.
torch::Tensor segmentation_loss(const torch::Tensor& y_hat, const torch::Tensor& mask,
                                double gamma, double eps = kNormEps);

}  // namespace anoseg
