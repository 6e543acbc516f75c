#include "anoseg/losses.hpp"

namespace anoseg {

torch::Tensor similarity_map(const torch::Tensor& teacher_feat, const torch::Tensor& student_feat,
                             double eps) {
  if (teacher_feat.sizes() != student_feat.sizes())
    throw std::invalid_argument("similarity_map: feature shape mismatch");
  const int64_t cdim = teacher_feat.dim() - 3;  // channel axis for CHW or NCHW
  auto tn = teacher_feat.norm(2, cdim, /*keepdim=*/true).clamp_min(eps);
  auto sn = student_feat.norm(2, cdim, /*keepdim=*/true).clamp_min(eps);
  return (teacher_feat * student_feat) / (tn * sn);
}

torch::Tensor distance_map(const torch::Tensor& similarity) {
  return 1.0 - similarity.sum(similarity.dim() - 3);
}

torch::Tensor distillation_loss(const FeaturePyramid& teacher, const FeaturePyramid& student,
                                double eps) {
  torch::Tensor loss;
  for (size_t k = 0; k < teacher.size(); ++k) {
    if (teacher[k].sizes() != student[k].sizes())
      throw std::invalid_argument("distillation_loss: pyramid level " + std::to_string(k + 1) +
                                  " shape mismatch");
    auto d = distance_map(similarity_map(teacher[k], student[k], eps)).mean();
    loss = loss.defined() ? loss + d : d;
  }
  return loss;
}

torch::Tensor focal_loss(const torch::Tensor& y_hat, const torch::Tensor& mask, double gamma,
                         double eps) {
  if (y_hat.sizes() != mask.sizes())
    throw std::invalid_argument("focal_loss: prediction/mask shape mismatch");
  auto p = mask * y_hat + (1.0 - mask) * (1.0 - y_hat);
  p = p.clamp(eps, 1.0 - eps);
  return -((1.0 - p).pow(gamma) * p.log()).mean();
}

torch::Tensor l1_loss(const torch::Tensor& y_hat, const torch::Tensor& mask) {
  if (y_hat.sizes() != mask.sizes())
    throw std::invalid_argument("l1_loss: prediction/mask shape mismatch");
  return (mask - y_hat).abs().mean();
}

torch::Tensor segmentation_loss(const torch::Tensor& y_hat, const torch::Tensor& mask,
                                double gamma, double eps) {
  return focal_loss(y_hat, mask, gamma, eps) + anoseg::l1_loss(y_hat, mask);
}

}  // namespace anoseg
