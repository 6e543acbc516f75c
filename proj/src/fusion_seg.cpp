#include "anoseg/fusion_seg.hpp"

#include "anoseg/losses.hpp"

namespace anoseg {

namespace F = torch::nn::functional;

namespace {

torch::Tensor up_to(const torch::Tensor& x, int64_t h, int64_t w) {
  if (x.size(-2) == h && x.size(-1) == w) return x;
  return F::interpolate(x, F::InterpolateFuncOptions()
                               .size(std::vector<int64_t>{h, w})
                               .mode(torch::kBilinear)
                               .align_corners(false));
}

}  // namespace

int64_t fused_channels(FusionMode mode) {
  switch (mode) {
    case FusionMode::ProductSimilarity: return 64 + 128 + 256;
    case FusionMode::ConcatST: return 2 * (64 + 128 + 256);
    case FusionMode::CosineDistance: return 3;
  }
  throw std::invalid_argument("unknown fusion mode");
}

torch::Tensor build_fused_input(const FeaturePyramid& teacher, const FeaturePyramid& student,
                                FusionMode mode) {
  for (size_t k = 0; k < teacher.size(); ++k)
    if (teacher[k].sizes() != student[k].sizes())
      throw std::invalid_argument("build_fused_input: pyramid level " + std::to_string(k + 1) +
                                  " shape mismatch");
  const int64_t h = teacher[0].size(-2), w = teacher[0].size(-1);
  std::vector<torch::Tensor> parts;
  for (size_t k = 0; k < teacher.size(); ++k) {
    switch (mode) {
      case FusionMode::ProductSimilarity:
        parts.push_back(up_to(similarity_map(teacher[k], student[k]), h, w));
        break;
      case FusionMode::ConcatST:
        parts.push_back(up_to(student[k], h, w));
        parts.push_back(up_to(teacher[k], h, w));
        break;
      case FusionMode::CosineDistance:
        parts.push_back(
            up_to(distance_map(similarity_map(teacher[k], student[k])).unsqueeze(-3), h, w));
        break;
    }
  }
  return torch::cat(parts, /*dim=*/teacher[0].dim() - 3);
}

AsppImpl::AsppImpl(int64_t in_ch, int64_t out_ch, std::vector<int64_t> rates) {
  branches = register_module("branches", torch::nn::ModuleList());
  for (int64_t rate : rates) {
    torch::nn::Sequential b;
    if (rate == 1) {
      b->push_back(torch::nn::Conv2d(torch::nn::Conv2dOptions(in_ch, out_ch, 1).bias(false)));
    } else {
      b->push_back(torch::nn::Conv2d(
          torch::nn::Conv2dOptions(in_ch, out_ch, 3).padding(rate).dilation(rate).bias(false)));
    }
    b->push_back(torch::nn::BatchNorm2d(out_ch));
    b->push_back(torch::nn::ReLU());
    branches->push_back(b);
  }
  pool_branch = register_module(
      "pool_branch",
      torch::nn::Sequential(torch::nn::Conv2d(torch::nn::Conv2dOptions(in_ch, out_ch, 1).bias(false)),
                            torch::nn::BatchNorm2d(out_ch), torch::nn::ReLU()));
  project = register_module(
      "project",
      torch::nn::Sequential(torch::nn::Conv2d(torch::nn::Conv2dOptions(
                                                  out_ch * (int64_t)(rates.size() + 1), out_ch, 1)
                                                  .bias(false)),
                            torch::nn::BatchNorm2d(out_ch), torch::nn::ReLU()));
}

torch::Tensor AsppImpl::forward(const torch::Tensor& x) {
  const int64_t h = x.size(-2), w = x.size(-1);
  std::vector<torch::Tensor> outs;
  for (const auto& m : *branches) outs.push_back(m->as<torch::nn::Sequential>()->forward(x));
  auto pooled = F::adaptive_avg_pool2d(x, F::AdaptiveAvgPool2dFuncOptions(1));
  outs.push_back(up_to(pool_branch->forward(pooled), h, w));
  return project->forward(torch::cat(outs, 1));
}

SegmentationHeadImpl::SegmentationHeadImpl(int64_t in_channels, int64_t width) {
  block1 = register_module("block1", BasicBlock(in_channels, width));
  block2 = register_module("block2", BasicBlock(width, width));
  aspp = register_module("aspp", Aspp(width, width, std::vector<int64_t>{1, 6, 12, 18}));
  out_conv = register_module("out_conv",
                             torch::nn::Conv2d(torch::nn::Conv2dOptions(width, 1, 1).bias(true)));
}

torch::Tensor SegmentationHeadImpl::forward(torch::Tensor x) {
  x = block2->forward(block1->forward(x));
  x = aspp->forward(x);
  return torch::sigmoid(out_conv->forward(x)).squeeze(-3);
}

}  // namespace anoseg
