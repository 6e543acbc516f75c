#pragma once

#include <torch/torch.h>

#include "anoseg/config.hpp"
#include "anoseg/networks.hpp"

namespace anoseg {

// Channel count of the fused segmentation input for the default backbone.
int64_t fused_channels(FusionMode mode);

// X_hat: level-1-sized concatenation of the per-level maps selected by mode.
//   product-similarity: upsampled X_k (448 channels)
//   concat-ST:          upsampled raw F_S_k and F_T_k (896 channels)
//   cosine-distance:    upsampled D_k (3 channels)
torch::Tensor build_fused_input(const FeaturePyramid& teacher, const FeaturePyramid& student,
                                FusionMode mode);

// Two residual blocks + ASPP + 1-channel logit, logistic output. No internal
// resampling: the score map keeps the stride-4 resolution of X_hat.
struct AsppImpl : torch::nn::Module {
  AsppImpl(int64_t in_ch, int64_t out_ch, std::vector<int64_t> rates);
  torch::Tensor forward(const torch::Tensor& x);

  torch::nn::ModuleList branches;
  torch::nn::Sequential pool_branch{nullptr};
  torch::nn::Sequential project{nullptr};
};
TORCH_MODULE(Aspp);

struct SegmentationHeadImpl : torch::nn::Module {
  explicit SegmentationHeadImpl(int64_t in_channels, int64_t width = 256);
  torch::Tensor forward(torch::Tensor x);  // N x H x W in [0,1]

  BasicBlock block1{nullptr}, block2{nullptr};
  Aspp aspp{nullptr};
  torch::nn::Conv2d out_conv{nullptr};
};
TORCH_MODULE(SegmentationHead);

}  // namespace anoseg
