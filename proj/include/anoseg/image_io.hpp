#pragma once

#include <torch/torch.h>

#include <optional>
#include <string>

namespace anoseg {

// Decode to RGB float CHW in [0,1]; grayscale sources are replicated to 3
// channels. If size is given the image is resized (bilinear, antialiased).
torch::Tensor load_image_rgb(const std::string& path, std::optional<int64_t> size = {});

// Binary mask from a PNG, nonzero = anomalous. Returns float HxW in {0,1}.
torch::Tensor load_mask(const std::string& path, std::optional<int64_t> size = {});

// 8-bit PNG from CHW [0,1] (3 channels) or HxW [0,1] (grayscale).
void save_image_png(const torch::Tensor& image, const std::string& path);

// 16-bit grayscale PNG, value = round(65535 * p).
void save_map_png16(const torch::Tensor& map, const std::string& path);

// Inverse of save_map_png16: HxW float in [0,1].
torch::Tensor load_map_png16(const std::string& path);

}  // namespace anoseg
