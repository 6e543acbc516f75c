#pragma once

#include <torch/torch.h>

#include <array>
#include <string>

namespace anoseg {

// Three feature maps at strides 4/8/16; channels (64,128,256) for the
// default backbone.
using FeaturePyramid = std::array<torch::Tensor, 3>;

// Basic residual block; stride via the first conv, 1x1 projection shortcut
// when shape changes.
struct BasicBlockImpl : torch::nn::Module {
  BasicBlockImpl(int64_t in_ch, int64_t out_ch, int64_t stride = 1);
  torch::Tensor forward(torch::Tensor x);

  torch::nn::Conv2d conv1{nullptr}, conv2{nullptr};
  torch::nn::BatchNorm2d bn1{nullptr}, bn2{nullptr};
  torch::nn::Sequential downsample{nullptr};
};
TORCH_MODULE(BasicBlock);

// 18-layer residual trunk with the final stage removed: stem + three stages,
// emitting features at strides 4/8/16. Doubles as the vanilla-student
// architecture (same trunk, random init, trainable).
struct FeatureTrunkImpl : torch::nn::Module {
  FeatureTrunkImpl();
  FeaturePyramid forward(torch::Tensor x);

  torch::nn::Conv2d conv1{nullptr};
  torch::nn::BatchNorm2d bn1{nullptr};
  torch::nn::Sequential layer1{nullptr}, layer2{nullptr}, layer3{nullptr};
};
TORCH_MODULE(FeatureTrunk);

// Encoder-decoder student: full 4-stage residual encoder down to stride 32,
// then a reversed trunk where every downsampling is replaced by bilinear
// upsampling. Decoder levels 1-3 shape-match the teacher pyramid.
struct EncoderDecoderStudentImpl : torch::nn::Module {
  EncoderDecoderStudentImpl();
  FeaturePyramid forward(torch::Tensor x);

  torch::nn::Conv2d conv1{nullptr};
  torch::nn::BatchNorm2d bn1{nullptr};
  torch::nn::Sequential enc1{nullptr}, enc2{nullptr}, enc3{nullptr}, enc4{nullptr};
  BasicBlock dec4{nullptr}, dec3{nullptr}, dec2{nullptr}, dec1{nullptr};
};
TORCH_MODULE(EncoderDecoderStudent);

// Abstracts over the two student architectures so the trainer does not care.
class StudentNet {
 public:
  static StudentNet encoder_decoder();
  static StudentNet vanilla();

  FeaturePyramid forward(torch::Tensor x);
  std::shared_ptr<torch::nn::Module> module() const { return module_; }
  bool is_encoder_decoder() const { return !ed_.is_empty(); }
  void train(bool on = true) { module_->train(on); }
  void eval() { module_->train(false); }

 private:
  std::shared_ptr<torch::nn::Module> module_;
  EncoderDecoderStudent ed_{nullptr};
  FeatureTrunk trunk_{nullptr};
};

// Frozen feature extractor. Weights come from a checkpoint
// (load_pretrained_teacher) or a fixed-seed random init.
class TeacherNet {
 public:
  explicit TeacherNet(uint64_t init_seed = 0);
  FeaturePyramid forward(const torch::Tensor& x);  // no_grad, eval mode
  std::shared_ptr<FeatureTrunkImpl> module() const { return trunk_.ptr(); }

 private:
  FeatureTrunk trunk_{nullptr};
};

TeacherNet load_pretrained_teacher(const std::string& path);

// Mean/std of the pretraining corpus, applied before both networks.
torch::Tensor normalize_input(const torch::Tensor& image);

// Checkpoint container: module parameters + buffers plus the config hash of
// the run that produced them. Loading verifies the hash unless forced.
void save_checkpoint(const torch::nn::Module& module, const std::string& path,
                     const std::string& config_hash);
void load_checkpoint(torch::nn::Module& module, const std::string& path,
                     const std::string& expected_hash, bool force = false);
std::string checkpoint_config_hash(const std::string& path);

// Sum over parameters and buffers; used to verify frozen-phase contracts.
double parameter_checksum(const torch::nn::Module& module);

}  // namespace anoseg
