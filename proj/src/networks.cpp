#include "anoseg/networks.hpp"

#include <map>
#include <set>
#include <sstream>

namespace anoseg {

namespace F = torch::nn::functional;

namespace {

void check_input(const torch::Tensor& x) {
  if (x.dim() != 4 || x.size(1) != 3)
    throw std::invalid_argument("network input must be NCHW with 3 channels");
  if (x.size(2) % 32 != 0 || x.size(3) % 32 != 0)
    throw std::invalid_argument("network input sides must be divisible by 32");
}

torch::Tensor up2(const torch::Tensor& x) {
  return F::interpolate(x, F::InterpolateFuncOptions()
                               .scale_factor(std::vector<double>{2.0, 2.0})
                               .mode(torch::kBilinear)
                               .align_corners(false));
}

torch::nn::Sequential make_stage(int64_t in_ch, int64_t out_ch, int64_t stride) {
  return torch::nn::Sequential(BasicBlock(in_ch, out_ch, stride), BasicBlock(out_ch, out_ch, 1));
}

}  // namespace

BasicBlockImpl::BasicBlockImpl(int64_t in_ch, int64_t out_ch, int64_t stride) {
  conv1 = register_module(
      "conv1", torch::nn::Conv2d(
                   torch::nn::Conv2dOptions(in_ch, out_ch, 3).stride(stride).padding(1).bias(false)));
  bn1 = register_module("bn1", torch::nn::BatchNorm2d(out_ch));
  conv2 = register_module(
      "conv2",
      torch::nn::Conv2d(torch::nn::Conv2dOptions(out_ch, out_ch, 3).stride(1).padding(1).bias(false)));
  bn2 = register_module("bn2", torch::nn::BatchNorm2d(out_ch));
  if (stride != 1 || in_ch != out_ch) {
    downsample = register_module(
        "downsample",
        torch::nn::Sequential(
            torch::nn::Conv2d(torch::nn::Conv2dOptions(in_ch, out_ch, 1).stride(stride).bias(false)),
            torch::nn::BatchNorm2d(out_ch)));
  }
}

torch::Tensor BasicBlockImpl::forward(torch::Tensor x) {
  auto identity = downsample ? downsample->forward(x) : x;
  auto out = torch::relu(bn1->forward(conv1->forward(x)));
  out = bn2->forward(conv2->forward(out));
  return torch::relu(out + identity);
}

FeatureTrunkImpl::FeatureTrunkImpl() {
  conv1 = register_module(
      "conv1",
      torch::nn::Conv2d(torch::nn::Conv2dOptions(3, 64, 7).stride(2).padding(3).bias(false)));
  bn1 = register_module("bn1", torch::nn::BatchNorm2d(64));
  layer1 = register_module("layer1", make_stage(64, 64, 1));
  layer2 = register_module("layer2", make_stage(64, 128, 2));
  layer3 = register_module("layer3", make_stage(128, 256, 2));
}

FeaturePyramid FeatureTrunkImpl::forward(torch::Tensor x) {
  check_input(x);
  x = torch::relu(bn1->forward(conv1->forward(x)));
  x = torch::max_pool2d(x, 3, 2, 1);
  auto f1 = layer1->forward(x);
  auto f2 = layer2->forward(f1);
  auto f3 = layer3->forward(f2);
  return {f1, f2, f3};
}

EncoderDecoderStudentImpl::EncoderDecoderStudentImpl() {
  conv1 = register_module(
      "conv1",
      torch::nn::Conv2d(torch::nn::Conv2dOptions(3, 64, 7).stride(2).padding(3).bias(false)));
  bn1 = register_module("bn1", torch::nn::BatchNorm2d(64));
  enc1 = register_module("enc1", make_stage(64, 64, 1));
  enc2 = register_module("enc2", make_stage(64, 128, 2));
  enc3 = register_module("enc3", make_stage(128, 256, 2));
  enc4 = register_module("enc4", make_stage(256, 512, 2));
  dec4 = register_module("dec4", BasicBlock(512, 512));
  dec3 = register_module("dec3", BasicBlock(512, 256));
  dec2 = register_module("dec2", BasicBlock(256, 128));
  dec1 = register_module("dec1", BasicBlock(128, 64));
}

FeaturePyramid EncoderDecoderStudentImpl::forward(torch::Tensor x) {
  check_input(x);
  x = torch::relu(bn1->forward(conv1->forward(x)));
  x = torch::max_pool2d(x, 3, 2, 1);
  x = enc4->forward(enc3->forward(enc2->forward(enc1->forward(x))));
  auto d4 = dec4->forward(x);            // 512 @ /32
  auto d3 = dec3->forward(up2(d4));      // 256 @ /16
  auto d2 = dec2->forward(up2(d3));      // 128 @ /8
  auto d1 = dec1->forward(up2(d2));      // 64  @ /4
  return {d1, d2, d3};
}

StudentNet StudentNet::encoder_decoder() {
  StudentNet s;
  s.ed_ = EncoderDecoderStudent();
  s.module_ = s.ed_.ptr();
  return s;
}

StudentNet StudentNet::vanilla() {
  StudentNet s;
  s.trunk_ = FeatureTrunk();
  s.module_ = s.trunk_.ptr();
  return s;
}

FeaturePyramid StudentNet::forward(torch::Tensor x) {
  return ed_ ? ed_->forward(x) : trunk_->forward(x);
}

TeacherNet::TeacherNet(uint64_t init_seed) {
  torch::manual_seed(init_seed);
  trunk_ = FeatureTrunk();
  for (auto& p : trunk_->parameters()) p.set_requires_grad(false);
  trunk_->eval();
}

FeaturePyramid TeacherNet::forward(const torch::Tensor& x) {
  torch::NoGradGuard no_grad;
  trunk_->eval();
  return trunk_->forward(x);
}

TeacherNet load_pretrained_teacher(const std::string& path) {
  TeacherNet t;
  load_checkpoint(*t.module(), path, "", /*force=*/true);
  t.module()->eval();
  return t;
}

torch::Tensor normalize_input(const torch::Tensor& image) {
  static const auto mean = torch::tensor({0.485f, 0.456f, 0.406f}).view({1, 3, 1, 1});
  static const auto stdv = torch::tensor({0.229f, 0.224f, 0.225f}).view({1, 3, 1, 1});
  if (image.dim() == 3) return ((image.unsqueeze(0) - mean) / stdv).squeeze(0);
  return (image - mean) / stdv;
}

namespace {

std::map<std::string, torch::Tensor> named_state(const torch::nn::Module& module) {
  std::map<std::string, torch::Tensor> state;
  for (const auto& p : module.named_parameters()) state["p/" + p.key()] = p.value();
  for (const auto& b : module.named_buffers()) state["b/" + b.key()] = b.value();
  return state;
}

}  // namespace

void save_checkpoint(const torch::nn::Module& module, const std::string& path,
                     const std::string& config_hash) {
  torch::serialize::OutputArchive ar;
  std::string keys;
  for (const auto& [name, tensor] : named_state(module)) {
    ar.write(name, tensor.detach().cpu());
    keys += name;
    keys += '\n';
  }
  ar.write("__keys__", torch::IValue(keys));
  ar.write("__config_hash__", torch::IValue(config_hash));
  ar.save_to(path);
}

void load_checkpoint(torch::nn::Module& module, const std::string& path,
                     const std::string& expected_hash, bool force) {
  torch::serialize::InputArchive ar;
  try {
    ar.load_from(path);
  } catch (const std::exception& e) {
    throw std::runtime_error("cannot load checkpoint '" + path + "': " + e.what());
  }

  torch::IValue hash_iv;
  if (!ar.try_read("__config_hash__", hash_iv))
    throw std::runtime_error("checkpoint '" + path + "' has no embedded config hash");
  std::string stored_hash = hash_iv.toStringRef();
  if (!force && !expected_hash.empty() && stored_hash != expected_hash)
    throw std::runtime_error("checkpoint '" + path + "' config hash mismatch: stored " +
                             stored_hash + ", expected " + expected_hash +
                             " (pass force to override)");

  torch::IValue keys_iv;
  if (!ar.try_read("__keys__", keys_iv))
    throw std::runtime_error("checkpoint '" + path + "' has no key index");
  std::set<std::string> stored_keys;
  {
    std::istringstream in(keys_iv.toStringRef());
    std::string k;
    while (std::getline(in, k))
      if (!k.empty()) stored_keys.insert(k);
  }

  auto state = named_state(module);
  std::vector<std::string> problems;
  for (const auto& [name, tensor] : state)
    if (!stored_keys.count(name)) problems.push_back("missing in checkpoint: " + name);
  for (const auto& name : stored_keys)
    if (!state.count(name)) problems.push_back("unexpected in checkpoint: " + name);

  torch::NoGradGuard no_grad;
  for (auto& [name, tensor] : state) {
    if (!stored_keys.count(name)) continue;
    torch::Tensor loaded;
    ar.read(name, loaded);
    if (loaded.sizes() != tensor.sizes()) {
      std::ostringstream os;
      os << "shape mismatch for " << name << ": checkpoint " << loaded.sizes() << ", model "
         << tensor.sizes();
      problems.push_back(os.str());
      continue;
    }
    tensor.copy_(loaded);
  }
  if (!problems.empty()) {
    std::string msg = "checkpoint '" + path + "' does not match the model:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw std::runtime_error(msg);
  }
}

std::string checkpoint_config_hash(const std::string& path) {
  torch::serialize::InputArchive ar;
  ar.load_from(path);
  torch::IValue hash_iv;
  if (!ar.try_read("__config_hash__", hash_iv))
    throw std::runtime_error("checkpoint '" + path + "' has no embedded config hash");
  return hash_iv.toStringRef();
}

double parameter_checksum(const torch::nn::Module& module) {
  torch::NoGradGuard no_grad;
  double sum = 0;
  for (const auto& p : module.parameters()) sum += p.detach().to(torch::kFloat64).sum().item<double>();
  for (const auto& b : module.buffers())
    if (b.is_floating_point()) sum += b.detach().to(torch::kFloat64).sum().item<double>();
  return sum;
}

}  // namespace anoseg
