#include "anoseg/infer.hpp"

#include "anoseg/image_io.hpp"
#include "anoseg/losses.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>

namespace fs = std::filesystem;

namespace anoseg {

namespace F = torch::nn::functional;

double image_score(const torch::Tensor& full_map, int64_t top_t) {
  if (top_t < 1 || top_t > full_map.numel())
    throw std::invalid_argument("image_score: T out of range [1, " +
                                std::to_string(full_map.numel()) + "]");
  return std::get<0>(full_map.reshape(-1).topk(top_t)).mean().item<double>();
}

torch::Tensor empirical_fusion_score(const FeaturePyramid& teacher, const FeaturePyramid& student,
                                     int64_t input_size, const std::string& aggregate) {
  if (aggregate != "sum" && aggregate != "product")
    throw std::invalid_argument("empirical_fusion_score: aggregate must be sum or product");
  torch::Tensor acc;
  for (size_t k = 0; k < teacher.size(); ++k) {
    auto d = distance_map(similarity_map(teacher[k], student[k]));  // NxHkxWk
    d = F::interpolate(d.unsqueeze(1),
                       F::InterpolateFuncOptions()
                           .size(std::vector<int64_t>{input_size, input_size})
                           .mode(torch::kBilinear)
                           .align_corners(false))
            .squeeze(1);
    if (!acc.defined())
      acc = d;
    else
      acc = aggregate == "sum" ? acc + d : acc * d;
  }
  // per-image min-max normalization to [0,1]; a (near-)constant map carries
  // no signal, so it maps to zeros instead of amplified numeric noise
  auto flat = acc.reshape({acc.size(0), -1});
  auto mn = std::get<0>(flat.min(1)).reshape({-1, 1, 1});
  auto mx = std::get<0>(flat.max(1)).reshape({-1, 1, 1});
  auto range = mx - mn;
  auto norm = (acc - mn) / range.clamp_min(1e-12);
  return torch::where(range > 1e-6, norm, torch::zeros_like(norm));
}

Detector::Detector(TeacherNet teacher, StudentNet student, SegmentationHead head, TrainConfig cfg)
    : teacher_(std::move(teacher)), student_(std::move(student)), head_(std::move(head)),
      cfg_(std::move(cfg)) {}

Detector Detector::load(const TrainConfig& cfg, const std::string& run_dir, bool force) {
  std::string student_ckpt = run_dir + "/student.ckpt";
  if (!fs::exists(student_ckpt))
    throw std::runtime_error("missing checkpoint: " + student_ckpt);

  TeacherNet teacher = cfg.teacher_weights.empty() ? TeacherNet(cfg.seed)
                                                   : load_pretrained_teacher(cfg.teacher_weights);
  StudentNet student = cfg.ed ? StudentNet::encoder_decoder() : StudentNet::vanilla();
  load_checkpoint(*student.module(), student_ckpt, cfg.hash(), force);
  student.eval();

  SegmentationHead head{nullptr};
  if (cfg.seg) {
    std::string seg_ckpt = run_dir + "/seg.ckpt";
    if (!fs::exists(seg_ckpt)) throw std::runtime_error("missing checkpoint: " + seg_ckpt);
    head = SegmentationHead(fused_channels(cfg.fusion_mode));
    load_checkpoint(*head, seg_ckpt, cfg.hash(), force);
    head->eval();
  }
  return Detector(std::move(teacher), std::move(student), std::move(head), cfg);
}

torch::Tensor Detector::predict_map(const torch::Tensor& image) {
  torch::NoGradGuard no_grad;
  auto x = image.dim() == 3 ? image.unsqueeze(0) : image;
  const int64_t input_size = x.size(-1);
  student_.eval();
  auto xn = normalize_input(x);
  auto tp = teacher_.forward(xn);
  auto sp = student_.forward(xn);
  torch::Tensor maps;
  if (head_) {
    head_->eval();
    auto fused = build_fused_input(tp, sp, cfg_.fusion_mode);
    auto score = head_->forward(fused);  // N x H/4 x W/4
    maps = F::interpolate(score.unsqueeze(1),
                          F::InterpolateFuncOptions()
                              .size(std::vector<int64_t>{input_size, input_size})
                              .mode(torch::kBilinear)
                              .align_corners(false))
               .squeeze(1)
               .clamp(0, 1);
  } else {
    maps = empirical_fusion_score(tp, sp, input_size, cfg_.empirical_aggregate);
  }
  return maps;  // always N x H x W, N=1 for a single CHW input
}

PredictionResult Detector::predict(const torch::Tensor& image) {
  if (image.dim() != 3) throw std::invalid_argument("predict: expected a single CHW image");
  PredictionResult out;
  out.full_map = predict_map(image).squeeze(0);
  out.image_score = image_score(out.full_map, std::min<int64_t>(cfg_.top_t, out.full_map.numel()));
  return out;
}

void run_inference(Detector& det, const std::vector<std::string>& image_paths,
                   const std::string& out_dir) {
  fs::create_directories(out_dir);
  nlohmann::ordered_json records = nlohmann::ordered_json::array();
  for (const auto& path : image_paths) {
    auto img = load_image_rgb(path, det.config().image_size);
    auto res = det.predict(img);
    // Prefix with the defect directory so stems stay unique across subsets.
    std::string stem = fs::path(path).parent_path().filename().string() + "_" +
                       fs::path(path).stem().string();
    save_map_png16(res.full_map, out_dir + "/" + stem + ".png");
    records.push_back({{"path", path},
                       {"image_score", res.image_score},
                       {"T", det.config().top_t},
                       {"config_hash", det.config().hash()}});
  }
  std::ofstream f(out_dir + "/scores.json");
  if (!f) throw std::runtime_error("cannot write " + out_dir + "/scores.json");
  f << records.dump(2) << '\n';
}

}  // namespace anoseg
