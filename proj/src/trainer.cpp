#include "anoseg/trainer.hpp"

#include "anoseg/image_io.hpp"
#include "anoseg/losses.hpp"
#include "anoseg/synth.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

namespace fs = std::filesystem;

namespace anoseg {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::vector<torch::Tensor> load_train_images(const TrainConfig& cfg, const CategoryDataset& data) {
  if (data.train_normals.empty()) throw std::runtime_error("empty training set");
  std::vector<torch::Tensor> images;
  images.reserve(data.train_normals.size());
  for (const auto& p : data.train_normals) images.push_back(load_image_rgb(p, cfg.image_size));
  return images;
}

SynthParams synth_params(const TrainConfig& cfg) {
  SynthParams sp;
  sp.threshold = cfg.perlin_threshold;
  sp.area_min = cfg.mask_area_min;
  sp.area_max = cfg.mask_area_max;
  sp.retries = cfg.mask_retries;
  return sp;
}

double cosine_lr(double base, int64_t iter, int64_t total) {
  return base * 0.5 * (1.0 + std::cos(M_PI * double(iter) / double(total)));
}

void set_lr(torch::optim::SGD& opt, double lr) {
  for (auto& group : opt.param_groups())
    static_cast<torch::optim::SGDOptions&>(group.options()).lr(lr);
}

void check_finite(const torch::Tensor& loss, const char* phase, int64_t iter) {
  if (!std::isfinite(loss.item<double>()))
    throw std::runtime_error(std::string(phase) + ": non-finite loss at iteration " +
                             std::to_string(iter));
}

TeacherNet build_teacher(const TrainConfig& cfg) {
  return cfg.teacher_weights.empty() ? TeacherNet(cfg.seed)
                                     : load_pretrained_teacher(cfg.teacher_weights);
}

}  // namespace

std::string run_dir_for(const TrainConfig& cfg) { return cfg.ckpt_dir + "/" + cfg.hash(); }

void save_run_record(const RunRecord& record, const std::string& path) {
  nlohmann::ordered_json j{{"phase", record.phase},
                           {"config_hash", record.config_hash},
                           {"checkpoint", record.checkpoint},
                           {"wall_clock_sec", record.wall_clock_sec},
                           {"losses", record.losses}};
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << j.dump(2) << '\n';
}

RunRecord train_student(const TrainConfig& cfg, const CategoryDataset& data) {
  auto t0 = Clock::now();
  at::set_num_threads(static_cast<int>(cfg.num_threads));
  torch::manual_seed(cfg.seed);

  auto images = load_train_images(cfg, data);
  SourcePool pool(cfg.source_pool);
  auto sp = synth_params(cfg);
  std::mt19937_64 rng(cfg.seed ^ 0x5731u);
  std::uniform_int_distribution<size_t> pick(0, images.size() - 1);

  TeacherNet teacher = build_teacher(cfg);
  StudentNet student = cfg.ed ? StudentNet::encoder_decoder() : StudentNet::vanilla();
  student.train();

  torch::optim::SGD opt(student.module()->parameters(),
                        torch::optim::SGDOptions(cfg.lr_student).momentum(cfg.momentum));

  RunRecord rec;
  rec.phase = "student";
  rec.config_hash = cfg.hash();
  for (int64_t it = 0; it < cfg.step1_iters; ++it) {
    std::vector<torch::Tensor> clean, corrupted;
    for (int64_t b = 0; b < cfg.batch_size; ++b) {
      const auto& img = images[pick(rng)];
      clean.push_back(img);
      corrupted.push_back(cfg.den ? synthesize(img, pool, rng, sp).anomalous : img);
    }
    auto clean_batch = normalize_input(torch::stack(clean));
    auto student_batch = normalize_input(torch::stack(corrupted));

    auto teacher_pyr = teacher.forward(clean_batch);
    auto student_pyr = student.forward(student_batch);
    auto loss = distillation_loss(teacher_pyr, student_pyr);
    check_finite(loss, "train_student", it);

    set_lr(opt, cosine_lr(cfg.lr_student, it, cfg.step1_iters));
    opt.zero_grad();
    loss.backward();
    opt.step();
    rec.losses.push_back(loss.item<double>());
  }

  std::string dir = run_dir_for(cfg);
  fs::create_directories(dir);
  rec.checkpoint = dir + "/student.ckpt";
  save_checkpoint(*student.module(), rec.checkpoint, rec.config_hash);
  rec.wall_clock_sec = seconds_since(t0);
  save_run_record(rec, dir + "/run_student.json");
  return rec;
}

RunRecord train_segmentation(const TrainConfig& cfg, const CategoryDataset& data) {
  auto t0 = Clock::now();
  at::set_num_threads(static_cast<int>(cfg.num_threads));
  torch::manual_seed(cfg.seed + 1);

  auto images = load_train_images(cfg, data);
  SourcePool pool(cfg.source_pool);
  auto sp = synth_params(cfg);
  std::mt19937_64 rng(cfg.seed ^ 0x9e37u);
  std::uniform_int_distribution<size_t> pick(0, images.size() - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  std::string dir = run_dir_for(cfg);
  std::string student_ckpt = dir + "/student.ckpt";
  if (!fs::exists(student_ckpt))
    throw std::runtime_error("train_segmentation: student checkpoint not found: " + student_ckpt);

  TeacherNet teacher = build_teacher(cfg);
  StudentNet student = cfg.ed ? StudentNet::encoder_decoder() : StudentNet::vanilla();
  load_checkpoint(*student.module(), student_ckpt, cfg.hash());
  for (auto& p : student.module()->parameters()) p.set_requires_grad(false);
  student.eval();

  SegmentationHead head(fused_channels(cfg.fusion_mode));
  head->train();
  torch::optim::SGD opt(head->parameters(),
                        torch::optim::SGDOptions(cfg.lr_seg).momentum(cfg.momentum));

  const int64_t mask_size = cfg.image_size / 4;
  RunRecord rec;
  rec.phase = "seg";
  rec.config_hash = cfg.hash();
  for (int64_t it = 0; it < cfg.step2_iters; ++it) {
    std::vector<torch::Tensor> inputs, masks;
    for (int64_t b = 0; b < cfg.batch_size; ++b) {
      const auto& img = images[pick(rng)];
      if (unit(rng) < cfg.normal_sample_prob) {
        inputs.push_back(img);
        masks.push_back(torch::zeros({cfg.image_size, cfg.image_size}));
      } else {
        auto s = synthesize(img, pool, rng, sp);
        inputs.push_back(s.anomalous);
        masks.push_back(s.mask);
      }
    }
    auto batch = normalize_input(torch::stack(inputs));
    std::vector<torch::Tensor> small;
    for (auto& m : masks) small.push_back(downsample_gt(m, mask_size, DownsampleMode::Round));
    auto target = torch::stack(small);

    torch::Tensor fused;
    {
      torch::NoGradGuard no_grad;
      auto tp = teacher.forward(batch);
      auto spyr = student.forward(batch);
      fused = build_fused_input(tp, spyr, cfg.fusion_mode);
    }
    auto score = head->forward(fused);
    auto loss = segmentation_loss(score, target, cfg.gamma);
    check_finite(loss, "train_segmentation", it);

    set_lr(opt, cosine_lr(cfg.lr_seg, it, cfg.step2_iters));
    opt.zero_grad();
    loss.backward();
    opt.step();
    rec.losses.push_back(loss.item<double>());
  }

  rec.checkpoint = dir + "/seg.ckpt";
  save_checkpoint(*head, rec.checkpoint, rec.config_hash);
  rec.wall_clock_sec = seconds_since(t0);
  save_run_record(rec, dir + "/run_seg.json");
  return rec;
}

MetricsReport evaluate_detector(Detector& det, const CategoryDataset& data,
                                const EvalOptions& opts) {
  std::vector<EvalPair> pairs;
  std::vector<double> scores;
  std::vector<int> labels;
  const int64_t size = det.config().image_size;
  for (const auto& item : data.test_items) {
    auto img = load_image_rgb(item.path, size);
    auto res = det.predict(img);
    torch::Tensor gt = item.gt_path ? downsample_gt(load_mask(*item.gt_path), size, opts.gt_mode)
                                    : torch::zeros({size, size});
    pairs.push_back({res.full_map, gt});
    scores.push_back(res.image_score);
    labels.push_back(item.anomalous ? 1 : 0);
  }
  MetricsReport rep;
  rep.category = data.name;
  rep.n_images = static_cast<int64_t>(pairs.size());
  rep.k_percent = opts.k_percent;
  rep.image_auc = image_auc(scores, labels);
  auto pm = pixel_auc_ap(pairs);
  rep.pixel_auc = pm.auc;
  rep.pixel_ap = pm.ap;
  auto ir = instance_ap(pairs, opts.k_percent, opts.adjacency);
  rep.iap = ir.iap;
  rep.iap_at_k = ir.iap_at_k;
  rep.iap_curve = ir.curve;
  rep.roc_curve = pixel_roc_curve(pairs);
  rep.pr_curve = pixel_pr_curve(pairs);
  for (const auto& p : pairs) {
    if (p.gt.sum().item<double>() > 0) ++rep.n_anomalous;
    rep.n_instances += static_cast<int64_t>(connected_components(p.gt, opts.adjacency).size());
  }
  return rep;
}

std::vector<AblationRow> run_ablation(const TrainConfig& base, const CategoryDataset& data) {
  // Table-4 row order: (den, ed, seg) over the full grid.
  const bool grid[8][3] = {{false, false, false}, {true, false, false}, {false, true, false},
                           {false, false, true},  {true, true, false},  {true, false, true},
                           {false, true, true},   {true, true, true}};
  std::vector<AblationRow> rows;
  for (int i = 0; i < 8; ++i) {
    TrainConfig cfg = base;
    cfg.den = grid[i][0];
    cfg.ed = grid[i][1];
    cfg.seg = grid[i][2];

    train_student(cfg, data);
    if (cfg.seg) train_segmentation(cfg, data);
    auto det = Detector::load(cfg, run_dir_for(cfg));

    AblationRow row;
    row.exp = i + 1;
    row.den = cfg.den;
    row.ed = cfg.ed;
    row.seg = cfg.seg;
    row.config_hash = cfg.hash();
    row.uses_encoder_decoder = det.student().is_encoder_decoder();
    row.uses_seg_head = static_cast<bool>(det.head());
    EvalOptions opts;
    opts.top_t = cfg.top_t;
    auto rep = evaluate_detector(det, data, opts);
    row.image_auc = rep.image_auc;
    row.pixel_ap = rep.pixel_ap;
    row.iap = rep.iap;
    rows.push_back(row);
  }
  return rows;
}

void write_ablation_csv(const std::vector<AblationRow>& rows, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << "exp,den,ed,seg,config_hash,uses_encoder_decoder,uses_seg_head,image_auc,pixel_ap,iap\n";
  for (const auto& r : rows) {
    char buf[64];
    snprintf(buf, sizeof(buf), "%.6f,%.6f,%.6f", r.image_auc, r.pixel_ap, r.iap);
    f << r.exp << ',' << int(r.den) << ',' << int(r.ed) << ',' << int(r.seg) << ','
      << r.config_hash << ',' << int(r.uses_encoder_decoder) << ',' << int(r.uses_seg_head) << ','
      << buf << '\n';
  }
}

}  // namespace anoseg
