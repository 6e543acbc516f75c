#include "anoseg/metrics.hpp"

#include "anoseg/image_io.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>

namespace fs = std::filesystem;

namespace anoseg {

namespace F = torch::nn::functional;

namespace {

constexpr double kBinaryFuzz = 1e-6;

void require_binary(const torch::Tensor& mask, const char* who) {
  auto m = mask.to(torch::kFloat64);
  bool ok = ((m - 0.0).abs().lt(kBinaryFuzz) | (m - 1.0).abs().lt(kBinaryFuzz)).all().item<bool>();
  if (!ok) throw std::invalid_argument(std::string(who) + ": mask is not binary");
}

struct Pooled {
  std::vector<float> scores;
  std::vector<uint8_t> labels;
  int64_t positives = 0;
};

Pooled pool_pixels(const std::vector<EvalPair>& pairs) {
  Pooled out;
  for (const auto& p : pairs) {
    if (p.prediction.sizes() != p.gt.sizes())
      throw std::invalid_argument("EvalPair: prediction/gt shape mismatch");
    auto pred = p.prediction.detach().to(torch::kFloat32).contiguous().view(-1);
    auto gt = p.gt.detach().to(torch::kFloat32).contiguous().view(-1);
    auto pa = pred.accessor<float, 1>();
    auto ga = gt.accessor<float, 1>();
    for (int64_t i = 0; i < pred.numel(); ++i) {
      out.scores.push_back(pa[i]);
      uint8_t lab = ga[i] > 0.5f ? 1 : 0;
      out.labels.push_back(lab);
      out.positives += lab;
    }
  }
  return out;
}

double ranked_auc(const std::vector<float>& scores, const std::vector<uint8_t>& labels) {
  const size_t n = scores.size();
  int64_t pos = std::accumulate(labels.begin(), labels.end(), int64_t(0));
  int64_t neg = static_cast<int64_t>(n) - pos;
  if (pos == 0 || neg == 0)
    throw std::invalid_argument("AUC needs both positive and negative samples");
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t(0));
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return scores[a] < scores[b]; });
  double pos_rank_sum = 0;
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    double avg_rank = 0.5 * (double(i + 1) + double(j));  // 1-based, tie averaged
    for (size_t t = i; t < j; ++t)
      if (labels[order[t]]) pos_rank_sum += avg_rank;
    i = j;
  }
  return (pos_rank_sum - 0.5 * double(pos) * double(pos + 1)) / (double(pos) * double(neg));
}

// Distinct-score groups in descending order; callback gets cumulative tp/fp
// after absorbing each group.
template <typename Fn>
void sweep_descending(const std::vector<float>& scores, const std::vector<uint8_t>& labels,
                      Fn&& fn) {
  const size_t n = scores.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t(0));
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return scores[a] > scores[b]; });
  int64_t tp = 0, fp = 0;
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    float v = scores[order[i]];
    while (j < n && scores[order[j]] == v) {
      if (labels[order[j]]) ++tp;
      else ++fp;
      ++j;
    }
    fn(v, tp, fp);
    i = j;
  }
}

}  // namespace

DownsampleMode parse_downsample_mode(const std::string& s) {
  if (s == "round") return DownsampleMode::Round;
  if (s == "floor") return DownsampleMode::Floor;
  if (s == "ceil") return DownsampleMode::Ceil;
  if (s == "nearest") return DownsampleMode::Nearest;
  throw std::invalid_argument("unknown downsample mode: '" + s + "'");
}

torch::Tensor downsample_gt(const torch::Tensor& mask, int64_t out_size, DownsampleMode mode) {
  if (mask.dim() != 2) throw std::invalid_argument("downsample_gt: expected HxW mask");
  require_binary(mask, "downsample_gt");
  auto m = mask.detach().to(torch::kFloat32);
  if (m.size(0) == out_size && m.size(1) == out_size) return (m > 0.5f).to(torch::kFloat32);

  if (mode == DownsampleMode::Nearest) {
    auto r = F::interpolate(m.unsqueeze(0).unsqueeze(0),
                            F::InterpolateFuncOptions()
                                .size(std::vector<int64_t>{out_size, out_size})
                                .mode(torch::kNearest))
                 .squeeze(0)
                 .squeeze(0);
    return (r > 0.5f).to(torch::kFloat32);
  }

  auto r = F::interpolate(m.unsqueeze(0).unsqueeze(0),
                          F::InterpolateFuncOptions()
                              .size(std::vector<int64_t>{out_size, out_size})
                              .mode(torch::kBilinear)
                              .align_corners(false))
               .squeeze(0)
               .squeeze(0);
  switch (mode) {
    case DownsampleMode::Round: return (r >= 0.5f).to(torch::kFloat32);
    case DownsampleMode::Floor: return (r >= 1.0f - kBinaryFuzz).to(torch::kFloat32);
    case DownsampleMode::Ceil: return (r > kBinaryFuzz).to(torch::kFloat32);
    default: break;
  }
  throw std::logic_error("unreachable");
}

double image_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size())
    throw std::invalid_argument("image_auc: scores/labels size mismatch");
  std::vector<float> s(scores.begin(), scores.end());
  std::vector<uint8_t> l(labels.begin(), labels.end());
  return ranked_auc(s, l);
}

PixelMetrics pixel_auc_ap(const std::vector<EvalPair>& pairs) {
  auto pooled = pool_pixels(pairs);
  PixelMetrics pm;
  pm.auc = ranked_auc(pooled.scores, pooled.labels);
  double ap = 0, prev_recall = 0;
  const double pos = double(pooled.positives);
  sweep_descending(pooled.scores, pooled.labels, [&](float, int64_t tp, int64_t fp) {
    double recall = tp / pos;
    double precision = double(tp) / double(tp + fp);
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
  });
  pm.ap = ap;
  return pm;
}

std::vector<InstanceRegion> connected_components(const torch::Tensor& mask, int adjacency) {
  if (mask.dim() != 2) throw std::invalid_argument("connected_components: expected HxW mask");
  if (adjacency != 4 && adjacency != 8)
    throw std::invalid_argument("connected_components: adjacency must be 4 or 8");
  require_binary(mask, "connected_components");
  const int64_t h = mask.size(0), w = mask.size(1);
  auto m = mask.detach().to(torch::kFloat32).contiguous();
  auto acc = m.accessor<float, 2>();
  std::vector<uint8_t> visited(h * w, 0);
  std::vector<InstanceRegion> regions;
  std::vector<int64_t> stack;
  for (int64_t y = 0; y < h; ++y) {
    for (int64_t x = 0; x < w; ++x) {
      int64_t idx = y * w + x;
      if (visited[idx] || acc[y][x] <= 0.5f) continue;
      InstanceRegion region;
      stack.assign(1, idx);
      visited[idx] = 1;
      while (!stack.empty()) {
        int64_t cur = stack.back();
        stack.pop_back();
        region.pixels.push_back(cur);
        int64_t cy = cur / w, cx = cur % w;
        for (int64_t dy = -1; dy <= 1; ++dy) {
          for (int64_t dx = -1; dx <= 1; ++dx) {
            if (dy == 0 && dx == 0) continue;
            if (adjacency == 4 && dy != 0 && dx != 0) continue;
            int64_t ny = cy + dy, nx = cx + dx;
            if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
            int64_t nidx = ny * w + nx;
            if (!visited[nidx] && acc[ny][nx] > 0.5f) {
              visited[nidx] = 1;
              stack.push_back(nidx);
            }
          }
        }
      }
      std::sort(region.pixels.begin(), region.pixels.end());
      regions.push_back(std::move(region));
    }
  }
  return regions;
}

IapResult instance_ap(const std::vector<EvalPair>& pairs, double k_percent, int adjacency) {
  // Per-region detection threshold: the (floor(size/2)+1)-th largest score
  // inside the region; the region counts as detected for any t <= that value.
  std::vector<float> detect_thresholds;
  for (const auto& p : pairs) {
    auto pred = p.prediction.detach().to(torch::kFloat32).contiguous().view(-1);
    auto pa = pred.accessor<float, 1>();
    for (const auto& region : connected_components(p.gt, adjacency)) {
      std::vector<float> vals;
      vals.reserve(region.pixels.size());
      for (int64_t idx : region.pixels) vals.push_back(pa[idx]);
      std::sort(vals.begin(), vals.end(), std::greater<float>());
      int64_t need = region.size() / 2;  // strictly more than half
      detect_thresholds.push_back(vals[need]);
    }
  }
  if (detect_thresholds.empty())
    throw std::invalid_argument("instance_ap: no ground-truth instances");
  std::sort(detect_thresholds.begin(), detect_thresholds.end(), std::greater<float>());

  auto pooled = pool_pixels(pairs);
  const double total = double(detect_thresholds.size());
  IapResult out;
  double prev_recall = 0;
  size_t detected = 0;
  sweep_descending(pooled.scores, pooled.labels, [&](float t, int64_t tp, int64_t fp) {
    while (detected < detect_thresholds.size() && detect_thresholds[detected] >= t) ++detected;
    double recall = double(detected) / total;
    double precision = double(tp) / double(tp + fp);
    out.curve.emplace_back(recall, precision);
    out.iap += (recall - prev_recall) * precision;
    prev_recall = recall;
    if (recall >= k_percent / 100.0) out.iap_at_k = std::max(out.iap_at_k, precision);
  });
  return out;
}

std::vector<std::pair<double, double>> pixel_roc_curve(const std::vector<EvalPair>& pairs) {
  auto pooled = pool_pixels(pairs);
  const double pos = double(pooled.positives);
  const double neg = double(pooled.scores.size()) - pos;
  std::vector<std::pair<double, double>> curve{{0, 0}};
  sweep_descending(pooled.scores, pooled.labels, [&](float, int64_t tp, int64_t fp) {
    curve.emplace_back(fp / neg, tp / pos);
  });
  return curve;
}

std::vector<std::pair<double, double>> pixel_pr_curve(const std::vector<EvalPair>& pairs) {
  auto pooled = pool_pixels(pairs);
  const double pos = double(pooled.positives);
  std::vector<std::pair<double, double>> curve;
  sweep_descending(pooled.scores, pooled.labels, [&](float, int64_t tp, int64_t fp) {
    curve.emplace_back(tp / pos, double(tp) / double(tp + fp));
  });
  return curve;
}

MetricsReport evaluate_run(const std::string& pred_dir, const std::string& gt_dir,
                           const EvalOptions& opts) {
  if (!fs::is_directory(pred_dir))
    throw std::runtime_error("prediction directory not found: " + pred_dir);
  std::vector<std::string> pred_files;
  for (const auto& e : fs::directory_iterator(pred_dir))
    if (e.is_regular_file() && e.path().extension() == ".png")
      pred_files.push_back(e.path().string());
  std::sort(pred_files.begin(), pred_files.end());
  if (pred_files.empty()) throw std::runtime_error("no prediction PNGs in " + pred_dir);

  // Index GT files by flattened relative stem so both flat directories and
  // MVTec-style ground_truth/<defect>/ trees pair up.
  std::map<std::string, std::string> gt_by_stem;
  if (fs::is_directory(gt_dir)) {
    for (const auto& e : fs::recursive_directory_iterator(gt_dir)) {
      if (!e.is_regular_file() || e.path().extension() != ".png") continue;
      std::string rel = fs::relative(e.path(), gt_dir).replace_extension().string();
      std::replace(rel.begin(), rel.end(), '/', '_');
      if (rel.size() > 5 && rel.substr(rel.size() - 5) == "_mask") rel.resize(rel.size() - 5);
      gt_by_stem[rel] = e.path().string();
    }
  }

  std::vector<EvalPair> pairs;
  std::vector<double> scores;
  std::vector<int> labels;
  for (const auto& f : pred_files) {
    auto pred = load_map_png16(f);
    std::string stem = fs::path(f).stem().string();
    torch::Tensor gt;
    if (auto it = gt_by_stem.find(stem); it != gt_by_stem.end()) gt = load_mask(it->second);
    if (gt.defined()) {
      gt = downsample_gt(gt, pred.size(0), opts.gt_mode);
    } else {
      gt = torch::zeros_like(pred);
    }
    bool anomalous = gt.sum().item<double>() > 0;
    int64_t t = std::min<int64_t>(opts.top_t, pred.numel());
    scores.push_back(std::get<0>(pred.view(-1).topk(t)).mean().item<double>());
    labels.push_back(anomalous ? 1 : 0);
    pairs.push_back({pred, gt});
  }

  MetricsReport rep;
  rep.category = fs::path(pred_dir).filename().string();
  rep.n_images = static_cast<int64_t>(pairs.size());
  rep.n_anomalous = std::accumulate(labels.begin(), labels.end(), int64_t(0));
  rep.k_percent = opts.k_percent;
  rep.image_auc = image_auc(scores, labels);
  auto pm = pixel_auc_ap(pairs);
  rep.pixel_auc = pm.auc;
  rep.pixel_ap = pm.ap;
  auto ir = instance_ap(pairs, opts.k_percent, opts.adjacency);
  rep.iap = ir.iap;
  rep.iap_at_k = ir.iap_at_k;
  rep.iap_curve = ir.curve;
  for (const auto& p : pairs)
    rep.n_instances += static_cast<int64_t>(connected_components(p.gt, opts.adjacency).size());
  rep.roc_curve = pixel_roc_curve(pairs);
  rep.pr_curve = pixel_pr_curve(pairs);
  return rep;
}

namespace {

std::string fmt(double v) {
  char buf[32];
  snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

}  // namespace

void write_report_csv(const std::vector<MetricsReport>& reports, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << "category,image_auc,pixel_auc,pixel_ap,iap,iap_at_k,n_images,n_anomalous,n_instances\n";
  MetricsReport avg;
  for (const auto& r : reports) {
    f << r.category << ',' << fmt(r.image_auc) << ',' << fmt(r.pixel_auc) << ',' << fmt(r.pixel_ap)
      << ',' << fmt(r.iap) << ',' << fmt(r.iap_at_k) << ',' << r.n_images << ',' << r.n_anomalous
      << ',' << r.n_instances << '\n';
    avg.image_auc += r.image_auc;
    avg.pixel_auc += r.pixel_auc;
    avg.pixel_ap += r.pixel_ap;
    avg.iap += r.iap;
    avg.iap_at_k += r.iap_at_k;
    avg.n_images += r.n_images;
    avg.n_anomalous += r.n_anomalous;
    avg.n_instances += r.n_instances;
  }
  const double n = double(reports.size());
  f << "average," << fmt(avg.image_auc / n) << ',' << fmt(avg.pixel_auc / n) << ','
    << fmt(avg.pixel_ap / n) << ',' << fmt(avg.iap / n) << ',' << fmt(avg.iap_at_k / n) << ','
    << avg.n_images << ',' << avg.n_anomalous << ',' << avg.n_instances << '\n';
}

void write_report_json(const std::vector<MetricsReport>& reports, const std::string& path) {
  nlohmann::ordered_json j = nlohmann::ordered_json::array();
  for (const auto& r : reports) {
    j.push_back({{"category", r.category},
                 {"image_auc", r.image_auc},
                 {"pixel_auc", r.pixel_auc},
                 {"pixel_ap", r.pixel_ap},
                 {"iap", r.iap},
                 {"iap_at_k", r.iap_at_k},
                 {"k_percent", r.k_percent},
                 {"n_images", r.n_images},
                 {"n_anomalous", r.n_anomalous},
                 {"n_instances", r.n_instances}});
  }
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << j.dump(2) << '\n';
}

void write_curve_svg(const std::vector<std::pair<double, double>>& curve,
                     const std::string& x_label, const std::string& y_label,
                     const std::string& path) {
  const int size = 440, margin = 40, plot = size - 2 * margin;
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << "<svg xmlns='http://www.w3.org/2000/svg' width='" << size << "' height='" << size << "'>\n";
  f << "<rect x='" << margin << "' y='" << margin << "' width='" << plot << "' height='" << plot
    << "' fill='white' stroke='black'/>\n";
  f << "<text x='" << size / 2 << "' y='" << size - 8 << "' text-anchor='middle'>" << x_label
    << "</text>\n";
  f << "<text x='12' y='" << size / 2 << "' text-anchor='middle' transform='rotate(-90 12 "
    << size / 2 << ")'>" << y_label << "</text>\n";
  f << "<polyline fill='none' stroke='steelblue' stroke-width='1.5' points='";
  for (const auto& [x, y] : curve) {
    double px = margin + x * plot;
    double py = size - margin - y * plot;
    f << px << ',' << py << ' ';
  }
  f << "'/>\n</svg>\n";
}

}  // namespace anoseg
