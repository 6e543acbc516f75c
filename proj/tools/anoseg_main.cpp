#include <CLI11.hpp>

#include <nlohmann/json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>

#include "anoseg/config.hpp"
#include "anoseg/data.hpp"
#include "anoseg/image_io.hpp"
#include "anoseg/infer.hpp"
#include "anoseg/metrics.hpp"
#include "anoseg/synth.hpp"
#include "anoseg/trainer.hpp"

namespace fs = std::filesystem;
using namespace anoseg;

namespace {

// Exit codes: 0 ok, 1 unknown flag / CLI parse error, 2 invalid config,
// 3 missing path or data error, 4 internal failure.
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitInternal = 4;

struct CommonOpts {
  std::string config_path;
  std::vector<std::string> overrides;
  int64_t seed = -1;
};

Config load_config(const CommonOpts& c) {
  Config cfg = c.config_path.empty() ? Config() : Config::load(c.config_path);
  if (const char* env_root = std::getenv("ANOSEG_DATA_ROOT"); env_root && !cfg.has("data_root"))
    cfg.set("data_root", env_root);
  for (const auto& kv : c.overrides) {
    auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (c.seed >= 0) cfg.set("seed", std::to_string(c.seed));
  return cfg;
}

void add_common(CLI::App* app, CommonOpts& c) {
  app->add_option("--config", c.config_path, "flat key=value config file");
  app->add_option("--set", c.overrides, "config override key=value (repeatable)");
  app->add_option("--seed", c.seed, "override the run seed");
}

CategoryDataset load_dataset(const TrainConfig& tc, const std::string& category) {
  if (tc.data_root.empty()) throw ConfigError("data_root not set (config or ANOSEG_DATA_ROOT)");
  return load_mvtec_layout(tc.data_root, category);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"anoseg: anomaly detection and localization toolkit"};
  app.require_subcommand(1);

  CommonOpts common;

  // synth-preview
  auto* sp_cmd = app.add_subcommand("synth-preview", "compose and save synthetic anomaly triplets");
  std::string sp_out = "preview";
  int64_t sp_count = 4;
  std::string sp_category = "desk";
  add_common(sp_cmd, common);
  sp_cmd->add_option("--out", sp_out, "output directory");
  sp_cmd->add_option("--count", sp_count, "number of triplets");
  sp_cmd->add_option("--category", sp_category, "dataset category");

  // generate-corpus
  auto* gc_cmd = app.add_subcommand("generate-corpus", "write a procedural desk-scale corpus");
  std::string gc_out = "desk_corpus";
  DeskCorpusParams gc_params;
  add_common(gc_cmd, common);
  gc_cmd->add_option("--out", gc_out, "output root directory");
  gc_cmd->add_option("--n-train", gc_params.n_train, "training normals");
  gc_cmd->add_option("--n-test", gc_params.n_test, "test images (half anomalous)");
  gc_cmd->add_option("--size", gc_params.size, "image side length");

  // train
  auto* tr_cmd = app.add_subcommand("train", "two-step training");
  std::string tr_stage = "both";
  std::string tr_category = "desk";
  add_common(tr_cmd, common);
  tr_cmd->add_option("--stage", tr_stage, "student | seg | both")
      ->check(CLI::IsMember({"student", "seg", "both"}));
  tr_cmd->add_option("--category", tr_category, "dataset category");

  // infer
  auto* in_cmd = app.add_subcommand("infer", "predict anomaly maps for a test split");
  std::string in_run, in_out = "preds", in_category = "desk";
  bool in_force = false;
  add_common(in_cmd, common);
  in_cmd->add_option("--run", in_run, "run directory (defaults to runs/<config hash>)");
  in_cmd->add_option("--out", in_out, "output directory");
  in_cmd->add_option("--category", in_category, "dataset category");
  in_cmd->add_flag("--force", in_force, "ignore checkpoint config-hash mismatch");

  // evaluate
  auto* ev_cmd = app.add_subcommand("evaluate", "score prediction maps against ground truth");
  std::string ev_pred, ev_gt, ev_out = "report";
  add_common(ev_cmd, common);
  ev_cmd->add_option("--pred", ev_pred, "directory of 16-bit prediction PNGs")->required();
  ev_cmd->add_option("--gt", ev_gt, "ground-truth mask directory")->required();
  ev_cmd->add_option("--out", ev_out, "report output directory");

  // ablate
  auto* ab_cmd = app.add_subcommand("ablate", "run the den/ed/seg ablation grid");
  std::string ab_grid = "table4", ab_out = "ablation.csv", ab_category = "desk";
  add_common(ab_cmd, common);
  ab_cmd->add_option("--grid", ab_grid, "grid name")->check(CLI::IsMember({"table4"}));
  ab_cmd->add_option("--out", ab_out, "output CSV path");
  ab_cmd->add_option("--category", ab_category, "dataset category");

  // report
  auto* rp_cmd = app.add_subcommand("report", "render a metrics JSON report as a table");
  std::string rp_in;
  add_common(rp_cmd, common);
  rp_cmd->add_option("--in", rp_in, "report.json produced by evaluate")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    Config cfg = load_config(common);
    TrainConfig tc = TrainConfig::from_config(cfg);
    std::cerr << "config hash " << tc.hash() << ", seed " << tc.seed << "\n";

    if (*sp_cmd) {
      auto data = load_dataset(tc, sp_category);
      SourcePool pool(tc.source_pool);
      SynthParams params;
      params.threshold = tc.perlin_threshold;
      params.area_min = tc.mask_area_min;
      params.area_max = tc.mask_area_max;
      params.retries = tc.mask_retries;
      std::mt19937_64 rng(tc.seed);
      std::uniform_int_distribution<size_t> pick(0, data.train_normals.size() - 1);
      fs::create_directories(sp_out);
      for (int64_t i = 0; i < sp_count; ++i) {
        auto normal = load_image_rgb(data.train_normals[pick(rng)], tc.image_size);
        auto s = synthesize(normal, pool, rng, params);
        auto tag = std::to_string(i);
        save_image_png(s.normal, sp_out + "/" + tag + "_normal.png");
        save_image_png(s.mask, sp_out + "/" + tag + "_mask.png");
        save_image_png(s.anomalous, sp_out + "/" + tag + "_anomalous.png");
      }
      std::cout << "wrote " << sp_count << " triplets to " << sp_out << "\n";
    } else if (*gc_cmd) {
      gc_params.seed = tc.seed;
      auto ds = generate_desk_corpus(gc_out, gc_params);
      std::cout << "corpus at " << gc_out << ": " << ds.train_normals.size() << " train, "
                << ds.test_items.size() << " test\n";
    } else if (*tr_cmd) {
      auto data = load_dataset(tc, tr_category);
      if (tr_stage == "student" || tr_stage == "both") {
        auto rec = train_student(tc, data);
        std::cout << "student: final loss " << rec.losses.back() << " -> " << rec.checkpoint
                  << "\n";
      }
      if (tr_stage == "seg" || tr_stage == "both") {
        if (!tc.seg) throw ConfigError("train --stage seg requested but config has seg=0");
        auto rec = train_segmentation(tc, data);
        std::cout << "seg: final loss " << rec.losses.back() << " -> " << rec.checkpoint << "\n";
      }
    } else if (*in_cmd) {
      auto data = load_dataset(tc, in_category);
      std::string run = in_run.empty() ? run_dir_for(tc) : in_run;
      auto det = Detector::load(tc, run, in_force);
      std::vector<std::string> paths;
      for (const auto& item : data.test_items) paths.push_back(item.path);
      run_inference(det, paths, in_out);
      std::cout << "wrote " << paths.size() << " maps to " << in_out << "\n";
    } else if (*ev_cmd) {
      EvalOptions opts;
      opts.top_t = tc.top_t;
      auto rep = evaluate_run(ev_pred, ev_gt, opts);
      fs::create_directories(ev_out);
      write_report_csv({rep}, ev_out + "/report.csv");
      write_report_json({rep}, ev_out + "/report.json");
      write_curve_svg(rep.roc_curve, "FPR", "TPR", ev_out + "/roc.svg");
      write_curve_svg(rep.pr_curve, "recall", "precision", ev_out + "/pr.svg");
      write_curve_svg(rep.iap_curve, "instance recall", "precision", ev_out + "/iap.svg");
      std::cout << "image AUC " << rep.image_auc << ", pixel AUC " << rep.pixel_auc
                << ", pixel AP " << rep.pixel_ap << ", IAP " << rep.iap << ", IAP@"
                << rep.k_percent << " " << rep.iap_at_k << "\n";
    } else if (*ab_cmd) {
      auto data = load_dataset(tc, ab_category);
      auto rows = run_ablation(tc, data);
      write_ablation_csv(rows, ab_out);
      std::cout << "wrote " << rows.size() << " rows to " << ab_out << "\n";
    } else if (*rp_cmd) {
      std::ifstream f(rp_in);
      if (!f) throw std::runtime_error("cannot open " + rp_in);
      auto j = nlohmann::json::parse(f);
      printf("%-12s %9s %9s %9s %9s %9s\n", "category", "img_auc", "pix_auc", "pix_ap", "iap",
             "iap@k");
      for (const auto& r : j)
        printf("%-12s %9.4f %9.4f %9.4f %9.4f %9.4f\n",
               r["category"].get<std::string>().c_str(), r["image_auc"].get<double>(),
               r["pixel_auc"].get<double>(), r["pixel_ap"].get<double>(), r["iap"].get<double>(),
               r["iap_at_k"].get<double>());
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid argument: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::runtime_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
  return 0;
}
