#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

#include "spcnet/spcnet.hpp"

namespace fs = std::filesystem;
using namespace spc;

namespace {

PCKConfig parse_metric(const std::string& spec) {
  auto at = spec.find('@');
  const std::string name = spec.substr(0, at);
  const double thr = at == std::string::npos ? -1.0 : std::stod(spec.substr(at + 1));
  if (name == "pckh") return PCKConfig::pckh(thr > 0 ? thr : 0.5);
  if (name == "pck") return PCKConfig::pck(thr > 0 ? thr : 0.2);
  throw DataError("unknown metric '" + spec + "', expected pckh@T or pck@T");
}

ToolkitConfig config_from_checkpoint(const std::string& ckpt_path) {
  nlohmann::json meta = load_checkpoint_sidecar(ckpt_path);
  const std::string text = meta.value("config_text", "");
  SPC_CHECK_DATA(!text.empty(), "checkpoint sidecar has no config_text: ", ckpt_path);
  return config_from_kv(KeyValueConfig::parse_text(text));
}

void print_report(const EvalReport& report) {
  std::cout << to_string(report.variant) << "@" << report.threshold << " over "
            << report.sample_count << " samples\n";
  for (const auto& [name, score] : report.per_group) std::cout << name << "\t";
  std::cout << "Total\n";
  for (const auto& [name, score] : report.per_group)
    std::cout << std::fixed << std::setprecision(1) << score * 100.0 << "\t";
  std::cout << std::fixed << std::setprecision(1) << report.total * 100.0 << "\n";
}

int cmd_train(const std::string& config_path, const std::string& resume) {
  ToolkitConfig cfg = load_toolkit_config(config_path);
  SPC_CHECK_DATA(!cfg.annotations.empty(), "config is missing data.annotations");
  Dataset data = load_dataset(cfg.annotations, cfg.image_root);
  std::cout << "loaded " << data.records.size() << " records ("
            << data.split_indices(Split::Train).size() << " train / "
            << data.split_indices(Split::Val).size() << " val)\n";

  Model<float> model(cfg.model, cfg.seed, cfg.schedule.rmsprop_alpha, cfg.schedule.rmsprop_eps);
  std::cout << "model: " << model.params.scalar_count() << " parameters, "
            << cfg.model.stack_count << " stacks\n";

  FitOptions opts;
  opts.seed = cfg.seed;
  opts.log_interval = cfg.log_interval;
  opts.max_steps = cfg.max_steps;
  opts.checkpoint_dir = cfg.out_dir;
  opts.log_path = (fs::path(cfg.out_dir) / "train_log.jsonl").string();
  opts.augment = cfg.augment;
  opts.norm = cfg.norm;
  opts.val_metric = cfg.metric;
  opts.joints = cfg.joints;
  opts.supervise_occluded = cfg.supervise_occluded;
  opts.config_text = model_config_text(cfg.model);
  fs::create_directories(cfg.out_dir);

  TrainState state;
  if (!resume.empty()) {
    state = load_checkpoint(resume, model.params, model.buffers, &model.opt,
                            opts.config_text);
    std::cout << "resumed from " << resume << " at epoch " << state.epoch << ", step "
              << state.global_step << "\n";
  }

  FitHooks hooks;
  hooks.on_log = [](const nlohmann::json& e) {
    std::cout << "step " << e["step"] << " epoch " << e["epoch"] << " lr " << e["lr"]
              << " loss " << e["loss_smoothed"] << "\n";
  };
  hooks.on_epoch_end = [](const TrainState& st, double val_pck) {
    std::cout << "epoch " << st.epoch << " done, val " << std::fixed << std::setprecision(3)
              << val_pck * 100.0 << " (best " << st.best_metric * 100.0 << ")\n";
  };

  state = fit(model, data, cfg.schedule, opts, hooks, state);
  std::cout << "training finished at step " << state.global_step << ", best val "
            << state.best_metric * 100.0 << "\n";
  return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& ann, const std::string& image_root,
             const std::string& metric_spec, bool flip, bool multiscale,
             const std::string& out_dir) {
  ToolkitConfig cfg = config_from_checkpoint(ckpt);
  Model<float> model(cfg.model, 0);
  load_checkpoint(ckpt, model.params, model.buffers, nullptr, model_config_text(cfg.model));
  Dataset data = load_dataset(ann, image_root);

  std::vector<int> indices(data.records.size());
  std::iota(indices.begin(), indices.end(), 0);
  PCKConfig metric = parse_metric(metric_spec);
  const std::vector<double> pyramid = multiscale ? default_pyramid_scales() : std::vector<double>{};
  EvalReport report = evaluate_dataset(model.net, data, indices, cfg.norm, cfg.joints, metric,
                                       flip, pyramid);
  print_report(report);
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    emit_report(report, ReportFormat::Csv, (fs::path(out_dir) / "report.csv").string());
    emit_report(report, ReportFormat::Markdown, (fs::path(out_dir) / "report.md").string());
    std::cout << "wrote " << (fs::path(out_dir) / "report.csv").string() << "\n";
  }
  return 0;
}

int cmd_infer(const std::string& ckpt, const std::string& image_path,
              const std::string& out_dir, std::vector<double> center, double scale) {
  ToolkitConfig cfg = config_from_checkpoint(ckpt);
  Model<float> model(cfg.model, 0);
  load_checkpoint(ckpt, model.params, model.buffers, nullptr, model_config_text(cfg.model));

  cv::Mat image = load_image(image_path);
  Point2 c = center.size() == 2 ? Point2{center[0], center[1]}
                                : Point2{image.cols / 2.0, image.rows / 2.0};
  const double s = scale > 0 ? scale : image.rows / 200.0;
  CropTransform t = build_crop_transform(c, s, {}, cfg.model.codec.input_size);
  Tensor<float> crop = tensor_from_mat<float>(warp_to_crop(image, t), cfg.norm);
  auto [kps, hm] = infer_single(model.net, crop, t);

  fs::create_directories(out_dir);
  render_heatmap_overlay(image, hm, kps, cfg.joints,
                         (fs::path(out_dir) / "overlay.png").string());
  nlohmann::json out;
  out["image"] = image_path;
  auto& arr = out["keypoints"] = nlohmann::json::array();
  for (int j = 0; j < kps.size(); ++j) {
    if (kps.absent(j))
      arr.push_back(nullptr);
    else
      arr.push_back({kps.coords[size_t(j)].x, kps.coords[size_t(j)].y});
  }
  std::ofstream jout(fs::path(out_dir) / "keypoints.json");
  jout << out.dump(2) << "\n";
  if (const auto* weights = model.net.last_fusion_weights(); weights && weights->numel() > 0)
    export_fusion_weight_maps(*weights, (fs::path(out_dir) / "fusion_weights").string());
  std::cout << "wrote " << (fs::path(out_dir) / "overlay.png").string() << "\n";
  return 0;
}

int cmd_synth(int count, int val_count, uint64_t seed, const std::string& out_dir, int size) {
  SyntheticSceneSpec spec;
  spec.canvas_size = size;
  spec.split = Split::Train;
  std::vector<AnnotationRecord> records;
  {
    // train and val records drawn from disjoint substreams
    std::vector<AnnotationRecord> train;
    for (int i = 0; i < count; ++i) {
      Rng rng(substream_seed(seed, uint64_t(i)));
      SyntheticScene scene = sample_synthetic_scene(spec, rng);
      char name[32];
      std::snprintf(name, sizeof(name), "imgs/%06d.png", i);
      scene.record.image_ref = name;
      fs::create_directories(fs::path(out_dir) / "imgs");
      save_image((fs::path(out_dir) / name).string(), scene.image);
      records.push_back(scene.record);
    }
    spec.split = Split::Val;
    for (int i = 0; i < val_count; ++i) {
      Rng rng(substream_seed(seed ^ 0x7a1u, uint64_t(i)));
      SyntheticScene scene = sample_synthetic_scene(spec, rng);
      char name[32];
      std::snprintf(name, sizeof(name), "imgs/val%06d.png", i);
      scene.record.image_ref = name;
      save_image((fs::path(out_dir) / name).string(), scene.image);
      records.push_back(scene.record);
    }
  }
  save_annotations((fs::path(out_dir) / "annotations.json").string(), records);
  std::cout << "wrote " << records.size() << " records to " << out_dir << "\n";
  return 0;
}

int cmd_curves(const std::string& ckpt, const std::string& ann, const std::string& image_root,
               const std::string& out_dir, const std::string& metric_spec) {
  ToolkitConfig cfg = config_from_checkpoint(ckpt);
  Model<float> model(cfg.model, 0);
  load_checkpoint(ckpt, model.params, model.buffers, nullptr, model_config_text(cfg.model));
  Dataset data = load_dataset(ann, image_root);
  std::vector<int> indices(data.records.size());
  std::iota(indices.begin(), indices.end(), 0);

  std::vector<KeypointSet> preds =
      predict_dataset(model.net, data, indices, cfg.norm, cfg.joints);
  PCKConfig metric = parse_metric(metric_spec);
  std::vector<double> thresholds;
  for (int i = 1; i <= 10; ++i) thresholds.push_back(0.05 * i);
  std::vector<EvalReport> rows = pck_curve(preds, data.records, metric, thresholds);

  fs::create_directories(out_dir);
  emit_curve_csv(rows, (fs::path(out_dir) / "pck_curve.csv").string());

  // simple line plot, one polyline per group plus the total
  const int W = 640, H = 480, ml = 60, mb = 40;
  cv::Mat plot(H, W, CV_8UC3, cv::Scalar(255, 255, 255));
  cv::line(plot, {ml, H - mb}, {W - 10, H - mb}, cv::Scalar(0, 0, 0), 1);
  cv::line(plot, {ml, H - mb}, {ml, 10}, cv::Scalar(0, 0, 0), 1);
  auto px = [&](double thr, double score) {
    const double x = ml + (thr - rows.front().threshold) /
                              (rows.back().threshold - rows.front().threshold) * (W - 10 - ml);
    const double y = (H - mb) - score * (H - mb - 10);
    return cv::Point(int(x), int(y));
  };
  const size_t series = rows[0].per_group.size() + 1;
  for (size_t g = 0; g < series; ++g) {
    cv::Scalar color = g + 1 == series
                           ? cv::Scalar(0, 0, 0)
                           : cv::Scalar(40 * (int(g) + 1) % 256, (90 * (int(g) + 2)) % 256,
                                        (150 * (int(g) + 1)) % 256);
    for (size_t i = 1; i < rows.size(); ++i) {
      auto score = [&](const EvalReport& r) {
        return g + 1 == series ? r.total : r.per_group[g].second;
      };
      cv::line(plot, px(rows[i - 1].threshold, score(rows[i - 1])),
               px(rows[i].threshold, score(rows[i])), color, g + 1 == series ? 2 : 1,
               cv::LINE_AA);
    }
    const std::string label = g + 1 == series ? "Total" : rows[0].per_group[g].first;
    cv::putText(plot, label, cv::Point(ml + 8, 24 + 16 * int(g)), cv::FONT_HERSHEY_SIMPLEX,
                0.45, color, 1, cv::LINE_AA);
  }
  save_image((fs::path(out_dir) / "pck_curve.png").string(), plot);
  std::cout << "wrote " << (fs::path(out_dir) / "pck_curve.csv").string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SPCNet pose estimation toolkit"};
  app.require_subcommand(1);

  std::string config_path, resume, ckpt, ann, image_root, image_path, metric = "pckh@0.5";
  std::string out_dir = "out";
  bool flip = false, multiscale = false;
  int count = 16, val_count = 0, size = 256;
  uint64_t seed = 0;
  std::vector<double> center;
  double scale = -1;

  auto* train = app.add_subcommand("train", "train a model from a config file");
  train->add_option("--config", config_path, "key=value config file")->required();
  train->add_option("--resume", resume, "checkpoint to resume from");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on an annotation file");
  eval->add_option("--ckpt", ckpt, "checkpoint file")->required();
  eval->add_option("--ann", ann, "annotation json")->required();
  eval->add_option("--image-root", image_root, "image directory root");
  eval->add_option("--metric", metric, "pckh@0.5 or pck@0.2");
  eval->add_flag("--flip", flip, "flip ensembling");
  eval->add_flag("--multiscale", multiscale, "six-scale pyramid ensembling");
  eval->add_option("--out", out_dir, "report directory");

  auto* infer = app.add_subcommand("infer", "run one image and write the overlay");
  infer->add_option("--ckpt", ckpt, "checkpoint file")->required();
  infer->add_option("--image", image_path, "input image")->required();
  infer->add_option("--out", out_dir, "output directory")->required();
  infer->add_option("--center", center, "crop center x,y (default image center)")->expected(2);
  infer->add_option("--scale", scale, "person scale (default rows/200)");

  auto* synth = app.add_subcommand("synth-data", "generate a synthetic stick-figure dataset");
  synth->add_option("--count", count, "number of training scenes")->required();
  synth->add_option("--seed", seed, "rng seed")->required();
  synth->add_option("--out", out_dir, "output directory")->required();
  synth->add_option("--val-count", val_count, "additional validation scenes");
  synth->add_option("--size", size, "canvas size in pixels");

  auto* curves = app.add_subcommand("plot-curves", "PCK threshold curves for a checkpoint");
  curves->add_option("--ckpt", ckpt, "checkpoint file")->required();
  curves->add_option("--ann", ann, "annotation json")->required();
  curves->add_option("--image-root", image_root, "image directory root");
  curves->add_option("--metric", metric, "metric family for the sweep");
  curves->add_option("--out", out_dir, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help() << "\n";
    return 2;
  }

  try {
    if (*train) return cmd_train(config_path, resume);
    if (*eval) return cmd_eval(ckpt, ann, image_root, metric, flip, multiscale, out_dir);
    if (*infer) return cmd_infer(ckpt, image_path, out_dir, center, scale);
    if (*synth) return cmd_synth(count, val_count, seed, out_dir, size);
    if (*curves) return cmd_curves(ckpt, ann, image_root, out_dir, metric);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
