#pragma once

#include <filesystem>
#include <functional>

#include "spcnet/data/augment.hpp"
#include "spcnet/data/synthetic.hpp"
#include "spcnet/eval/metrics.hpp"
#include "spcnet/nn/spcnet.hpp"
#include "spcnet/train/checkpoint.hpp"
#include "spcnet/train/schedule.hpp"

namespace spc {

/// Records plus decoded images, index-aligned.
struct Dataset {
  std::vector<AnnotationRecord> records;
  std::vector<cv::Mat> images;

  std::vector<int> split_indices(Split split) const {
    std::vector<int> idx;
    for (size_t i = 0; i < records.size(); ++i)
      if (records[i].split == split) idx.push_back(int(i));
    return idx;
  }
};

inline Dataset load_dataset(const std::string& annotation_path, const std::string& image_root) {
  namespace fs = std::filesystem;
  Dataset data;
  data.records = load_annotations(annotation_path);
  data.images.reserve(data.records.size());
  for (const auto& rec : data.records)
    data.images.push_back(load_image((fs::path(image_root) / rec.image_ref).string()));
  return data;
}

/// Network plus its registered parameters and optimizer, wired together.
template <typename T = float>
struct Model {
  explicit Model(const SPCNetConfig& cfg, uint64_t init_seed = 0, double alpha = 0.99,
                 double eps = 1e-8)
      : net(cfg) {
    Rng rng(init_seed);
    net.init(rng);
    net.register_params(params);
    net.register_buffers(buffers);
    opt = RMSProp<T>(&params, alpha, eps);
  }
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  SPCNet<T> net;
  ParamRegistry<T> params, buffers;
  RMSProp<T> opt;
};

struct FitOptions {
  uint64_t seed = 0;
  int log_interval = 10;
  int64_t max_steps = 0;  // 0 = run the full schedule
  std::string checkpoint_dir;
  std::string log_path;
  AugmentConfig augment;
  NormalizeParams norm;
  PCKConfig val_metric = PCKConfig::pck(0.5);
  JointMap joints = JointMap::mpii16();
  bool supervise_occluded = true;
  std::string config_text;
};

struct FitHooks {
  std::function<void(const nlohmann::json&)> on_log;
  std::function<void(const TrainState&, double val_pck)> on_epoch_end;
};

/// Identity-augmentation inference over a record subset; predictions come
/// back in the image frame.
template <typename T = float>
std::vector<KeypointSet> predict_dataset(SPCNet<T>& net, const Dataset& data,
                                         const std::vector<int>& indices,
                                         const NormalizeParams& norm,
                                         const JointMap& joints, bool flip = false,
                                         const std::vector<double>& pyramid = {}) {
  const CodecConfig& codec = net.config().codec;
  std::vector<KeypointSet> preds;
  preds.reserve(indices.size());
  for (int i : indices) {
    const AnnotationRecord& rec = data.records[size_t(i)];
    CropTransform t = build_crop_transform(rec.center, rec.scale, {}, codec.input_size);
    Tensor<T> crop = tensor_from_mat<T>(warp_to_crop(data.images[size_t(i)], t), norm);
    Tensor<T> hm;
    if (!pyramid.empty())
      hm = infer_multiscale(net, crop, pyramid, flip, joints.flip_pairs);
    else if (flip)
      hm = infer_flip(net, crop, joints.flip_pairs);
    else
      hm = infer_heatmaps(net, crop);
    KeypointSet kps = decode_heatmaps(hm, codec);
    kps = to_crop_frame(kps, codec);
    preds.push_back(transform_keypoints(kps, t, MapDirection::Inverse, {}));
  }
  return preds;
}

template <typename T = float>
EvalReport evaluate_dataset(SPCNet<T>& net, const Dataset& data,
                            const std::vector<int>& indices, const NormalizeParams& norm,
                            const JointMap& joints, const PCKConfig& metric,
                            bool flip = false, const std::vector<double>& pyramid = {}) {
  std::vector<KeypointSet> preds = predict_dataset(net, data, indices, norm, joints, flip, pyramid);
  std::vector<AnnotationRecord> gts;
  gts.reserve(indices.size());
  for (int i : indices) gts.push_back(data.records[size_t(i)]);
  return pck_score(preds, gts, metric);
}

/// Epoch/batch loop: forward, squared-error loss over all heads, backward,
/// RMSProp step at the scheduled rate, per-epoch validation, checkpoint
/// hooks. Deterministic for a fixed seed and thread count; resuming from
/// epoch e replays the same per-epoch substreams.
template <typename T = float>
TrainState fit(Model<T>& model, const Dataset& data, const OptimizerSchedule& sched,
               const FitOptions& opts, const FitHooks& hooks = {}, TrainState state = {}) {
  sched.validate();
  const SPCNetConfig& cfg = model.net.config();
  const std::vector<int> train_idx = data.split_indices(Split::Train);
  const std::vector<int> val_idx = data.split_indices(Split::Val);
  SPC_CHECK_DATA(!train_idx.empty() || sched.total_epochs == state.epoch || sched.total_epochs == 0,
                 "fit: no training records");
  state.seed = opts.seed;

  std::ofstream log_out;
  if (!opts.log_path.empty()) {
    log_out.open(opts.log_path, state.global_step > 0 ? std::ios::app : std::ios::out);
    if (!log_out) throw IoError("cannot open training log: " + opts.log_path);
  }
  namespace fs = std::filesystem;
  if (!opts.checkpoint_dir.empty()) fs::create_directories(opts.checkpoint_dir);

  T window_loss = 0;
  int window_n = 0;
  bool stop = false;

  for (int epoch = state.epoch; epoch < sched.total_epochs && !stop; ++epoch) {
    const double lr = lr_at_epoch(sched, epoch);
    std::vector<int> order = train_idx;
    Rng shuffle_rng(substream_seed(opts.seed, uint64_t(epoch), 0x5u));
    for (size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[size_t(shuffle_rng.next_u64() % i)]);

    for (size_t pos = 0; pos < order.size() && !stop; pos += size_t(sched.batch_size)) {
      const int bsz = int(std::min(size_t(sched.batch_size), order.size() - pos));
      const int hm = cfg.codec.heatmap_size, in = cfg.codec.input_size;
      Tensor<T> images({bsz, 3, in, in});
      Tensor<T> targets({bsz, cfg.joint_count, hm, hm});
      std::vector<uint8_t> mask(size_t(bsz) * cfg.joint_count, 0);
      for (int b = 0; b < bsz; ++b) {
        const int rec_i = order[pos + size_t(b)];
        Rng aug_rng(substream_seed(opts.seed ^ 0xA06u, uint64_t(epoch), uint64_t(rec_i)));
        AugmentParams aug = sample_augment_params(aug_rng, opts.augment);
        TrainSample<T> sample =
            crop_and_augment<T>(data.images[size_t(rec_i)], data.records[size_t(rec_i)], aug,
                                cfg.codec, opts.joints, opts.norm, opts.supervise_occluded);
        std::copy(sample.image.data(), sample.image.data() + sample.image.numel(),
                  images.data() + int64_t(b) * sample.image.numel());
        std::copy(sample.target.data(), sample.target.data() + sample.target.numel(),
                  targets.data() + int64_t(b) * sample.target.numel());
        std::copy(sample.mask.begin(), sample.mask.end(),
                  mask.begin() + int64_t(b) * cfg.joint_count);
      }

      model.params.zero_grads();
      PredictionBundle<T> pred = model.net.forward(images, Context::train());
      LossReport<T> loss = compute_loss(pred, targets, mask);
      if (!std::isfinite(double(loss.total))) {
        std::ostringstream diag;
        diag << "fit: non-finite loss at step " << state.global_step << " (epoch " << epoch
             << ", lr " << lr << "); per-term:";
        for (T t : loss.per_term) diag << " " << t;
        throw NumericError(diag.str());
      }
      auto [d_inter, d_final] = compute_loss_grads(pred, targets, mask);
      model.net.backward(d_inter, d_final);
      model.opt.step(lr);
      ++state.global_step;
      window_loss += loss.total;
      ++window_n;

      if (opts.log_interval > 0 && state.global_step % opts.log_interval == 0) {
        nlohmann::json entry;
        entry["step"] = state.global_step;
        entry["epoch"] = epoch;
        entry["lr"] = lr;
        entry["loss"] = double(loss.total);
        entry["loss_smoothed"] = double(window_loss) / window_n;
        entry["loss_terms"] = std::vector<double>(loss.per_term.begin(), loss.per_term.end());
        window_loss = 0;
        window_n = 0;
        if (log_out) log_out << entry.dump() << "\n";
        if (hooks.on_log) hooks.on_log(entry);
      }
      if (opts.max_steps > 0 && state.global_step >= opts.max_steps) stop = true;
    }

    state.epoch = epoch + 1;
    double val_pck = state.best_metric;
    if (!val_idx.empty()) {
      EvalReport rep = evaluate_dataset(model.net, data, val_idx, opts.norm, opts.joints,
                                        opts.val_metric);
      val_pck = rep.total;
      if (val_pck >= state.best_metric) {
        state.best_metric = val_pck;
        if (!opts.checkpoint_dir.empty())
          save_checkpoint((fs::path(opts.checkpoint_dir) / "best.ckpt").string(), model.params,
                          model.buffers, &model.opt, state, opts.config_text);
      }
    }
    if (!opts.checkpoint_dir.empty())
      save_checkpoint((fs::path(opts.checkpoint_dir) / "last.ckpt").string(), model.params,
                      model.buffers, &model.opt, state, opts.config_text);
    if (hooks.on_epoch_end) hooks.on_epoch_end(state, val_pck);
  }
  return state;
}

}  // namespace spc
