#include <gtest/gtest.h>

#include <filesystem>

#include "spcnet/config.hpp"
#include "spcnet/train/trainer.hpp"

using namespace spc;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
  static int counter = 0;
  fs::path p = fs::temp_directory_path() / ("spcnet_trainer_" + std::to_string(::getpid()) +
                                            "_" + std::to_string(counter++));
  fs::create_directories(p);
  return p;
}

SPCNetConfig tiny_model_config() {
  SPCNetConfig cfg;
  cfg.stack_count = 1;
  cfg.joint_count = 16;
  cfg.base_channels = 8;
  cfg.dilated_block_count = 1;
  cfg.codec.input_size = 64;
  cfg.codec.heatmap_size = 16;
  return cfg;
}

Dataset tiny_synthetic_dataset(int train_count, int val_count, uint64_t seed, int canvas) {
  SyntheticSceneSpec spec;
  spec.canvas_size = canvas;
  Dataset data;
  auto scenes = generate_synthetic_scenes(spec, train_count, seed);
  spec.split = Split::Val;
  auto val = generate_synthetic_scenes(spec, val_count, seed ^ 0x9e9eu);
  for (auto& s : val) scenes.push_back(s);
  for (auto& s : scenes) {
    data.records.push_back(s.record);
    data.images.push_back(s.image);
  }
  return data;
}

OptimizerSchedule tiny_schedule(int epochs, int batch, double lr = 5e-4) {
  OptimizerSchedule sched;
  sched.base_lr = lr;
  sched.milestones = {};
  sched.total_epochs = epochs;
  sched.batch_size = batch;
  return sched;
}

}  // namespace

TEST(Schedule, PaperLearningRates) {
  OptimizerSchedule sched;  // defaults: 1e-3, drops at 120 and 150, 170 epochs
  sched.validate();
  EXPECT_DOUBLE_EQ(lr_at_epoch(sched, 0), 1e-3);
  EXPECT_DOUBLE_EQ(lr_at_epoch(sched, 119), 1e-3);
  EXPECT_DOUBLE_EQ(lr_at_epoch(sched, 120), 1e-4);
  EXPECT_DOUBLE_EQ(lr_at_epoch(sched, 149), 1e-4);
  EXPECT_DOUBLE_EQ(lr_at_epoch(sched, 150), 1e-5);
  EXPECT_DOUBLE_EQ(lr_at_epoch(sched, 169), 1e-5);
}

TEST(Schedule, NonIncreasingWithExactlyOneDropPerMilestone) {
  OptimizerSchedule sched;
  int drops = 0;
  double prev = lr_at_epoch(sched, 0);
  for (int e = 1; e < sched.total_epochs; ++e) {
    const double lr = lr_at_epoch(sched, e);
    EXPECT_LE(lr, prev);
    if (lr < prev) ++drops;
    prev = lr;
  }
  EXPECT_EQ(drops, int(sched.milestones.size()));
}

TEST(Schedule, OutOfRangeEpochIsConfigError) {
  OptimizerSchedule sched;
  EXPECT_THROW(lr_at_epoch(sched, -1), ConfigError);
  EXPECT_THROW(lr_at_epoch(sched, 170), ConfigError);
}

TEST(Schedule, ValidationCatchesBadMilestones) {
  OptimizerSchedule sched;
  sched.milestones = {150, 120};
  EXPECT_THROW(sched.validate(), ConfigError);
  sched.milestones = {120, 200};
  EXPECT_THROW(sched.validate(), ConfigError);
  sched.milestones = {120};
  sched.decay_factor = 1.5;
  EXPECT_THROW(sched.validate(), ConfigError);
}

TEST(RMSProp, ZeroLearningRateLeavesParametersBitEqual) {
  SPCNetConfig cfg = tiny_model_config();
  Model<float> model(cfg, 3);
  std::vector<Tensor<float>> before;
  for (auto& e : model.params.entries()) before.push_back(*e.value);

  Rng rng(4);
  Tensor<float> img({2, 3, 64, 64});
  img.fill_uniform(rng, -1, 1);
  Tensor<float> target({2, 16, 16, 16});
  target.fill_uniform(rng, 0, 1);
  std::vector<uint8_t> mask(32, 1);
  model.params.zero_grads();
  PredictionBundle<float> pred = model.net.forward(img, Context::train());
  auto [di, df] = compute_loss_grads(pred, target, mask);
  model.net.backward(di, df);
  model.opt.step(0.0);

  auto& entries = model.params.entries();
  for (size_t i = 0; i < entries.size(); ++i)
    for (int64_t k = 0; k < entries[i].value->numel(); ++k)
      ASSERT_EQ((*entries[i].value)[k], before[i][k]);
}

TEST(RMSProp, SmallStepOnFixedBatchDecreasesLoss) {
  SPCNetConfig cfg = tiny_model_config();
  Model<double> model(cfg, 5);
  Rng rng(6);
  Tensor<double> img({2, 3, 64, 64});
  img.fill_uniform(rng, -1, 1);
  Tensor<double> target({2, 16, 16, 16});
  target.fill_uniform(rng, 0, 0.5);
  std::vector<uint8_t> mask(32, 1);

  model.params.zero_grads();
  PredictionBundle<double> pred = model.net.forward(img, Context::train());
  const double loss0 = compute_loss(pred, target, mask).total;
  auto [di, df] = compute_loss_grads(pred, target, mask);
  model.net.backward(di, df);
  model.opt.step(1e-5);
  PredictionBundle<double> pred1 = model.net.forward(img, Context::train());
  const double loss1 = compute_loss(pred1, target, mask).total;
  EXPECT_LT(loss1, loss0);
}

TEST(Fit, ZeroEpochsReturnsInitialStateUnchanged) {
  Model<float> model(tiny_model_config(), 7);
  std::vector<Tensor<float>> before;
  for (auto& e : model.params.entries()) before.push_back(*e.value);
  Dataset data = tiny_synthetic_dataset(2, 0, 8, 64);
  OptimizerSchedule sched = tiny_schedule(0, 2);
  FitOptions opts;
  TrainState state = fit(model, data, sched, opts);
  EXPECT_EQ(state.epoch, 0);
  EXPECT_EQ(state.global_step, 0);
  auto& entries = model.params.entries();
  for (size_t i = 0; i < entries.size(); ++i)
    for (int64_t k = 0; k < entries[i].value->numel(); ++k)
      ASSERT_EQ((*entries[i].value)[k], before[i][k]);
}

TEST(Fit, LossDecreasesOverFirstTenSmoothedIntervals) {
  // full-batch descent on the 16-scene overfit fixture
  Model<float> model(tiny_model_config(), 9);
  Dataset data = tiny_synthetic_dataset(16, 0, 10, 64);
  OptimizerSchedule sched = tiny_schedule(60, 16, 4e-4);
  FitOptions opts;
  opts.seed = 11;
  opts.augment.enabled = false;
  opts.log_interval = 5;
  opts.max_steps = 50;
  std::vector<double> smoothed;
  FitHooks hooks;
  hooks.on_log = [&](const nlohmann::json& e) {
    smoothed.push_back(e["loss_smoothed"].get<double>());
  };
  fit(model, data, sched, opts, hooks);
  ASSERT_GE(smoothed.size(), 10u);
  for (size_t i = 1; i < 10; ++i)
    EXPECT_LT(smoothed[i], smoothed[i - 1]) << "interval " << i;
}

TEST(Fit, FixedSeedReproducesTheLossCurve) {
  Dataset data = tiny_synthetic_dataset(6, 0, 12, 64);
  OptimizerSchedule sched = tiny_schedule(2, 3);
  auto run = [&]() {
    Model<float> model(tiny_model_config(), 13);
    FitOptions opts;
    opts.seed = 21;
    opts.log_interval = 1;
    std::vector<double> losses;
    FitHooks hooks;
    hooks.on_log = [&](const nlohmann::json& e) { losses.push_back(e["loss"].get<double>()); };
    fit(model, data, sched, opts, hooks);
    return losses;
  };
  auto a = run();
  auto b = run();
  ASSERT_EQ(a.size(), b.size());
  ASSERT_FALSE(a.empty());
  for (size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i], b[i]);
}

TEST(Fit, NanLossAbortsWithDiagnostic) {
  Model<float> model(tiny_model_config(), 15);
  // poisoning the final head puts the NaN on a rectifier-free path to the loss
  (*model.params.find("final_head.weight")->value)[0] =
      std::numeric_limits<float>::quiet_NaN();
  Dataset data = tiny_synthetic_dataset(2, 0, 16, 64);
  OptimizerSchedule sched = tiny_schedule(1, 2);
  FitOptions opts;
  try {
    fit(model, data, sched, opts);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("step"), std::string::npos);
    EXPECT_NE(what.find("lr"), std::string::npos);
  }
}

TEST(Checkpoint, SaveLoadRoundTripsBitExactly) {
  fs::path dir = temp_dir();
  SPCNetConfig cfg = tiny_model_config();
  Model<float> a(cfg, 17);
  const std::string text = model_config_text(cfg);
  TrainState st;
  st.epoch = 3;
  st.global_step = 123;
  st.best_metric = 0.75;
  st.seed = 99;
  // give the optimizer some state to round trip
  Rng rng(18);
  for (auto& ms : a.opt.state()) ms.fill_uniform(rng, 0, 1);
  const std::string path = (dir / "model.ckpt").string();
  save_checkpoint(path, a.params, a.buffers, &a.opt, st, text);

  Model<float> b(cfg, 19);  // different init
  TrainState loaded = load_checkpoint(path, b.params, b.buffers, &b.opt, text);
  EXPECT_EQ(loaded.epoch, 3);
  EXPECT_EQ(loaded.global_step, 123);
  EXPECT_DOUBLE_EQ(loaded.best_metric, 0.75);
  EXPECT_EQ(loaded.seed, 99u);
  auto& ea = a.params.entries();
  auto& eb = b.params.entries();
  for (size_t i = 0; i < ea.size(); ++i)
    for (int64_t k = 0; k < ea[i].value->numel(); ++k)
      ASSERT_EQ((*ea[i].value)[k], (*eb[i].value)[k]) << ea[i].name;
  for (size_t i = 0; i < a.opt.state().size(); ++i)
    for (int64_t k = 0; k < a.opt.state()[i].numel(); ++k)
      ASSERT_EQ(a.opt.state()[i][k], b.opt.state()[i][k]);
}

TEST(Checkpoint, ConfigMismatchRefusesWithDiff) {
  fs::path dir = temp_dir();
  SPCNetConfig cfg = tiny_model_config();
  Model<float> a(cfg, 21);
  const std::string path = (dir / "model.ckpt").string();
  save_checkpoint(path, a.params, a.buffers, nullptr, {}, model_config_text(cfg));

  SPCNetConfig other = cfg;
  other.joint_count = 12;
  Model<float> b(other, 22);
  try {
    load_checkpoint(path, b.params, b.buffers, nullptr, model_config_text(other));
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("model.joint_count"), std::string::npos);
    EXPECT_NE(what.find("16"), std::string::npos);
    EXPECT_NE(what.find("12"), std::string::npos);
  }
}

TEST(Checkpoint, ResumeReproducesTheUnbrokenRun) {
  Dataset data = tiny_synthetic_dataset(6, 0, 23, 64);
  OptimizerSchedule sched = tiny_schedule(4, 3);
  const SPCNetConfig cfg = tiny_model_config();
  const std::string text = model_config_text(cfg);

  // uninterrupted run, recording per-step losses
  std::vector<double> full_losses;
  Model<float> full(cfg, 25);
  {
    FitOptions opts;
    opts.seed = 31;
    opts.log_interval = 1;
    FitHooks hooks;
    hooks.on_log = [&](const nlohmann::json& e) {
      full_losses.push_back(e["loss"].get<double>());
    };
    fit(full, data, sched, opts, hooks);
  }

  // interrupted at epoch 2, checkpointed, resumed
  fs::path dir = temp_dir();
  const std::string path = (dir / "mid.ckpt").string();
  std::vector<double> resumed_losses;
  {
    Model<float> first(cfg, 25);
    OptimizerSchedule half = sched;
    half.total_epochs = 2;
    FitOptions opts;
    opts.seed = 31;
    opts.log_interval = 1;
    FitHooks hooks;
    hooks.on_log = [&](const nlohmann::json& e) {
      resumed_losses.push_back(e["loss"].get<double>());
    };
    TrainState st = fit(first, data, half, opts, hooks);
    save_checkpoint(path, first.params, first.buffers, &first.opt, st, text);
  }
  {
    Model<float> second(cfg, 999);  // init overwritten by the checkpoint
    TrainState st = load_checkpoint(path, second.params, second.buffers, &second.opt, text);
    EXPECT_EQ(st.epoch, 2);
    FitOptions opts;
    opts.seed = 31;
    opts.log_interval = 1;
    FitHooks hooks;
    hooks.on_log = [&](const nlohmann::json& e) {
      resumed_losses.push_back(e["loss"].get<double>());
    };
    fit(second, data, sched, opts, hooks, st);
  }
  ASSERT_EQ(full_losses.size(), resumed_losses.size());
  for (size_t i = 0; i < full_losses.size(); ++i)
    EXPECT_EQ(full_losses[i], resumed_losses[i]) << "step " << i;
}

TEST(Fit, ValidationTracksBestMetricAndWritesCheckpoints) {
  fs::path dir = temp_dir();
  Model<float> model(tiny_model_config(), 33);
  Dataset data = tiny_synthetic_dataset(4, 2, 34, 64);
  OptimizerSchedule sched = tiny_schedule(2, 4);
  FitOptions opts;
  opts.seed = 35;
  opts.checkpoint_dir = dir.string();
  opts.log_path = (dir / "log.jsonl").string();
  opts.config_text = model_config_text(tiny_model_config());
  opts.val_metric = PCKConfig::pck(0.5);
  TrainState state = fit(model, data, sched, opts);
  EXPECT_EQ(state.epoch, 2);
  EXPECT_TRUE(fs::exists(dir / "last.ckpt"));
  EXPECT_TRUE(fs::exists(dir / "last.ckpt.json"));
  EXPECT_TRUE(fs::exists(dir / "best.ckpt"));
  EXPECT_TRUE(fs::exists(dir / "log.jsonl"));
  EXPECT_GE(state.best_metric, 0.0);
  EXPECT_LE(state.best_metric, 1.0);
}

TEST(ConfigFile, ParsesAndSerializesModelIdentity) {
  const std::string text = R"(
# comment
model.stack_count = 2
model.base_channels = 32
model.fusion_kind = concat
codec.input_size = 128
codec.heatmap_size = 32
train.base_lr = 5e-4
train.milestones = 3,5
train.total_epochs = 8
train.batch_size = 4
metric.variant = pck
metric.threshold = 0.5
)";
  ToolkitConfig cfg = config_from_kv(KeyValueConfig::parse_text(text));
  EXPECT_EQ(cfg.model.stack_count, 2);
  EXPECT_EQ(cfg.model.base_channels, 32);
  EXPECT_EQ(cfg.model.fusion_kind, FusionKind::Concat);
  EXPECT_EQ(cfg.model.codec.input_size, 128);
  EXPECT_EQ(cfg.schedule.milestones, (std::vector<int>{3, 5}));
  EXPECT_EQ(cfg.metric.variant, PCKVariant::PCK);
  const std::string canon = model_config_text(cfg.model);
  EXPECT_NE(canon.find("model.fusion_kind=concat"), std::string::npos);
  // unknown enum values fail loudly
  EXPECT_THROW(config_from_kv(KeyValueConfig::parse_text("model.fusion_kind = what")),
               DataError);
  EXPECT_THROW(KeyValueConfig::parse_text("no equals sign here"), DataError);
}
