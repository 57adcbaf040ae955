#include <gtest/gtest.h>

#include <set>

#include "oracle_utils.hpp"
#include "spcnet/nn/stack_module.hpp"

using namespace spc;
using namespace spc::testing;

namespace {

template <typename T>
void copy_params(ParamRegistry<T>& src, ParamRegistry<T>& dst) {
  for (auto& e : src.entries()) {
    auto* d = dst.find(e.name);
    if (d && d->value->shape() == e.value->shape()) *d->value = *e.value;
  }
}

}  // namespace

TEST(Bottleneck, ZeroBranchReducesToRectifiedSkip) {
  // zero input + zero-initialized final expand + identity skip -> relu(0)
  Bottleneck<double> b(BottleneckKind::DilatedB, 4, 4, 2);
  Rng rng(3);
  b.init(rng);
  ParamRegistry<double> reg;
  b.register_params(reg, "b");
  reg.find("b.conv3.weight")->value->zero();
  Tensor<double> x({1, 4, 8, 8});
  Tensor<double> y = b.forward(x, Context::train());
  for (int64_t i = 0; i < y.numel(); ++i) EXPECT_DOUBLE_EQ(y[i], 0.0);
}

TEST(Bottleneck, SpatialSizePreservedForAllKinds) {
  Rng rng(5);
  for (auto kind :
       {BottleneckKind::Conventional, BottleneckKind::DilatedA, BottleneckKind::DilatedB}) {
    Bottleneck<double> b(kind, 6, 6, 2);
    b.init(rng);
    Tensor<double> x({2, 6, 16, 16});
    x.fill_uniform(rng, -1, 1);
    Tensor<double> y = b.forward(x, Context::train());
    EXPECT_EQ(y.shape(), x.shape()) << to_string(kind);
  }
}

TEST(Bottleneck, DilatedFootprintOnOneHotInput) {
  // one-hot input through dilated_a with R=2, in eval mode with fresh
  // (identity) running statistics: the nonzero output support must be
  // exactly the nine dilated taps of the 5x5 footprint. Weights are made
  // positive so the rectifiers cannot silence any tap.
  Bottleneck<double> b(BottleneckKind::DilatedA, 3, 6, 2);
  Rng rng(7);
  b.init(rng);
  ParamRegistry<double> params;
  b.register_params(params, "b");
  for (auto& e : params.entries()) {
    if (e.name.find(".conv") == std::string::npos && e.name.find(".proj") == std::string::npos)
      continue;  // batch-norm scales stay at identity so zeros stay zero
    for (int64_t i = 0; i < e.value->numel(); ++i)
      (*e.value)[i] = std::abs((*e.value)[i]) + 0.01;
  }
  Tensor<double> x({1, 3, 16, 16});
  const int cy = 8, cx = 8;
  for (int c = 0; c < 3; ++c) x.at(0, c, cy, cx) = 1.0;
  Tensor<double> y = b.forward(x, Context::eval());

  std::set<std::pair<int, int>> expected;
  for (int di = -1; di <= 1; ++di)
    for (int dj = -1; dj <= 1; ++dj) expected.insert({cy + 2 * di, cx + 2 * dj});

  std::set<std::pair<int, int>> got;
  for (int c = 0; c < 6; ++c)
    for (int i = 0; i < 16; ++i)
      for (int j = 0; j < 16; ++j)
        if (std::abs(y.at(0, c, i, j)) > 1e-12) got.insert({i, j});

  for (const auto& p : got) EXPECT_TRUE(expected.count(p)) << p.first << "," << p.second;
  EXPECT_EQ(got, expected);
}

TEST(Bottleneck, DilationOneEqualsConventionalBlock) {
  // a dilated_b block with R=1 is the conventional residual block
  Bottleneck<double> dilated(BottleneckKind::DilatedB, 6, 6, 1);
  Bottleneck<double> conventional(BottleneckKind::Conventional, 6, 6, 1);
  Rng rng(9);
  dilated.init(rng);
  ParamRegistry<double> a, b;
  dilated.register_params(a, "x");
  conventional.register_params(b, "x");
  copy_params(a, b);
  Tensor<double> x({2, 6, 8, 8});
  x.fill_uniform(rng, -1, 1);
  Tensor<double> y1 = dilated.forward(x, Context::train());
  Tensor<double> y2 = conventional.forward(x, Context::train());
  EXPECT_EQ(max_abs_diff(y1, y2), 0.0);
}

TEST(Bottleneck, GradientsMatchFiniteDifferences) {
  Bottleneck<double> b(BottleneckKind::DilatedA, 4, 4, 2);
  Rng rng(13);
  b.init(rng);
  ParamRegistry<double> reg;
  b.register_params(reg, "b");
  Tensor<double> x({2, 4, 6, 6});
  x.fill_uniform(rng, -1, 1);
  Tensor<double> c;
  auto objective = [&]() {
    Tensor<double> y = b.forward(x, Context{true, false});
    double s = 0;
    for (int64_t i = 0; i < y.numel(); ++i) s += c[i] * y[i];
    return s;
  };
  Tensor<double> y = b.forward(x, Context::train());
  c = Tensor<double>(y.shape());
  Rng crng(14);
  c.fill_uniform(crng, -1, 1);
  reg.zero_grads();
  y = b.forward(x, Context::train());
  Tensor<double> dy = c;
  b.backward(dy);

  Rng pick(15);
  int checked = 0;
  for (int k = 0; k < 60 && checked < 25; ++k) {
    auto& e = reg.entries()[pick.next_u64() % reg.size()];
    int64_t i = int64_t(pick.next_u64() % uint64_t(e.value->numel()));
    FdSample s = fd_probe((*e.value)[i], (*e.grad)[i], objective, 1e-5);
    if (!s.smooth) continue;
    EXPECT_LT(s.rel, 1e-5) << e.name << "[" << i << "]";
    ++checked;
  }
  EXPECT_GE(checked, 25);
}

TEST(DHM, EmitsFourFeaturesAtPaperResolutions) {
  // default 256-channel module on the 64 px entry feature:
  // levels at 16, 16, 32 and 64 px, all 256 channels
  DHMConfig cfg;
  cfg.base_channels = 256;
  cfg.input_resolution = 64;
  DHM<float> dhm(cfg);
  Rng rng(17);
  dhm.init(rng);
  Tensor<float> x({1, 256, 64, 64});
  x.fill_uniform(rng, -1, 1);
  MultiLevelFeatureSet<float> f = dhm.forward(x, Context::eval());
  EXPECT_EQ(f[0].shape(), (std::vector<int>{1, 256, 16, 16}));
  EXPECT_EQ(f[1].shape(), (std::vector<int>{1, 256, 16, 16}));
  EXPECT_EQ(f[2].shape(), (std::vector<int>{1, 256, 32, 32}));
  EXPECT_EQ(f[3].shape(), (std::vector<int>{1, 256, 64, 64}));
  EXPECT_EQ(dhm.min_resolution_seen(), 16);
  EXPECT_EQ(dhm.feature_strides(), (std::array<int, 4>{4, 4, 2, 1}));
}

TEST(DHM, MinimumInternalResolutionIsQuarterInput) {
  DHMConfig cfg;
  cfg.base_channels = 8;
  cfg.input_resolution = 32;
  DHM<double> dhm(cfg);
  Rng rng(19);
  dhm.init(rng);
  Tensor<double> x({1, 8, 32, 32});
  x.fill_uniform(rng, -1, 1);
  dhm.forward(x, Context::train());
  EXPECT_EQ(dhm.min_resolution_seen(), 8);
}

TEST(DHM, DegenerateConfigIsTwoLevelConventionalHourglass) {
  // R=1 with no dilated chain leaves only conventional dilation-1 blocks
  DHMConfig cfg;
  cfg.base_channels = 8;
  cfg.input_resolution = 16;
  cfg.dilation = 1;
  cfg.dilated_block_count = 0;
  DHM<double> dhm(cfg);
  Rng rng(21);
  dhm.init(rng);
  Tensor<double> x({1, 8, 16, 16});
  x.fill_uniform(rng, -1, 1);
  MultiLevelFeatureSet<double> f = dhm.forward(x, Context::train());
  EXPECT_EQ(f[3].shape(), x.shape());
  EXPECT_EQ(dhm.min_resolution_seen(), 4);
}

TEST(DHM, BackwardMatchesFiniteDifferences) {
  DHMConfig cfg;
  cfg.base_channels = 4;
  cfg.input_resolution = 8;
  cfg.dilated_block_count = 2;
  DHM<double> dhm(cfg);
  Rng rng(23);
  dhm.init(rng);
  ParamRegistry<double> reg;
  dhm.register_params(reg, "m");
  Tensor<double> x({2, 4, 8, 8});
  x.fill_uniform(rng, -1, 1);

  std::array<Tensor<double>, 4> c;
  auto objective = [&]() {
    MultiLevelFeatureSet<double> f = dhm.forward(x, Context{true, false});
    double s = 0;
    for (int l = 0; l < 4; ++l)
      for (int64_t i = 0; i < f[size_t(l)].numel(); ++i)
        s += c[size_t(l)][i] * f[size_t(l)][i];
    return s;
  };
  MultiLevelFeatureSet<double> f = dhm.forward(x, Context::train());
  Rng crng(24);
  for (int l = 0; l < 4; ++l) {
    c[size_t(l)] = Tensor<double>(f[size_t(l)].shape());
    c[size_t(l)].fill_uniform(crng, -1, 1);
  }
  reg.zero_grads();
  dhm.forward(x, Context::train());
  MultiLevelFeatureSet<double> df = c;
  dhm.backward(df);

  Rng pick(25);
  int checked = 0;
  for (int k = 0; k < 80 && checked < 25; ++k) {
    auto& e = reg.entries()[pick.next_u64() % reg.size()];
    int64_t i = int64_t(pick.next_u64() % uint64_t(e.value->numel()));
    FdSample s = fd_probe((*e.value)[i], (*e.grad)[i], objective, 1e-5);
    if (!s.smooth) continue;
    EXPECT_LT(s.rel, 1e-4) << e.name << "[" << i << "]";
    ++checked;
  }
  EXPECT_GE(checked, 25);
}

TEST(DHM, LargerDilationWidensGradientSupport) {
  // receptive-field probe: gradient of a center output unit w.r.t. the
  // input covers a strictly larger area with R=2 than with R=1 under
  // shared parameters
  auto support_radius = [](int dilation) {
    DHMConfig cfg;
    cfg.base_channels = 4;
    cfg.input_resolution = 96;
    cfg.dilation = dilation;
    DHM<double> dhm(cfg);
    Rng rng(27);  // same seed -> same parameter values (shapes match)
    dhm.init(rng);
    Tensor<double> x({1, 4, 96, 96});
    Rng xr(28);
    x.fill_uniform(xr, 0.1, 1.0);
    dhm.forward(x, Context::eval_with_grad());
    MultiLevelFeatureSet<double> df;
    df[0] = Tensor<double>({1, 4, 24, 24});
    df[1] = Tensor<double>({1, 4, 24, 24});
    df[2] = Tensor<double>({1, 4, 48, 48});
    df[3] = Tensor<double>({1, 4, 96, 96});
    df[3].at(0, 0, 48, 48) = 1.0;
    Tensor<double> dx = dhm.backward(df);
    int radius = 0, area = 0;
    for (int c = 0; c < 4; ++c)
      for (int i = 0; i < 96; ++i)
        for (int j = 0; j < 96; ++j)
          if (std::abs(dx.at(0, c, i, j)) > 1e-14) {
            radius = std::max(radius, std::max(std::abs(i - 48), std::abs(j - 48)));
            ++area;
          }
    return std::pair<int, int>{radius, area};
  };
  auto [r1, a1] = support_radius(1);
  auto [r2, a2] = support_radius(2);
  EXPECT_GT(r2, r1);
  EXPECT_GT(a2, a1);
  EXPECT_LT(r2, 48);  // support must not have saturated the canvas
}

TEST(ConventionalHourglass, FourDownsamplesAndFeatureLevels) {
  ConventionalHourglass<double> hg(8, 64);
  Rng rng(29);
  hg.init(rng);
  Tensor<double> x({1, 8, 64, 64});
  x.fill_uniform(rng, -1, 1);
  MultiLevelFeatureSet<double> f = hg.forward(x, Context::train());
  EXPECT_EQ(f[0].dim(2), 8);
  EXPECT_EQ(f[1].dim(2), 16);
  EXPECT_EQ(f[2].dim(2), 32);
  EXPECT_EQ(f[3].dim(2), 64);
  EXPECT_EQ(hg.min_resolution_seen(), 4);
  EXPECT_EQ(hg.feature_strides(), (std::array<int, 4>{8, 4, 2, 1}));
}

TEST(ConventionalHourglass, BackwardMatchesFiniteDifferences) {
  ConventionalHourglass<double> hg(4, 16);
  Rng rng(31);
  hg.init(rng);
  ParamRegistry<double> reg;
  hg.register_params(reg, "h");
  Tensor<double> x({1, 4, 16, 16});
  x.fill_uniform(rng, -1, 1);
  std::array<Tensor<double>, 4> c;
  auto objective = [&]() {
    MultiLevelFeatureSet<double> f = hg.forward(x, Context{true, false});
    double s = 0;
    for (int l = 0; l < 4; ++l)
      for (int64_t i = 0; i < f[size_t(l)].numel(); ++i)
        s += c[size_t(l)][i] * f[size_t(l)][i];
    return s;
  };
  MultiLevelFeatureSet<double> f = hg.forward(x, Context::train());
  Rng crng(32);
  for (int l = 0; l < 4; ++l) {
    c[size_t(l)] = Tensor<double>(f[size_t(l)].shape());
    c[size_t(l)].fill_uniform(crng, -1, 1);
  }
  reg.zero_grads();
  hg.forward(x, Context::train());
  MultiLevelFeatureSet<double> df = c;
  hg.backward(df);

  Rng pick(33);
  int checked = 0;
  for (int k = 0; k < 80 && checked < 20; ++k) {
    auto& e = reg.entries()[pick.next_u64() % reg.size()];
    int64_t i = int64_t(pick.next_u64() % uint64_t(e.value->numel()));
    FdSample s = fd_probe((*e.value)[i], (*e.grad)[i], objective, 1e-5);
    if (!s.smooth) continue;
    EXPECT_LT(s.rel, 1e-4) << e.name << "[" << i << "]";
    ++checked;
  }
  EXPECT_GE(checked, 20);
}
