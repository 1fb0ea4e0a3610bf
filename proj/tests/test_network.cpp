#include <gtest/gtest.h>

#include <numeric>
#include <set>

#include "pcssm/io.hpp"
#include "test_util.hpp"

namespace pcssm {
namespace {

using testing::random_coords;

PointCloud random_cloud(std::uint64_t seed, std::size_t n, std::size_t features = 0, int parts = 0) {
  std::mt19937_64 rng(seed);
  PointCloud c;
  c.coords = random_coords(rng, n);
  c.feature_dim = features;
  c.features = testing::random_vector(rng, n * features);
  c.label = 1;
  if (parts > 0) {
    for (std::size_t i = 0; i < n; ++i) c.point_labels.push_back(c.coords[i][0] > 0 ? 1 : 0);
  }
  return c;
}

NetworkConfig small(Task task) {
  auto c = NetworkConfig::toy(task, task == Task::recognition ? 3 : 2);
  c.embed_width = 8;
  c.stages[0].state = 4;
  c.stages[1].state = 4;
  c.stages[1].neighbors = 4;
  return c;
}

TEST(Network, OutputShapes) {
  const auto cloud = random_cloud(1, 32, 2, 2);
  auto rc = small(Task::recognition);
  rc.in_features = 2;
  auto sc = small(Task::segmentation);
  sc.in_features = 2;
  EXPECT_EQ(Network<double>::init(rc).forward(cloud).shape(), (Shape{1, 3}));
  EXPECT_EQ(Network<double>::init(sc).forward(cloud).shape(), (Shape{32, 2}));
  const auto levels = Network<double>::init(rc).encode(cloud);
  ASSERT_EQ(levels.size(), 2u);
  EXPECT_EQ(levels[1].features.shape(), (Shape{8, 16}));
}

TEST(Network, InputContracts) {
  const auto net = Network<double>::init(small(Task::recognition));
  EXPECT_THROW(net.forward(random_cloud(1, 32, 3)), DimensionError);
  EXPECT_THROW(net.forward(PointCloud{}), ContractError);
  EXPECT_THROW(net.forward(random_cloud(1, 2)), ContractError);  // fewer points than the sampling rate
  auto bad = small(Task::recognition);
  bad.stages[0].group = 5;
  EXPECT_THROW(bad.validate(), ConfigError);
  EXPECT_THROW(Network<double>::init(bad), ConfigError);
}

TEST(Network, EmbeddingOfZeroInputIsBiasPath) {
  const auto net = Network<double>::init(small(Task::recognition));
  PointCloud c;
  c.coords.assign(4, Vec3{0, 0, 0});
  const auto e = net.embed(c);
  const auto& l0 = net.embedding().layers[0];
  const auto& l1 = net.embedding().layers[1];
  for (std::size_t j = 0; j < 8; ++j) {
    double v = l1.bias[j];
    for (std::size_t i = 0; i < 8; ++i) {
      const double h = l0.bias[i];
      v += h / (1 + std::exp(-h)) * l1.weight.at(i, j);
    }
    for (std::size_t r = 0; r < 4; ++r) EXPECT_NEAR(e.at(r, j), v, 1e-14);
  }
}

TEST(Network, SingleStageComposition) {
  auto cfg = small(Task::recognition);
  cfg.stages.resize(1);
  const auto net = Network<double>::init(cfg);
  const auto cloud = random_cloud(2, 20);
  const auto& blocks = net.encoder()[0].blocks;
  ASSERT_EQ(blocks.size(), 1u);
  const auto feats = hexa_orientation_block<double>(cloud.coords, net.embed(cloud), blocks[0], cfg.block_config(0));
  const auto expect = net.head()(mean_rows(feats));
  EXPECT_EQ(net.forward(cloud).to_vector(), expect.to_vector());
}

TEST(Network, AnalyticCountsMatchInstantiatedModel) {
  std::vector<NetworkConfig> configs;
  for (Task t : {Task::recognition, Task::segmentation}) {
    auto c = small(t);
    configs.push_back(c);
    c.in_features = 3;
    c.axes = parse_axes("x");
    configs.push_back(c);
    c.prompt = false;
    c.stages.push_back(StageConfig{2, 4, 4, 2, 3});
    configs.push_back(c);
    c.position = false;
    c.structure = Structure::parallel;
    configs.push_back(c);
    configs.push_back(NetworkConfig::toy(t, 4));
  }
  for (const auto& c : configs) {
    const auto net = Network<double>::init(c);
    const auto cost = count_params_flops(c, 64);
    EXPECT_EQ(cost.params, count_scalars(net.parameters())) << config_to_json(c);
    EXPECT_EQ(cost.flops, net.flops(64));
  }
}

// The GS6 delta side shrinks by (E/g1 - E/g2)(N + 1 + E) per instance.
TEST(Network, ParamsStrictlyDecreaseWithGrouping) {
  for (Task t : {Task::recognition, Task::segmentation}) {
    auto base = NetworkConfig::toy(t, 3);
    base.embed_width = 18;
    std::size_t prev = 0;
    std::size_t prev_g = 0;
    for (std::size_t g : {1u, 2u, 3u, 6u, 9u}) {
      auto c = base;
      for (auto& s : c.stages) s.group = g;
      const std::size_t params = count_params_flops(c, 64).params;
      EXPECT_EQ(params, count_scalars(Network<double>::init(c).parameters()));
      if (prev_g) {
        EXPECT_LT(params, prev);
        std::size_t delta = 0;
        auto add_stage = [&](std::size_t s, std::size_t blocks) {
          const std::size_t E = c.expansion * c.stage_width(s), N = c.stages[s].state;
          delta += blocks * c.axes.size() * 2 * (E / prev_g - E / g) * (N + 1 + E);
        };
        for (std::size_t s = 0; s < c.stages.size(); ++s) add_stage(s, c.stages[s].blocks);
        if (t == Task::segmentation) {
          for (std::size_t s = 0; s + 1 < c.stages.size(); ++s) add_stage(s, c.stages[s].blocks);
        }
        EXPECT_EQ(prev - params, delta) << "g " << prev_g << " -> " << g;
      }
      prev = params;
      prev_g = g;
    }
  }
}

TEST(Network, ChainedAndParallelCountsAgree) {
  auto c = NetworkConfig::toy(Task::recognition, 3);
  auto p = c;
  p.structure = Structure::parallel;
  EXPECT_EQ(count_params_flops(c, 128).params, count_params_flops(p, 128).params);
  EXPECT_EQ(count_scalars(Network<double>::init(c).parameters()),
            count_scalars(Network<double>::init(p).parameters()));
}

template <typename T>
double recognition_permutation_gap(std::uint64_t seed) {
  const auto net = Network<T>::init(NetworkConfig::toy(Task::recognition, 3));
  const auto cloud = random_cloud(seed, 64);
  std::vector<std::size_t> perm(64);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  const auto a = net.forward(cloud), b = net.forward(reorder(cloud, perm));
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(double(a[i]) - double(b[i])));
  return m;
}

TEST(Network, RecognitionIsPermutationInvariant32) {
  for (std::uint64_t s = 0; s < 5; ++s) EXPECT_LT(recognition_permutation_gap<float>(s), 1e-5);
}

TEST(Network, SegmentationRowsFollowTheirPoints) {
  auto cfg = small(Task::segmentation);
  const auto net = Network<float>::init(cfg);
  const auto cloud = random_cloud(3, 40, 0, 2);
  std::vector<std::size_t> perm(40);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::mt19937_64 rng(3);
  std::shuffle(perm.begin(), perm.end(), rng);
  const auto a = net.forward(cloud), b = net.forward(reorder(cloud, perm));
  for (std::size_t i = 0; i < 40; ++i) {
    for (std::size_t j = 0; j < 2; ++j) EXPECT_NEAR(b.at(i, j), a.at(perm[i], j), 1e-5);
  }
}

TEST(Network, EveryParameterGetsAGradientAtInit) {
  for (Task t : {Task::recognition, Task::segmentation}) {
    const auto net = Network<double>::init(small(t));
    auto params = net.parameters();
    zero_grads(params);
    backward(net.loss(random_cloud(4, 32, 0, 2)));
    for (const auto& p : params) {
      ASSERT_TRUE(p.tensor.has_grad()) << p.name;
      double norm = 0;
      for (double g : p.tensor.grad()) norm += g * g;
      EXPECT_GT(norm, 0.0) << p.name;
    }
  }
}

TEST(Network, ParameterNamesAreUnique) {
  const auto net = Network<double>::init(NetworkConfig::toy(Task::segmentation, 2));
  std::set<std::string> names;
  for (const auto& p : net.parameters()) EXPECT_TRUE(names.insert(p.name).second) << p.name;
  EXPECT_TRUE(names.count("dec0.up.align.0.weight"));
  EXPECT_TRUE(names.count("enc1.down.0.weight"));
}

TEST(Network, LossDecreasesOverFirstSteps) {
  SyntheticSpec spec;
  spec.samples_per_class = 2;
  spec.points = 32;
  const auto data = generate(spec);
  auto net = Network<double>::init(small(Task::recognition));
  TrainOptions opts;
  opts.epochs = 20;
  opts.batch = data.size();
  opts.cosine = false;
  opts.lr = 3e-3;
  const auto log = train(net, data, opts);
  ASSERT_EQ(log.size(), 20u);
  EXPECT_LT(log.back().loss, log.front().loss);
}

TEST(Network, ScanAlgorithmDoesNotChangeOutput) {
  auto cfg = small(Task::recognition);
  const auto cloud = random_cloud(5, 32);
  const auto a = Network<double>::init(cfg).forward(cloud);
  cfg.algorithm = ScanAlgorithm::parallel;
  const auto b = Network<double>::init(cfg).forward(cloud);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
}

}  // namespace
}  // namespace pcssm
