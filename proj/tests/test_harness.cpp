#include <gtest/gtest.h>

#include <map>
#include <set>
#include <sstream>

#include "pcssm/harness.hpp"
#include "test_util.hpp"

namespace pcssm {
namespace {

NetworkConfig tiny(Task task, std::size_t classes) {
  auto c = NetworkConfig::toy(task, classes);
  c.embed_width = 8;
  for (auto& s : c.stages) s.state = 4;
  c.stages[1].neighbors = 4;
  return c;
}

TEST(Metrics, HandExample) {
  const std::vector<int> preds{0, 0, 1, 1}, labels{0, 1, 1, 1};
  EXPECT_DOUBLE_EQ(overall_accuracy(preds, labels), 0.75);
  // part 0: 1/2, part 1: 2/3
  EXPECT_DOUBLE_EQ(instance_miou({preds}, {labels}), 7.0 / 12.0);
  EXPECT_DOUBLE_EQ(mean_iou(preds, labels), 7.0 / 12.0);
  const auto r = evaluate_metrics({preds, {1, 1}}, {labels, {1, 1}}, Task::segmentation);
  EXPECT_DOUBLE_EQ(r.overall_accuracy, 5.0 / 6.0);
  EXPECT_DOUBLE_EQ(r.instance_miou, (7.0 / 12.0 + 1.0) / 2.0);
  EXPECT_THROW(overall_accuracy({0}, {0, 1}), ContractError);
  EXPECT_THROW(mean_iou({}, {}), ContractError);
}

TEST(Metrics, MeanIouMatchesConfusionMatrix) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng() % 50;
    const int classes = 1 + static_cast<int>(rng() % 5);
    std::vector<int> p(n), l(n);
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = static_cast<int>(rng() % classes);
      l[i] = static_cast<int>(rng() % classes);
    }
    std::map<std::pair<int, int>, double> cm;
    std::map<int, double> row, col;
    for (std::size_t i = 0; i < n; ++i) {
      cm[{l[i], p[i]}] += 1;
      row[l[i]] += 1;
      col[p[i]] += 1;
    }
    std::set<int> present;
    for (auto& [k, v] : row) present.insert(k);
    for (auto& [k, v] : col) present.insert(k);
    double total = 0;
    for (int c : present) {
      const double tp = cm[{c, c}];
      total += tp / (row[c] + col[c] - tp);
    }
    EXPECT_NEAR(mean_iou(p, l), total / present.size(), 1e-15);
  }
}

TEST(Synthetic, DeterministicAndLabelled) {
  SyntheticSpec spec;
  spec.generators = {Generator::sphere, Generator::dumbbell};
  spec.samples_per_class = 3;
  spec.points = 50;
  const auto a = generate(spec), b = generate(spec);
  EXPECT_EQ(dataset_hash(a), dataset_hash(b));
  spec.seed = 1;
  EXPECT_NE(dataset_hash(a), dataset_hash(generate(spec)));
  ASSERT_EQ(a.size(), 6u);
  for (const auto& c : a) {
    EXPECT_EQ(c.size(), 50u);
    if (c.label == 1) {
      ASSERT_EQ(c.point_labels.size(), 50u);
      for (std::size_t i = 0; i < 50; ++i) EXPECT_EQ(c.point_labels[i], std::abs(c.coords[i][0]) > 0.5 ? 1 : 0);
    }
  }
  EXPECT_EQ(parse_generator("cylinder"), Generator::cylinder);
  EXPECT_FALSE(parse_generator("torus").has_value());
}

TEST(Training, DeterministicGivenSeed) {
  SyntheticSpec spec;
  spec.samples_per_class = 2;
  spec.points = 32;
  const auto data = generate(spec);
  TrainOptions opts;
  opts.epochs = 3;
  auto n1 = Network<float>::init(tiny(Task::recognition, 3));
  auto n2 = Network<float>::init(tiny(Task::recognition, 3));
  const auto l1 = train(n1, data, opts), l2 = train(n2, data, opts);
  for (std::size_t e = 0; e < 3; ++e) EXPECT_EQ(l1[e].loss, l2[e].loss);
  const auto p1 = n1.parameters(), p2 = n2.parameters();
  for (std::size_t i = 0; i < p1.size(); ++i) EXPECT_EQ(p1[i].tensor.to_vector(), p2[i].tensor.to_vector());
}

TEST(Training, ZeroLearningRateLeavesParametersUnchanged) {
  SyntheticSpec spec;
  spec.samples_per_class = 1;
  spec.points = 32;
  const auto data = generate(spec);
  auto net = Network<double>::init(tiny(Task::recognition, 3));
  std::vector<std::vector<double>> before;
  for (const auto& p : net.parameters()) before.push_back(p.tensor.to_vector());
  TrainOptions opts;
  opts.epochs = 2;
  opts.lr = 0.0;
  train(net, data, opts);
  const auto after = net.parameters();
  for (std::size_t i = 0; i < after.size(); ++i) EXPECT_EQ(after[i].tensor.to_vector(), before[i]);
}

TEST(Training, MemorizesOneSample) {
  SyntheticSpec spec;
  spec.generators = {Generator::cube, Generator::sphere};
  spec.samples_per_class = 1;
  spec.points = 32;
  auto data = generate(spec);
  data.resize(1);
  auto net = Network<float>::init(tiny(Task::recognition, 2));
  TrainOptions opts;
  opts.epochs = 200;
  opts.batch = 1;
  opts.lr = 5e-3;
  const auto log = train(net, data, opts);
  EXPECT_LT(log.back().loss, 0.01);
}

TEST(Training, NonFiniteInputRaisesTrainingError) {
  SyntheticSpec spec;
  spec.samples_per_class = 1;
  spec.points = 32;
  auto data = generate(spec);
  data[0].coords[3][1] = std::numeric_limits<double>::infinity();
  auto net = Network<double>::init(tiny(Task::recognition, 3));
  try {
    train(net, data, TrainOptions{});
    FAIL();
  } catch (const TrainingError& e) {
    EXPECT_NE(std::string(e.what()).find("embed.0.weight="), std::string::npos);
  }
}

TEST(Training, LogCsv) {
  std::ostringstream os;
  write_log_csv(os, {{0, 1.5, 0.25}, {1, 0.5, 0.75}});
  EXPECT_EQ(os.str(), "epoch,loss,metric\n0,1.5,0.25\n1,0.5,0.75\n");
}

TEST(Gradcheck, ToyNetworkPassesAndTamperingFails) {
  SyntheticSpec spec;
  spec.generators = {Generator::dumbbell};
  spec.samples_per_class = 1;
  spec.points = 32;
  const auto cloud = generate(spec)[0];
  for (Task t : {Task::recognition, Task::segmentation}) {
    const auto net = Network<double>::init(tiny(t, 2));
    GradcheckOptions opts;
    opts.entries_per_group = 2;
    const auto report = gradcheck_network(net, cloud, opts);
    EXPECT_TRUE(report.passed) << report.max_error;
    EXPECT_EQ(report.groups.size(), net.parameters().size());
    opts.tamper = [](ParameterList<double>& params) {
      for (auto& g : params.back().tensor.mutable_grad()) g *= 1.01;
    };
    const auto bad = gradcheck_network(net, cloud, opts);
    EXPECT_FALSE(bad.passed);
    EXPECT_GT(bad.groups.back().max_error, 1e-3);
  }
}

TEST(Ablation, LevelSets) {
  EXPECT_EQ(default_levels(AblationFactor::axes),
            (std::vector<std::string>{"none", "X", "Y", "Z", "XY", "XZ", "YZ", "XYZ"}));
  EXPECT_EQ(default_levels(AblationFactor::grouping), (std::vector<std::string>{"1", "2", "3", "6", "9"}));
  EXPECT_EQ(default_levels(AblationFactor::structure).size(), 2u);
  for (auto f : {AblationFactor::axes, AblationFactor::structure, AblationFactor::grouping, AblationFactor::prompt,
                 AblationFactor::position}) {
    EXPECT_EQ(parse_factor(factor_name(f)), f);
    const auto plan = default_plan(f);
    for (const auto& level : default_levels(f)) EXPECT_NO_THROW(apply_level(plan.base, f, level)) << level;
  }
  EXPECT_EQ(apply_level(NetworkConfig{}, AblationFactor::axes, "none").axes, (std::vector<Axis>{Axis::none}));
  EXPECT_THROW(apply_level(NetworkConfig{}, AblationFactor::grouping, "5"), ConfigError);
  EXPECT_THROW(apply_level(NetworkConfig{}, AblationFactor::prompt, "maybe"), ConfigError);
}

TEST(Ablation, MatchedSeedsShareInitialization) {
  const auto plan = default_plan(AblationFactor::axes);
  // Parameters present at several levels with the same shape start identical;
  // the merge layer's fan-in is k*D, so its shape and init bound follow the axis count.
  std::map<std::string, std::pair<Shape, std::vector<double>>> first;
  std::size_t shared = 0;
  for (const auto& level : default_levels(AblationFactor::axes)) {
    const auto net = Network<double>::init(apply_level(plan.base, AblationFactor::axes, level));
    for (const auto& p : net.parameters()) {
      auto [it, inserted] = first.emplace(p.name, std::make_pair(p.tensor.shape(), p.tensor.to_vector()));
      if (inserted) continue;
      const bool merge_layer = p.name.find(".merge.") != std::string::npos;
      if (it->second.first != p.tensor.shape()) {
        EXPECT_TRUE(merge_layer) << p.name;
        continue;
      }
      if (merge_layer) continue;
      EXPECT_EQ(it->second.second, p.tensor.to_vector()) << level << " " << p.name;
      ++shared;
    }
  }
  EXPECT_GT(shared, 100u);
  EXPECT_TRUE(first.count("enc0.block0.Z.fwd.in_proj.weight"));
}

TEST(Ablation, RunnerEmitsOneRowPerLevel) {
  AblationPlan plan = default_plan(AblationFactor::structure);
  plan.base = tiny(Task::recognition, 3);
  plan.data.samples_per_class = 1;
  plan.data.points = 32;
  plan.train.epochs = 1;
  plan.repetitions = 2;
  plan.seed = 7;
  const auto rows = run_ablation(plan);
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[0].level, "parallel");
  EXPECT_EQ(rows[1].level, "chained");
  EXPECT_EQ(rows[0].seed, 7u);
  EXPECT_EQ(rows[1].seed, 7u);
  EXPECT_EQ(rows[2].seed, 8u);
  EXPECT_EQ(rows[0].params, rows[1].params);
  std::ostringstream os;
  write_ablation_csv(os, rows);
  EXPECT_EQ(os.str().substr(0, os.str().find('\n')), "level,repetition,seed,params,flops,final_loss,final_metric");
}

TEST(Timing, SlopeOfPowerLaw) {
  std::vector<TimingRow> rows;
  for (std::size_t L : {128u, 256u, 512u, 1024u}) rows.push_back({L, 3e-6 * std::pow(double(L), 1.3)});
  EXPECT_NEAR(loglog_slope(rows), 1.3, 1e-12);
  EXPECT_THROW(loglog_slope({rows[0]}), ContractError);
  const auto measured = time_block_forward({64, 128}, 1, 0, 8);
  ASSERT_EQ(measured.size(), 2u);
  EXPECT_GT(measured[1].seconds, 0.0);
}

}  // namespace
}  // namespace pcssm
