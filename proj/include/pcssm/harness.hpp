#pragma once

// Desk-scale experiment harness: synthetic shape datasets, metrics, the
// training loop, the finite-difference gradient check, ablation plans and
// forward-pass timing.

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "pcssm/network.hpp"

namespace pcssm {

// ---------------------------------------------------------------------------
// Synthetic data

enum class Generator { sphere, cube, plane, cylinder, dumbbell };

std::string_view generator_name(Generator g);
std::optional<Generator> parse_generator(std::string_view name);

struct SyntheticSpec {
  std::vector<Generator> generators{Generator::sphere, Generator::cube, Generator::cylinder};
  std::size_t points = 128;
  double noise = 0.01;
  std::size_t samples_per_class = 8;
  std::uint64_t seed = 0;
};

using Dataset = std::vector<PointCloud>;

// Class label = position of the generator in the spec. Dumbbell clouds also
// carry part labels (1 where |x| > 0.5).
Dataset generate(const SyntheticSpec& spec);

// One cloud of one generator.
PointCloud generate_cloud(Generator g, std::size_t points, double noise, std::mt19937_64& rng);

// Stable content hash of coordinates, features and labels, hex encoded.
std::string dataset_hash(const Dataset& data);

// ---------------------------------------------------------------------------
// Metrics

struct MetricReport {
  double overall_accuracy = 0.0;
  double instance_miou = 0.0;  // segmentation only
  double mean_iou = 0.0;       // segmentation only
};

double overall_accuracy(const std::vector<int>& preds, const std::vector<int>& labels);

// Per-shape IoU over the parts present in labels or predictions, averaged
// over parts and then over shapes.
double instance_miou(const std::vector<std::vector<int>>& preds,
                     const std::vector<std::vector<int>>& labels);

// IoU per class over all points, averaged over classes that occur.
double mean_iou(const std::vector<int>& preds, const std::vector<int>& labels);

// Recognition: one prediction per shape. Segmentation: one vector per shape.
MetricReport evaluate_metrics(const std::vector<std::vector<int>>& preds,
                              const std::vector<std::vector<int>>& labels, Task task);

template <typename T>
std::vector<int> argmax_rows(const Tensor<T>& logits) {
  std::vector<int> out(logits.rows());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < logits.cols(); ++c) {
      if (logits.at(r, c) > logits.at(r, best)) best = c;
    }
    out[r] = static_cast<int>(best);
  }
  return out;
}

inline std::vector<int> targets_of(const PointCloud& cloud, Task task) {
  return task == Task::recognition ? std::vector<int>{cloud.label} : cloud.point_labels;
}

// ---------------------------------------------------------------------------
// Training

struct TrainOptions {
  std::size_t epochs = 50;
  double lr = 5e-3;
  std::size_t batch = 4;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  bool cosine = true;
};

struct EpochLog {
  std::size_t epoch = 0;
  double loss = 0.0;
  double metric = 0.0;  // overall accuracy (per point for segmentation)
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <typename T>
class Adam {
 public:
  Adam(ParameterList<T> params, const TrainOptions& opts) : params_(std::move(params)), opts_(opts) {
    for (const auto& p : params_) {
      m_.emplace_back(p.tensor.size(), 0.0);
      v_.emplace_back(p.tensor.size(), 0.0);
    }
  }

  void step(double lr, double grad_scale) {
    ++t_;
    const double c1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& tensor = params_[i].tensor;
      if (!tensor.has_grad()) continue;
      auto data = tensor.mutable_data();
      const auto grad = tensor.grad();
      for (std::size_t j = 0; j < data.size(); ++j) {
        const double g = static_cast<double>(grad[j]) * grad_scale;
        m_[i][j] = opts_.beta1 * m_[i][j] + (1.0 - opts_.beta1) * g;
        v_[i][j] = opts_.beta2 * v_[i][j] + (1.0 - opts_.beta2) * g * g;
        const double update = lr * (m_[i][j] / c1) / (std::sqrt(v_[i][j] / c2) + opts_.eps);
        data[j] = static_cast<T>(static_cast<double>(data[j]) - update);
      }
    }
  }

  ParameterList<T>& params() { return params_; }

 private:
  ParameterList<T> params_;
  TrainOptions opts_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t t_ = 0;
};

inline double scheduled_lr(const TrainOptions& opts, std::size_t step, std::size_t total) {
  if (!opts.cosine || total == 0) return opts.lr;
  const double pi = std::acos(-1.0);
  return opts.lr * 0.5 * (1.0 + std::cos(pi * static_cast<double>(step) / static_cast<double>(total)));
}

template <typename T>
double grad_norm(const ParameterList<T>& params, const std::string& name) {
  double s = 0.0;
  for (const auto& p : params) {
    if (p.name != name || !p.tensor.has_grad()) continue;
    for (T g : p.tensor.grad()) s += static_cast<double>(g) * static_cast<double>(g);
  }
  return std::sqrt(s);
}

// Minibatch Adam with cosine decay; returns one log row per epoch. The
// metric is computed from the predictions made during the epoch.
template <typename T>
std::vector<EpochLog> train(Network<T>& net, const Dataset& data, const TrainOptions& opts,
                            std::ostream* progress = nullptr) {
  if (data.empty()) throw ContractError("train: empty dataset");
  const Task task = net.config().task;
  Adam<T> adam(net.parameters(), opts);
  std::mt19937_64 rng(opts.seed);
  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  const std::size_t batch = std::max<std::size_t>(1, opts.batch);
  const std::size_t steps_per_epoch = (data.size() + batch - 1) / batch;
  const std::size_t total_steps = steps_per_epoch * opts.epochs;
  std::size_t step = 0;
  std::vector<EpochLog> log;
  for (std::size_t epoch = 0; epoch < opts.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t correct = 0, total = 0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      zero_grads(adam.params());
      for (std::size_t i = start; i < end; ++i) {
        const auto& cloud = data[order[i]];
        auto diagnose = [&](const std::string& what) {
          std::string diag = "train: " + what + " at epoch " + std::to_string(epoch) + "; last grad norms:";
          for (const auto& p : adam.params()) {
            diag += " " + p.name + "=" + std::to_string(grad_norm(adam.params(), p.name));
          }
          return TrainingError(diag);
        };
        Tensor<T> logits;
        try {
          logits = net.forward(cloud);
        } catch (const DomainError& e) {
          throw diagnose(e.what());
        }
        const auto targets = targets_of(cloud, task);
        const auto loss = cross_entropy(logits, targets);
        const double lv = static_cast<double>(loss.item());
        if (!std::isfinite(lv)) throw diagnose("non-finite loss");
        backward(loss);
        loss_sum += lv;
        const auto preds = argmax_rows(logits);
        for (std::size_t k = 0; k < preds.size(); ++k) correct += preds[k] == targets[k];
        total += preds.size();
      }
      adam.step(scheduled_lr(opts, step++, total_steps), 1.0 / static_cast<double>(end - start));
    }
    log.push_back({epoch, loss_sum / static_cast<double>(data.size()),
                   static_cast<double>(correct) / static_cast<double>(total)});
    if (progress) {
      *progress << "epoch " << epoch << " loss " << log.back().loss << " acc " << log.back().metric << '\n';
    }
  }
  zero_grads(adam.params());
  return log;
}

template <typename T>
MetricReport evaluate(const Network<T>& net, const Dataset& data) {
  std::vector<std::vector<int>> preds, labels;
  for (const auto& cloud : data) {
    preds.push_back(argmax_rows(net.forward(cloud)));
    labels.push_back(targets_of(cloud, net.config().task));
  }
  return evaluate_metrics(preds, labels, net.config().task);
}

void write_log_csv(std::ostream& os, const std::vector<EpochLog>& log);

// ---------------------------------------------------------------------------
// Gradient check

struct GradcheckOptions {
  double tolerance = 1e-4;
  double step = 1e-5;
  std::size_t entries_per_group = 4;  // 0 checks every entry
  double floor = 1e-6;                // denominators below this count as absolute error
  std::uint64_t seed = 0;
  // Applied to the analytic gradients before comparison (negative controls).
  std::function<void(ParameterList<double>&)> tamper;
};

struct GradcheckGroup {
  std::string name;
  std::size_t checked = 0;
  double max_error = 0.0;
};

struct GradcheckReport {
  std::vector<GradcheckGroup> groups;
  double max_error = 0.0;
  double tolerance = 0.0;
  bool passed = false;
};

// Central differences of `loss_fn` against the tape gradients of `params`.
GradcheckReport gradcheck(const std::function<Tensor<double>()>& loss_fn, ParameterList<double> params,
                          const GradcheckOptions& opts);

GradcheckReport gradcheck_network(const Network<double>& net, const PointCloud& cloud,
                                  const GradcheckOptions& opts);

// ---------------------------------------------------------------------------
// Ablations

enum class AblationFactor { axes, structure, grouping, prompt, position };

std::string_view factor_name(AblationFactor f);
std::optional<AblationFactor> parse_factor(std::string_view name);

struct AblationPlan {
  AblationFactor factor = AblationFactor::axes;
  std::vector<std::string> levels;  // empty: the factor's default level set
  std::size_t repetitions = 1;
  std::uint64_t seed = 0;
  NetworkConfig base = NetworkConfig::toy(Task::recognition, 3);
  SyntheticSpec data;
  TrainOptions train;
};

struct AblationRow {
  std::string level;
  std::size_t repetition = 0;
  std::uint64_t seed = 0;
  std::size_t params = 0;
  std::size_t flops = 0;
  double final_loss = 0.0;
  double final_metric = 0.0;
};

// Axes: none, X, Y, Z, XY, XZ, YZ, XYZ. Grouping: 1, 2, 3, 6, 9.
// Structure: parallel, chained. Prompt / position: on, off.
std::vector<std::string> default_levels(AblationFactor f);

// Base config with one factor set to `level`.
NetworkConfig apply_level(const NetworkConfig& base, AblationFactor f, const std::string& level);

// The grouping plan needs GS6 widths divisible by 18.
AblationPlan default_plan(AblationFactor f);

std::vector<AblationRow> run_ablation(const AblationPlan& plan, std::ostream* progress = nullptr);
void write_ablation_csv(std::ostream& os, const std::vector<AblationRow>& rows);

// ---------------------------------------------------------------------------
// Timing

struct TimingRow {
  std::size_t points = 0;
  double seconds = 0.0;
};

// Wall time of one hexa-orientation block forward pass (32-bit, no tape),
// best of `repeats`, for each point count.
std::vector<TimingRow> time_block_forward(const std::vector<std::size_t>& sizes, std::size_t repeats,
                                          std::uint64_t seed, std::size_t width = 16);

// Least-squares slope of log(seconds) against log(points).
double loglog_slope(const std::vector<TimingRow>& rows);

}  // namespace pcssm
