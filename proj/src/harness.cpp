#include "pcssm/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstring>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

namespace pcssm {

std::string_view generator_name(Generator g) {
  switch (g) {
    case Generator::sphere: return "sphere";
    case Generator::cube: return "cube";
    case Generator::plane: return "plane";
    case Generator::cylinder: return "cylinder";
    case Generator::dumbbell: return "dumbbell";
  }
  return "?";
}

std::optional<Generator> parse_generator(std::string_view name) {
  for (Generator g : {Generator::sphere, Generator::cube, Generator::plane, Generator::cylinder,
                      Generator::dumbbell}) {
    if (generator_name(g) == name) return g;
  }
  return std::nullopt;
}

namespace {

Vec3 unit_sphere_point(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  while (true) {
    Vec3 v{n(rng), n(rng), n(rng)};
    const double r = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
    if (r > 1e-9) return {v[0] / r, v[1] / r, v[2] / r};
  }
}

}  // namespace

PointCloud generate_cloud(Generator g, std::size_t points, double noise, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_real_distribution<double> angle(0.0, 2.0 * std::acos(-1.0));
  std::normal_distribution<double> jitter(0.0, noise > 0 ? noise : 1.0);
  PointCloud cloud;
  for (std::size_t i = 0; i < points; ++i) {
    Vec3 p{};
    switch (g) {
      case Generator::sphere: p = unit_sphere_point(rng); break;
      case Generator::cube: {
        const int face = static_cast<int>(rng() % 6);
        const double s = 1.0 / std::sqrt(3.0);
        p = {u(rng) * s, u(rng) * s, u(rng) * s};
        p[face / 2] = (face % 2 ? s : -s);
        break;
      }
      case Generator::plane: p = {u(rng), u(rng), 0.0}; break;
      case Generator::cylinder: {
        const double a = angle(rng);
        p = {0.5 * std::cos(a), 0.5 * std::sin(a), u(rng)};
        break;
      }
      case Generator::dumbbell: {
        // two balls at x = +-0.8 joined by a thin bar along x
        if (rng() % 4 == 0) {
          const double a = angle(rng);
          p = {0.4 * u(rng), 0.1 * std::cos(a), 0.1 * std::sin(a)};
        } else {
          const Vec3 s = unit_sphere_point(rng);
          const double cx = (rng() % 2) ? 0.8 : -0.8;
          p = {cx + 0.35 * s[0], 0.35 * s[1], 0.35 * s[2]};
        }
        break;
      }
    }
    if (noise > 0) {
      for (auto& c : p) c += jitter(rng);
    }
    cloud.coords.push_back(p);
    if (g == Generator::dumbbell) cloud.point_labels.push_back(std::abs(p[0]) > 0.5 ? 1 : 0);
  }
  return cloud;
}

Dataset generate(const SyntheticSpec& spec) {
  std::mt19937_64 rng(spec.seed);
  Dataset out;
  for (std::size_t s = 0; s < spec.samples_per_class; ++s) {
    for (std::size_t c = 0; c < spec.generators.size(); ++c) {
      auto cloud = generate_cloud(spec.generators[c], spec.points, spec.noise, rng);
      cloud.label = static_cast<int>(c);
      out.push_back(std::move(cloud));
    }
  }
  return out;
}

std::string dataset_hash(const Dataset& data) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 1099511628211ULL;
    }
  };
  for (const auto& c : data) {
    mix(c.coords.data(), c.coords.size() * sizeof(Vec3));
    mix(c.features.data(), c.features.size() * sizeof(double));
    mix(&c.label, sizeof(c.label));
    mix(c.point_labels.data(), c.point_labels.size() * sizeof(int));
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

double overall_accuracy(const std::vector<int>& preds, const std::vector<int>& labels) {
  if (preds.empty() || preds.size() != labels.size()) {
    throw ContractError("overall_accuracy: empty or misaligned inputs");
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) correct += preds[i] == labels[i];
  return static_cast<double>(correct) / static_cast<double>(preds.size());
}

namespace {

double iou_over_present(const std::vector<int>& preds, const std::vector<int>& labels) {
  std::map<int, std::pair<std::size_t, std::size_t>> counts;  // part -> (intersection, union)
  std::set<int> present(labels.begin(), labels.end());
  present.insert(preds.begin(), preds.end());
  double total = 0.0;
  for (int part : present) {
    std::size_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
      const bool p = preds[i] == part, l = labels[i] == part;
      inter += p && l;
      uni += p || l;
    }
    total += static_cast<double>(inter) / static_cast<double>(uni);
  }
  return total / static_cast<double>(present.size());
}

}  // namespace

double instance_miou(const std::vector<std::vector<int>>& preds,
                     const std::vector<std::vector<int>>& labels) {
  if (preds.empty() || preds.size() != labels.size()) {
    throw ContractError("instance_miou: empty or misaligned inputs");
  }
  double total = 0.0;
  for (std::size_t s = 0; s < preds.size(); ++s) {
    if (preds[s].empty() || preds[s].size() != labels[s].size()) {
      throw ContractError("instance_miou: empty or misaligned shape");
    }
    total += iou_over_present(preds[s], labels[s]);
  }
  return total / static_cast<double>(preds.size());
}

double mean_iou(const std::vector<int>& preds, const std::vector<int>& labels) {
  if (preds.empty() || preds.size() != labels.size()) {
    throw ContractError("mean_iou: empty or misaligned inputs");
  }
  return iou_over_present(preds, labels);
}

MetricReport evaluate_metrics(const std::vector<std::vector<int>>& preds,
                              const std::vector<std::vector<int>>& labels, Task task) {
  if (preds.empty() || preds.size() != labels.size()) {
    throw ContractError("evaluate_metrics: empty or misaligned inputs");
  }
  std::vector<int> flat_p, flat_l;
  for (std::size_t s = 0; s < preds.size(); ++s) {
    if (preds[s].size() != labels[s].size()) throw ContractError("evaluate_metrics: misaligned shape");
    flat_p.insert(flat_p.end(), preds[s].begin(), preds[s].end());
    flat_l.insert(flat_l.end(), labels[s].begin(), labels[s].end());
  }
  MetricReport r;
  r.overall_accuracy = overall_accuracy(flat_p, flat_l);
  if (task == Task::segmentation) {
    r.instance_miou = instance_miou(preds, labels);
    r.mean_iou = mean_iou(flat_p, flat_l);
  }
  return r;
}

void write_log_csv(std::ostream& os, const std::vector<EpochLog>& log) {
  os << "epoch,loss,metric\n";
  os << std::setprecision(17);
  for (const auto& e : log) os << e.epoch << ',' << e.loss << ',' << e.metric << '\n';
}

GradcheckReport gradcheck(const std::function<Tensor<double>()>& loss_fn, ParameterList<double> params,
                          const GradcheckOptions& opts) {
  zero_grads(params);
  backward(loss_fn());
  if (opts.tamper) opts.tamper(params);
  GradcheckReport report;
  report.tolerance = opts.tolerance;
  std::mt19937_64 rng(opts.seed);
  for (auto& p : params) {
    GradcheckGroup group{p.name, 0, 0.0};
    const std::size_t n = p.tensor.size();
    std::vector<std::size_t> entries(n);
    for (std::size_t i = 0; i < n; ++i) entries[i] = i;
    if (opts.entries_per_group > 0 && opts.entries_per_group < n) {
      std::shuffle(entries.begin(), entries.end(), rng);
      entries.resize(opts.entries_per_group);
    }
    const std::vector<double> analytic =
        p.tensor.has_grad() ? std::vector<double>(p.tensor.grad().begin(), p.tensor.grad().end())
                            : std::vector<double>(n, 0.0);
    for (std::size_t idx : entries) {
      auto data = p.tensor.mutable_data();
      const double original = data[idx];
      data[idx] = original + opts.step;
      const double up = loss_fn().item();
      data[idx] = original - opts.step;
      const double down = loss_fn().item();
      data[idx] = original;
      const double numeric = (up - down) / (2.0 * opts.step);
      const double denom = std::max({std::abs(numeric), std::abs(analytic[idx]), opts.floor});
      group.max_error = std::max(group.max_error, std::abs(numeric - analytic[idx]) / denom);
      ++group.checked;
    }
    report.max_error = std::max(report.max_error, group.max_error);
    report.groups.push_back(group);
  }
  zero_grads(params);
  report.passed = report.max_error < opts.tolerance;
  return report;
}

GradcheckReport gradcheck_network(const Network<double>& net, const PointCloud& cloud,
                                  const GradcheckOptions& opts) {
  return gradcheck([&] { return net.loss(cloud); }, net.parameters(), opts);
}

std::string_view factor_name(AblationFactor f) {
  switch (f) {
    case AblationFactor::axes: return "axes";
    case AblationFactor::structure: return "structure";
    case AblationFactor::grouping: return "grouping";
    case AblationFactor::prompt: return "prompt";
    case AblationFactor::position: return "posemb";
  }
  return "?";
}

std::optional<AblationFactor> parse_factor(std::string_view name) {
  for (AblationFactor f : {AblationFactor::axes, AblationFactor::structure, AblationFactor::grouping,
                           AblationFactor::prompt, AblationFactor::position}) {
    if (factor_name(f) == name) return f;
  }
  return std::nullopt;
}

std::vector<std::string> default_levels(AblationFactor f) {
  switch (f) {
    case AblationFactor::axes: return {"none", "X", "Y", "Z", "XY", "XZ", "YZ", "XYZ"};
    case AblationFactor::structure: return {"parallel", "chained"};
    case AblationFactor::grouping: return {"1", "2", "3", "6", "9"};
    case AblationFactor::prompt:
    case AblationFactor::position: return {"on", "off"};
  }
  return {};
}

namespace {

bool parse_switch(const std::string& level) {
  if (level == "on") return true;
  if (level == "off") return false;
  throw ConfigError("ablation level must be on/off, got " + level);
}

}  // namespace

NetworkConfig apply_level(const NetworkConfig& base, AblationFactor f, const std::string& level) {
  NetworkConfig c = base;
  switch (f) {
    case AblationFactor::axes: c.axes = parse_axes(level); break;
    case AblationFactor::structure: {
      const auto s = parse_structure(level);
      if (!s) throw ConfigError("unknown structure " + level);
      c.structure = *s;
      break;
    }
    case AblationFactor::grouping: {
      const std::size_t g = std::stoul(level);
      for (auto& st : c.stages) st.group = g;
      break;
    }
    case AblationFactor::prompt: c.prompt = parse_switch(level); break;
    case AblationFactor::position: c.position = parse_switch(level); break;
  }
  c.validate();
  return c;
}

AblationPlan default_plan(AblationFactor f) {
  AblationPlan plan;
  plan.factor = f;
  plan.levels = default_levels(f);
  plan.data.samples_per_class = 4;
  plan.data.points = 64;
  plan.train.epochs = 5;
  if (f == AblationFactor::grouping) {
    // GS6 width = 2 * 18 = 36 at stage 0 and 72 at stage 1; both divisible by 18.
    plan.base.embed_width = 18;
  }
  return plan;
}

std::vector<AblationRow> run_ablation(const AblationPlan& plan, std::ostream* progress) {
  const auto levels = plan.levels.empty() ? default_levels(plan.factor) : plan.levels;
  std::vector<AblationRow> rows;
  for (std::size_t rep = 0; rep < std::max<std::size_t>(1, plan.repetitions); ++rep) {
    const std::uint64_t seed = plan.seed + rep;
    SyntheticSpec data_spec = plan.data;
    data_spec.seed = seed;
    const Dataset data = generate(data_spec);
    for (const auto& level : levels) {
      NetworkConfig cfg = apply_level(plan.base, plan.factor, level);
      cfg.seed = seed;
      auto net = Network<float>::init(cfg);
      TrainOptions topts = plan.train;
      topts.seed = seed;
      const auto log = train(net, data, topts);
      AblationRow row;
      row.level = level;
      row.repetition = rep;
      row.seed = seed;
      const auto cost = count_params_flops(cfg, data_spec.points);
      row.params = cost.params;
      row.flops = cost.flops;
      if (!log.empty()) {
        row.final_loss = log.back().loss;
        row.final_metric = log.back().metric;
      }
      if (progress) {
        *progress << factor_name(plan.factor) << '=' << level << " rep " << rep << " params " << row.params
                  << " metric " << row.final_metric << '\n';
      }
      rows.push_back(row);
    }
  }
  return rows;
}

void write_ablation_csv(std::ostream& os, const std::vector<AblationRow>& rows) {
  os << "level,repetition,seed,params,flops,final_loss,final_metric\n";
  for (const auto& r : rows) {
    os << r.level << ',' << r.repetition << ',' << r.seed << ',' << r.params << ',' << r.flops << ','
       << r.final_loss << ',' << r.final_metric << '\n';
  }
}

std::vector<TimingRow> time_block_forward(const std::vector<std::size_t>& sizes, std::size_t repeats,
                                          std::uint64_t seed, std::size_t width) {
  BlockConfig cfg;
  cfg.width = width;
  cfg.state = 8;
  cfg.group = 2;
  const Initializer init(seed);
  // Frozen copy so the forward pass builds no tape.
  auto params = HexaBlockParams<float>::init(init, "timing", cfg);
  ParameterList<float> list;
  params.collect(list, "timing");
  for (auto& p : list) p.tensor.node()->requires_grad = false;

  std::vector<TimingRow> rows;
  std::mt19937_64 rng(seed);
  for (std::size_t L : sizes) {
    auto cloud = generate_cloud(Generator::sphere, L, 0.01, rng);
    const auto features = Tensor<float>::from_data(
        {L, width}, init.uniform<float>("timing.features." + std::to_string(L), L * width, 1.0));
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < std::max<std::size_t>(1, repeats); ++r) {
      const auto t0 = std::chrono::steady_clock::now();
      const auto out = hexa_orientation_block<float>(cloud.coords, features, params, cfg);
      const auto t1 = std::chrono::steady_clock::now();
      if (out.rows() != L) throw ContractError("timing: unexpected output shape");
      best = std::min(best, std::chrono::duration<double>(t1 - t0).count());
    }
    rows.push_back({L, best});
  }
  return rows;
}

double loglog_slope(const std::vector<TimingRow>& rows) {
  if (rows.size() < 2) throw ContractError("loglog_slope: need at least two rows");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (const auto& r : rows) {
    const double x = std::log(static_cast<double>(r.points)), y = std::log(r.seconds);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double n = static_cast<double>(rows.size());
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace pcssm
