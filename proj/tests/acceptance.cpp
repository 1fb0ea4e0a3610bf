// Acceptance run: one PASS/FAIL line per criterion with the measured values.
// Usage: acceptance [criterion numbers...]   (default: all)

#include <chrono>
#include <cstring>
#include <functional>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>

#include "oracles.hpp"
#include "pcssm/harness.hpp"
#include "test_util.hpp"

namespace pcssm {
namespace {

using testing::max_abs_diff;
using testing::random_coords;
using testing::random_tensor;
using testing::random_vector;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(3) << v;
  return os.str();
}

GS6Params<double> spread_params(std::uint64_t seed, GS6Dims dims) {
  auto p = GS6Params<double>::init(Initializer(seed), "p", dims);
  std::mt19937_64 rng(seed);
  for (auto& v : p.a_log.mutable_data()) v += std::uniform_real_distribution<double>(-0.5, 0.5)(rng);
  return p;
}

template <typename T>
double scan_case(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  static constexpr std::size_t lengths[] = {1, 7, 8, 128};
  const std::size_t B = 1 + rng() % 4, L = lengths[rng() % 4], D = 1 + rng() % 32, N = 1 + rng() % 16;
  DiscretizedScanInputs<T> in;
  in.batch = B;
  in.length = L;
  in.channels = D;
  in.state = N;
  const auto a = random_vector(rng, B * L * D * N, 0.0, 1.0), b = random_vector(rng, B * L * D * N),
             c = random_vector(rng, B * L * N), xv = random_vector(rng, B * L * D);
  in.a_bar.assign(a.begin(), a.end());
  in.b_bar.assign(b.begin(), b.end());
  in.c.assign(c.begin(), c.end());
  const std::vector<T> x(xv.begin(), xv.end());
  const auto s = scan_sequential<T>(in, x), p = scan_parallel<T>(in, x);
  double m = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) m = std::max(m, std::abs(double(s[i]) - double(p[i])));
  return m;
}

Outcome scan_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  double e64 = 0, e32 = 0;
  for (std::uint64_t s = 0; s < 200; ++s) {
    e64 = std::max(e64, scan_case<double>(s));
    e32 = std::max(e32, scan_case<float>(s));
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {e64 < 1e-10 && e32 < 1e-5 && secs < 30.0,
          "200 cases, max|par-seq| f64=" + fmt(e64) + " f32=" + fmt(e32) + ", " + fmt(secs) + " s"};
}

Outcome repeat_equivalence() {
  std::mt19937_64 rng(21);
  double worst = 0, naive = 0;
  for (int trial = 0; trial < 50; ++trial) {
    static constexpr std::size_t groups[] = {2, 3, 4, 6};
    const std::size_t g = groups[rng() % 4];
    const std::size_t D = g * (1 + rng() % 4), N = 1 + rng() % 8, L = 1 + rng() % 20;
    const auto p = spread_params(trial, {D, N, g});
    const auto x = random_tensor(rng, {L, D});
    const auto mode = trial % 2 ? Discretization::zoh : Discretization::euler;
    const auto yg = gs6_forward(x, p, {mode, ScanAlgorithm::parallel});
    const auto ye = gs6_forward(x, expand_to_s6(p), {mode, ScanAlgorithm::parallel});
    worst = std::max(worst, max_abs_diff(yg.data(), ye.data()));
    naive = std::max(naive, max_abs_diff(yg.data(), testing::naive_s6(x.data(), L, p, mode)));
  }
  bool bitwise = true;
  for (int trial = 0; trial < 20; ++trial) {
    const auto p = GS6Params<double>::init(Initializer(trial), "s6", {6, 5, 1});
    const auto x = random_tensor(rng, {2, 11, 6});
    for (auto mode : {Discretization::euler, Discretization::zoh}) {
      const auto y = gs6_forward(x, p, {mode, ScanAlgorithm::sequential});
      const auto ref = s6_reference_forward<double>(x.data(), 2, 11, p, mode);
      bitwise = bitwise && std::memcmp(y.data().data(), ref.data(), ref.size() * sizeof(double)) == 0;
    }
  }
  return {worst < 1e-12 && naive < 1e-12 && bitwise,
          "50 cases, max|GS6-expanded S6|=" + fmt(worst) + ", vs naive recurrence " + fmt(naive) +
              "; g=1 bitwise equal to plain S6: " + (bitwise ? "yes" : "no")};
}

Outcome attention_matrix() {
  std::mt19937_64 rng(24);
  double worst = 0;
  bool upper_zero = true;
  std::size_t cases = 0;
  for (std::size_t L = 1; L <= 16; ++L) {
    for (auto mode : {Discretization::euler, Discretization::zoh}) {
      const std::size_t g = 1 + L % 3;
      const auto p = spread_params(L, {6, 4, g});
      const auto x = random_tensor(rng, {L, 6});
      const auto w = attention_matrix_oracle<double>(x.data(), L, p, mode);
      const auto y = gs6_forward(x, p, {mode, ScanAlgorithm::parallel});
      worst = std::max(worst, max_abs_diff(w.apply(x.data()), y.data()));
      for (std::size_t d = 0; d < 6; ++d) {
        for (std::size_t i = 0; i < L; ++i) {
          for (std::size_t j = i + 1; j < L; ++j) upper_zero = upper_zero && w.at(d, i, j) == 0.0;
        }
      }
      ++cases;
    }
  }
  return {worst < 1e-8 && upper_zero, std::to_string(cases) + " cases L=1..16, max|Wx-scan|=" + fmt(worst) +
                                          ", upper triangle zero: " + (upper_zero ? "yes" : "no")};
}

Outcome zoh_fidelity() {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> ua(-3.0, -0.1), ub(-1.0, 1.0), ud(0.01, 0.3);
  double worst = 0;
  for (int trial = 0; trial < 8; ++trial) {
    const double a = ua(rng), b = ub(rng);
    double h_disc = 0.0, h_rk = 0.0;
    for (int step = 0; step < 32; ++step) {
      const double delta = ud(rng), u = ub(rng);
      const auto s = zoh_discretize(a, delta, b);
      h_disc = s.a_bar * h_disc + s.b_bar * u;
      h_rk = testing::rk4_hold(h_rk, a, b, u, delta);
      worst = std::max(worst, std::abs(h_disc - h_rk));
    }
  }
  return {worst < 1e-8, "8 trajectories x 32 steps, max|zoh-rk4|=" + fmt(worst)};
}

Outcome gradient_suite() {
  const auto t0 = std::chrono::steady_clock::now();
  SyntheticSpec spec;
  spec.generators = {Generator::dumbbell};
  spec.samples_per_class = 1;
  const auto cloud = generate(spec)[0];
  bool pass = true;
  std::string detail;
  for (Task t : {Task::recognition, Task::segmentation}) {
    const auto net = Network<double>::init(NetworkConfig::toy(t, 2));
    GradcheckOptions opts;
    const auto r = gradcheck_network(net, cloud, opts);
    std::size_t failing = 0;
    for (const auto& g : r.groups) failing += g.max_error >= opts.tolerance;
    pass = pass && r.passed && r.groups.size() == net.parameters().size();
    detail += std::string(task_name(t)) + ": " + std::to_string(r.groups.size()) + " groups, " +
              std::to_string(failing) + " failing, max rel err " + fmt(r.max_error) + "; ";
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {pass && secs < 300.0, detail + "h=1e-5, " + fmt(secs) + " s"};
}

Outcome serialization_round_trip() {
  std::mt19937_64 rng(2);
  const std::size_t L = 17, D = 5;
  const auto coords = random_coords(rng, L);
  std::vector<double> marker(L * D);
  for (std::size_t i = 0; i < L * D; ++i) marker[i] = double(i);
  const auto features = Tensor<double>::from_data({L, D}, marker);
  double worst = 0;
  std::size_t subsets = 0;
  for (const auto& axes : all_axis_subsets()) {
    for (bool prompt : {false, true}) {
      const auto set = expand<double>(coords, features, axes);
      std::vector<Tensor<double>> processed;
      std::vector<AxisOrder> orders;
      for (const auto& s : set) {
        processed.push_back(attach_prompt_and_positions<double>(
            s.features, prompt ? Tensor<double>::full({D}, -99.0) : Tensor<double>(), {}, nullptr, s.coords));
        orders.push_back(s.order);
      }
      const auto out = merge(processed, orders, MergeReducer<double>::block_mean(axes.size(), D), prompt);
      worst = std::max(worst, max_abs_diff(out.data(), marker));
    }
    ++subsets;
  }
  std::size_t valid = 0, degenerate = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = rng() % 64;
    std::vector<Vec3> c = trial % 10 == 0 ? std::vector<Vec3>(n, Vec3{0.25, -0.5, 1.0}) : random_coords(rng, n);
    for (auto& p : c) {
      if (trial % 10 && rng() % 3 == 0) p[rng() % 3] = 0.0;
    }
    bool ok = true;
    for (Axis a : {Axis::z, Axis::y, Axis::x, Axis::none}) {
      const auto o = make_axis_order(c, a);
      ok = ok && is_permutation(o.perm, n);
      for (std::size_t i = 0; ok && i < n; ++i) ok = o.perm[o.inverse[i]] == i;
    }
    valid += ok;
    degenerate += trial % 10 == 0;
  }
  return {worst < 1e-12 && subsets == 7 && valid == 1000,
          std::to_string(subsets) + " subsets x prompt on/off, max marker error " + fmt(worst) + "; " +
              std::to_string(valid) + "/1000 clouds valid (" + std::to_string(degenerate) + " all-duplicate)"};
}

Outcome order_invariance() {
  const auto net = Network<float>::init(NetworkConfig::toy(Task::recognition, 3));
  double worst = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(seed);
    PointCloud cloud;
    cloud.coords = random_coords(rng, 128);
    std::set<Vec3> distinct(cloud.coords.begin(), cloud.coords.end());
    if (distinct.size() != cloud.size()) return {false, "generated cloud has duplicates"};
    std::vector<std::size_t> perm(cloud.size());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    const auto a = net.forward(cloud), b = net.forward(reorder(cloud, perm));
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(double(a[i]) - double(b[i])));
  }
  return {worst < 1e-5, "10 clouds x 128 points, f32, max logit change " + fmt(worst)};
}

Outcome structures() {
  bool counts = true;
  std::string detail;
  for (Task t : {Task::recognition, Task::segmentation}) {
    auto c = NetworkConfig::toy(t, 3), p = c;
    p.structure = Structure::parallel;
    const auto cc = count_params_flops(c, 128).params, pc = count_params_flops(p, 128).params;
    counts = counts && cc == pc && cc == count_scalars(Network<double>::init(c).parameters()) &&
             pc == count_scalars(Network<double>::init(p).parameters());
    detail += std::string(task_name(t)) + " params chained=" + std::to_string(cc) + " parallel=" + std::to_string(pc) + "; ";
  }
  std::mt19937_64 rng(4);
  const auto f = MambaBlockParams<double>::init(Initializer(6), "f", 4, 4, 2);
  const auto b = MambaBlockParams<double>::init(Initializer(7), "b", 4, 4, 2);
  const auto x = random_tensor(rng, {8, 4});
  const double witness = max_abs_diff(chained_bidirectional(x, f, b).data(), parallel_bidirectional(x, f, b).data());
  auto c = NetworkConfig::toy(Task::recognition, 3), p = c;
  p.structure = Structure::parallel;
  PointCloud cloud;
  cloud.coords = random_coords(rng, 128);
  const double net_witness = max_abs_diff(Network<double>::init(c).forward(cloud).data(),
                                          Network<double>::init(p).forward(cloud).data());
  auto first_shift = [&](const std::function<Tensor<double>(const Tensor<double>&)>& block) {
    auto v = x.to_vector();
    for (std::size_t j = 0; j < 4; ++j) v[7 * 4 + j] += 0.5;
    const auto y0 = block(x), y1 = block(Tensor<double>::from_data({8, 4}, v));
    double m = 0;
    for (std::size_t j = 0; j < 4; ++j) m = std::max(m, std::abs(y0.at(0, j) - y1.at(0, j)));
    return m;
  };
  const double chained = first_shift([&](const Tensor<double>& s) { return chained_bidirectional(s, f, b); });
  const double forward_only = first_shift([&](const Tensor<double>& s) { return mamba_unidirectional(s, f); });
  return {counts && witness > 1e-10 && net_witness > 1e-10 && chained > 1e-8 && forward_only == 0.0,
          detail + "reference counts 9.95 M for both; block output gap " + fmt(witness) + ", network logit gap " +
              fmt(net_witness) + "; token-0 shift from last-token perturbation chained=" + fmt(chained) +
              " forward-only=" + fmt(forward_only)};
}

Outcome grouping_structure() {
  bool pass = true;
  std::string detail;
  for (Task t : {Task::recognition, Task::segmentation}) {
    auto base = NetworkConfig::toy(t, 3);
    base.embed_width = 18;
    std::size_t prev = 0, prev_g = 0;
    detail += std::string(task_name(t)) + ":";
    for (std::size_t g : {1u, 2u, 3u, 6u, 9u}) {
      auto c = base;
      for (auto& s : c.stages) s.group = g;
      const std::size_t params = count_params_flops(c, 64).params;
      pass = pass && params == count_scalars(Network<double>::init(c).parameters());
      detail += " g" + std::to_string(g) + "=" + std::to_string(params);
      if (prev_g) {
        std::size_t delta = 0;
        for (std::size_t s = 0; s < c.stages.size(); ++s) {
          const std::size_t E = c.expansion * c.stage_width(s), N = c.stages[s].state;
          const std::size_t instances = c.stages[s].blocks * (t == Task::segmentation && s + 1 < c.stages.size() ? 2 : 1);
          delta += instances * c.axes.size() * 2 * (E / prev_g - E / g) * (N + 1 + E);
        }
        pass = pass && params < prev && prev - params == delta;
      }
      prev = params;
      prev_g = g;
    }
    detail += "; ";
  }
  bool rejected = false;
  try {
    GS6Dims{10, 4, 3}.validate();
  } catch (const ConfigError&) {
    rejected = true;
  }
  auto bad = NetworkConfig::toy(Task::recognition, 3);
  bad.stages[0].group = 5;
  try {
    Network<double>::init(bad);
    rejected = false;
  } catch (const ConfigError&) {
  }
  return {pass && rejected, detail + "closed-form deltas match; D mod g != 0 rejected: " + (rejected ? "yes" : "no")};
}

Outcome toy_overfit() {
  const auto t0 = std::chrono::steady_clock::now();
  SyntheticSpec rec;
  rec.samples_per_class = 8;
  rec.points = 128;
  const auto rdata = generate(rec);
  auto rnet = Network<float>::init(NetworkConfig::toy(Task::recognition, 3));
  TrainOptions ropts;
  ropts.epochs = 60;
  const auto rlog = train(rnet, rdata, ropts);
  const double roa = evaluate(rnet, rdata).overall_accuracy;

  SyntheticSpec seg = rec;
  seg.generators = {Generator::dumbbell};
  const auto sdata = generate(seg);
  auto snet = Network<float>::init(NetworkConfig::toy(Task::segmentation, 2));
  TrainOptions sopts;
  sopts.epochs = 40;
  const auto slog = train(snet, sdata, sopts);
  const double soa = evaluate(snet, sdata).overall_accuracy;
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  auto first_reach = [](const std::vector<EpochLog>& log, double level) {
    for (const auto& e : log) {
      if (e.metric >= level) return std::to_string(e.epoch + 1);
    }
    return std::string("never");
  };
  return {roa >= 0.95 && soa >= 0.90 && secs < 600.0,
          "recognition train OA " + fmt(roa) + " after " + std::to_string(ropts.epochs) + " epochs (>=0.95 at epoch " +
              first_reach(rlog, 0.95) + "); segmentation per-point acc " + fmt(soa) + " after " +
              std::to_string(sopts.epochs) + " epochs (>=0.90 at epoch " + first_reach(slog, 0.90) + "); " +
              fmt(secs) + " s"};
}

Outcome timing() {
  const auto rows = time_block_forward({128, 256, 512, 1024, 2048, 4096, 8192}, 3, 0);
  const double slope = loglog_slope(rows);
  std::string detail = "slope " + fmt(slope) + " over";
  for (const auto& r : rows) detail += " " + std::to_string(r.points) + ":" + fmt(r.seconds) + "s";
  return {std::abs(slope - 1.0) <= 0.25, detail};
}

Outcome ablation_levels() {
  bool pass = default_levels(AblationFactor::axes) ==
                  std::vector<std::string>{"none", "X", "Y", "Z", "XY", "XZ", "YZ", "XYZ"} &&
              default_levels(AblationFactor::grouping) == std::vector<std::string>{"1", "2", "3", "6", "9"};
  std::string detail;
  for (auto f : {AblationFactor::axes, AblationFactor::grouping}) {
    auto plan = default_plan(f);
    plan.data.samples_per_class = 1;
    plan.data.points = 32;
    plan.train.epochs = 1;
    plan.repetitions = 2;
    plan.seed = 11;
    const auto rows = run_ablation(plan);
    const auto levels = default_levels(f);
    pass = pass && rows.size() == 2 * levels.size();
    std::set<std::string> emitted;
    for (std::size_t i = 0; i < rows.size() && pass; ++i) {
      emitted.insert(rows[i].level);
      pass = rows[i].seed == plan.seed + rows[i].repetition;
    }
    pass = pass && emitted == std::set<std::string>(levels.begin(), levels.end());
    if (f == AblationFactor::grouping) {
      for (std::size_t i = 1; i < levels.size() && pass; ++i) pass = rows[i].params < rows[i - 1].params;
    }
    detail += std::string(factor_name(f)) + ": " + std::to_string(emitted.size()) + " levels {";
    for (const auto& l : levels) detail += (l == levels.front() ? "" : ",") + l;
    detail += "} x 2 repetitions; ";
  }
  return {pass, detail + "seeds matched across levels per repetition"};
}

}  // namespace
}  // namespace pcssm

int main(int argc, char** argv) {
  using namespace pcssm;
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"scan oracle equivalence", scan_oracle},
      {"GS6 repeat-equivalence", repeat_equivalence},
      {"attention-matrix oracle", attention_matrix},
      {"ZOH fidelity", zoh_fidelity},
      {"gradient suite", gradient_suite},
      {"serialization round trip", serialization_round_trip},
      {"point-order invariance", order_invariance},
      {"chained vs parallel structure", structures},
      {"grouping-rate structure", grouping_structure},
      {"toy overfit", toy_overfit},
      {"timing slope", timing},
      {"ablation level sets", ablation_levels},
  };
  std::set<std::size_t> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::stoul(argv[i]));
  bool all = true;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (!selected.empty() && !selected.count(i + 1)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    all = all && o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " [" << std::setw(2) << i + 1 << "] " << criteria[i].first << ": "
              << o.detail << " (" << std::fixed << std::setprecision(1) << secs << " s)" << std::defaultfloat
              << std::endl;
  }
  return all ? 0 : 1;
}
