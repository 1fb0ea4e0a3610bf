// pcssm command line: numeric self-checks, serialization dumps, training,
// evaluation, ablations and timing. Exit codes: 0 ok, 1 check failed,
// 2 usage or I/O error.

#include <cstdlib>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "pcssm/io.hpp"

namespace pcssm {
namespace {

constexpr int kOk = 0;
constexpr int kCheckFailed = 1;
constexpr int kUsage = 2;

// Bad flags, unreadable files, inconsistent inputs.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Precision { f32, f64 };

Precision parse_precision(const std::string& s) {
  if (s == "f32" || s == "32" || s == "float") return Precision::f32;
  if (s == "f64" || s == "64" || s == "double") return Precision::f64;
  throw UsageError("precision must be f32 or f64, got '" + s + "'");
}

std::string default_precision() {
  const char* env = std::getenv("PCSSM_PRECISION");
  if (!env || !*env) return "f32";
  parse_precision(env);
  return env;
}

template <typename F>
auto with_precision(Precision p, F&& f) {
  return p == Precision::f32 ? f(float{}) : f(double{});
}

std::vector<std::string> split(const std::string& s, char sep = ',') {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<std::size_t> parse_sizes(const std::string& s) {
  std::vector<std::size_t> out;
  for (auto item : split(s)) {
    if (item.rfind("L=", 0) == 0) item = item.substr(2);
    std::size_t used = 0;
    unsigned long v = 0;
    try {
      v = std::stoul(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size() || v == 0) throw UsageError("--sizes: bad length '" + item + "'");
    out.push_back(v);
  }
  if (out.empty()) throw UsageError("--sizes: no lengths given");
  return out;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream os(path);
  if (!os) throw UsageError("cannot write " + path);
  return os;
}

std::string fixed2(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << v;
  return os.str();
}

// ---------------------------------------------------------------------------
// scan-check

const std::vector<std::string> kSuites{"sequential-parallel", "repeat-equivalence", "attention-matrix", "zoh-rk4"};

struct ScanCheckOptions {
  std::uint64_t seed = 0;
  std::vector<std::size_t> sizes{1, 7, 8, 128};
  std::size_t cases = 50;
  std::string fault;
};

struct SuiteResult {
  std::string name;
  std::size_t cases = 0;
  double max_deviation = 0.0;
  double tolerance = 0.0;
  std::string note;
  std::optional<std::string> failure;  // reproducible description of the first breach
};

template <typename T>
std::vector<T> uniform(std::mt19937_64& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<T> v(n);
  for (auto& x : v) x = static_cast<T>(u(rng));
  return v;
}

template <typename T>
double max_dev(std::span<const T> a, std::span<const T> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(double(a[i]) - double(b[i])));
  return m;
}

template <typename T>
void record(SuiteResult& r, double dev, const std::string& where) {
  ++r.cases;
  r.max_deviation = std::max(r.max_deviation, dev);
  if (!r.failure && !(dev < r.tolerance)) r.failure = where + " deviation=" + std::to_string(dev);
}

template <typename T>
SuiteResult suite_sequential_parallel(const ScanCheckOptions& o) {
  SuiteResult r{kSuites[0], 0, 0.0, sizeof(T) == 8 ? 1e-10 : 1e-5, "", std::nullopt};
  for (std::size_t c = 0; c < o.cases; ++c) {
    const std::uint64_t seed = o.seed + c;
    std::mt19937_64 rng(seed);
    const std::size_t L = o.sizes[c % o.sizes.size()];
    const std::size_t B = 1 + rng() % 4, D = 1 + rng() % 32, N = 1 + rng() % 16;
    DiscretizedScanInputs<T> in;
    in.batch = B;
    in.length = L;
    in.channels = D;
    in.state = N;
    in.a_bar = uniform<T>(rng, B * L * D * N, 0.0, 1.0);
    in.b_bar = uniform<T>(rng, B * L * D * N);
    in.c = uniform<T>(rng, B * L * N);
    const auto x = uniform<T>(rng, B * L * D);
    const auto seq = scan_sequential<T>(in, x);
    auto par = scan_parallel<T>(in, x);
    if (o.fault == r.name) par[0] += T(1e-3);
    record<T>(r, max_dev<T>(seq, par),
              "seed=" + std::to_string(seed) + " B=" + std::to_string(B) + " L=" + std::to_string(L) +
                  " D=" + std::to_string(D) + " N=" + std::to_string(N));
  }
  return r;
}

template <typename T>
SuiteResult suite_repeat_equivalence(const ScanCheckOptions& o) {
  SuiteResult r{kSuites[1], 0, 0.0, sizeof(T) == 8 ? 1e-12 : 1e-5, "", std::nullopt};
  static constexpr std::size_t groups[] = {1, 2, 3, 4, 6};
  for (std::size_t c = 0; c < o.cases; ++c) {
    const std::uint64_t seed = o.seed + c;
    std::mt19937_64 rng(seed);
    const std::size_t L = o.sizes[c % o.sizes.size()];
    const std::size_t g = groups[rng() % 5], D = g * (1 + rng() % 4), N = 1 + rng() % 8;
    const auto p = GS6Params<T>::init(Initializer(seed), "gs6", {D, N, g});
    const auto x = Tensor<T>::from_data({L, D}, uniform<T>(rng, L * D));
    const auto mode = c % 2 ? Discretization::zoh : Discretization::euler;
    auto y = gs6_forward(x, p, {mode, ScanAlgorithm::parallel}).to_vector();
    if (o.fault == r.name) y[0] += T(1e-3);
    const auto e = gs6_forward(x, expand_to_s6(p), {mode, ScanAlgorithm::parallel});
    const std::string where = "seed=" + std::to_string(seed) + " L=" + std::to_string(L) + " D=" + std::to_string(D) +
                              " N=" + std::to_string(N) + " g=" + std::to_string(g);
    double dev = max_dev<T>(y, e.data());
    if (g == 1) {
      const auto ys = gs6_forward(x, p, {mode, ScanAlgorithm::sequential});
      const auto ref = s6_reference_forward<T>(x.data(), 1, L, p, mode);
      if (std::memcmp(ys.data().data(), ref.data(), ref.size() * sizeof(T)) != 0) {
        dev = std::max(dev, r.tolerance + max_dev<T>(ys.data(), ref));
      }
    }
    record<T>(r, dev, where);
  }
  r.note = "g=1 cases also compared bitwise with plain S6";
  return r;
}

template <typename T>
SuiteResult suite_attention_matrix(const ScanCheckOptions& o) {
  SuiteResult r{kSuites[2], 0, 0.0, sizeof(T) == 8 ? 1e-8 : 1e-4, "", std::nullopt};
  constexpr std::size_t cap = 16;
  bool capped = false;
  for (std::size_t c = 0; c < o.cases; ++c) {
    const std::uint64_t seed = o.seed + c;
    std::mt19937_64 rng(seed);
    const std::size_t L = std::min(cap, o.sizes[c % o.sizes.size()]);
    capped |= o.sizes[c % o.sizes.size()] > cap;
    const std::size_t g = 1 + rng() % 3, D = 2 * g, N = 1 + rng() % 6;
    const auto p = GS6Params<T>::init(Initializer(seed), "gs6", {D, N, g});
    const auto x = Tensor<T>::from_data({L, D}, uniform<T>(rng, L * D));
    const auto mode = c % 2 ? Discretization::zoh : Discretization::euler;
    const auto w = attention_matrix_oracle<T>(x.data(), L, p, mode);
    auto y = gs6_forward(x, p, {mode, ScanAlgorithm::parallel}).to_vector();
    if (o.fault == r.name) y[0] += T(1e-3);
    double dev = max_dev<T>(w.apply(x.data()), y);
    for (std::size_t d = 0; d < D; ++d) {
      for (std::size_t i = 0; i < L; ++i) {
        for (std::size_t j = i + 1; j < L; ++j) {
          if (w.at(d, i, j) != T(0)) dev = std::max(dev, r.tolerance + std::abs(double(w.at(d, i, j))));
        }
      }
    }
    record<T>(r, dev,
              "seed=" + std::to_string(seed) + " L=" + std::to_string(L) + " D=" + std::to_string(D) +
                  " N=" + std::to_string(N) + " g=" + std::to_string(g));
  }
  r.note = capped ? "lengths above 16 capped at 16" : "";
  return r;
}

double rk4_hold(double h, double a, double b, double u, double delta) {
  constexpr int substeps = 10000;
  const double dt = delta / substeps;
  auto f = [&](double v) { return a * v + b * u; };
  for (int i = 0; i < substeps; ++i) {
    const double k1 = f(h), k2 = f(h + 0.5 * dt * k1), k3 = f(h + 0.5 * dt * k2), k4 = f(h + dt * k3);
    h += dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
  }
  return h;
}

template <typename T>
SuiteResult suite_zoh_rk4(const ScanCheckOptions& o) {
  SuiteResult r{kSuites[3], 0, 0.0, sizeof(T) == 8 ? 1e-8 : 1e-5, "32 steps per trajectory", std::nullopt};
  const std::size_t trajectories = std::max<std::size_t>(1, o.cases / 8);
  for (std::size_t c = 0; c < trajectories; ++c) {
    const std::uint64_t seed = o.seed + c;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> ua(-3.0, -0.1), ub(-1.0, 1.0), ud(0.01, 0.3);
    const double a = ua(rng), b = ub(rng);
    T h = T(0);
    double h_rk = 0.0, dev = 0.0;
    for (int step = 0; step < 32; ++step) {
      const double delta = ud(rng), u = ub(rng);
      const auto s = zoh_discretize<T>(T(a), T(delta), T(b));
      h = s.a_bar * h + s.b_bar * T(u);
      if (o.fault == r.name && step == 0) h += T(1e-3);
      h_rk = rk4_hold(h_rk, a, b, u, delta);
      dev = std::max(dev, std::abs(double(h) - h_rk));
    }
    record<T>(r, dev, "seed=" + std::to_string(seed) + " a=" + std::to_string(a) + " b=" + std::to_string(b));
  }
  return r;
}

template <typename T>
int scan_check(const ScanCheckOptions& o) {
  const std::vector<SuiteResult> results{suite_sequential_parallel<T>(o), suite_repeat_equivalence<T>(o),
                                         suite_attention_matrix<T>(o), suite_zoh_rk4<T>(o)};
  std::cout << "suite,cases,max_deviation,tolerance,status\n";
  int code = kOk;
  for (const auto& r : results) {
    std::cout << r.name << ',' << r.cases << ',' << r.max_deviation << ',' << r.tolerance << ','
              << (r.failure ? "FAIL" : "ok") << '\n';
  }
  for (const auto& r : results) {
    if (!r.note.empty()) std::cout << "# " << r.name << ": " << r.note << '\n';
    if (r.failure) {
      std::cerr << "scan-check: suite " << r.name << " failed (" << (sizeof(T) == 8 ? "f64" : "f32")
                << "): " << *r.failure << " tolerance=" << r.tolerance << '\n';
      code = kCheckFailed;
    }
  }
  return code;
}

// ---------------------------------------------------------------------------
// serialize

struct SerializeOptions {
  std::string input;
  std::string method = "axes";
  double grid_size = 0.02;
  bool grid_given = false;
  std::string out;
};

int serialize(const SerializeOptions& o) {
  PointCloud cloud;
  try {
    cloud = read_point_file(std::filesystem::path(o.input));
  } catch (const ParseError& e) {
    throw UsageError(o.input + ": " + e.what());
  } catch (const std::runtime_error& e) {
    throw UsageError(e.what());
  }
  const auto& coords = cloud.coords;
  const std::size_t n = coords.size();
  std::ostringstream csv;
  std::vector<std::string> summary;
  if (o.method == "axes") {
    if (o.grid_given) std::cerr << "warning: --grid-size is ignored by --method axes\n";
    std::vector<AxisOrder> orders;
    std::string line = "locality";
    double mean = 0.0;
    for (Axis a : {Axis::z, Axis::y, Axis::x}) {
      orders.push_back(make_axis_order(coords, a));
      const double score = n ? locality_score(coords, orders.back().perm) : 0.0;
      mean += score / 3.0;
      line += " " + std::string(axis_name(a)) + "=" + std::to_string(score);
    }
    summary.push_back(line + " mean=" + std::to_string(mean));
    csv << "point_index,rank_z,rank_y,rank_x\n";
    for (std::size_t i = 0; i < n; ++i) {
      csv << i << ',' << orders[0].inverse[i] << ',' << orders[1].inverse[i] << ',' << orders[2].inverse[i] << '\n';
    }
  } else {
    const auto variant = o.method == "hilbert" ? CurveVariant::hilbert : CurveVariant::trans_hilbert;
    std::vector<std::size_t> rank(n);
    if (n) {
      const auto s = hilbert_serialize(coords, o.grid_size, variant);
      if (s.warning) std::cerr << "warning: " << *s.warning << '\n';
      for (std::size_t r = 0; r < n; ++r) rank[s.perm[r]] = r;
      summary.push_back("locality curve=" + std::to_string(locality_score(coords, s.perm)) +
                        " order=" + std::to_string(s.order) + " grid_size=" + std::to_string(o.grid_size));
    }
    csv << "point_index,rank_curve\n";
    for (std::size_t i = 0; i < n; ++i) csv << i << ',' << rank[i] << '\n';
  }
  summary.push_back("points " + std::to_string(n));
  if (o.out.empty()) {
    std::cout << csv.str();
    for (const auto& s : summary) std::cout << "# " << s << '\n';
  } else {
    open_out(o.out) << csv.str();
    for (const auto& s : summary) std::cout << s << '\n';
  }
  return kOk;
}

// ---------------------------------------------------------------------------
// train / eval

struct DataOptions {
  std::string generators;
  std::size_t points = 128;
  std::size_t samples_per_class = 8;
  double noise = 0.01;
};

struct RunOptions {
  std::string task = "recognition";
  bool task_given = false;
  std::string config;
  std::uint64_t seed = 0;
  DataOptions data;
  TrainOptions train;
  std::string log;
  std::string checkpoint;
  std::string manifest;
  std::string input;
  std::optional<double> target;
  bool verbose = false;
};

Task resolve_task(const RunOptions& o) {
  const auto t = parse_task(o.task);
  if (!t) throw UsageError("--task must be recognition or segmentation");
  return *t;
}

SyntheticSpec data_spec(const RunOptions& o, Task task) {
  SyntheticSpec spec;
  const std::string names = !o.data.generators.empty()      ? o.data.generators
                            : task == Task::segmentation ? "dumbbell"
                                                            : "sphere,cube,cylinder";
  spec.generators.clear();
  for (const auto& name : split(names)) {
    const auto g = parse_generator(name);
    if (!g) throw UsageError("unknown generator '" + name + "'");
    spec.generators.push_back(*g);
  }
  spec.points = o.data.points;
  spec.samples_per_class = o.data.samples_per_class;
  spec.noise = o.data.noise;
  spec.seed = o.seed;
  return spec;
}

NetworkConfig resolve_config(const RunOptions& o, const std::string& path, const SyntheticSpec& spec) {
  NetworkConfig c;
  if (!path.empty()) {
    if (!std::filesystem::exists(path)) throw UsageError("cannot open " + path);
    c = load_config(path);
    if (o.task_given) c.task = resolve_task(o);
  } else {
    c = NetworkConfig::toy(resolve_task(o), 0);
  }
  c.seed = o.seed;
  const std::size_t classes = c.task == Task::segmentation ? 2 : spec.generators.size();
  if (path.empty()) {
    c.num_classes = classes;
  } else if (c.num_classes != classes) {
    throw UsageError("config has " + std::to_string(c.num_classes) + " classes but the data has " +
                     std::to_string(classes));
  }
  c.validate();
  return c;
}

void print_report(const MetricReport& m, Task task) {
  std::cout << "overall_accuracy=" << m.overall_accuracy;
  if (task == Task::segmentation) std::cout << " instance_miou=" << m.instance_miou << " mean_iou=" << m.mean_iou;
  std::cout << '\n';
}

int check_target(const RunOptions& o, double metric) {
  if (o.target && metric < *o.target) {
    std::cerr << "metric " << metric << " below target " << *o.target << '\n';
    return kCheckFailed;
  }
  return kOk;
}

template <typename T>
int run_train(const RunOptions& o) {
  auto probe = o;
  if (!o.config.empty() && !o.task_given) probe.task = std::string(task_name(load_config(o.config).task));
  const auto spec = data_spec(probe, resolve_task(probe));
  const auto config = resolve_config(o, o.config, spec);
  const auto data = generate(spec);
  auto net = Network<T>::init(config);
  auto opts = o.train;
  opts.seed = o.seed;
  const auto log = train(net, data, opts, o.verbose ? &std::cerr : nullptr);
  if (!o.log.empty()) {
    auto os = open_out(o.log);
    write_log_csv(os, log);
  }
  if (!o.checkpoint.empty()) {
    save_checkpoint(net.parameters(), o.checkpoint);
    open_out(o.checkpoint + ".config.json") << config_to_json(config) << '\n';
  }
  if (!o.manifest.empty()) write_run_manifest(o.manifest, config, o.seed, dataset_hash(data));
  const auto report = evaluate(net, data);
  std::cout << "epochs=" << log.size() << " final_loss=" << log.back().loss << " params="
            << count_scalars(net.parameters()) << " dataset=" << dataset_hash(data) << '\n';
  print_report(report, config.task);
  return check_target(o, report.overall_accuracy);
}

template <typename T>
int run_eval(const RunOptions& o) {
  const std::string config_path = o.config.empty() ? o.checkpoint + ".config.json" : o.config;
  if (!std::filesystem::exists(config_path)) throw UsageError("cannot open " + config_path);
  const auto stored = load_config(config_path);
  auto probe = o;
  if (!o.task_given) probe.task = std::string(task_name(stored.task));
  const Task task = resolve_task(probe);
  NetworkConfig config = stored;
  config.task = task;
  auto net = Network<T>::init(config);
  auto params = net.parameters();
  if (!std::filesystem::exists(o.checkpoint + ".json")) throw UsageError("no checkpoint at " + o.checkpoint);
  load_checkpoint(params, o.checkpoint);
  if (!o.input.empty()) {
    PointCloud cloud;
    try {
      cloud = read_point_file(std::filesystem::path(o.input));
    } catch (const ParseError& e) {
      throw UsageError(o.input + ": " + e.what());
    } catch (const std::runtime_error& e) {
      throw UsageError(e.what());
    }
    const auto preds = argmax_rows(net.forward(cloud));
    std::cout << (task == Task::recognition ? "class" : "point_index,part") << '\n';
    for (std::size_t i = 0; i < preds.size(); ++i) {
      if (task == Task::segmentation) std::cout << i << ',';
      std::cout << preds[i] << '\n';
    }
    return kOk;
  }
  const auto spec = data_spec(probe, task);
  const auto data = generate(spec);
  const auto report = evaluate(net, data);
  std::cout << "dataset=" << dataset_hash(data) << '\n';
  print_report(report, task);
  return check_target(o, report.overall_accuracy);
}

// ---------------------------------------------------------------------------
// gradcheck

struct GradcheckCliOptions {
  std::string task = "recognition";
  std::uint64_t seed = 0;
  std::size_t points = 128;
  GradcheckOptions check;
  bool tamper = false;
  std::string out;
};

int run_gradcheck(GradcheckCliOptions o) {
  const auto task = parse_task(o.task);
  if (!task) throw UsageError("--task must be recognition or segmentation");
  SyntheticSpec spec;
  spec.generators = {Generator::dumbbell};
  spec.samples_per_class = 1;
  spec.points = o.points;
  spec.seed = o.seed;
  const auto cloud = generate(spec)[0];
  auto config = NetworkConfig::toy(*task, 2);
  config.seed = o.seed;
  const auto net = Network<double>::init(config);
  o.check.seed = o.seed;
  if (o.tamper) {
    o.check.tamper = [](ParameterList<double>& params) {
      for (auto& g : params.back().tensor.mutable_grad()) g *= 1.01;
    };
  }
  const auto report = gradcheck_network(net, cloud, o.check);
  std::ostringstream csv;
  csv << "group,checked,max_rel_error,status\n";
  for (const auto& g : report.groups) {
    csv << g.name << ',' << g.checked << ',' << g.max_error << ',' << (g.max_error < report.tolerance ? "ok" : "FAIL")
        << '\n';
  }
  if (o.out.empty()) {
    std::cout << csv.str();
  } else {
    open_out(o.out) << csv.str();
  }
  std::cout << "# groups=" << report.groups.size() << " max_rel_error=" << report.max_error
            << " tolerance=" << report.tolerance << " " << (report.passed ? "PASS" : "FAIL") << '\n';
  return report.passed ? kOk : kCheckFailed;
}

// ---------------------------------------------------------------------------
// ablate / timing

struct AblateOptions {
  std::string factor;
  std::string levels;
  std::size_t repetitions = 1;
  std::uint64_t seed = 0;
  std::optional<std::size_t> epochs, points, samples_per_class;
  std::string out;
  bool quiet = false;
};

int run_ablate(const AblateOptions& o) {
  const auto factor = parse_factor(o.factor);
  if (!factor) throw UsageError("--factor must be one of axes, structure, grouping, prompt, position");
  auto plan = default_plan(*factor);
  plan.levels = split(o.levels);
  for (const auto& level : plan.levels) apply_level(plan.base, *factor, level);
  plan.repetitions = o.repetitions;
  plan.seed = o.seed;
  if (o.epochs) plan.train.epochs = *o.epochs;
  if (o.points) plan.data.points = *o.points;
  if (o.samples_per_class) plan.data.samples_per_class = *o.samples_per_class;
  const auto rows = run_ablation(plan, o.quiet ? nullptr : &std::cerr);
  if (o.out.empty()) {
    write_ablation_csv(std::cout, rows);
  } else {
    auto os = open_out(o.out);
    write_ablation_csv(os, rows);
    std::cout << rows.size() << " rows written to " << o.out << '\n';
  }
  return kOk;
}

struct TimingOptions {
  std::string sizes = "128,256,512,1024,2048,4096,8192";
  std::size_t repeats = 3;
  std::size_t width = 16;
  std::uint64_t seed = 0;
  std::string out;
};

int run_timing(const TimingOptions& o) {
  const auto sizes = parse_sizes(o.sizes);
  if (sizes.size() < 2) throw UsageError("--sizes: need at least two lengths for a slope");
  const auto rows = time_block_forward(sizes, o.repeats, o.seed, o.width);
  std::ostringstream csv;
  csv << "L,seconds\n";
  for (const auto& r : rows) csv << r.points << ',' << r.seconds << '\n';
  const std::string slope = "log-log slope: " + fixed2(loglog_slope(rows));
  if (o.out.empty()) {
    std::cout << csv.str() << "# " << slope << '\n';
  } else {
    open_out(o.out) << csv.str();
    std::cout << slope << '\n';
  }
  return kOk;
}

void add_data_flags(CLI::App* sub, RunOptions& o) {
  sub->add_option("--task", o.task, "recognition or segmentation")->capture_default_str();
  sub->add_option("--config", o.config, "network config JSON");
  sub->add_option("--seed", o.seed, "seed for data, initialization and shuffling")->capture_default_str();
  sub->add_option("--generators", o.data.generators, "comma list of sphere,cube,plane,cylinder,dumbbell");
  sub->add_option("--points", o.data.points, "points per cloud")->capture_default_str();
  sub->add_option("--samples-per-class", o.data.samples_per_class, "clouds per generator")->capture_default_str();
  sub->add_option("--noise", o.data.noise, "coordinate noise")->capture_default_str();
  sub->add_option("--target", o.target, "exit 1 if the evaluated accuracy is below this");
}

int run(int argc, char** argv) {
  CLI::App app{"pcssm: grouped selective state-space point cloud toolkit"};
  app.require_subcommand(1);
  std::string precision_flag;
  const std::string precision_help = "f32 or f64 (default from PCSSM_PRECISION, else f32)";

  ScanCheckOptions sc;
  std::string sc_sizes = "1,7,8,128";
  auto* scan = app.add_subcommand("scan-check", "numeric self-check of the scan and its oracles");
  scan->add_option("--seed", sc.seed, "first case seed")->capture_default_str();
  scan->add_option("--sizes", sc_sizes, "comma list of sequence lengths")->capture_default_str();
  scan->add_option("--cases", sc.cases, "cases per suite")->capture_default_str();
  scan->add_option("--precision", precision_flag, precision_help);
  scan->add_option("--inject-fault", sc.fault, "perturb one suite's output (negative control)")
      ->check(CLI::IsMember(kSuites));

  GradcheckCliOptions gc;
  auto* grad = app.add_subcommand("gradcheck", "finite-difference check of every parameter group (f64)");
  grad->add_option("--task", gc.task, "recognition or segmentation")->capture_default_str();
  grad->add_option("--seed", gc.seed)->capture_default_str();
  grad->add_option("--points", gc.points)->capture_default_str();
  grad->add_option("--entries", gc.check.entries_per_group, "entries per group, 0 for all")->capture_default_str();
  grad->add_option("--tolerance", gc.check.tolerance)->capture_default_str();
  grad->add_option("--step", gc.check.step)->capture_default_str();
  grad->add_flag("--tamper", gc.tamper, "scale one analytic gradient by 1.01 (negative control)");
  grad->add_option("--out", gc.out, "per-group CSV");

  SerializeOptions so;
  auto* ser = app.add_subcommand("serialize", "write the serialization ranks of a point file");
  ser->add_option("--input", so.input, "point file: x y z [features...]")->required();
  ser->add_option("--method", so.method)->check(CLI::IsMember({"axes", "hilbert", "trans-hilbert"}))->capture_default_str();
  auto* grid = ser->add_option("--grid-size", so.grid_size, "curve grid size")->capture_default_str();
  ser->add_option("--out", so.out, "CSV path (default stdout)");

  RunOptions tr;
  auto* trn = app.add_subcommand("train", "train on a synthetic dataset");
  add_data_flags(trn, tr);
  trn->add_option("--precision", precision_flag, precision_help);
  trn->add_option("--epochs", tr.train.epochs)->capture_default_str();
  trn->add_option("--lr", tr.train.lr)->capture_default_str();
  trn->add_option("--batch", tr.train.batch)->capture_default_str();
  trn->add_option("--log", tr.log, "per-epoch CSV");
  trn->add_option("--checkpoint", tr.checkpoint, "checkpoint stem");
  trn->add_option("--manifest", tr.manifest, "run manifest JSON");
  trn->add_flag("--verbose", tr.verbose, "per-epoch progress on stderr");

  RunOptions ev;
  auto* evl = app.add_subcommand("eval", "evaluate a checkpoint");
  add_data_flags(evl, ev);
  evl->add_option("--precision", precision_flag, precision_help);
  evl->add_option("--checkpoint", ev.checkpoint, "checkpoint stem")->required();
  evl->add_option("--input", ev.input, "predict on one point file instead of a synthetic set");

  AblateOptions ab;
  auto* abl = app.add_subcommand("ablate", "train one row per factor level");
  abl->add_option("--factor", ab.factor, "axes, structure, grouping, prompt or position")->required();
  abl->add_option("--levels", ab.levels, "comma list (default: the factor's level set)");
  abl->add_option("--repetitions", ab.repetitions)->capture_default_str();
  abl->add_option("--seed", ab.seed)->capture_default_str();
  abl->add_option("--epochs", ab.epochs);
  abl->add_option("--points", ab.points);
  abl->add_option("--samples-per-class", ab.samples_per_class);
  abl->add_option("--out", ab.out, "CSV path (default stdout)");
  abl->add_flag("--quiet", ab.quiet);

  TimingOptions tm;
  auto* tim = app.add_subcommand("timing", "forward wall time against sequence length");
  tim->add_option("--sizes", tm.sizes)->capture_default_str();
  tim->add_option("--repeats", tm.repeats)->capture_default_str();
  tim->add_option("--width", tm.width)->capture_default_str();
  tim->add_option("--seed", tm.seed)->capture_default_str();
  tim->add_option("--out", tm.out, "CSV path (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  const Precision precision = parse_precision(precision_flag.empty() ? default_precision() : precision_flag);
  if (*scan) {
    sc.sizes = parse_sizes(sc_sizes);
    return with_precision(precision, [&](auto t) { return scan_check<decltype(t)>(sc); });
  }
  if (*grad) return run_gradcheck(gc);
  if (*ser) {
    so.grid_given = grid->count() > 0;
    return serialize(so);
  }
  if (*trn) {
    tr.task_given = trn->get_option("--task")->count() > 0;
    return with_precision(precision, [&](auto t) { return run_train<decltype(t)>(tr); });
  }
  if (*evl) {
    ev.task_given = evl->get_option("--task")->count() > 0;
    return with_precision(precision, [&](auto t) { return run_eval<decltype(t)>(ev); });
  }
  if (*abl) return run_ablate(ab);
  if (*tim) return run_timing(tm);
  return kUsage;
}

}  // namespace
}  // namespace pcssm

int main(int argc, char** argv) {
  try {
    return pcssm::run(argc, argv);
  } catch (const pcssm::UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return pcssm::kUsage;
  } catch (const pcssm::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return pcssm::kUsage;
  } catch (const pcssm::ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return pcssm::kUsage;
  } catch (const pcssm::ContractError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return pcssm::kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return pcssm::kCheckFailed;
  }
}
