#include "pcssm/io.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"

namespace pcssm {

using nlohmann::json;

PointCloud read_point_file(std::istream& is, const PointFileOptions& opts) {
  PointCloud cloud;
  std::string line;
  std::size_t line_no = 0;
  std::size_t columns = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::vector<double> values;
    std::string token;
    while (ls >> token) {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(token, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != token.size()) throw ParseError("not a number: '" + token + "'", line_no);
      values.push_back(v);
    }
    if (values.empty()) continue;
    const std::size_t minimum = opts.last_column_label ? 4 : 3;
    if (values.size() < minimum) {
      throw ParseError("expected at least " + std::to_string(minimum) + " columns, got " +
                           std::to_string(values.size()),
                       line_no);
    }
    if (columns == 0) {
      columns = values.size();
      cloud.feature_dim = columns - minimum;
    } else if (values.size() != columns) {
      throw ParseError("expected " + std::to_string(columns) + " columns, got " +
                           std::to_string(values.size()),
                       line_no);
    }
    cloud.coords.push_back({values[0], values[1], values[2]});
    for (std::size_t f = 0; f < cloud.feature_dim; ++f) cloud.features.push_back(values[3 + f]);
    if (opts.last_column_label) cloud.point_labels.push_back(static_cast<int>(values.back()));
  }
  return cloud;
}

PointCloud read_point_file(const std::filesystem::path& path, const PointFileOptions& opts) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  return read_point_file(is, opts);
}

std::string config_to_json(const NetworkConfig& c) {
  json j;
  j["task"] = std::string(task_name(c.task));
  j["in_features"] = c.in_features;
  j["embed_width"] = c.embed_width;
  j["num_classes"] = c.num_classes;
  j["expansion"] = c.expansion;
  j["axes"] = axes_label(c.axes);
  j["structure"] = std::string(structure_name(c.structure));
  j["prompt"] = c.prompt;
  j["position"] = c.position;
  j["residual"] = c.residual;
  j["forward_skip"] = c.forward_skip;
  j["discretization"] = c.discretization == Discretization::euler ? "euler" : "zoh";
  j["scan"] = c.algorithm == ScanAlgorithm::sequential ? "sequential" : "parallel";
  j["seed"] = c.seed;
  j["stages"] = json::array();
  for (const auto& s : c.stages) {
    j["stages"].push_back({{"blocks", s.blocks},
                           {"state", s.state},
                           {"group", s.group},
                           {"rate", s.rate},
                           {"neighbors", s.neighbors}});
  }
  return j.dump(2);
}

NetworkConfig config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  NetworkConfig c;
  try {
    if (j.contains("task")) {
      const auto t = parse_task(j["task"].get<std::string>());
      if (!t) throw ConfigError("config: unknown task");
      c.task = *t;
    }
    c.in_features = j.value("in_features", c.in_features);
    c.embed_width = j.value("embed_width", c.embed_width);
    c.num_classes = j.value("num_classes", c.num_classes);
    c.expansion = j.value("expansion", c.expansion);
    if (j.contains("axes")) c.axes = parse_axes(j["axes"].get<std::string>());
    if (j.contains("structure")) {
      const auto s = parse_structure(j["structure"].get<std::string>());
      if (!s) throw ConfigError("config: unknown structure");
      c.structure = *s;
    }
    c.prompt = j.value("prompt", c.prompt);
    c.position = j.value("position", c.position);
    c.residual = j.value("residual", c.residual);
    c.forward_skip = j.value("forward_skip", c.forward_skip);
    if (j.contains("discretization")) {
      const auto d = j["discretization"].get<std::string>();
      if (d != "euler" && d != "zoh") throw ConfigError("config: discretization must be euler or zoh");
      c.discretization = d == "euler" ? Discretization::euler : Discretization::zoh;
    }
    if (j.contains("scan")) {
      const auto s = j["scan"].get<std::string>();
      if (s != "sequential" && s != "parallel") throw ConfigError("config: scan must be sequential or parallel");
      c.algorithm = s == "sequential" ? ScanAlgorithm::sequential : ScanAlgorithm::parallel;
    }
    c.seed = j.value("seed", c.seed);
    if (j.contains("stages")) {
      c.stages.clear();
      for (const auto& s : j["stages"]) {
        StageConfig st;
        st.blocks = s.value("blocks", st.blocks);
        st.state = s.value("state", st.state);
        st.group = s.value("group", st.group);
        st.rate = s.value("rate", st.rate);
        st.neighbors = s.value("neighbors", st.neighbors);
        c.stages.push_back(st);
      }
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

NetworkConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return config_from_json(ss.str());
}

namespace {

template <typename T>
constexpr const char* precision_tag() {
  return sizeof(T) == 4 ? "f32" : "f64";
}

std::filesystem::path with_suffix(const std::filesystem::path& stem, const char* ext) {
  return std::filesystem::path(stem.string() + ext);
}

}  // namespace

template <typename T>
void save_checkpoint(const ParameterList<T>& params, const std::filesystem::path& stem) {
  json manifest;
  manifest["precision"] = precision_tag<T>();
  manifest["tensors"] = json::array();
  std::ofstream bin(with_suffix(stem, ".bin"), std::ios::binary);
  if (!bin) throw std::runtime_error("cannot write " + with_suffix(stem, ".bin").string());
  std::size_t offset = 0;
  for (const auto& p : params) {
    manifest["tensors"].push_back({{"name", p.name}, {"shape", p.tensor.shape()}, {"offset", offset}});
    const auto data = p.tensor.data();
    bin.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size_bytes()));
    offset += data.size();
  }
  manifest["scalars"] = offset;
  std::ofstream js(with_suffix(stem, ".json"));
  js << manifest.dump(2) << '\n';
}

template <typename T>
void load_checkpoint(ParameterList<T>& params, const std::filesystem::path& stem) {
  std::ifstream js(with_suffix(stem, ".json"));
  if (!js) throw std::runtime_error("cannot open " + with_suffix(stem, ".json").string());
  json manifest = json::parse(js);
  if (manifest.at("precision").get<std::string>() != precision_tag<T>()) {
    throw ContractError("checkpoint precision " + manifest.at("precision").get<std::string>() +
                        " does not match " + precision_tag<T>());
  }
  const auto& tensors = manifest.at("tensors");
  if (tensors.size() != params.size()) throw ContractError("checkpoint: parameter count mismatch");
  std::ifstream bin(with_suffix(stem, ".bin"), std::ios::binary);
  if (!bin) throw std::runtime_error("cannot open " + with_suffix(stem, ".bin").string());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& entry = tensors[i];
    if (entry.at("name").get<std::string>() != params[i].name ||
        entry.at("shape").get<Shape>() != params[i].tensor.shape()) {
      throw ContractError("checkpoint: tensor " + params[i].name + " does not match manifest entry " +
                          entry.at("name").get<std::string>());
    }
    auto data = params[i].tensor.mutable_data();
    bin.seekg(static_cast<std::streamoff>(entry.at("offset").get<std::size_t>() * sizeof(T)));
    bin.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size_bytes()));
    if (!bin) throw ContractError("checkpoint: truncated binary");
  }
}

template void save_checkpoint<float>(const ParameterList<float>&, const std::filesystem::path&);
template void save_checkpoint<double>(const ParameterList<double>&, const std::filesystem::path&);
template void load_checkpoint<float>(ParameterList<float>&, const std::filesystem::path&);
template void load_checkpoint<double>(ParameterList<double>&, const std::filesystem::path&);

void write_run_manifest(const std::filesystem::path& path, const NetworkConfig& config,
                        std::uint64_t seed, const std::string& data_hash) {
  json j;
  j["config"] = json::parse(config_to_json(config));
  j["seed"] = seed;
  j["dataset_hash"] = data_hash;
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << j.dump(2) << '\n';
}

}  // namespace pcssm
