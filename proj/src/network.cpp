#include "pcssm/network.hpp"

namespace pcssm {

std::string_view structure_name(Structure s) {
  return s == Structure::chained ? "chained" : "parallel";
}

std::optional<Structure> parse_structure(std::string_view name) {
  if (name == "chained") return Structure::chained;
  if (name == "parallel") return Structure::parallel;
  return std::nullopt;
}

std::string_view task_name(Task t) {
  return t == Task::recognition ? "recognition" : "segmentation";
}

std::optional<Task> parse_task(std::string_view name) {
  if (name == "recognition") return Task::recognition;
  if (name == "segmentation") return Task::segmentation;
  return std::nullopt;
}

BlockConfig NetworkConfig::block_config(std::size_t stage) const {
  BlockConfig b;
  b.width = stage_width(stage);
  b.state = stages.at(stage).state;
  b.group = stages.at(stage).group;
  b.expansion = expansion;
  b.axes = axes;
  b.structure = structure;
  b.residual = residual;
  b.forward_skip = forward_skip;
  b.prompt = prompt;
  b.position = position;
  b.scan = ScanOptions{discretization, algorithm};
  return b;
}

void NetworkConfig::validate() const {
  if (stages.empty()) throw ConfigError("network: at least one stage required");
  if (embed_width == 0 || num_classes == 0 || expansion == 0) {
    throw ConfigError("network: widths and class count must be positive");
  }
  for (std::size_t s = 0; s < stages.size(); ++s) {
    if (s > 0 && (stages[s].rate == 0 || stages[s].neighbors == 0)) {
      throw ConfigError("network: stage " + std::to_string(s) + " needs positive rate and K");
    }
    block_config(s).validate();
  }
}

NetworkConfig NetworkConfig::toy(Task task, std::size_t num_classes) {
  NetworkConfig c;
  c.task = task;
  c.num_classes = num_classes;
  return c;
}

namespace {

std::size_t linear_params(std::size_t in, std::size_t out, bool bias = true) {
  return in * out + (bias ? out : 0);
}

std::size_t mamba_params(std::size_t D, std::size_t E, std::size_t N, std::size_t g) {
  return D + linear_params(D, 2 * E, false) + count_gs6_params({E, N, g}).total() +
         linear_params(E, D, false);
}

std::size_t mamba_flops(std::size_t L, std::size_t D, std::size_t E, std::size_t N, std::size_t g) {
  return 2 * L * D * 2 * E + 2 * L * E * (2 * N + E / g) + 7 * L * E * N + 2 * L * E * D;
}

ModelCost hexa_cost(const BlockConfig& b, std::size_t L) {
  const std::size_t D = b.width, E = b.expansion * D, k = b.axes.size();
  ModelCost c;
  if (b.position) {
    c.params += linear_params(3, D) + linear_params(D, D);
    c.flops += 2 * L * 3 * D + 2 * L * D * D;
  }
  const std::size_t seq = L + (b.prompt ? 1 : 0);
  for (std::size_t a = 0; a < k; ++a) {
    if (b.prompt) c.params += D + (b.position ? D : 0);
    c.params += 2 * mamba_params(D, E, b.state, b.group);
    c.flops += 2 * mamba_flops(seq, D, E, b.state, b.group);
  }
  c.params += linear_params(k * D, D);
  c.flops += 2 * L * k * D * D;
  return c;
}

}  // namespace

ModelCost count_params_flops(const NetworkConfig& config, std::size_t points) {
  config.validate();
  ModelCost total;
  const std::size_t H = config.embed_width, G = config.in_features;
  total.params += linear_params(3 + G, H) + linear_params(H, H);
  total.flops += 2 * points * (3 + G) * H + 2 * points * H * H;
  std::vector<std::size_t> sizes;
  std::size_t L = points;
  for (std::size_t s = 0; s < config.stages.size(); ++s) {
    const auto& st = config.stages[s];
    if (s > 0) {
      const std::size_t W = config.stage_width(s - 1);
      total.params += linear_params(W + 3, 2 * W);
      total.flops += 2 * (L / st.rate) * st.neighbors * (W + 3) * 2 * W;
      L /= st.rate;
    }
    for (std::size_t b = 0; b < st.blocks; ++b) {
      const auto c = hexa_cost(config.block_config(s), L);
      total.params += c.params;
      total.flops += c.flops;
    }
    sizes.push_back(L);
  }
  if (config.task == Task::recognition) {
    const std::size_t W = config.stage_width(config.stages.size() - 1);
    total.params += linear_params(W, W) + linear_params(W, config.num_classes);
    total.flops += 2 * W * W + 2 * W * config.num_classes;
    return total;
  }
  for (std::size_t s = config.stages.size(); s-- > 1;) {
    const std::size_t W = config.stage_width(s - 1);
    total.params += linear_params(2 * W, W) + linear_params(W, W);
    total.flops += 2 * sizes[s] * 2 * W * W + 2 * sizes[s - 1] * W * W;
    for (std::size_t b = 0; b < config.stages[s - 1].blocks; ++b) {
      const auto c = hexa_cost(config.block_config(s - 1), sizes[s - 1]);
      total.params += c.params;
      total.flops += c.flops;
    }
  }
  total.params += linear_params(H, H) + linear_params(H, config.num_classes);
  total.flops += 2 * points * H * H + 2 * points * H * config.num_classes;
  return total;
}

}  // namespace pcssm
