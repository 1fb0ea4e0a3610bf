#pragma once

// Encoder-decoder point network: embedding MLP, encoder stages of
// hexa-orientation blocks separated by downsampling, a mirrored decoder of
// upsampling layers for dense prediction, and the task heads.

#include <optional>
#include <string>
#include <vector>

#include "pcssm/blocks.hpp"
#include "pcssm/point_cloud.hpp"
#include "pcssm/sampling.hpp"

namespace pcssm {

enum class Task { recognition, segmentation };

std::string_view task_name(Task t);
std::optional<Task> parse_task(std::string_view name);

struct StageConfig {
  std::size_t blocks = 1;
  std::size_t state = 8;
  std::size_t group = 2;
  std::size_t rate = 4;       // downsampling into this stage; unused for stage 0
  std::size_t neighbors = 8;  // K of that downsampling
};

struct NetworkConfig {
  Task task = Task::recognition;
  std::size_t in_features = 0;  // G
  std::size_t embed_width = 32;  // H
  std::vector<StageConfig> stages{StageConfig{}, StageConfig{}};
  std::size_t num_classes = 3;
  std::size_t expansion = 2;
  std::vector<Axis> axes{Axis::z, Axis::y, Axis::x};
  Structure structure = Structure::chained;
  bool prompt = true;
  bool position = true;
  bool residual = false;
  bool forward_skip = false;
  Discretization discretization = Discretization::euler;
  ScanAlgorithm algorithm = ScanAlgorithm::sequential;
  std::uint64_t seed = 0;

  std::size_t stage_width(std::size_t stage) const { return embed_width << stage; }
  BlockConfig block_config(std::size_t stage) const;
  void validate() const;

  // Desk-scale default: two stages (32 -> 64), one block each, N=8, g=2.
  static NetworkConfig toy(Task task, std::size_t num_classes);
};

struct ModelCost {
  std::size_t params = 0;
  std::size_t flops = 0;
};

// Closed-form parameter and forward-FLOP counts for `points` input points.
ModelCost count_params_flops(const NetworkConfig& config, std::size_t points);

template <typename T>
struct EncoderStage {
  std::optional<DownsampleLayer<T>> down;
  std::vector<HexaBlockParams<T>> blocks;
};

template <typename T>
struct DecoderStage {
  UpsampleLayer<T> up;
  std::vector<HexaBlockParams<T>> blocks;
};

// Coordinates and features at one encoder level.
template <typename T>
struct Level {
  std::vector<Vec3> coords;
  Tensor<T> features;
};

template <typename T>
class Network {
 public:
  static Network init(const NetworkConfig& config) {
    config.validate();
    Network n;
    n.config_ = config;
    const Initializer init(config.seed);
    const std::size_t H = config.embed_width;
    n.embed_ = Mlp<T>::init(init, "embed", {3 + config.in_features, H, H});
    for (std::size_t s = 0; s < config.stages.size(); ++s) {
      EncoderStage<T> stage;
      const std::string sn = "enc" + std::to_string(s);
      if (s > 0) {
        stage.down = DownsampleLayer<T>::init(init, sn + ".down", config.stage_width(s - 1),
                                              config.stages[s].rate, config.stages[s].neighbors);
      }
      for (std::size_t b = 0; b < config.stages[s].blocks; ++b) {
        stage.blocks.push_back(HexaBlockParams<T>::init(init, sn + ".block" + std::to_string(b),
                                                        config.block_config(s)));
      }
      n.encoder_.push_back(std::move(stage));
    }
    if (config.task == Task::segmentation) {
      for (std::size_t s = config.stages.size(); s-- > 1;) {
        DecoderStage<T> stage;
        const std::string sn = "dec" + std::to_string(s - 1);
        stage.up = UpsampleLayer<T>::init(init, sn + ".up", config.stage_width(s - 1));
        for (std::size_t b = 0; b < config.stages[s - 1].blocks; ++b) {
          stage.blocks.push_back(HexaBlockParams<T>::init(init, sn + ".block" + std::to_string(b),
                                                          config.block_config(s - 1)));
        }
        n.decoder_.push_back(std::move(stage));
      }
      n.head_ = Mlp<T>::init(init, "head", {H, H, config.num_classes});
    } else {
      const std::size_t W = config.stage_width(config.stages.size() - 1);
      n.head_ = Mlp<T>::init(init, "head", {W, W, config.num_classes});
    }
    return n;
  }

  const NetworkConfig& config() const { return config_; }

  Tensor<T> embed(const PointCloud& cloud) const {
    if (cloud.size() == 0) throw ContractError("network: empty point cloud");
    if (cloud.feature_dim != config_.in_features) {
      throw DimensionError("network: cloud has " + std::to_string(cloud.feature_dim) +
                           " features, config expects " + std::to_string(config_.in_features));
    }
    const std::size_t G = cloud.feature_dim;
    std::vector<T> rows;
    rows.reserve(cloud.size() * (3 + G));
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      for (double c : cloud.coords[i]) rows.push_back(static_cast<T>(c));
      for (std::size_t f = 0; f < G; ++f) rows.push_back(static_cast<T>(cloud.features[i * G + f]));
    }
    return embed_(Tensor<T>::from_data({cloud.size(), 3 + G}, std::move(rows)));
  }

  // Runs the encoder and returns every level (level 0 is full resolution).
  std::vector<Level<T>> encode(const PointCloud& cloud) const {
    std::vector<Level<T>> levels;
    Level<T> cur{cloud.coords, embed(cloud)};
    for (std::size_t s = 0; s < encoder_.size(); ++s) {
      const auto& stage = encoder_[s];
      if (stage.down) {
        auto d = (*stage.down)(cur.coords, cur.features);
        cur = Level<T>{std::move(d.coords), std::move(d.features)};
      }
      const auto cfg = config_.block_config(s);
      for (const auto& block : stage.blocks) {
        cur.features = hexa_orientation_block<T>(cur.coords, cur.features, block, cfg);
      }
      levels.push_back(cur);
    }
    return levels;
  }

  // [1, num_classes]
  Tensor<T> forward_recognition(const PointCloud& cloud) const {
    if (config_.task != Task::recognition) throw ContractError("forward_recognition on a segmentation network");
    const auto levels = encode(cloud);
    return head_(mean_rows(levels.back().features));
  }

  // [L, num_parts], row i is input point i
  Tensor<T> forward_segmentation(const PointCloud& cloud) const {
    if (config_.task != Task::segmentation) throw ContractError("forward_segmentation on a recognition network");
    const auto levels = encode(cloud);
    Level<T> cur = levels.back();
    for (std::size_t i = 0; i < decoder_.size(); ++i) {
      const std::size_t s = levels.size() - 2 - i;
      const auto& parent = levels[s];
      const auto& stage = decoder_[i];
      Tensor<T> f = stage.up(cur.coords, cur.features, parent.coords, parent.features);
      const auto cfg = config_.block_config(s);
      for (const auto& block : stage.blocks) f = hexa_orientation_block<T>(parent.coords, f, block, cfg);
      cur = Level<T>{parent.coords, f};
    }
    return head_(cur.features);
  }

  Tensor<T> forward(const PointCloud& cloud) const {
    return config_.task == Task::recognition ? forward_recognition(cloud) : forward_segmentation(cloud);
  }

  // Cross-entropy against the cloud's class label or per-point labels.
  Tensor<T> loss(const PointCloud& cloud) const {
    const auto logits = forward(cloud);
    if (config_.task == Task::recognition) {
      if (cloud.label < 0) throw ContractError("loss: cloud has no class label");
      return cross_entropy(logits, {cloud.label});
    }
    if (cloud.point_labels.size() != cloud.size()) throw ContractError("loss: cloud has no point labels");
    return cross_entropy(logits, cloud.point_labels);
  }

  ParameterList<T> parameters() const {
    ParameterList<T> out;
    embed_.collect(out, "embed");
    for (std::size_t s = 0; s < encoder_.size(); ++s) {
      const std::string sn = "enc" + std::to_string(s);
      if (encoder_[s].down) encoder_[s].down->collect(out, sn + ".down");
      for (std::size_t b = 0; b < encoder_[s].blocks.size(); ++b) {
        encoder_[s].blocks[b].collect(out, sn + ".block" + std::to_string(b));
      }
    }
    for (std::size_t i = 0; i < decoder_.size(); ++i) {
      const std::string sn = "dec" + std::to_string(encoder_.size() - 2 - i);
      decoder_[i].up.collect(out, sn + ".up");
      for (std::size_t b = 0; b < decoder_[i].blocks.size(); ++b) {
        decoder_[i].blocks[b].collect(out, sn + ".block" + std::to_string(b));
      }
    }
    head_.collect(out, "head");
    return out;
  }

  // FLOPs summed from the instantiated layers.
  std::size_t flops(std::size_t points) const {
    std::vector<std::size_t> sizes;
    std::size_t L = points;
    std::size_t f = embed_.flops(L);
    for (const auto& stage : encoder_) {
      if (stage.down) {
        f += stage.down->flops(L);
        L /= stage.down->rate;
      }
      for (const auto& b : stage.blocks) f += b.flops(L);
      sizes.push_back(L);
    }
    if (config_.task == Task::recognition) return f + head_.flops(1);
    for (std::size_t i = 0; i < decoder_.size(); ++i) {
      const std::size_t s = sizes.size() - 2 - i;
      f += decoder_[i].up.flops(sizes[s], sizes[s + 1]);
      for (const auto& b : decoder_[i].blocks) f += b.flops(sizes[s]);
    }
    return f + head_.flops(points);
  }

  const Mlp<T>& embedding() const { return embed_; }
  const std::vector<EncoderStage<T>>& encoder() const { return encoder_; }
  const Mlp<T>& head() const { return head_; }

 private:
  NetworkConfig config_;
  Mlp<T> embed_;
  std::vector<EncoderStage<T>> encoder_;
  std::vector<DecoderStage<T>> decoder_;
  Mlp<T> head_;
};

}  // namespace pcssm
