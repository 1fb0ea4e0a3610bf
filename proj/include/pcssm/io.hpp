#pragma once

// File formats: ASCII point files, JSON network configs, checkpoints (flat
// binary + JSON manifest) and run manifests.

#include <filesystem>
#include <iosfwd>
#include <string>

#include "pcssm/harness.hpp"

namespace pcssm {

struct PointFileOptions {
  bool last_column_label = false;  // trailing column is a per-point integer label
};

// One point per line: `x y z [f...] [label]`; `#` starts a comment. Every
// data line must have the same column count.
PointCloud read_point_file(std::istream& is, const PointFileOptions& opts = {});
PointCloud read_point_file(const std::filesystem::path& path, const PointFileOptions& opts = {});

std::string config_to_json(const NetworkConfig& config);
NetworkConfig config_from_json(const std::string& text);
NetworkConfig load_config(const std::filesystem::path& path);

// <stem>.bin holds the scalars of every parameter back to back in list
// order; <stem>.json lists name, shape, offset and precision.
template <typename T>
void save_checkpoint(const ParameterList<T>& params, const std::filesystem::path& stem);

// Loads into an existing parameter list; names, shapes and precision must match.
template <typename T>
void load_checkpoint(ParameterList<T>& params, const std::filesystem::path& stem);

void write_run_manifest(const std::filesystem::path& path, const NetworkConfig& config,
                        std::uint64_t seed, const std::string& data_hash);

}  // namespace pcssm
