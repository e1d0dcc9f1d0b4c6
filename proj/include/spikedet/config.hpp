#pragma once

#include "spikedet/blocks.hpp"

#include <cstdint>
#include <map>
#include <string>

namespace spikedet {

/// Flat "[section]" + "key = value" file; comments start with '#' or ';'.
/// Keys are stored as "section.key".
using ConfigMap = std::map<std::string, std::string>;

ConfigMap parse_ini(std::istream& in);
ConfigMap parse_ini_file(const std::string& path);

/// FNV-1a over the sorted, canonicalized key=value lines; hex string.
std::string config_hash(const ConfigMap& m);

struct ExperimentConfig {
  ConfigMap raw;

  // [network]
  int depth = 10;
  double width = 0.25;
  int in_channels = 3;
  int num_classes = 2;
  int fusion_directions = 0;

  // [neuron]
  double tau = 0.25;
  double v_th = 1.0;
  int d_max = 4;
  int t_steps = 1;

  // [metrics]
  int lfsi_s = 3;

  // [train]
  std::uint64_t seed = 1;
  int epochs = 30;
  double lr = 0.01;
  double momentum = 0.9;
  std::string task = "patterns";
  int train_samples = 32;
  int eval_samples = 16;
  int batch_size = 8;

  // [codec]
  std::string events_path;
  std::string image;  // "random" or empty
  std::int64_t window_us = 100000;
  int sensor_width = 32;
  int sensor_height = 32;
  double clip_max = 4.0;

  // [output]
  std::string out_dir = ".";
  std::string format = "json";  // json|csv

  static ExperimentConfig from_map(const ConfigMap& m);
  static ExperimentConfig load(const std::string& path);
  NetworkSpec network_spec() const;
  std::string hash() const { return config_hash(raw); }
};

}  // namespace spikedet
