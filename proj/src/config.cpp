#include "spikedet/config.hpp"

#include <fstream>
#include <istream>
#include <sstream>

namespace spikedet {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t");
  return s.substr(a, b - a + 1);
}

double get_double(const ConfigMap& m, const std::string& key, double dflt) {
  auto it = m.find(key);
  if (it == m.end()) return dflt;
  try {
    size_t pos = 0;
    double v = std::stod(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ParseError("config key '" + key + "': bad number '" + it->second + "'");
  }
}

std::int64_t get_int(const ConfigMap& m, const std::string& key, std::int64_t dflt) {
  auto it = m.find(key);
  if (it == m.end()) return dflt;
  try {
    size_t pos = 0;
    std::int64_t v = std::stoll(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ParseError("config key '" + key + "': bad integer '" + it->second + "'");
  }
}

std::string get_str(const ConfigMap& m, const std::string& key, const std::string& dflt) {
  auto it = m.find(key);
  return it == m.end() ? dflt : it->second;
}

}  // namespace

ConfigMap parse_ini(std::istream& in) {
  ConfigMap m;
  std::string line, section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[') {
      if (t.back() != ']' || t.size() < 3)
        throw ParseError("config line " + std::to_string(line_no) + ": bad section header");
      section = trim(t.substr(1, t.size() - 2));
      continue;
    }
    size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw ParseError("config line " + std::to_string(line_no) + ": expected key = value");
    std::string key = trim(t.substr(0, eq));
    std::string val = trim(t.substr(eq + 1));
    if (key.empty())
      throw ParseError("config line " + std::to_string(line_no) + ": empty key");
    m[section.empty() ? key : section + "." + key] = val;
  }
  return m;
}

ConfigMap parse_ini_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ParseError("cannot open config file: " + path);
  return parse_ini(f);
}

std::string config_hash(const ConfigMap& m) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&](const std::string& s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& [k, v] : m) {  // std::map iterates sorted
    mix(k);
    mix("=");
    mix(v);
    mix("\n");
  }
  std::ostringstream os;
  os << std::hex << h;
  return os.str();
}

ExperimentConfig ExperimentConfig::from_map(const ConfigMap& m) {
  ExperimentConfig c;
  c.raw = m;
  c.depth = static_cast<int>(get_int(m, "network.depth", c.depth));
  c.width = get_double(m, "network.width", c.width);
  c.in_channels = static_cast<int>(get_int(m, "network.in_channels", c.in_channels));
  c.num_classes = static_cast<int>(get_int(m, "network.classes", c.num_classes));
  c.fusion_directions =
      static_cast<int>(get_int(m, "network.fusion_directions", c.fusion_directions));
  c.tau = get_double(m, "neuron.tau", c.tau);
  c.v_th = get_double(m, "neuron.v_th", c.v_th);
  c.d_max = static_cast<int>(get_int(m, "neuron.d_max", c.d_max));
  c.t_steps = static_cast<int>(get_int(m, "neuron.t_steps", c.t_steps));
  c.lfsi_s = static_cast<int>(get_int(m, "metrics.s", c.lfsi_s));
  c.seed = static_cast<std::uint64_t>(get_int(m, "train.seed", static_cast<std::int64_t>(c.seed)));
  c.epochs = static_cast<int>(get_int(m, "train.epochs", c.epochs));
  c.lr = get_double(m, "train.lr", c.lr);
  c.momentum = get_double(m, "train.momentum", c.momentum);
  c.task = get_str(m, "train.task", c.task);
  c.train_samples = static_cast<int>(get_int(m, "train.samples", c.train_samples));
  c.eval_samples = static_cast<int>(get_int(m, "train.eval_samples", c.eval_samples));
  c.batch_size = static_cast<int>(get_int(m, "train.batch_size", c.batch_size));
  c.events_path = get_str(m, "codec.events", c.events_path);
  c.image = get_str(m, "codec.image", c.image);
  c.window_us = get_int(m, "codec.window_us", c.window_us);
  c.sensor_width = static_cast<int>(get_int(m, "codec.width", c.sensor_width));
  c.sensor_height = static_cast<int>(get_int(m, "codec.height", c.sensor_height));
  c.clip_max = get_double(m, "codec.clip", c.clip_max);
  c.out_dir = get_str(m, "output.dir", c.out_dir);
  c.format = get_str(m, "output.format", c.format);
  if (c.format != "json" && c.format != "csv")
    throw ConfigError("output.format must be json or csv");
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  return from_map(parse_ini_file(path));
}

NetworkSpec ExperimentConfig::network_spec() const {
  NetworkSpec spec = NetworkSpec::mdsnet(depth);
  spec.width = width;
  spec.in_channels = in_channels;
  spec.t_steps = t_steps;
  spec.num_classes = num_classes;
  spec.fusion_directions = fusion_directions;
  spec.neuron.tau = tau;
  spec.neuron.v_th = v_th;
  spec.neuron.d_max = d_max;
  spec.validate();
  return spec;
}

}  // namespace spikedet
