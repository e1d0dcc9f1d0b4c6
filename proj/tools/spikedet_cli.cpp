#include "spikedet/codec.hpp"
#include "spikedet/config.hpp"
#include "spikedet/metrics.hpp"
#include "spikedet/serialize.hpp"
#include "spikedet/train.hpp"
#include "spikedet/verify.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

namespace {

using namespace spikedet;

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;
constexpr int kExitVerifyFail = 3;

struct CliOptions {
  std::string config_path;
  std::string out_dir;
  std::string format;
  std::int64_t seed = -1;
  std::string model_path;
  bool negative_control = false;
  std::vector<std::string> checks;
};

ExperimentConfig load_config(const CliOptions& opt) {
  ExperimentConfig cfg = opt.config_path.empty()
                             ? ExperimentConfig::from_map({})
                             : ExperimentConfig::load(opt.config_path);
  if (opt.seed >= 0) cfg.seed = static_cast<std::uint64_t>(opt.seed);
  if (!opt.out_dir.empty()) cfg.out_dir = opt.out_dir;
  if (!opt.format.empty()) cfg.format = opt.format;
  if (cfg.format != "json" && cfg.format != "csv")
    throw ConfigError("format must be json or csv");
  std::filesystem::create_directories(cfg.out_dir);
  return cfg;
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream f(path);
  if (!f) throw StateError("cannot write " + path);
  f << content;
}

Tensor make_input(const ExperimentConfig& cfg) {
  if (!cfg.events_path.empty()) {
    auto events = parse_event_csv_file(cfg.events_path);
    EncodingConfig ec;
    ec.t_steps = cfg.t_steps;
    ec.window_us = cfg.window_us;
    ec.width = cfg.sensor_width;
    ec.height = cfg.sensor_height;
    ec.clip_max = cfg.clip_max;
    Tensor binned = event_bin(events, ec);
    if (cfg.in_channels == 2) return binned;
    throw ConfigError("event input needs network.in_channels = 2");
  }
  Tensor img(Shape{1, cfg.in_channels, cfg.sensor_height, cfg.sensor_width});
  if (cfg.image == "zero" || cfg.image.empty()) {
    // all-zero default
  } else if (cfg.image == "random") {
    Rng rng = make_rng(cfg.seed);
    for (double& v : img.data) v = rng.normal();
  } else {
    throw ConfigError("codec.image must be 'zero' or 'random'");
  }
  return direct_encode(img, cfg.t_steps);
}

int cmd_simulate(const CliOptions& opt, const ExperimentConfig& cfg) {
  NetworkSpec spec = cfg.network_spec();
  Network net = build_network(spec);
  Rng rng = make_rng(cfg.seed);
  net.init_weights(rng);
  if (!opt.model_path.empty()) load_model_file(opt.model_path, net);

  Tensor input = make_input(cfg);
  TraceRecorder trace;
  trace.time_steps = cfg.t_steps;
  trace.batch = input.shape.n / cfg.t_steps;
  ForwardCtx ctx;
  ctx.time_steps = cfg.t_steps;
  ctx.trace = &trace;
  Tape tape;
  net.forward(tape, tape.leaf(input), ctx);

  MetricsReport report = build_metrics_report(trace, cfg.d_max, LFSIConfig{cfg.lfsi_s});
  report.config_hash = cfg.hash();
  write_file(cfg.out_dir + "/metrics.json", report.to_json());
  write_file(cfg.out_dir + "/metrics.csv", report.to_csv());
  std::cout << (cfg.format == "json" ? report.to_json() : report.to_csv()) << "\n";
  return kExitOk;
}

int cmd_train(const CliOptions& opt, const ExperimentConfig& cfg) {
  NetworkSpec spec = cfg.network_spec();
  ToyTrainConfig tc;
  tc.epochs = cfg.epochs;
  tc.train_samples = cfg.train_samples;
  tc.eval_samples = cfg.eval_samples;
  tc.batch_size = cfg.batch_size;
  tc.opt.lr = cfg.lr;
  tc.opt.momentum = cfg.momentum;
  ToyResult result = train_toy(spec, cfg.task, cfg.seed, tc);
  write_file(cfg.out_dir + "/history.csv", history_to_csv(result.history));
  save_model_file(cfg.out_dir + "/model.sdl1", result.net);
  nlohmann::json j;
  j["config_hash"] = cfg.hash();
  j["epochs"] = cfg.epochs;
  j["final_acc"] = result.history.empty() ? 0.0 : result.history.back().acc;
  j["model"] = cfg.out_dir + "/model.sdl1";
  write_file(cfg.out_dir + "/train.json", j.dump(2));
  std::cout << j.dump(2) << "\n";
  return kExitOk;
}

int cmd_verify(const CliOptions& opt, const ExperimentConfig& cfg) {
  static const std::vector<std::string> known{
      "decorrelation", "membrane_variance", "variance_accumulation",
      "isometry", "saturation"};
  for (const std::string& c : opt.checks) {
    bool ok = false;
    for (const std::string& k : known) ok = ok || c == k;
    if (!ok) throw ConfigError("unknown check name: " + c);
  }
  VerificationReport rep = run_verification(cfg.seed, opt.negative_control);
  if (!opt.checks.empty()) {
    VerificationReport filtered;
    for (const CheckResult& c : rep.checks)
      for (const std::string& want : opt.checks)
        if (c.name.rfind(want, 0) == 0 ||
            c.name.find(want) != std::string::npos)
          filtered.checks.push_back(c);
    rep = filtered;
  }
  std::string out = rep.to_json();
  write_file(cfg.out_dir + "/verify.json", out);
  std::cout << out << "\n";
  return rep.all_pass() ? kExitOk : kExitVerifyFail;
}

int cmd_encode(const CliOptions& opt, const ExperimentConfig& cfg) {
  Tensor out;
  if (!cfg.events_path.empty()) {
    auto events = parse_event_csv_file(cfg.events_path);
    EncodingConfig ec;
    ec.t_steps = cfg.t_steps;
    ec.window_us = cfg.window_us;
    ec.width = cfg.sensor_width;
    ec.height = cfg.sensor_height;
    ec.clip_max = cfg.clip_max;
    out = event_bin(events, ec);
  } else {
    Tensor img(Shape{1, cfg.in_channels, cfg.sensor_height, cfg.sensor_width});
    if (cfg.image == "random") {
      Rng rng = make_rng(cfg.seed);
      for (double& v : img.data) v = rng.normal();
    }
    out = direct_encode(img, cfg.t_steps);
  }
  write_tensor_file(cfg.out_dir + "/encoded.sdl1", out);
  double sum = 0.0;
  for (double v : out.data) sum += v;
  nlohmann::json j;
  j["shape"] = {out.shape.n, out.shape.c, out.shape.h, out.shape.w};
  j["sum"] = sum;
  j["config_hash"] = cfg.hash();
  std::cout << j.dump(2) << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"spiking network laboratory"};
  app.require_subcommand(1);
  CliOptions opt;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config_path, "config file (INI)");
    sub->add_option("--seed", opt.seed, "seed override");
    sub->add_option("--out", opt.out_dir, "output directory");
    sub->add_option("--format", opt.format, "json|csv");
  };

  CLI::App* sim = app.add_subcommand("simulate", "forward pass + metrics report");
  add_common(sim);
  sim->add_option("--model", opt.model_path, "model file to load");
  CLI::App* train = app.add_subcommand("train", "toy training run");
  add_common(train);
  CLI::App* verify = app.add_subcommand("verify", "proposition checks");
  add_common(verify);
  verify->add_flag("--negative-control", opt.negative_control,
                   "flip decorrelation init so the check must fail");
  verify->add_option("--check", opt.checks, "subset of checks to report");
  CLI::App* encode = app.add_subcommand("encode", "input encoding to tensor file");
  add_common(encode);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  ExperimentConfig cfg;
  try {
    cfg = load_config(opt);
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (sim->parsed()) return cmd_simulate(opt, cfg);
    if (train->parsed()) return cmd_train(opt, cfg);
    if (verify->parsed()) return cmd_verify(opt, cfg);
    if (encode->parsed()) return cmd_encode(opt, cfg);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
