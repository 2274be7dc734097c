// Command-line surface: simulate, train, eval, infer, bench, inspect.
// Exit codes: 0 success, 2 config error, 3 format error, 4 numerical abort.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "ssmradnet/bench.hpp"
#include "ssmradnet/config.hpp"
#include "ssmradnet/metrics.hpp"
#include "ssmradnet/model.hpp"
#include "ssmradnet/pgm.hpp"
#include "ssmradnet/sim.hpp"
#include "ssmradnet/streaming.hpp"
#include "ssmradnet/train.hpp"

namespace fs = std::filesystem;
using namespace ssmr;

namespace {

int worker_threads() {
  if (const char* env = std::getenv("SSMRADNET_THREADS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
  }
  return 1;
}

RunConfig load_run_config(const std::string& config_path, const std::vector<std::string>& sets) {
  RunConfig rc;
  if (!config_path.empty()) rc.apply_file(config_path);
  for (const auto& kv : sets) rc.apply_override(kv);
  return rc;
}

void echo_config(const RunConfig& rc, const std::string& run_dir) {
  fs::create_directories(run_dir);
  rc.write_echo((fs::path(run_dir) / "config.echo").string());
}

Scene random_scene(const RunConfig& rc, Rng& rng, std::uint64_t frame_seed) {
  Scene sc;
  sc.chirps = rc.get_int("sim.chirps");
  sc.samples = rc.get_int("sim.samples");
  sc.n_rx = rc.get_int("sim.n_rx");
  sc.snr_db = rc.get_double("sim.snr_db");
  sc.seed = frame_seed;
  const int lo = rc.get_int("sim.min_targets");
  const int hi = rc.get_int("sim.max_targets");
  if (lo < 0 || hi < lo) throw ConfigError("sim.min_targets/max_targets out of order");
  const int n = lo + (hi > lo ? rng.uniform_int(hi - lo + 1) : 0);
  for (int i = 0; i < n; ++i) {
    Target t;
    t.range_norm = rng.uniform(0.05, 0.95);
    t.azimuth_deg = rng.uniform(-55.0, 55.0);
    t.doppler_norm = rng.uniform(-0.4, 0.4);
    t.amplitude = rng.uniform(0.7, 1.3);
    sc.targets.push_back(t);
  }
  return sc;
}

int cmd_simulate(const std::string& config_path, const std::vector<std::string>& sets,
                 const std::string& out_path, int frames_override, const std::string& run_dir) {
  RunConfig rc = load_run_config(config_path, sets);
  if (frames_override > 0) rc.set("sim.frames", std::to_string(frames_override));
  const int frames = rc.get_int("sim.frames");
  const int h = rc.get_int("sim.h_out"), w = rc.get_int("sim.w_out");

  Rng rng(static_cast<std::uint64_t>(rc.get_int("sim.seed")));
  std::vector<Scene> scenes;
  scenes.reserve(static_cast<std::size_t>(frames));
  for (int i = 0; i < frames; ++i) {
    const std::uint64_t frame_seed = rng.next_u64();
    scenes.push_back(random_scene(rc, rng, frame_seed));
    std::cout << "frame " << i << ": " << scenes.back().targets.size() << " targets\n";
  }
  write_dataset(scenes, h, w, out_path);
  echo_config(rc, run_dir.empty() ? fs::path(out_path).parent_path().string() : run_dir);
  std::cout << "wrote " << frames << " frames to " << out_path << "\n";
  return 0;
}

std::vector<std::string> config_diff(const ModelConfig& a, const ModelConfig& b) {
  std::vector<std::string> diff;
  if (a.n_rx != b.n_rx) diff.push_back("n_rx");
  if (a.s_per_chirp != b.s_per_chirp) diff.push_back("s_per_chirp");
  if (a.chirps_per_frame != b.chirps_per_frame) diff.push_back("chirps_per_frame");
  if (a.d_conv != b.d_conv) diff.push_back("d_conv");
  if (a.d_state != b.d_state) diff.push_back("d_state");
  if (a.d_state_chirp != b.d_state_chirp) diff.push_back("d_state_chirp");
  if (a.chirp_aggregation != b.chirp_aggregation) diff.push_back("chirp_aggregation");
  if (a.slow_time_expand != b.slow_time_expand) diff.push_back("slow_time_expand");
  if (a.h0 != b.h0) diff.push_back("h0");
  if (a.w0 != b.w0) diff.push_back("w0");
  if (a.c_dec != b.c_dec) diff.push_back("c_dec");
  if (a.head_segmentation != b.head_segmentation || a.head_detection != b.head_detection)
    diff.push_back("heads");
  if (a.upsample != b.upsample) diff.push_back("upsample");
  if (a.seed != b.seed) diff.push_back("seed");
  return diff;
}

void require_checkpoint_matches(const std::string& ckpt_path, const std::string& config_path,
                                const std::vector<std::string>& sets) {
  if (config_path.empty() && sets.empty()) return;
  RunConfig rc = load_run_config(config_path, sets);
  const ModelConfig from_cfg = ModelConfig::from_run_config(rc);
  const ModelConfig from_ckpt = read_checkpoint_config(ckpt_path);
  const auto diff = config_diff(from_cfg, from_ckpt);
  if (!diff.empty()) {
    std::string keys;
    for (const auto& k : diff) keys += (keys.empty() ? "" : ", ") + k;
    throw ConfigError("config/checkpoint mismatch on keys: " + keys);
  }
}

template <class S>
int train_with_precision(const RunConfig& rc, const std::string& data_path,
                         const std::string& val_path, const std::string& run_dir) {
  const ModelConfig mc = ModelConfig::from_run_config(rc);
  const TrainConfig tc = TrainConfig::from_run_config(rc);

  auto train_set = read_dataset(data_path);
  std::vector<DatasetEntry> val_set;
  if (!val_path.empty()) val_set = read_dataset(val_path);
  for (const auto& e : train_set)
    if (e.frame.chirps != mc.chirps_per_frame || e.frame.samples != mc.s_per_chirp ||
        e.frame.n_rx != mc.n_rx)
      throw ConfigError("training frame dims do not match model config");

  Model<S> model(mc);
  const std::string ckpt = (fs::path(run_dir) / "checkpoint.ssmc").string();
  const std::string csv = (fs::path(run_dir) / "log.csv").string();
  auto result = train(model, train_set, val_set, tc, ckpt, csv, &std::cout);
  if (result.aborted_nan) {
    std::cerr << "training aborted: loss diverged (last good checkpoint retained)\n";
    return 4;
  }
  if (result.best_epoch >= 0)
    std::cout << "best val mIoU " << result.best_miou << " at epoch " << result.best_epoch << "\n";
  std::cout << "checkpoint: " << ckpt << "\n";
  return 0;
}

int cmd_train(const std::string& config_path, const std::vector<std::string>& sets,
              const std::string& data_path, const std::string& val_path,
              const std::string& run_dir) {
  RunConfig rc = load_run_config(config_path, sets);
  fs::create_directories(run_dir);
  fs::create_directories(fs::path(run_dir) / "masks");
  echo_config(rc, run_dir);
  const std::string precision = rc.get("train.precision");
  if (precision == "fp64") return train_with_precision<double>(rc, data_path, val_path, run_dir);
  if (precision == "fp32") return train_with_precision<float>(rc, data_path, val_path, run_dir);
  throw ConfigError("train.precision must be fp32|fp64, got '" + precision + "'");
}

void print_report(const EvalReport& r, std::ostream& os) {
  os << "miou=" << r.miou << "\n";
  os << "dice=" << r.dice << "\n";
  os << "pixel_accuracy=" << r.pixel_accuracy << "\n";
  os << "chamfer=" << r.chamfer << "\n";
  os << "det_f1=" << r.detection.f1 << "\n";
  os << "det_map=" << r.detection.map << "\n";
  os << "det_mar=" << r.detection.mar << "\n";
  os << "det_range_error=" << r.detection.range_error << "\n";
  os << "det_azimuth_error=" << r.detection.azimuth_error << "\n";
}

int cmd_eval(const std::string& ckpt_path, const std::string& data_path,
             const std::string& config_path, const std::vector<std::string>& sets,
             const std::string& out_path) {
  require_checkpoint_matches(ckpt_path, config_path, sets);
  auto model = load_checkpoint<double>(ckpt_path);
  auto data = read_dataset(data_path);
  for (const auto& e : data)
    if (e.frame.chirps != model.config().chirps_per_frame ||
        e.frame.samples != model.config().s_per_chirp || e.frame.n_rx != model.config().n_rx)
      throw ConfigError("eval frame dims do not match checkpoint config");
  auto report = evaluate(model, data, worker_threads());
  print_report(report, std::cout);
  if (!out_path.empty()) {
    std::ofstream out(out_path);
    print_report(report, out);
  }
  return 0;
}

int cmd_infer(const std::string& ckpt_path, const std::string& data_path,
              const std::string& config_path, const std::vector<std::string>& sets,
              const std::string& out_dir, bool stream, bool raw) {
  require_checkpoint_matches(ckpt_path, config_path, sets);
  auto model = load_checkpoint<double>(ckpt_path);
  const ModelConfig& mc = model.config();
  auto data = read_dataset(data_path);
  fs::create_directories(fs::path(out_dir) / "masks");

  StreamSession<double> session(model);
  std::vector<std::complex<float>> tick(static_cast<std::size_t>(mc.n_rx));

  for (std::size_t i = 0; i < data.size(); ++i) {
    const AdcFrame& frame = data[i].frame;
    if (frame.chirps != mc.chirps_per_frame || frame.samples != mc.s_per_chirp ||
        frame.n_rx != mc.n_rx)
      throw ConfigError("frame dims do not match checkpoint config");
    BevOutput<double> out;
    if (stream) {
      for (int c = 0; c < frame.chirps; ++c)
        for (int s = 0; s < frame.samples; ++s) {
          for (int rx = 0; rx < frame.n_rx; ++rx) tick[static_cast<std::size_t>(rx)] = frame.at(c, s, rx);
          auto ev = session.ingest(tick.data(), frame.n_rx);
          if (ev.kind == StreamSession<double>::EventKind::FrameOutput) out = ev.output;
        }
    } else {
      out = model.forward_maps(frame);
    }
    const std::string base = (fs::path(out_dir) / "masks" / ("frame_" + std::to_string(i))).string();
    if (!out.seg.empty()) {
      std::vector<float> probs(out.seg.begin(), out.seg.end());
      write_prob_pgm(base + "_seg.pgm", out.h, out.w, probs);
      std::vector<std::uint8_t> bin = binarize(probs);
      for (auto& v : bin) v = v ? 255 : 0;
      write_pgm(base + "_seg_bin.pgm", out.h, out.w, bin);
      if (raw) write_prob_raw(base + "_seg.f32", out.h, out.w, probs);
    }
    if (!out.det.empty()) {
      std::vector<float> obj(static_cast<std::size_t>(out.h) * out.w);
      for (std::size_t p = 0; p < obj.size(); ++p) obj[p] = static_cast<float>(out.det[p * 3]);
      write_prob_pgm(base + "_obj.pgm", out.h, out.w, obj);
      if (raw) write_prob_raw(base + "_obj.f32", out.h, out.w, obj);
    }
  }
  std::cout << "wrote masks for " << data.size() << " frames to " << out_dir << "/masks\n";
  return 0;
}

int cmd_bench(const std::string& config_path, const std::vector<std::string>& sets,
              const std::string& out_path) {
  RunConfig rc = load_run_config(config_path, sets);
  const ModelConfig mc = ModelConfig::from_run_config(rc);
  const std::string mode_str = rc.get("bench.mode");
  if (mode_str != "batch" && mode_str != "streaming")
    throw ConfigError("bench.mode must be batch|streaming");
  const BenchMode mode = mode_str == "streaming" ? BenchMode::Streaming : BenchMode::Batch;

  Model<float> model(mc);
  auto report = run_bench(model, rc.get_int("bench.frames"), rc.get_int("bench.warmup"), mode);
  std::cout << report_human(report);
  if (!out_path.empty()) {
    std::ofstream out(out_path);
    if (!out) throw FormatError("cannot write " + out_path);
    out << report_kv(report);
    std::cout << "report written to " << out_path << "\n";
  }
  return 0;
}

int cmd_inspect(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  char magic[4] = {0, 0, 0, 0};
  in.read(magic, 4);
  if (std::string(magic, 4) == "ADCC") {
    auto header = read_dataset_header(path);
    std::cout << "ADCC dataset, version " << header.version << ", " << header.frame_count
              << " frames\n";
    auto entries = read_dataset(path);
    for (std::size_t i = 0; i < std::min<std::size_t>(entries.size(), 8); ++i) {
      const auto& e = entries[i];
      std::cout << "  frame " << i << ": C=" << e.frame.chirps << " S=" << e.frame.samples
                << " N_Rx=" << e.frame.n_rx << " grid=" << e.labels.h << "x" << e.labels.w << "\n";
    }
    if (entries.size() > 8) std::cout << "  ... " << entries.size() - 8 << " more\n";
    return 0;
  }
  if (std::string(magic, 4) == "SSMC") {
    const ModelConfig cfg = read_checkpoint_config(path);
    std::cout << "SSMC checkpoint, version 1\n" << cfg.to_kv();
    std::cout << "params_total=" << count_params(cfg) << "\n";
    return 0;
  }
  throw FormatError("unrecognized magic in " + path);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SSMRadNet: streaming radar perception on raw ADC samples"};
  app.require_subcommand(1);

  std::string config_path, out_path, run_dir, data_path, val_path, ckpt_path, inspect_path;
  std::vector<std::string> sets;
  int frames_override = 0;
  bool stream = false, batch = false, raw = false;

  auto add_config = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "key=value config file");
    cmd->add_option("--set", sets, "config override key=value (repeatable)");
  };

  auto* sim_cmd = app.add_subcommand("simulate", "generate a synthetic ADCC dataset");
  add_config(sim_cmd);
  sim_cmd->add_option("--out", out_path, "output .adcc path")->required();
  sim_cmd->add_option("--frames", frames_override, "number of frames (overrides sim.frames)");
  sim_cmd->add_option("--run-dir", run_dir, "directory for config.echo");

  auto* train_cmd = app.add_subcommand("train", "train a model");
  add_config(train_cmd);
  train_cmd->add_option("--data", data_path, "training .adcc")->required();
  train_cmd->add_option("--val", val_path, "validation .adcc");
  train_cmd->add_option("--run-dir", run_dir, "run directory")->required();

  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
  add_config(eval_cmd);
  eval_cmd->add_option("--checkpoint", ckpt_path, "checkpoint .ssmc")->required();
  eval_cmd->add_option("--data", data_path, "dataset .adcc")->required();
  eval_cmd->add_option("--out", out_path, "also write the report here");

  auto* infer_cmd = app.add_subcommand("infer", "write BEV masks for a dataset");
  add_config(infer_cmd);
  infer_cmd->add_option("--checkpoint", ckpt_path, "checkpoint .ssmc")->required();
  infer_cmd->add_option("--data", data_path, "dataset .adcc")->required();
  infer_cmd->add_option("--out", out_path, "output directory")->required();
  infer_cmd->add_flag("--stream", stream, "replay tick-by-tick through the streaming runtime");
  infer_cmd->add_flag("--batch", batch, "batch forward (default)");
  infer_cmd->add_flag("--raw", raw, "also write raw f32 probability maps");

  auto* bench_cmd = app.add_subcommand("bench", "parameter/MAC counts and latency");
  add_config(bench_cmd);
  bench_cmd->add_option("--out", out_path, "machine-readable report path");

  auto* inspect_cmd = app.add_subcommand("inspect", "print dataset or checkpoint headers");
  inspect_cmd->add_option("file", inspect_path, "path to .adcc or .ssmc")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (sim_cmd->parsed())
      return cmd_simulate(config_path, sets, out_path, frames_override, run_dir);
    if (train_cmd->parsed()) return cmd_train(config_path, sets, data_path, val_path, run_dir);
    if (eval_cmd->parsed()) return cmd_eval(ckpt_path, data_path, config_path, sets, out_path);
    if (infer_cmd->parsed()) {
      if (stream && batch) throw ConfigError("choose one of --stream / --batch");
      return cmd_infer(ckpt_path, data_path, config_path, sets, out_path, stream, raw);
    }
    if (bench_cmd->parsed()) return cmd_bench(config_path, sets, out_path);
    if (inspect_cmd->parsed()) return cmd_inspect(inspect_path);
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return 3;
  } catch (const NumericalError& e) {
    std::cerr << "numerical abort: " << e.what() << "\n";
    return 4;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const ContractError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DimensionError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
