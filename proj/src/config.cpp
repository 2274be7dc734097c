#include "ssmradnet/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "ssmradnet/tensor.hpp"

namespace ssmr {

const std::map<std::string, std::string>& RunConfig::defaults() {
  static const std::map<std::string, std::string> d = {
      // model: RADIal-scale defaults
      {"model.n_rx", "16"},
      {"model.s_per_chirp", "512"},
      {"model.chirps_per_frame", "256"},
      {"model.d_conv", "4"},
      {"model.d_state", "32"},
      {"model.d_state_chirp", "32"},
      {"model.chirp_aggregation", "avg_pool"},  // final_state | avg_pool | conv1d
      {"model.slow_time_expand", "true"},
      {"model.h0", "8"},
      {"model.w0", "8"},
      {"model.c_dec", "16"},
      {"model.heads", "segmentation+detection"},
      {"model.upsample", "nearest"},  // nearest | bilinear
      {"model.seed", "0"},
      // train
      {"train.epochs", "100"},
      {"train.batch_size", "8"},
      {"train.lr", "1e-4"},
      {"train.weight_decay", "5e-6"},
      {"train.seg_loss", "bce+jaccard"},  // bce | jaccard | bce+jaccard | none
      {"train.det_loss", "focal_l1"},     // focal_l1 | none
      {"train.seed", "0"},
      {"train.eval_every", "1"},
      {"train.precision", "fp32"},  // fp32 | fp64
      // sim
      {"sim.frames", "64"},
      {"sim.chirps", "32"},
      {"sim.samples", "128"},
      {"sim.n_rx", "8"},
      {"sim.h_out", "32"},
      {"sim.w_out", "32"},
      {"sim.snr_db", "10"},
      {"sim.min_targets", "1"},
      {"sim.max_targets", "4"},
      {"sim.seed", "0"},
      // bench
      {"bench.frames", "100"},
      {"bench.warmup", "10"},
      {"bench.mode", "batch"},  // batch | streaming
  };
  return d;
}

RunConfig::RunConfig() : values_(defaults()) {}

namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

void RunConfig::apply_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key=value, got '" +
                        line + "'");
    set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

RunConfig RunConfig::from_file(const std::string& path) {
  RunConfig c;
  c.apply_file(path);
  return c;
}

void RunConfig::apply_override(const std::string& kv) {
  std::size_t eq = kv.find('=');
  if (eq == std::string::npos) throw ConfigError("override must be key=value, got '" + kv + "'");
  set(trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
}

void RunConfig::set(const std::string& key, const std::string& value) {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  it->second = value;
}

const std::string& RunConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  return it->second;
}

int RunConfig::get_int(const std::string& key) const {
  const std::string& v = get(key);
  try {
    std::size_t pos = 0;
    int r = std::stoi(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "' expects an integer, got '" + v + "'");
  }
}

double RunConfig::get_double(const std::string& key) const {
  const std::string& v = get(key);
  try {
    std::size_t pos = 0;
    double r = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "' expects a number, got '" + v + "'");
  }
}

bool RunConfig::get_bool(const std::string& key) const {
  const std::string& v = get(key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config key '" + key + "' expects a boolean, got '" + v + "'");
}

std::string RunConfig::echo() const {
  std::ostringstream os;
  for (const auto& [k, v] : values_) os << k << " = " << v << "\n";
  return os.str();
}

void RunConfig::write_echo(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write config echo to " + path);
  out << echo();
}

}  // namespace ssmr
