#include "ssmradnet/sim.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>

#include "ssmradnet/rng.hpp"

namespace ssmr {

namespace {
constexpr double kPi = 3.14159265358979323846;
constexpr double kFovDeg = 60.0;
}  // namespace

void Scene::validate() const {
  if (chirps < 1 || samples < 1 || n_rx < 1)
    throw ContractError("scene dims must all be >= 1, got C=" + std::to_string(chirps) +
                        " S=" + std::to_string(samples) + " N_Rx=" + std::to_string(n_rx));
  for (const Target& t : targets) {
    const double mu = t.range_norm * 0.5;
    if (!(t.range_norm >= 0.0) || mu >= 0.5)
      throw ContractError("target aliases: range_norm " + std::to_string(t.range_norm) +
                          " maps to fast-time frequency >= Nyquist");
    if (t.azimuth_deg < -kFovDeg || t.azimuth_deg > kFovDeg)
      throw ContractError("target azimuth " + std::to_string(t.azimuth_deg) +
                          " outside [-60, 60] degrees");
    if (!(t.doppler_norm > -0.5 && t.doppler_norm < 0.5))
      throw ContractError("target doppler_norm outside (-0.5, 0.5)");
    if (!(t.amplitude > 0.0)) throw ContractError("target amplitude must be > 0");
  }
}

AdcFrame synthesize_frame(const Scene& scene) {
  scene.validate();
  AdcFrame frame;
  frame.chirps = scene.chirps;
  frame.samples = scene.samples;
  frame.n_rx = scene.n_rx;
  frame.data.resize(static_cast<std::size_t>(scene.chirps) * scene.samples * scene.n_rx);

  double noise_sigma;
  if (scene.targets.empty()) {
    noise_sigma = 1.0;
  } else if (std::isinf(scene.snr_db)) {
    noise_sigma = 0.0;
  } else {
    double signal_power = 0.0;
    for (const Target& t : scene.targets) signal_power += t.amplitude * t.amplitude;
    noise_sigma = std::sqrt(signal_power * std::pow(10.0, -scene.snr_db / 10.0));
  }
  const double comp_sigma = noise_sigma / std::sqrt(2.0);

  Rng rng(scene.seed);
  const int K = static_cast<int>(scene.targets.size());
  std::vector<double> mu(K), dop(K), spat(K), amp(K);
  for (int k = 0; k < K; ++k) {
    mu[k] = scene.targets[k].range_norm * 0.5;
    dop[k] = scene.targets[k].doppler_norm;
    spat[k] = 0.5 * std::sin(scene.targets[k].azimuth_deg * kPi / 180.0);
    amp[k] = scene.targets[k].amplitude;
  }

  for (int c = 0; c < scene.chirps; ++c) {
    for (int s = 0; s < scene.samples; ++s) {
      for (int rx = 0; rx < scene.n_rx; ++rx) {
        double re = 0.0, im = 0.0;
        for (int k = 0; k < K; ++k) {
          const double phase = 2.0 * kPi * (mu[k] * s + dop[k] * c + spat[k] * rx);
          re += amp[k] * std::cos(phase);
          im += amp[k] * std::sin(phase);
        }
        if (comp_sigma > 0.0) {
          re += comp_sigma * rng.gaussian();
          im += comp_sigma * rng.gaussian();
        }
        frame.data[frame.index(c, s, rx)] =
            std::complex<float>(static_cast<float>(re), static_cast<float>(im));
      }
    }
  }
  return frame;
}

std::pair<double, double> target_grid_position(const Target& t, int h_out, int w_out) {
  const double row = t.range_norm * h_out;
  const double col = (t.azimuth_deg + kFovDeg) / (2.0 * kFovDeg) * w_out;
  return {row, col};
}

Labels rasterize_labels(const Scene& scene, int h_out, int w_out) {
  if (h_out < 8 || w_out < 8)
    throw ContractError("label grid must be at least 8x8, got " + std::to_string(h_out) + "x" +
                        std::to_string(w_out));
  Labels lab;
  lab.h = h_out;
  lab.w = w_out;
  lab.seg.assign(static_cast<std::size_t>(h_out) * w_out, 1);
  lab.det.assign(static_cast<std::size_t>(h_out) * w_out * 3, 0.0f);

  auto clip = [](int v, int lo, int hi) { return v < lo ? lo : (v > hi ? hi : v); };

  for (const Target& t : scene.targets) {
    auto [row_pos, col_pos] = target_grid_position(t, h_out, w_out);
    const int tr = clip(static_cast<int>(row_pos), 0, h_out - 1);
    const int tc = clip(static_cast<int>(col_pos), 0, w_out - 1);

    // Shadow model: the target's column is blocked at its row and beyond.
    for (int r = tr; r < h_out; ++r) lab.seg[static_cast<std::size_t>(r) * w_out + tc] = 0;

    // Objectness disk of radius 1 cell, offsets measured from each cell center.
    for (int dr = -1; dr <= 1; ++dr) {
      for (int dc = -1; dc <= 1; ++dc) {
        if (dr * dr + dc * dc > 1) continue;
        const int r = tr + dr, c = tc + dc;
        if (r < 0 || r >= h_out || c < 0 || c >= w_out) continue;
        const std::size_t base = (static_cast<std::size_t>(r) * w_out + c) * 3;
        lab.det[base + 0] = 1.0f;
        lab.det[base + 1] = static_cast<float>(row_pos - (r + 0.5));
        lab.det[base + 2] = static_cast<float>(col_pos - (c + 0.5));
      }
    }
  }
  return lab;
}

// ---------------------------------------------------------------------------
// ADCC file format (little-endian):
//   magic "ADCC", version u32 = 1, frame_count u32, then per frame:
//   C u32, S u32, N_Rx u32, h_out u32, w_out u32,
//   C*S*N_Rx complex samples as f32 (re, im) in [c][s][rx] order,
//   seg mask as h_out*w_out u8,
//   det targets as h_out*w_out*3 f32 (objectness, d_range, d_azimuth).
// ---------------------------------------------------------------------------

namespace {

void put_u32(std::ofstream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::ifstream& in, std::uint64_t& offset, const std::string& what) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (in.gcount() != 4)
    throw FormatError("truncated ADCC file while reading " + what + " at byte offset " +
                      std::to_string(offset));
  offset += 4;
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void read_exact(std::ifstream& in, void* dst, std::uint64_t bytes, std::uint64_t& offset,
                const std::string& what) {
  in.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(bytes));
  const std::uint64_t got = static_cast<std::uint64_t>(in.gcount());
  if (got != bytes)
    throw FormatError("truncated ADCC file in " + what + ": expected " + std::to_string(bytes) +
                      " bytes at offset " + std::to_string(offset) + ", got " +
                      std::to_string(got));
  offset += bytes;
}

}  // namespace

void write_dataset(const std::vector<DatasetEntry>& entries, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open " + path + " for writing");
  out.write("ADCC", 4);
  put_u32(out, 1);
  put_u32(out, static_cast<std::uint32_t>(entries.size()));
  for (const DatasetEntry& e : entries) {
    if (e.frame.chirps < 1 || e.frame.samples < 1 || e.frame.n_rx < 1)
      throw ContractError("refusing to write frame with zero dimension");
    put_u32(out, static_cast<std::uint32_t>(e.frame.chirps));
    put_u32(out, static_cast<std::uint32_t>(e.frame.samples));
    put_u32(out, static_cast<std::uint32_t>(e.frame.n_rx));
    put_u32(out, static_cast<std::uint32_t>(e.labels.h));
    put_u32(out, static_cast<std::uint32_t>(e.labels.w));
    out.write(reinterpret_cast<const char*>(e.frame.data.data()),
              static_cast<std::streamsize>(e.frame.data.size() * sizeof(std::complex<float>)));
    out.write(reinterpret_cast<const char*>(e.labels.seg.data()),
              static_cast<std::streamsize>(e.labels.seg.size()));
    out.write(reinterpret_cast<const char*>(e.labels.det.data()),
              static_cast<std::streamsize>(e.labels.det.size() * sizeof(float)));
  }
  if (!out) throw FormatError("write failed for " + path);
}

void write_dataset(const std::vector<Scene>& scenes, int h_out, int w_out,
                   const std::string& path) {
  std::vector<DatasetEntry> entries;
  entries.reserve(scenes.size());
  for (const Scene& s : scenes)
    entries.push_back({synthesize_frame(s), rasterize_labels(s, h_out, w_out)});
  write_dataset(entries, path);
}

DatasetHeader read_dataset_header(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  std::uint64_t offset = 4;
  if (in.gcount() != 4 || std::memcmp(magic, "ADCC", 4) != 0)
    throw FormatError("bad ADCC magic at byte offset 0 in " + path);
  DatasetHeader h;
  h.version = get_u32(in, offset, "version");
  if (h.version != 1)
    throw FormatError("unsupported ADCC version " + std::to_string(h.version) +
                      " at byte offset 4");
  h.frame_count = get_u32(in, offset, "frame_count");
  return h;
}

std::vector<DatasetEntry> read_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  std::uint64_t offset = 4;
  if (in.gcount() != 4 || std::memcmp(magic, "ADCC", 4) != 0)
    throw FormatError("bad ADCC magic at byte offset 0 in " + path);
  const std::uint32_t version = get_u32(in, offset, "version");
  if (version != 1) throw FormatError("unsupported ADCC version " + std::to_string(version));
  const std::uint32_t frame_count = get_u32(in, offset, "frame_count");

  std::vector<DatasetEntry> entries;
  entries.reserve(frame_count);
  for (std::uint32_t f = 0; f < frame_count; ++f) {
    const std::uint64_t header_off = offset;
    const std::uint32_t C = get_u32(in, offset, "C");
    const std::uint32_t S = get_u32(in, offset, "S");
    const std::uint32_t R = get_u32(in, offset, "N_Rx");
    const std::uint32_t H = get_u32(in, offset, "h_out");
    const std::uint32_t W = get_u32(in, offset, "w_out");
    if (C == 0 || S == 0 || R == 0 || H == 0 || W == 0)
      throw FormatError("frame " + std::to_string(f) + " header at byte offset " +
                        std::to_string(header_off) + " has a zero dimension");
    const std::uint64_t n_samples = static_cast<std::uint64_t>(C) * S * R;
    if (n_samples > (std::uint64_t(1) << 32) ||
        static_cast<std::uint64_t>(H) * W > (std::uint64_t(1) << 28))
      throw FormatError("frame " + std::to_string(f) + " dimensions overflow sane limits");

    DatasetEntry e;
    e.frame.chirps = static_cast<int>(C);
    e.frame.samples = static_cast<int>(S);
    e.frame.n_rx = static_cast<int>(R);
    e.frame.data.resize(n_samples);
    read_exact(in, e.frame.data.data(), n_samples * sizeof(std::complex<float>), offset,
               "frame " + std::to_string(f) + " samples");
    e.labels.h = static_cast<int>(H);
    e.labels.w = static_cast<int>(W);
    e.labels.seg.resize(static_cast<std::size_t>(H) * W);
    read_exact(in, e.labels.seg.data(), static_cast<std::uint64_t>(H) * W, offset,
               "frame " + std::to_string(f) + " seg mask");
    e.labels.det.resize(static_cast<std::size_t>(H) * W * 3);
    read_exact(in, e.labels.det.data(), static_cast<std::uint64_t>(H) * W * 3 * sizeof(float),
               offset, "frame " + std::to_string(f) + " det targets");
    entries.push_back(std::move(e));
  }
  return entries;
}

}  // namespace ssmr
