#pragma once

#include <complex>
#include <cstdint>
#include <string>
#include <vector>

#include "ssmradnet/tensor.hpp"

namespace ssmr {

// Point scatterer in normalized units. range_norm in [0,1) maps to the
// fast-time frequency mu = range_norm * 0.5, always below Nyquist; azimuth in
// degrees over the +-60 field of view; doppler_norm is the normalized
// slow-time frequency.
struct Target {
  double range_norm = 0.0;
  double azimuth_deg = 0.0;
  double doppler_norm = 0.0;
  double amplitude = 1.0;
};

struct Scene {
  std::vector<Target> targets;
  double snr_db = 10.0;  // +inf disables noise
  std::uint64_t seed = 0;
  int chirps = 0;      // C
  int samples = 0;     // S
  int n_rx = 0;        // receiver channels

  // Throws ContractError on invariant violations (aliasing targets, bad dims).
  void validate() const;
};

// Raw ADC frame, complex samples indexed [chirp][sample][rx].
struct AdcFrame {
  int chirps = 0;
  int samples = 0;
  int n_rx = 0;
  std::vector<std::complex<float>> data;

  std::size_t index(int c, int s, int rx) const {
    return (static_cast<std::size_t>(c) * samples + s) * n_rx + rx;
  }
  const std::complex<float>& at(int c, int s, int rx) const { return data[index(c, s, rx)]; }
};

// Ground-truth BEV labels. seg is row-major h x w (1 = free); det is
// h x w x 3 (objectness, delta-range, delta-azimuth), offsets in cell units.
struct Labels {
  int h = 0;
  int w = 0;
  std::vector<std::uint8_t> seg;
  std::vector<float> det;
};

AdcFrame synthesize_frame(const Scene& scene);
Labels rasterize_labels(const Scene& scene, int h_out, int w_out);

// Continuous grid position of a target: row units in [0, h), col units in [0, w).
std::pair<double, double> target_grid_position(const Target& t, int h_out, int w_out);

// ADCC dataset container (see the format notes in the README).
struct DatasetEntry {
  AdcFrame frame;
  Labels labels;
};

void write_dataset(const std::vector<DatasetEntry>& entries, const std::string& path);
void write_dataset(const std::vector<Scene>& scenes, int h_out, int w_out,
                   const std::string& path);
std::vector<DatasetEntry> read_dataset(const std::string& path);

struct DatasetHeader {
  std::uint32_t version = 0;
  std::uint32_t frame_count = 0;
};
DatasetHeader read_dataset_header(const std::string& path);

}  // namespace ssmr
