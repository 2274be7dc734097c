#include "ssmradnet/pgm.hpp"

#include <cmath>
#include <fstream>

#include "ssmradnet/tensor.hpp"

namespace ssmr {

void write_pgm(const std::string& path, int h, int w, const std::vector<std::uint8_t>& pixels) {
  if (static_cast<std::size_t>(h) * w != pixels.size())
    throw DimensionError("write_pgm: pixel count does not match " + std::to_string(h) + "x" +
                         std::to_string(w));
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open " + path + " for writing");
  out << "P5\n" << w << " " << h << "\n255\n";
  out.write(reinterpret_cast<const char*>(pixels.data()),
            static_cast<std::streamsize>(pixels.size()));
}

void write_prob_pgm(const std::string& path, int h, int w, const std::vector<float>& probs) {
  std::vector<std::uint8_t> px(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) {
    float v = probs[i];
    if (v < 0.f) v = 0.f;
    if (v > 1.f) v = 1.f;
    px[i] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
  }
  write_pgm(path, h, w, px);
}

void write_prob_raw(const std::string& path, int h, int w, const std::vector<float>& probs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open " + path + " for writing");
  out.write("PROB", 4);
  const std::uint32_t header[3] = {1u, static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(w)};
  out.write(reinterpret_cast<const char*>(header), sizeof(header));
  out.write(reinterpret_cast<const char*>(probs.data()),
            static_cast<std::streamsize>(probs.size() * sizeof(float)));
}

}  // namespace ssmr
