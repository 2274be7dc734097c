#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace ssmr {

// 8-bit binary PGM (P5).
void write_pgm(const std::string& path, int h, int w, const std::vector<std::uint8_t>& pixels);

// Probabilities in [0,1] scaled to 0..255.
void write_prob_pgm(const std::string& path, int h, int w, const std::vector<float>& probs);

// Raw f32 probability map: magic "PROB", version u32=1, h u32, w u32, h*w f32.
void write_prob_raw(const std::string& path, int h, int w, const std::vector<float>& probs);

}  // namespace ssmr
