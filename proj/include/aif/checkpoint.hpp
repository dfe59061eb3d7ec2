#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "aif/config.hpp"
#include "aif/tensor.hpp"

// Checkpoint container and its bit-exact binary format:
//   magic "AIFW" (4 bytes)
//   version        u32 LE = 1
//   tensor count   u32 LE
//   per tensor:    name length u16 LE, UTF-8 name, rank u8, dims u32 LE each,
//                  dtype byte (0 = f32), raw LE row-major payload
//   trailer:       config JSON length u32 LE, UTF-8 JSON
// Malformed input is rejected with the byte offset of the problem.

namespace aif {

struct Checkpoint {
  std::vector<Param<float>> tensors;  // named theta_e / theta_s / theta_t / theta_f / theta_q groups
  AdaptConfig config;

  const Param<float>* find(const std::string& name) const {
    for (const auto& p : tensors)
      if (p.name == name) return &p;
    return nullptr;
  }
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& file);
Checkpoint load_checkpoint(const std::filesystem::path& file);

}  // namespace aif
