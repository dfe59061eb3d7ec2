#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

// 8-bit grayscale image IO. Supported containers: binary PGM (P5) and PNG
// (8-bit grayscale). Errors always name the offending file.

namespace aif {

struct Gray8 {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // row-major
};

Gray8 read_gray8(const std::filesystem::path& file);
void write_gray8(const std::filesystem::path& file, const Gray8& img);  // format from extension

}  // namespace aif
