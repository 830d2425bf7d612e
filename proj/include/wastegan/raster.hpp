#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

// Lossless 8-bit rasters: binary PPM (P6) for RGB, binary PGM (P5) for
// single-channel index masks.
namespace wastegan {

struct Raster {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 0;       // 1 or 3
  std::vector<std::uint8_t> pixels;  // row-major, interleaved
};

std::string encode_raster(const Raster& r);
Raster decode_raster(const std::string& bytes);
void write_raster(const std::filesystem::path& path, const Raster& r);
Raster read_raster(const std::filesystem::path& path);

}  // namespace wastegan
