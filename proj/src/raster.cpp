#include "wastegan/raster.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

#include "wastegan/errors.hpp"

namespace wastegan {

std::string encode_raster(const Raster& r) {
  if (r.channels != 1 && r.channels != 3) throw ContractError("raster: channels must be 1 or 3");
  if (r.pixels.size() != r.width * r.height * r.channels) throw DimensionError("raster: pixel count mismatch");
  std::string out = (r.channels == 3 ? "P6\n" : "P5\n") + std::to_string(r.width) + " " +
                    std::to_string(r.height) + "\n255\n";
  out.append(reinterpret_cast<const char*>(r.pixels.data()), r.pixels.size());
  return out;
}

Raster decode_raster(const std::string& bytes) {
  std::size_t pos = 0;
  auto token = [&]() {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
    std::size_t start = pos;
    while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
    if (start == pos) throw IoError("raster: truncated header");
    return bytes.substr(start, pos - start);
  };
  Raster r;
  const std::string magic = token();
  if (magic == "P6") {
    r.channels = 3;
  } else if (magic == "P5") {
    r.channels = 1;
  } else {
    throw IoError("raster: unsupported magic " + magic);
  }
  try {
    r.width = std::stoul(token());
    r.height = std::stoul(token());
    if (std::stoul(token()) != 255) throw IoError("raster: only 8-bit rasters are supported");
  } catch (const std::invalid_argument&) {
    throw IoError("raster: malformed header");
  }
  ++pos;  // single whitespace before the payload
  const std::size_t n = r.width * r.height * r.channels;
  if (bytes.size() < pos || bytes.size() - pos != n) throw IoError("raster: payload size mismatch");
  r.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.end());
  return r;
}

void write_raster(const std::filesystem::path& path, const Raster& r) {
  const std::string bytes = encode_raster(r);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

Raster read_raster(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open raster " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return decode_raster(ss.str());
}

}  // namespace wastegan
