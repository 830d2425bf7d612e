#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace wastegan {

// 64-bit FNV-1a; used for config hashes and content checksums.
class Fnv1a {
 public:
  void update(std::string_view bytes) {
    for (unsigned char c : bytes) {
      state_ ^= c;
      state_ *= 1099511628211ULL;
    }
  }
  std::uint64_t value() const { return state_; }
  std::string hex() const;

 private:
  std::uint64_t state_ = 14695981039346656037ULL;
};

std::string fnv1a_hex(std::string_view bytes);
std::string file_checksum(const std::string& path);

// SplitMix64 finaliser; derives independent seeds from (seed, stream).
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace wastegan
