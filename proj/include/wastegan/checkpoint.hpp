#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "wastegan/tensor.hpp"

// WTK1 checkpoint container: magic "WTK1", u32 version, u32 tensor count,
// then per tensor u16 name length, UTF-8 name, u8 rank, u32 extents and the
// values as little-endian IEEE-754 binary32.
namespace wastegan {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  Shape shape;
  std::vector<float> values;
};

std::string encode_checkpoint(std::span<const NamedTensor> tensors);
std::vector<NamedTensor> decode_checkpoint(std::string_view bytes);

void write_checkpoint(const std::filesystem::path& path, std::span<const NamedTensor> tensors);
std::vector<NamedTensor> read_checkpoint(const std::filesystem::path& path);

const NamedTensor* find_tensor(std::span<const NamedTensor> tensors, std::string_view name);
const NamedTensor& require_tensor(std::span<const NamedTensor> tensors, std::string_view name);

template <typename T>
NamedTensor to_named(std::string name, const BasicTensor<T>& t);

}  // namespace wastegan
