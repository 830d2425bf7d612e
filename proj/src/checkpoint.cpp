#include "wastegan/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include "wastegan/errors.hpp"

namespace wastegan {

namespace {

constexpr char kMagic[4] = {'W', 'T', 'K', '1'};

template <typename U>
void put_le(std::string& out, U value) {
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    out.push_back(static_cast<char>((value >> (8 * i)) & 0xFFu));
  }
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <typename U>
  U get() {
    need(sizeof(U));
    U value = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      value |= static_cast<U>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(U);
    return value;
  }

  std::string_view take(std::size_t n) {
    need(n);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw IoError("checkpoint truncated");
  }
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_checkpoint(std::span<const NamedTensor> tensors) {
  std::string out(kMagic, 4);
  put_le<std::uint32_t>(out, kCheckpointVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    if (t.name.size() > std::numeric_limits<std::uint16_t>::max()) {
      throw ContractError("checkpoint: tensor name too long: " + t.name.substr(0, 32));
    }
    if (t.shape.size() > std::numeric_limits<std::uint8_t>::max()) {
      throw ContractError("checkpoint: rank too large for " + t.name);
    }
    if (shape_numel(t.shape) != t.values.size()) {
      throw DimensionError("checkpoint: " + t.name + " shape " + shape_str(t.shape) +
                           " does not match its values");
    }
    put_le<std::uint16_t>(out, static_cast<std::uint16_t>(t.name.size()));
    out += t.name;
    out.push_back(static_cast<char>(t.shape.size()));
    for (std::size_t d : t.shape) {
      if (d > std::numeric_limits<std::uint32_t>::max()) throw ContractError("checkpoint: extent too large");
      put_le<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    }
    for (float v : t.values) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
  }
  return out;
}

std::vector<NamedTensor> decode_checkpoint(std::string_view bytes) {
  Reader in(bytes);
  if (in.take(4) != std::string_view(kMagic, 4)) throw IoError("checkpoint: bad magic");
  const auto version = in.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw IoError("checkpoint: unsupported version " + std::to_string(version));
  }
  const auto count = in.get<std::uint32_t>();
  std::vector<NamedTensor> tensors;
  tensors.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    const auto name_len = in.get<std::uint16_t>();
    t.name = std::string(in.take(name_len));
    const auto rank = in.get<std::uint8_t>();
    for (std::uint8_t r = 0; r < rank; ++r) t.shape.push_back(in.get<std::uint32_t>());
    const std::size_t n = shape_numel(t.shape);
    t.values.resize(n);
    for (std::size_t j = 0; j < n; ++j) t.values[j] = std::bit_cast<float>(in.get<std::uint32_t>());
    tensors.push_back(std::move(t));
  }
  if (!in.done()) throw IoError("checkpoint: trailing bytes");
  return tensors;
}

void write_checkpoint(const std::filesystem::path& path, std::span<const NamedTensor> tensors) {
  const std::string bytes = encode_checkpoint(tensors);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

std::vector<NamedTensor> read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return decode_checkpoint(ss.str());
}

const NamedTensor* find_tensor(std::span<const NamedTensor> tensors, std::string_view name) {
  for (const auto& t : tensors) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

const NamedTensor& require_tensor(std::span<const NamedTensor> tensors, std::string_view name) {
  const NamedTensor* t = find_tensor(tensors, name);
  if (!t) throw IoError("checkpoint has no tensor named " + std::string(name));
  return *t;
}

template <typename T>
NamedTensor to_named(std::string name, const BasicTensor<T>& t) {
  NamedTensor out{std::move(name), t.shape(), {}};
  out.values.reserve(t.numel());
  for (T v : t.data()) out.values.push_back(static_cast<float>(v));
  return out;
}

template NamedTensor to_named(std::string, const BasicTensor<float>&);
template NamedTensor to_named(std::string, const BasicTensor<double>&);

}  // namespace wastegan
