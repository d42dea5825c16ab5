#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "tandem/error.hpp"
#include "tandem/layers.hpp"
#include "tandem/tensor.hpp"

namespace tandem {

/// Checkpoint container, little-endian throughout:
///   magic "TNDM" | u32 version (1) | u32 slot count
/// then per slot:
///   u32 name length | name bytes | u32 rank | u32 extents[rank] | f32 values
struct NamedTensor {
  std::string name;
  Tensor value;
};

inline constexpr char kCheckpointMagic[4] = {'T', 'N', 'D', 'M'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

inline void write_le32(std::ofstream& out, std::uint32_t v) {
  unsigned char buf[4] = {static_cast<unsigned char>(v),
                          static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(buf), 4);
}

inline std::uint32_t read_le32(const unsigned char* p) {
  return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) |
         (std::uint32_t(p[2]) << 16) | (std::uint32_t(p[3]) << 24);
}

}  // namespace detail

inline void save_checkpoint(const std::filesystem::path& path,
                            const std::vector<NamedTensor>& slots) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write checkpoint " + path.string());
  out.write(kCheckpointMagic, 4);
  detail::write_le32(out, kCheckpointVersion);
  detail::write_le32(out, static_cast<std::uint32_t>(slots.size()));
  for (const auto& slot : slots) {
    detail::write_le32(out, static_cast<std::uint32_t>(slot.name.size()));
    out.write(slot.name.data(), static_cast<std::streamsize>(slot.name.size()));
    detail::write_le32(out, static_cast<std::uint32_t>(slot.value.rank()));
    for (std::size_t e : slot.value.shape()) {
      detail::write_le32(out, static_cast<std::uint32_t>(e));
    }
    for (std::size_t i = 0; i < slot.value.size(); ++i) {
      detail::write_le32(out, std::bit_cast<std::uint32_t>(slot.value[i]));
    }
  }
  if (!out) throw FormatError("write failed for checkpoint " + path.string());
}

template <typename T>
std::vector<NamedTensor> snapshot_parameters(
    const std::vector<ParameterT<T>*>& params) {
  std::vector<NamedTensor> slots;
  slots.reserve(params.size());
  for (const auto* p : params) {
    slots.push_back(NamedTensor{p->name, p->value.template cast<float>()});
  }
  return slots;
}

inline std::vector<NamedTensor> load_checkpoint(
    const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  const auto need = [&](std::size_t offset, std::size_t count) {
    if (offset + count > bytes.size()) {
      throw FormatError(path.string() + ": truncated checkpoint at offset " +
                        std::to_string(offset));
    }
  };
  need(0, 12);
  if (!std::equal(kCheckpointMagic, kCheckpointMagic + 4, bytes.data())) {
    throw FormatError(path.string() + ": bad checkpoint magic");
  }
  if (detail::read_le32(bytes.data() + 4) != kCheckpointVersion) {
    throw FormatError(path.string() + ": unsupported checkpoint version");
  }
  const std::uint32_t count = detail::read_le32(bytes.data() + 8);
  std::vector<NamedTensor> slots;
  slots.reserve(count);
  std::size_t off = 12;
  for (std::uint32_t s = 0; s < count; ++s) {
    need(off, 4);
    const std::uint32_t name_len = detail::read_le32(bytes.data() + off);
    off += 4;
    need(off, name_len);
    std::string name(reinterpret_cast<const char*>(bytes.data() + off), name_len);
    off += name_len;
    need(off, 4);
    const std::uint32_t rank = detail::read_le32(bytes.data() + off);
    off += 4;
    if (rank == 0 || rank > 4) {
      throw FormatError(path.string() + ": slot '" + name + "' has rank " +
                        std::to_string(rank));
    }
    std::vector<std::size_t> shape(rank);
    std::size_t total = 1;
    for (std::uint32_t r = 0; r < rank; ++r) {
      need(off, 4);
      shape[r] = detail::read_le32(bytes.data() + off);
      off += 4;
      total *= shape[r];
    }
    need(off, 4 * total);
    std::vector<float> values(total);
    for (std::size_t i = 0; i < total; ++i) {
      values[i] = std::bit_cast<float>(detail::read_le32(bytes.data() + off));
      off += 4;
    }
    slots.push_back(NamedTensor{std::move(name), Tensor(shape, std::move(values))});
  }
  if (off != bytes.size()) {
    throw FormatError(path.string() + ": trailing bytes after slot " +
                      std::to_string(count));
  }
  return slots;
}

/// Copies checkpoint slots into matching network parameters by name.
template <typename T>
void load_parameters(const std::vector<NamedTensor>& slots,
                     const std::vector<ParameterT<T>*>& params) {
  for (auto* p : params) {
    const NamedTensor* found = nullptr;
    for (const auto& slot : slots) {
      if (slot.name == p->name) {
        found = &slot;
        break;
      }
    }
    if (!found) throw FormatError("checkpoint is missing slot " + p->name);
    if (found->value.shape() != p->value.shape()) {
      throw FormatError("checkpoint slot " + p->name + " has shape " +
                        detail::shape_string(found->value.shape()) +
                        ", expected " + detail::shape_string(p->value.shape()));
    }
    p->value = found->value.template cast<T>();
  }
}

}  // namespace tandem
