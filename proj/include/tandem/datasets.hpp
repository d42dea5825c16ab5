#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "tandem/error.hpp"
#include "tandem/rng.hpp"
#include "tandem/tensor.hpp"

namespace tandem {

/// Images as an (N, C, H, W) tensor with values in [0, 1] plus one integer
/// label per image in [0, class_count).
struct LabeledDataset {
  Tensor images;
  std::vector<int> labels;
  int class_count = 0;

  std::size_t size() const { return labels.size(); }
};

enum class CifarVariant { kCifar10, kCifar100 };

namespace detail {

inline std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  return bytes;
}

inline std::uint32_t read_be32(const unsigned char* p) {
  return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) |
         (std::uint32_t(p[2]) << 8) | std::uint32_t(p[3]);
}

inline void write_be32(std::ofstream& out, std::uint32_t v) {
  unsigned char buf[4] = {static_cast<unsigned char>(v >> 24),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v)};
  out.write(reinterpret_cast<const char*>(buf), 4);
}

}  // namespace detail

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

/// CIFAR binary batches: each record is one label byte (CIFAR-10) or a
/// coarse+fine label byte pair (CIFAR-100, fine used) followed by 3072 pixel
/// bytes as R, G, B planes of a row-major 32x32 image. Pixels scale by 1/255.
inline LabeledDataset load_cifar_binary(
    const std::vector<std::filesystem::path>& paths, CifarVariant variant) {
  if (paths.empty()) throw std::invalid_argument("cifar: no files given");
  const std::size_t label_bytes = variant == CifarVariant::kCifar10 ? 1 : 2;
  const int classes = variant == CifarVariant::kCifar10 ? 10 : 100;
  const std::size_t record = label_bytes + 3 * 32 * 32;

  std::size_t total = 0;
  std::vector<std::vector<unsigned char>> files;
  for (const auto& path : paths) {
    auto bytes = detail::read_file(path);
    if (bytes.empty() || bytes.size() % record != 0) {
      throw FormatError(path.string() + ": size " +
                        std::to_string(bytes.size()) +
                        " is not a multiple of the record length " +
                        std::to_string(record) + " (stray bytes from offset " +
                        std::to_string(bytes.size() - bytes.size() % record) +
                        ")");
    }
    total += bytes.size() / record;
    files.push_back(std::move(bytes));
  }

  LabeledDataset ds;
  ds.class_count = classes;
  ds.images = Tensor({total, 3, 32, 32});
  ds.labels.reserve(total);
  std::size_t n = 0;
  for (std::size_t f = 0; f < files.size(); ++f) {
    const auto& bytes = files[f];
    for (std::size_t off = 0; off < bytes.size(); off += record, ++n) {
      const int label = bytes[off + label_bytes - 1];  // fine label for c100
      if (label >= classes) {
        throw FormatError(paths[f].string() + ": label " +
                          std::to_string(label) + " out of range at offset " +
                          std::to_string(off));
      }
      ds.labels.push_back(label);
      const unsigned char* px = bytes.data() + off + label_bytes;
      float* dst = ds.images.data() + n * 3 * 32 * 32;
      for (std::size_t i = 0; i < 3 * 32 * 32; ++i) {
        dst[i] = static_cast<float>(px[i]) / 255.0f;
      }
    }
  }
  return ds;
}

/// Writes a 32x32 RGB dataset back in the CIFAR binary layout (the CIFAR-100
/// coarse byte is written as zero).
inline void write_cifar_binary(const LabeledDataset& ds,
                               const std::filesystem::path& path,
                               CifarVariant variant) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  const std::size_t n = ds.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (variant == CifarVariant::kCifar100) out.put(0);
    out.put(static_cast<char>(ds.labels[i]));
    const float* src = ds.images.data() + i * 3 * 32 * 32;
    for (std::size_t j = 0; j < 3 * 32 * 32; ++j) {
      const long v = std::lround(src[j] * 255.0f);
      out.put(static_cast<char>(std::clamp(v, 0l, 255l)));
    }
  }
}

/// IDX image/label file pair (the MNIST family container). Big-endian header;
/// image magic 0x00000803, label magic 0x00000801.
inline LabeledDataset load_idx(const std::filesystem::path& image_path,
                               const std::filesystem::path& label_path) {
  auto img = detail::read_file(image_path);
  auto lab = detail::read_file(label_path);
  if (img.size() < 16) {
    throw FormatError(image_path.string() + ": truncated IDX header");
  }
  if (lab.size() < 8) {
    throw FormatError(label_path.string() + ": truncated IDX header");
  }
  if (detail::read_be32(img.data()) != kIdxImageMagic) {
    throw FormatError(image_path.string() + ": bad IDX image magic");
  }
  if (detail::read_be32(lab.data()) != kIdxLabelMagic) {
    throw FormatError(label_path.string() + ": bad IDX label magic");
  }
  const std::size_t n = detail::read_be32(img.data() + 4);
  const std::size_t h = detail::read_be32(img.data() + 8);
  const std::size_t w = detail::read_be32(img.data() + 12);
  const std::size_t n_labels = detail::read_be32(lab.data() + 4);
  if (n != n_labels) {
    throw FormatError("IDX: image count " + std::to_string(n) +
                      " does not match label count " + std::to_string(n_labels));
  }
  if (n == 0) throw FormatError(image_path.string() + ": empty IDX file");
  if (img.size() != 16 + n * h * w) {
    throw FormatError(image_path.string() + ": payload size " +
                      std::to_string(img.size() - 16) + " does not match " +
                      std::to_string(n * h * w));
  }
  if (lab.size() != 8 + n) {
    throw FormatError(label_path.string() + ": payload size mismatch");
  }

  LabeledDataset ds;
  ds.class_count = 10;
  ds.images = Tensor({n, 1, h, w});
  ds.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int label = lab[8 + i];
    if (label >= 10) {
      throw FormatError(label_path.string() + ": label " +
                        std::to_string(label) + " out of range at index " +
                        std::to_string(i));
    }
    ds.labels[i] = label;
  }
  const unsigned char* px = img.data() + 16;
  for (std::size_t i = 0; i < n * h * w; ++i) {
    ds.images[i] = static_cast<float>(px[i]) / 255.0f;
  }
  return ds;
}

inline void write_idx(const LabeledDataset& ds,
                      const std::filesystem::path& image_path,
                      const std::filesystem::path& label_path) {
  const std::size_t n = ds.size();
  const std::size_t h = ds.images.extent(2), w = ds.images.extent(3);
  std::ofstream img(image_path, std::ios::binary);
  std::ofstream lab(label_path, std::ios::binary);
  if (!img || !lab) throw FormatError("cannot write IDX files");
  detail::write_be32(img, kIdxImageMagic);
  detail::write_be32(img, static_cast<std::uint32_t>(n));
  detail::write_be32(img, static_cast<std::uint32_t>(h));
  detail::write_be32(img, static_cast<std::uint32_t>(w));
  for (std::size_t i = 0; i < n * h * w; ++i) {
    const long v = std::lround(ds.images[i] * 255.0f);
    img.put(static_cast<char>(std::clamp(v, 0l, 255l)));
  }
  detail::write_be32(lab, kIdxLabelMagic);
  detail::write_be32(lab, static_cast<std::uint32_t>(n));
  for (std::size_t i = 0; i < n; ++i) lab.put(static_cast<char>(ds.labels[i]));
}

/// Deterministic class-conditional blob images for fast tests: each class has
/// a distinct Gaussian bump location, plus pixel noise, clamped to [0, 1].
/// Labels are balanced round-robin.
inline LabeledDataset synthetic_dataset(std::size_t n, int classes,
                                        std::size_t size, std::uint64_t seed) {
  if (classes < 2) throw std::invalid_argument("synthetic: need >= 2 classes");
  if (n < static_cast<std::size_t>(classes)) {
    throw std::invalid_argument("synthetic: need at least one sample per class");
  }
  if (size < 4) throw std::invalid_argument("synthetic: size must be >= 4");

  LabeledDataset ds;
  ds.class_count = classes;
  ds.images = Tensor({n, 1, size, size});
  ds.labels.resize(n);

  const double radius = 0.30 * static_cast<double>(size);
  const double sigma = 0.18 * static_cast<double>(size);
  const double center = 0.5 * static_cast<double>(size - 1);
  Rng rng(Rng::mix(seed + 0x5E15ull));
  for (std::size_t i = 0; i < n; ++i) {
    const int label = static_cast<int>(i % static_cast<std::size_t>(classes));
    ds.labels[i] = label;
    const double angle = 2.0 * 3.14159265358979323846 * label / classes;
    const double cy = center + radius * std::sin(angle);
    const double cx = center + radius * std::cos(angle);
    float* dst = ds.images.data() + i * size * size;
    for (std::size_t y = 0; y < size; ++y) {
      for (std::size_t x = 0; x < size; ++x) {
        const double dy = static_cast<double>(y) - cy;
        const double dx = static_cast<double>(x) - cx;
        double v = 0.85 * std::exp(-(dy * dy + dx * dx) / (2.0 * sigma * sigma));
        v += 0.08 * rng.next_gaussian();
        dst[y * size + x] = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
  }
  return ds;
}

/// Seeded subset of the first `count` entries of a shuffled index permutation.
inline LabeledDataset dataset_subset(const LabeledDataset& ds, std::size_t count,
                                     std::uint64_t seed) {
  if (count == 0 || count >= ds.size()) return ds;
  std::vector<std::size_t> perm(ds.size());
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  Rng rng(Rng::mix(seed + 0x5));
  for (std::size_t i = 0; i + 1 < perm.size(); ++i) {
    const std::size_t j = i + rng.next_below(perm.size() - i);
    std::swap(perm[i], perm[j]);
  }
  const std::size_t c = ds.images.extent(1), h = ds.images.extent(2),
                    w = ds.images.extent(3);
  LabeledDataset out;
  out.class_count = ds.class_count;
  out.images = Tensor({count, c, h, w});
  out.labels.resize(count);
  const std::size_t stride = c * h * w;
  for (std::size_t i = 0; i < count; ++i) {
    std::copy_n(ds.images.data() + perm[i] * stride, stride,
                out.images.data() + i * stride);
    out.labels[i] = ds.labels[perm[i]];
  }
  return out;
}

}  // namespace tandem
