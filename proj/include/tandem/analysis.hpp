#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "tandem/checkpoint.hpp"
#include "tandem/network.hpp"
#include "tandem/rng.hpp"
#include "tandem/svd.hpp"

namespace tandem {

/// Initialization schemes for a linear-branch 1x1 convolution.
enum class LinearInitMode { kIdentity, kZero, kGaussian };

inline const char* linear_init_name(LinearInitMode mode) {
  switch (mode) {
    case LinearInitMode::kIdentity: return "identity";
    case LinearInitMode::kZero: return "zero";
    case LinearInitMode::kGaussian: return "gaussian";
  }
  return "?";
}

/// Reinitializes a 1x1 linear-connection weight (out, in, 1, 1). Identity
/// puts ones on the main diagonal of the out x in matrix, zero clears it, and
/// gaussian applies the standard fan-in truncated-normal rule.
template <typename T>
void init_linear_conv(TensorT<T>& weights, LinearInitMode mode, double base_std,
                      Rng& rng) {
  if (weights.rank() != 4 || weights.extent(2) != 1 || weights.extent(3) != 1) {
    throw std::invalid_argument(
        "init_linear_conv: expected (out, in, 1, 1) weights");
  }
  const std::size_t out = weights.extent(0), in = weights.extent(1);
  switch (mode) {
    case LinearInitMode::kIdentity:
      weights = TensorT<T>(weights.shape());
      for (std::size_t i = 0; i < std::min(out, in); ++i) {
        weights[i * in + i] = T(1);
      }
      break;
    case LinearInitMode::kZero:
      weights = TensorT<T>(weights.shape());
      break;
    case LinearInitMode::kGaussian:
      weights = truncated_normal<T>(weights.shape(), 0.0,
                                    base_std / std::sqrt(static_cast<double>(in)),
                                    2.0, rng);
      break;
  }
}

inline std::string linear_slot_name(std::size_t block_index) {
  return "block" + std::to_string(block_index) + ".linear.weight";
}

/// Applies an init mode to the linear branch of the given block (1-based).
/// Gaussian leaves the standard initialization in place.
template <typename T>
void apply_linear_init(NetworkT<T>& net, std::size_t block_index,
                       LinearInitMode mode, double base_std, Rng& rng) {
  if (mode == LinearInitMode::kGaussian) return;
  auto* block = net.block(block_index);
  if (!block || !block->linear_conv()) {
    throw std::invalid_argument("no linear-branch parameters in slot " +
                                linear_slot_name(block_index));
  }
  auto& weights = block->linear_conv()->weights().value;
  if (weights.extent(2) != 1 || weights.extent(3) != 1) {
    throw std::invalid_argument(linear_slot_name(block_index) +
                                " is not a 1x1 linear connection");
  }
  init_linear_conv(weights, mode, base_std, rng);
}

/// Per-epoch singular-value rows of one linear 1x1 connection; row 0 is the
/// initialization.
struct SvdSeries {
  std::size_t block_index = 0;
  std::vector<std::vector<double>> rows;
};

/// Computes the singular-value series for the designated block over a
/// checkpoint sequence in epoch order.
inline SvdSeries svd_series(const std::vector<std::filesystem::path>& checkpoints,
                            std::size_t block_index) {
  if (checkpoints.empty()) {
    throw std::invalid_argument("svd_series: no checkpoints given");
  }
  const std::string slot_name = linear_slot_name(block_index);
  SvdSeries series;
  series.block_index = block_index;
  for (const auto& path : checkpoints) {
    auto slots = load_checkpoint(path);
    const NamedTensor* slot = nullptr;
    for (const auto& s : slots) {
      if (s.name == slot_name) {
        slot = &s;
        break;
      }
    }
    if (!slot) {
      throw std::invalid_argument(path.string() + ": missing slot " + slot_name);
    }
    if (slot->value.rank() != 4 || slot->value.extent(2) != 1 ||
        slot->value.extent(3) != 1) {
      throw std::invalid_argument(slot_name + " is not a 1x1 weight in " +
                                  path.string());
    }
    const std::size_t out = slot->value.extent(0), in = slot->value.extent(1);
    Tensor matrix({out, in},
                  std::vector<float>(slot->value.data(),
                                     slot->value.data() + out * in));
    series.rows.push_back(svd_singular_values(matrix));
  }
  return series;
}

/// Epoch checkpoints ("epoch_NNNN.tndm") in a directory, sorted by epoch.
inline std::vector<std::filesystem::path> list_epoch_checkpoints(
    const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> paths;
  if (!std::filesystem::is_directory(dir)) {
    throw std::invalid_argument("not a directory: " + dir.string());
  }
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.rfind("epoch_", 0) == 0 && name.size() > 5 &&
        name.substr(name.size() - 5) == ".tndm") {
      paths.push_back(entry.path());
    }
  }
  if (paths.empty()) {
    throw std::invalid_argument("no epoch checkpoints under " + dir.string());
  }
  std::sort(paths.begin(), paths.end());
  return paths;
}

/// CSV with header epoch,s1,...,sN and one row per checkpoint.
inline void write_svd_csv(const SvdSeries& series,
                          const std::filesystem::path& path) {
  if (series.rows.empty()) {
    throw std::invalid_argument("write_svd_csv: empty series");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  out << "epoch";
  for (std::size_t j = 0; j < series.rows.front().size(); ++j) {
    out << ",s" << (j + 1);
  }
  out << "\n";
  char cell[48];
  for (std::size_t epoch = 0; epoch < series.rows.size(); ++epoch) {
    out << epoch;
    for (double sigma : series.rows[epoch]) {
      std::snprintf(cell, sizeof(cell), ",%.9g", sigma);
      out << cell;
    }
    out << "\n";
  }
}

}  // namespace tandem
