#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace tandem {

/// Malformed external input: dataset files, checkpoints, config files.
class FormatError : public std::runtime_error {
 public:
  explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

/// Training produced a non-finite loss. Carries the epoch it happened in.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(std::size_t epoch, const std::string& what)
      : std::runtime_error(what), epoch_(epoch) {}
  std::size_t epoch() const { return epoch_; }

 private:
  std::size_t epoch_;
};

}  // namespace tandem
