#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "tandem/analysis.hpp"
#include "tandem/blocks.hpp"
#include "tandem/datasets.hpp"
#include "tandem/error.hpp"
#include "tandem/trainer.hpp"

namespace tandem {

enum class DataFormat { kSynthetic, kCifar10, kCifar100, kIdx };

struct NetworkConfig {
  BlockKind kind = BlockKind::kConv1x1_1;
  std::size_t d = 1;
  std::optional<std::size_t> w;
  std::optional<std::size_t> target_params;
  std::size_t classes = 10;
  std::size_t in_channels = 3;
};

struct DataConfig {
  DataFormat format = DataFormat::kSynthetic;
  // idx
  std::filesystem::path train_images, train_labels, test_images, test_labels;
  // cifar
  std::vector<std::filesystem::path> train_files, test_files;
  // synthetic
  std::size_t train_size = 256;
  std::size_t test_size = 64;
  std::size_t image_size = 16;
  // 0 keeps the full training set
  std::size_t train_subset = 0;
};

struct AnalysisConfig {
  bool track_linear_svd = false;
  std::size_t block_index = 1;
  LinearInitMode linear_init = LinearInitMode::kGaussian;
};

struct ExperimentConfig {
  NetworkConfig network;
  TrainConfig train;
  DataConfig data;
  AnalysisConfig analysis;
  std::filesystem::path output_directory = "runs/out";
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

struct ConfigEntry {
  std::string value;
  bool used = false;
};
using ConfigMap = std::map<std::string, ConfigEntry>;  // "section.key" -> value

inline ConfigMap parse_config_text(std::istream& in, const std::string& origin) {
  ConfigMap map;
  std::string line, section;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto comment = line.find_first_of("#;");
    if (comment != std::string::npos) line = line.substr(0, comment);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw FormatError(origin + ":" + std::to_string(line_no) +
                          ": unterminated section header");
      }
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw FormatError(origin + ":" + std::to_string(line_no) +
                        ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw FormatError(origin + ":" + std::to_string(line_no) + ": empty key");
    }
    const std::string full = section.empty() ? key : section + "." + key;
    if (map.count(full)) {
      throw FormatError(origin + ": duplicate key '" + full + "'");
    }
    map[full] = ConfigEntry{value, false};
  }
  return map;
}

inline std::optional<std::string> take(ConfigMap& map, const std::string& key) {
  auto it = map.find(key);
  if (it == map.end()) return std::nullopt;
  it->second.used = true;
  return it->second.value;
}

template <typename Fn>
void take_into(ConfigMap& map, const std::string& key, Fn&& fn) {
  if (auto v = take(map, key)) fn(*v);
}

inline std::size_t parse_size(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const long long n = std::stoll(v, &pos);
    if (pos != v.size() || n < 0) throw std::invalid_argument(v);
    return static_cast<std::size_t>(n);
  } catch (...) {
    throw FormatError("config: " + key + " must be a non-negative integer, got '" +
                      v + "'");
  }
}

inline double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (...) {
    throw FormatError("config: " + key + " must be a number, got '" + v + "'");
  }
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "on" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "off" || v == "0" || v == "no") return false;
  throw FormatError("config: " + key + " must be a boolean, got '" + v + "'");
}

inline BlockKind parse_block_kind(const std::string& v) {
  for (BlockKind kind : kAllBlockKinds) {
    if (v == block_kind_name(kind)) return kind;
  }
  throw FormatError("config: unknown block kind '" + v +
                    "' (expected id_2, id_1, conv1x1_2, conv1x1_1, conv3x3_1)");
}

inline LinearInitMode parse_linear_init(const std::string& v) {
  if (v == "identity") return LinearInitMode::kIdentity;
  if (v == "zero") return LinearInitMode::kZero;
  if (v == "gaussian") return LinearInitMode::kGaussian;
  throw FormatError("config: unknown linear_init '" + v + "'");
}

inline std::vector<std::filesystem::path> parse_path_list(const std::string& v) {
  std::vector<std::filesystem::path> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.emplace_back(item);
  }
  return out;
}

inline std::vector<LrStage> parse_schedule(const std::string& v) {
  // "9:0.001,12:0.0002,15:0.00004"
  std::vector<LrStage> stages;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    const auto colon = item.find(':');
    if (colon == std::string::npos) {
      throw FormatError("config: lr_schedule entries must look like epoch:rate");
    }
    stages.push_back(LrStage{
        parse_size("train.lr_schedule", trim(item.substr(0, colon))),
        parse_double("train.lr_schedule", trim(item.substr(colon + 1)))});
  }
  return stages;
}

inline ExperimentConfig build_experiment_config(ConfigMap& map,
                                                const std::string& origin,
                                                bool check_paths) {
  ExperimentConfig cfg;

  take_into(map, "network.kind",
            [&](const std::string& v) { cfg.network.kind = parse_block_kind(v); });
  take_into(map, "network.d", [&](const std::string& v) {
    cfg.network.d = parse_size("network.d", v);
  });
  take_into(map, "network.w", [&](const std::string& v) {
    cfg.network.w = parse_size("network.w", v);
  });
  take_into(map, "network.target_params", [&](const std::string& v) {
    cfg.network.target_params = parse_size("network.target_params", v);
  });
  take_into(map, "network.classes", [&](const std::string& v) {
    cfg.network.classes = parse_size("network.classes", v);
  });
  take_into(map, "network.in_channels", [&](const std::string& v) {
    cfg.network.in_channels = parse_size("network.in_channels", v);
  });

  take_into(map, "train.epochs", [&](const std::string& v) {
    cfg.train.epochs = parse_size("train.epochs", v);
  });
  take_into(map, "train.batch_size", [&](const std::string& v) {
    cfg.train.batch_size = parse_size("train.batch_size", v);
  });
  take_into(map, "train.learning_rate", [&](const std::string& v) {
    cfg.train.base_lr = parse_double("train.learning_rate", v);
  });
  take_into(map, "train.lr_schedule", [&](const std::string& v) {
    cfg.train.lr_schedule = parse_schedule(v);
  });
  take_into(map, "train.weight_decay", [&](const std::string& v) {
    cfg.train.weight_decay = parse_double("train.weight_decay", v);
  });
  take_into(map, "train.dropout", [&](const std::string& v) {
    cfg.train.dropout_rate = parse_double("train.dropout", v);
  });
  take_into(map, "train.init_std", [&](const std::string& v) {
    cfg.train.init_base_std = parse_double("train.init_std", v);
  });
  take_into(map, "train.augment", [&](const std::string& v) {
    cfg.train.augment = parse_bool("train.augment", v);
  });
  take_into(map, "train.seed", [&](const std::string& v) {
    cfg.train.seed = parse_size("train.seed", v);
  });

  take_into(map, "data.format", [&](const std::string& v) {
    if (v == "synthetic") cfg.data.format = DataFormat::kSynthetic;
    else if (v == "cifar10") cfg.data.format = DataFormat::kCifar10;
    else if (v == "cifar100") cfg.data.format = DataFormat::kCifar100;
    else if (v == "idx") cfg.data.format = DataFormat::kIdx;
    else throw FormatError("config: unknown data.format '" + v + "'");
  });
  take_into(map, "data.train_images",
            [&](const std::string& v) { cfg.data.train_images = v; });
  take_into(map, "data.train_labels",
            [&](const std::string& v) { cfg.data.train_labels = v; });
  take_into(map, "data.test_images",
            [&](const std::string& v) { cfg.data.test_images = v; });
  take_into(map, "data.test_labels",
            [&](const std::string& v) { cfg.data.test_labels = v; });
  take_into(map, "data.train_files",
            [&](const std::string& v) { cfg.data.train_files = parse_path_list(v); });
  take_into(map, "data.test_files",
            [&](const std::string& v) { cfg.data.test_files = parse_path_list(v); });
  take_into(map, "data.train_size", [&](const std::string& v) {
    cfg.data.train_size = parse_size("data.train_size", v);
  });
  take_into(map, "data.test_size", [&](const std::string& v) {
    cfg.data.test_size = parse_size("data.test_size", v);
  });
  take_into(map, "data.image_size", [&](const std::string& v) {
    cfg.data.image_size = parse_size("data.image_size", v);
  });
  take_into(map, "data.train_subset", [&](const std::string& v) {
    cfg.data.train_subset = parse_size("data.train_subset", v);
  });

  take_into(map, "analysis.track_linear_svd", [&](const std::string& v) {
    cfg.analysis.track_linear_svd = parse_bool("analysis.track_linear_svd", v);
  });
  take_into(map, "analysis.block_index", [&](const std::string& v) {
    cfg.analysis.block_index = parse_size("analysis.block_index", v);
  });
  take_into(map, "analysis.linear_init", [&](const std::string& v) {
    cfg.analysis.linear_init = parse_linear_init(v);
  });

  take_into(map, "output.directory",
            [&](const std::string& v) { cfg.output_directory = v; });

  for (const auto& [key, entry] : map) {
    if (!entry.used) {
      throw FormatError(origin + ": unknown config key '" + key + "'");
    }
  }

  if (cfg.network.w.has_value() == cfg.network.target_params.has_value()) {
    throw FormatError(
        origin + ": exactly one of network.w and network.target_params required");
  }

  if (check_paths) {
    auto require_file = [&](const std::filesystem::path& p, const char* key) {
      if (p.empty()) {
        throw FormatError(origin + ": data." + std::string(key) + " is required");
      }
      if (!std::filesystem::is_regular_file(p)) {
        throw FormatError(origin + ": data." + std::string(key) +
                          " does not exist: " + p.string());
      }
    };
    if (cfg.data.format == DataFormat::kIdx) {
      require_file(cfg.data.train_images, "train_images");
      require_file(cfg.data.train_labels, "train_labels");
      require_file(cfg.data.test_images, "test_images");
      require_file(cfg.data.test_labels, "test_labels");
    } else if (cfg.data.format == DataFormat::kCifar10 ||
               cfg.data.format == DataFormat::kCifar100) {
      if (cfg.data.train_files.empty() || cfg.data.test_files.empty()) {
        throw FormatError(origin + ": data.train_files and data.test_files required");
      }
      for (const auto& p : cfg.data.train_files) require_file(p, "train_files");
      for (const auto& p : cfg.data.test_files) require_file(p, "test_files");
    }
  }
  return cfg;
}

}  // namespace detail

/// Applies a "section.key=value" override on top of parsed config text.
inline void apply_override(detail::ConfigMap& map, const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos) {
    throw FormatError("override '" + spec + "' must look like section.key=value");
  }
  const std::string key = detail::trim(spec.substr(0, eq));
  if (key.find('.') == std::string::npos) {
    throw FormatError("override key '" + key + "' must be section.key");
  }
  map[key] = detail::ConfigEntry{detail::trim(spec.substr(eq + 1)), false};
}

inline ExperimentConfig load_experiment_config(
    const std::filesystem::path& path,
    const std::vector<std::string>& overrides = {}, bool check_paths = true) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open config " + path.string());
  auto map = detail::parse_config_text(in, path.string());
  for (const auto& o : overrides) apply_override(map, o);
  return detail::build_experiment_config(map, path.string(), check_paths);
}

inline ExperimentConfig parse_experiment_config(
    const std::string& text, const std::vector<std::string>& overrides = {},
    bool check_paths = true) {
  std::istringstream in(text);
  auto map = detail::parse_config_text(in, "<config>");
  for (const auto& o : overrides) apply_override(map, o);
  return detail::build_experiment_config(map, "<config>", check_paths);
}

/// Loads the train/test pair a config describes. Synthetic data derives its
/// train and test streams from the training seed.
inline std::pair<LabeledDataset, LabeledDataset> load_datasets(
    const ExperimentConfig& cfg) {
  LabeledDataset train, test;
  switch (cfg.data.format) {
    case DataFormat::kSynthetic: {
      const int classes = static_cast<int>(cfg.network.classes);
      train = synthetic_dataset(cfg.data.train_size, classes,
                                cfg.data.image_size, cfg.train.seed * 2 + 1);
      test = synthetic_dataset(cfg.data.test_size, classes, cfg.data.image_size,
                               cfg.train.seed * 2 + 2);
      break;
    }
    case DataFormat::kIdx:
      train = load_idx(cfg.data.train_images, cfg.data.train_labels);
      test = load_idx(cfg.data.test_images, cfg.data.test_labels);
      break;
    case DataFormat::kCifar10:
    case DataFormat::kCifar100: {
      const CifarVariant variant = cfg.data.format == DataFormat::kCifar10
                                       ? CifarVariant::kCifar10
                                       : CifarVariant::kCifar100;
      train = load_cifar_binary(cfg.data.train_files, variant);
      test = load_cifar_binary(cfg.data.test_files, variant);
      break;
    }
  }
  if (cfg.data.train_subset > 0) {
    train = dataset_subset(train, cfg.data.train_subset, cfg.train.seed);
  }
  return {std::move(train), std::move(test)};
}

}  // namespace tandem
