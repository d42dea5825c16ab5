// Experiment CLI: train tandem networks, solve widths for a parameter
// budget, audit parameter counts, and export singular-value reports.

#include <cstdio>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tandem/tandem.hpp"

namespace fs = std::filesystem;

namespace {

std::string checkpoint_name(std::size_t epoch) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "epoch_%04zu.tndm", epoch);
  return buf;
}

std::size_t resolve_width(const tandem::NetworkConfig& net) {
  if (net.w) return *net.w;
  return tandem::solve_width(net.kind, net.d, net.classes, net.in_channels,
                             *net.target_params);
}

int cmd_train(const std::string& config_path,
              const std::vector<std::string>& overrides) {
  auto cfg = tandem::load_experiment_config(config_path, overrides);
  auto [train_ds, test_ds] = tandem::load_datasets(cfg);

  tandem::NetworkSpec spec;
  spec.kind = cfg.network.kind;
  spec.d = cfg.network.d;
  spec.w = resolve_width(cfg.network);
  spec.classes = cfg.network.classes;
  spec.in_channels = cfg.network.in_channels;
  if (train_ds.images.extent(1) != spec.in_channels) {
    throw tandem::FormatError("network.in_channels does not match the data");
  }
  if (static_cast<std::size_t>(train_ds.class_count) != spec.classes) {
    throw tandem::FormatError("network.classes does not match the data");
  }

  auto net = tandem::build_network(spec, cfg.train.dropout_rate);
  std::printf("network: kind=%s d=%zu w=%zu layers=%zu params=%zu\n",
              tandem::block_kind_name(spec.kind), spec.d, spec.w, net.depth(),
              net.param_count());

  tandem::Rng init_rng =
      tandem::Rng(cfg.train.seed).child(tandem::detail::kInitStream);
  tandem::init_parameters(net, cfg.train.init_base_std, init_rng);
  if (cfg.analysis.track_linear_svd) {
    tandem::Rng reinit_rng = init_rng.child(1);
    tandem::apply_linear_init(net, cfg.analysis.block_index,
                              cfg.analysis.linear_init,
                              cfg.train.init_base_std, reinit_rng);
  }

  fs::create_directories(cfg.output_directory);
  tandem::RunHooks hooks;
  if (cfg.analysis.track_linear_svd) {
    hooks.on_snapshot = [&](std::size_t epoch, tandem::Network& model) {
      tandem::save_checkpoint(cfg.output_directory / checkpoint_name(epoch),
                              tandem::snapshot_parameters(model.parameters()));
    };
  }

  tandem::MetricsLog log =
      tandem::run_experiment(net, cfg.train, train_ds, test_ds, hooks);

  tandem::write_metrics_csv(log, cfg.output_directory / "metrics.csv");
  tandem::save_checkpoint(cfg.output_directory / "model.tndm",
                          tandem::snapshot_parameters(net.parameters()));
  if (cfg.analysis.track_linear_svd) {
    auto series =
        tandem::svd_series(tandem::list_epoch_checkpoints(cfg.output_directory),
                           cfg.analysis.block_index);
    tandem::write_svd_csv(series, cfg.output_directory / "svd.csv");
  }
  std::printf("final test accuracy: %.2f%%\n",
              log.rows.back().test_accuracy * 100.0);
  return 0;
}

int cmd_solve_width(const std::string& kind_name, std::size_t layers,
                    std::size_t target, std::size_t classes,
                    std::size_t in_channels) {
  tandem::BlockKind kind = tandem::detail::parse_block_kind(kind_name);
  if (layers < 8 || (layers - 2) % 6 != 0) {
    throw std::invalid_argument("layers must be of the form 6d+2 (8, 14, 20, ...)");
  }
  const std::size_t d = (layers - 2) / 6;
  const std::size_t w =
      tandem::solve_width(kind, d, classes, in_channels, target);
  const std::size_t count = tandem::network_param_count(
      tandem::NetworkSpec{kind, d, w, classes, in_channels});
  const double deviation = 100.0 *
                           (static_cast<double>(count) - static_cast<double>(target)) /
                           static_cast<double>(target);
  std::printf("kind=%s layers=%zu d=%zu\n", tandem::block_kind_name(kind),
              layers, d);
  std::printf("w = %zu\nparams = %zu\ntarget = %zu\ndeviation = %+.2f%%\n", w,
              count, target, deviation);
  return 0;
}

int cmd_count_params(const std::string& config_path,
                     const std::vector<std::string>& overrides) {
  auto cfg = tandem::load_experiment_config(config_path, overrides,
                                            /*check_paths=*/false);
  tandem::NetworkSpec spec;
  spec.kind = cfg.network.kind;
  spec.d = cfg.network.d;
  spec.w = resolve_width(cfg.network);
  spec.classes = cfg.network.classes;
  spec.in_channels = cfg.network.in_channels;

  auto net = tandem::build_network(spec, cfg.train.dropout_rate);
  std::printf("%-28s %-18s %12s\n", "layer", "shape", "params");
  std::size_t total = 0;
  for (auto& layer : net.layers()) {
    std::vector<tandem::Parameter*> params;
    layer->collect_parameters(params);
    for (const auto* p : params) {
      total += p->value.size();
      std::printf("%-28s %-18s %12zu\n", p->name.c_str(),
                  tandem::detail::shape_string(p->value.shape()).c_str(),
                  p->value.size());
    }
    if (auto* block = dynamic_cast<tandem::TandemBlockT<float>*>(layer.get())) {
      if (block->has_identity_branch()) {
        std::printf("%-28s %-18s %12d\n",
                    (layer->name() + ".linear").c_str(), "identity", 0);
      }
    }
  }
  std::printf("%-28s %-18s %12zu\n", "total", "", total);
  const std::size_t expected = tandem::network_param_count(spec);
  if (total != expected) {
    std::fprintf(stderr, "error: enumerated %zu parameters, formula gives %zu\n",
                 total, expected);
    return 1;
  }
  return 0;
}

int cmd_svd_report(const std::string& checkpoint_dir, std::size_t block_index,
                   const std::string& out_path) {
  auto paths = tandem::list_epoch_checkpoints(checkpoint_dir);
  auto series = tandem::svd_series(paths, block_index);
  tandem::write_svd_csv(series, out_path);
  std::printf("wrote %zu rows (epochs 0..%zu) to %s\n", series.rows.size(),
              series.rows.size() - 1, out_path.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tandem-block network experiments"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  auto* train = app.add_subcommand("train", "train a network from a config file");
  train->add_option("--config", config_path, "experiment config file")
      ->required();
  train->add_option("--set", overrides,
                    "override a config value (section.key=value)");

  std::string kind_name = "conv1x1_1";
  std::size_t layers = 8, target = 130000, classes = 10, in_channels = 3;
  auto* solve = app.add_subcommand("solve-width",
                                   "find the width matching a parameter budget");
  solve->add_option("--kind", kind_name, "block kind")->required();
  solve->add_option("--layers", layers, "network depth, 6d+2")->required();
  solve->add_option("--target-params", target, "parameter budget")->required();
  solve->add_option("--classes", classes, "output classes");
  solve->add_option("--in-channels", in_channels, "input channels");

  std::string count_config;
  std::vector<std::string> count_overrides;
  auto* count = app.add_subcommand("count-params",
                                   "per-layer parameter table for a config");
  count->add_option("--config", count_config, "experiment config file")
      ->required();
  count->add_option("--set", count_overrides,
                    "override a config value (section.key=value)");

  std::string ckpt_dir, svd_out = "svd.csv";
  std::size_t block_index = 1;
  auto* svd = app.add_subcommand("svd-report",
                                 "singular values of a linear 1x1 connection "
                                 "across epoch checkpoints");
  svd->add_option("--checkpoint-dir", ckpt_dir, "directory with epoch_*.tndm")
      ->required();
  svd->add_option("--block-index", block_index, "1-based block index");
  svd->add_option("--out", svd_out, "output CSV path");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) return cmd_train(config_path, overrides);
    if (solve->parsed()) {
      return cmd_solve_width(kind_name, layers, target, classes, in_channels);
    }
    if (count->parsed()) return cmd_count_params(count_config, count_overrides);
    if (svd->parsed()) return cmd_svd_report(ckpt_dir, block_index, svd_out);
  } catch (const tandem::DivergenceError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
