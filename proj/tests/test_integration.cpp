#include <doctest.h>

#include <filesystem>
#include <unistd.h>

#include "tandem/tandem.hpp"

// The IDX-file-to-training path as the experiment driver uses it: write a
// generated dataset in IDX form, load it back, take a seeded subset, solve
// the width for a budget, and train briefly.

using namespace tandem;
namespace fs = std::filesystem;

TEST_CASE("idx files drive a full training run end to end") {
  const fs::path dir = fs::temp_directory_path() /
                       ("tandem_int_test_" + std::to_string(::getpid()));
  fs::create_directories(dir);

  auto full = synthetic_dataset(96, 10, 28, 5);
  write_idx(full, dir / "train-images-idx3-ubyte",
            dir / "train-labels-idx1-ubyte");
  auto test_set = synthetic_dataset(32, 10, 28, 6);
  write_idx(test_set, dir / "t10k-images-idx3-ubyte",
            dir / "t10k-labels-idx1-ubyte");

  auto train = load_idx(dir / "train-images-idx3-ubyte",
                        dir / "train-labels-idx1-ubyte");
  auto test = load_idx(dir / "t10k-images-idx3-ubyte",
                       dir / "t10k-labels-idx1-ubyte");
  CHECK(train.size() == 96);
  CHECK(train.images.extent(2) == 28);

  auto subset = dataset_subset(train, 64, 7);
  CHECK(subset.size() == 64);

  const std::size_t w = solve_width(BlockKind::kConv1x1_1, 1, 10, 1, 130000);
  CHECK(w == 20);
  NetworkSpec spec{BlockKind::kConv1x1_1, 1, w, 10, 1};
  CHECK(network_param_count(spec) == 129570);

  auto net = build_network(spec, 0.15);
  Rng rng = Rng(7).child(detail::kInitStream);
  init_parameters(net, 0.7, rng);

  TrainConfig config;
  config.epochs = 1;
  config.batch_size = 32;
  config.seed = 7;
  config.augment = true;
  auto log = run_experiment(net, config, subset, test);
  REQUIRE(log.rows.size() == 1);
  CHECK(log.rows[0].lr == 0.001);
  CHECK(log.rows[0].test_accuracy >= 0.0);
  CHECK(log.rows[0].test_accuracy <= 1.0);
  CHECK(std::isfinite(log.rows[0].train_loss));

  fs::remove_all(dir);
}
