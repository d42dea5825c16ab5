#include <doctest.h>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <unistd.h>
#include <vector>

#include "tandem/datasets.hpp"
#include "tandem/error.hpp"

using namespace tandem;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("tandem_ds_test_" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

LabeledDataset random_cifar_like(std::size_t n, int classes, std::uint64_t seed) {
  Rng rng(seed);
  LabeledDataset ds;
  ds.class_count = classes;
  ds.images = Tensor({n, 3, 32, 32});
  ds.labels.resize(n);
  for (std::size_t i = 0; i < ds.images.size(); ++i) {
    // Exact byte grid so the byte round-trip is lossless.
    ds.images[i] = float(rng.next_below(256)) / 255.0f;
  }
  for (std::size_t i = 0; i < n; ++i) {
    ds.labels[i] = int(rng.next_below(std::uint64_t(classes)));
  }
  return ds;
}

void corrupt_byte(const fs::path& p, std::size_t offset, unsigned char value) {
  std::fstream f(p, std::ios::in | std::ios::out | std::ios::binary);
  f.seekp(std::streamoff(offset));
  f.put(char(value));
}

}  // namespace

TEST_CASE("cifar10 round-trip preserves tensors and labels") {
  TempDir dir;
  auto ds = random_cifar_like(12, 10, 77);
  const auto file = dir.path / "batch.bin";
  write_cifar_binary(ds, file, CifarVariant::kCifar10);
  CHECK(fs::file_size(file) == 12 * 3073);

  auto loaded = load_cifar_binary({file}, CifarVariant::kCifar10);
  CHECK(loaded.size() == 12);
  CHECK(loaded.labels == ds.labels);
  REQUIRE(loaded.images.same_shape(ds.images));
  for (std::size_t i = 0; i < ds.images.size(); ++i) {
    CHECK(loaded.images[i] == ds.images[i]);
  }
}

TEST_CASE("cifar100 uses the fine label byte") {
  TempDir dir;
  auto ds = random_cifar_like(6, 100, 78);
  const auto file = dir.path / "c100.bin";
  write_cifar_binary(ds, file, CifarVariant::kCifar100);
  CHECK(fs::file_size(file) == 6 * 3074);
  auto loaded = load_cifar_binary({file}, CifarVariant::kCifar100);
  CHECK(loaded.labels == ds.labels);
  CHECK(loaded.class_count == 100);
}

TEST_CASE("cifar loader reports truncation with the stray offset") {
  TempDir dir;
  auto ds = random_cifar_like(3, 10, 79);
  const auto file = dir.path / "trunc.bin";
  write_cifar_binary(ds, file, CifarVariant::kCifar10);
  fs::resize_file(file, 3 * 3073 - 100);
  CHECK_THROWS_AS(load_cifar_binary({file}, CifarVariant::kCifar10), FormatError);
  try {
    load_cifar_binary({file}, CifarVariant::kCifar10);
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("offset") != std::string::npos);
  }
}

TEST_CASE("cifar loader rejects out-of-range labels") {
  TempDir dir;
  auto ds = random_cifar_like(3, 10, 80);
  const auto file = dir.path / "badlabel.bin";
  write_cifar_binary(ds, file, CifarVariant::kCifar10);
  corrupt_byte(file, 3073, 10);  // second record's label byte
  CHECK_THROWS_AS(load_cifar_binary({file}, CifarVariant::kCifar10), FormatError);
}

TEST_CASE("cifar pixel scaling: byte 255 -> 1.0, byte 0 -> 0.0") {
  TempDir dir;
  const auto file = dir.path / "px.bin";
  {
    std::ofstream out(file, std::ios::binary);
    out.put(0);  // label
    out.put(char(255));
    for (int i = 1; i < 3072; ++i) out.put(0);
  }
  auto ds = load_cifar_binary({file}, CifarVariant::kCifar10);
  CHECK(ds.images[0] == 1.0f);
  CHECK(ds.images[1] == 0.0f);
}

TEST_CASE("idx round-trip and header decode") {
  TempDir dir;
  Rng rng(81);
  LabeledDataset ds;
  ds.class_count = 10;
  ds.images = Tensor({5, 1, 28, 28});
  ds.labels.resize(5);
  for (std::size_t i = 0; i < ds.images.size(); ++i) {
    ds.images[i] = float(rng.next_below(256)) / 255.0f;
  }
  for (auto& label : ds.labels) label = int(rng.next_below(10));

  const auto images = dir.path / "images-idx3-ubyte";
  const auto labels = dir.path / "labels-idx1-ubyte";
  write_idx(ds, images, labels);
  auto loaded = load_idx(images, labels);
  CHECK(loaded.size() == 5);
  CHECK(loaded.images.extent(2) == 28);
  CHECK(loaded.images.extent(3) == 28);
  CHECK(loaded.labels == ds.labels);
  for (std::size_t i = 0; i < ds.images.size(); ++i) {
    CHECK(loaded.images[i] == ds.images[i]);
  }
}

TEST_CASE("idx loader rejects malformed inputs") {
  TempDir dir;
  auto ds = synthetic_dataset(4, 2, 8, 1);
  const auto images = dir.path / "img";
  const auto labels = dir.path / "lab";
  write_idx(ds, images, labels);

  SUBCASE("bad image magic") {
    corrupt_byte(images, 3, 0x99);
    try {
      load_idx(images, labels);
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      CHECK(std::string(e.what()).find("bad IDX image magic") !=
            std::string::npos);
    }
  }
  SUBCASE("bad label magic") {
    corrupt_byte(labels, 3, 0x99);
    CHECK_THROWS_AS(load_idx(images, labels), FormatError);
  }
  SUBCASE("count mismatch") {
    corrupt_byte(labels, 7, 3);  // claims 3 labels for 4 images
    CHECK_THROWS_AS(load_idx(images, labels), FormatError);
  }
  SUBCASE("truncated payload") {
    fs::resize_file(images, fs::file_size(images) - 5);
    CHECK_THROWS_AS(load_idx(images, labels), FormatError);
  }
  SUBCASE("label out of range") {
    corrupt_byte(labels, 8, 11);
    CHECK_THROWS_AS(load_idx(images, labels), FormatError);
  }
}

TEST_CASE("all-zero image bytes give an all-zero tensor row") {
  TempDir dir;
  LabeledDataset ds;
  ds.class_count = 10;
  ds.images = Tensor({2, 1, 4, 4});
  for (std::size_t i = 16; i < 32; ++i) ds.images[i] = 0.5f;
  ds.labels = {0, 1};
  const auto images = dir.path / "z-img";
  const auto labels = dir.path / "z-lab";
  write_idx(ds, images, labels);
  auto loaded = load_idx(images, labels);
  for (std::size_t i = 0; i < 16; ++i) CHECK(loaded.images[i] == 0.0f);
}

TEST_CASE("synthetic dataset: determinism, balance, range") {
  auto a = synthetic_dataset(33, 4, 16, 9);
  auto b = synthetic_dataset(33, 4, 16, 9);
  CHECK(a.labels == b.labels);
  for (std::size_t i = 0; i < a.images.size(); ++i) {
    CHECK(a.images[i] == b.images[i]);
    CHECK(a.images[i] >= 0.0f);
    CHECK(a.images[i] <= 1.0f);
  }
  // Balanced round-robin labels: counts in {floor(n/K), ceil(n/K)}.
  std::vector<int> counts(4, 0);
  for (int label : a.labels) ++counts[std::size_t(label)];
  for (int c : counts) {
    CHECK(c >= 33 / 4);
    CHECK(c <= (33 + 3) / 4);
  }
  auto c = synthetic_dataset(33, 4, 16, 10);
  bool any_diff = false;
  for (std::size_t i = 0; i < a.images.size(); ++i) {
    if (a.images[i] != c.images[i]) any_diff = true;
  }
  CHECK(any_diff);

  CHECK_THROWS_AS(synthetic_dataset(3, 4, 16, 1), std::invalid_argument);
  CHECK_THROWS_AS(synthetic_dataset(8, 1, 16, 1), std::invalid_argument);
}

TEST_CASE("loaders never produce values outside [0,1] or labels outside range") {
  TempDir dir;
  Rng rng(82);
  const auto file = dir.path / "rand.bin";
  {
    std::ofstream out(file, std::ios::binary);
    for (int rec = 0; rec < 8; ++rec) {
      out.put(char(rng.next_below(10)));
      for (int i = 0; i < 3072; ++i) out.put(char(rng.next_below(256)));
    }
  }
  auto ds = load_cifar_binary({file}, CifarVariant::kCifar10);
  for (std::size_t i = 0; i < ds.images.size(); ++i) {
    CHECK(ds.images[i] >= 0.0f);
    CHECK(ds.images[i] <= 1.0f);
  }
  for (int label : ds.labels) {
    CHECK(label >= 0);
    CHECK(label < 10);
  }
}

TEST_CASE("dataset_subset is seeded and stable") {
  auto ds = synthetic_dataset(40, 4, 12, 3);
  auto a = dataset_subset(ds, 10, 5);
  auto b = dataset_subset(ds, 10, 5);
  CHECK(a.size() == 10);
  CHECK(a.labels == b.labels);
  for (std::size_t i = 0; i < a.images.size(); ++i) {
    CHECK(a.images[i] == b.images[i]);
  }
  auto c = dataset_subset(ds, 10, 6);
  CHECK(c.size() == 10);
  CHECK(dataset_subset(ds, 0, 5).size() == 40);
  CHECK(dataset_subset(ds, 400, 5).size() == 40);
}
