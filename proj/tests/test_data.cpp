// Copyright 2026 The betagate Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "betagate/data.hpp"

#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "betagate/error.hpp"

using namespace betagate;

namespace {

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    path = std::filesystem::temp_directory_path() /
           ("betagate_test_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter++));
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  std::string file(const std::string& name) const {
    return (path / name).string();
  }
  static inline int counter = 0;
};

}  // namespace

TEST_CASE("jsonl classification: round trip and header") {
  TempDir dir;
  ClassificationData data;
  data.vocab = 12;
  data.classes = 3;
  data.items.push_back({{1, 2, 3}, 0});
  data.items.push_back({{4, 11}, 2});
  const std::string path = dir.file("cls.jsonl");
  write_jsonl_classification(path, data);
  ClassificationData loaded = load_jsonl_classification(path);
  REQUIRE(loaded.items.size() == 2);
  CHECK(loaded.vocab == 12);
  CHECK(loaded.classes == 3);
  CHECK(loaded.items[0].tokens == std::vector<int>{1, 2, 3});
  CHECK(loaded.items[1].label == 2);
  CHECK(loaded.rejected == 0);
}

TEST_CASE("jsonl classification: vocab inferred without header") {
  TempDir dir;
  const std::string path = dir.file("cls.jsonl");
  {
    std::ofstream out(path);
    out << R"({"tokens": [5, 2], "label": 1})" << "\n";
    out << R"({"tokens": [7], "label": 0})" << "\n";
  }
  ClassificationData loaded = load_jsonl_classification(path);
  CHECK(loaded.vocab == 8);
  CHECK(loaded.classes == 2);
}

TEST_CASE("jsonl classification: empty tokens rejected and counted") {
  TempDir dir;
  const std::string path = dir.file("cls.jsonl");
  {
    std::ofstream out(path);
    out << R"({"tokens": [1], "label": 0})" << "\n";
    out << R"({"tokens": [], "label": 1})" << "\n";
  }
  ClassificationData loaded = load_jsonl_classification(path);
  CHECK(loaded.items.size() == 1);
  CHECK(loaded.rejected == 1);
}

TEST_CASE("jsonl classification: malformed line names the line number") {
  TempDir dir;
  const std::string path = dir.file("cls.jsonl");
  {
    std::ofstream out(path);
    out << R"({"tokens": [1], "label": 0})" << "\n";
    out << "{not json}\n";
  }
  try {
    load_jsonl_classification(path);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find(":2") != std::string::npos);
  }
  CHECK_THROWS_AS(load_jsonl_classification(dir.file("missing.jsonl")),
                  DataError);
}

TEST_CASE("pianoroll: load, validate, round trip") {
  TempDir dir;
  const std::string path = dir.file("rolls.json");
  {
    std::ofstream out(path);
    out << "[[[60],[60,64]]]";
  }
  auto rolls = load_pianoroll_json(path);
  REQUIRE(rolls.size() == 1);
  CHECK(rolls[0].steps.size() == 2);
  CHECK(rolls[0].steps[1] == std::vector<int>{60, 64});

  const std::string path2 = dir.file("rolls2.json");
  write_pianoroll_json(path2, rolls);
  auto again = load_pianoroll_json(path2);
  REQUIRE(again.size() == 1);
  CHECK(again[0].steps == rolls[0].steps);
}

TEST_CASE("pianoroll: out-of-range note rejected with location") {
  TempDir dir;
  const std::string path = dir.file("bad.json");
  {
    std::ofstream out(path);
    out << "[[[60],[88]]]";
  }
  try {
    load_pianoroll_json(path);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("sequence 0") != std::string::npos);
    CHECK(msg.find("88") != std::string::npos);
  }
}

TEST_CASE("pianoroll: single-step sequence rejected") {
  TempDir dir;
  const std::string path = dir.file("short.json");
  {
    std::ofstream out(path);
    out << "[[[60]]]";
  }
  CHECK_THROWS_AS(load_pianoroll_json(path), DataError);
}

TEST_CASE("mnist idx: write-read round trip and validation") {
  TempDir dir;
  PixelDataset data = make_synthetic_digits(10, 42);
  const std::string ipath = dir.file("imgs.idx");
  const std::string lpath = dir.file("labels.idx");
  write_mnist_idx(ipath, lpath, data.images, data.labels);
  PixelDataset loaded =
      load_mnist_idx(ipath, lpath, MnistVariant::kSequential, 0);
  REQUIRE(loaded.images.size() == 10);
  CHECK(loaded.labels == data.labels);
  for (std::size_t i = 0; i < loaded.images.size(); ++i) {
    CHECK(loaded.images[i] == data.images[i]);
  }
}

TEST_CASE("mnist idx: bad magic reported") {
  TempDir dir;
  const std::string path = dir.file("junk.idx");
  {
    std::ofstream out(path, std::ios::binary);
    out << "nonsense";
  }
  CHECK_THROWS_AS(
      load_mnist_idx(path, path, MnistVariant::kSequential, 0), DataError);
}

TEST_CASE("pMNIST permutation: deterministic per seed, changes order") {
  TempDir dir;
  PixelDataset data = make_synthetic_digits(4, 7);
  const std::string ipath = dir.file("imgs.idx");
  const std::string lpath = dir.file("labels.idx");
  write_mnist_idx(ipath, lpath, data.images, data.labels);
  PixelDataset p1 = load_mnist_idx(ipath, lpath, MnistVariant::kPermuted,
                                   92916);
  PixelDataset p2 = load_mnist_idx(ipath, lpath, MnistVariant::kPermuted,
                                   92916);
  PixelDataset p3 = load_mnist_idx(ipath, lpath, MnistVariant::kPermuted,
                                   777);
  PixelDataset seq = load_mnist_idx(ipath, lpath, MnistVariant::kSequential,
                                    92916);
  CHECK(p1.images == p2.images);
  CHECK(p1.images != p3.images);
  CHECK(p1.images != seq.images);
  CHECK(seq.images == data.images);
  // permutation only reorders
  for (std::size_t i = 0; i < 4; ++i) {
    double sum_seq = 0.0, sum_perm = 0.0;
    for (int p = 0; p < kPixelsPerImage; ++p) {
      sum_seq += seq.images[i][p];
      sum_perm += p1.images[i][p];
    }
    CHECK(sum_seq == doctest::Approx(sum_perm).epsilon(1e-12));
  }
}

TEST_CASE("all-zero image stays a zero sequence") {
  TempDir dir;
  std::vector<std::vector<double>> imgs = {
      std::vector<double>(kPixelsPerImage, 0.0)};
  std::vector<int> labels = {0};
  const std::string ipath = dir.file("z.idx");
  const std::string lpath = dir.file("zl.idx");
  write_mnist_idx(ipath, lpath, imgs, labels);
  PixelDataset loaded =
      load_mnist_idx(ipath, lpath, MnistVariant::kSequential, 0);
  for (double v : loaded.images[0]) CHECK(v == 0.0);
}

TEST_CASE("feature table round trip") {
  TempDir dir;
  FeatureTable table;
  table.dim = 3;
  table.vectors = {{0.25, 0.5, 0.125}, {1.0 / 3.0, 0.1, -2.5}};
  const std::string path = dir.file("feat.txt");
  write_feature_table(path, table);
  FeatureTable loaded = load_feature_table(path);
  CHECK(loaded.dim == 3);
  REQUIRE(loaded.vectors.size() == 2);
  for (int d = 0; d < 3; ++d) {
    CHECK(loaded.vectors[0][d] == table.vectors[0][d]);
    CHECK(loaded.vectors[1][d] == table.vectors[1][d]);
  }
  CHECK_THROWS_AS(load_feature_table(dir.file("none.txt")), DataError);
}

TEST_CASE("shuffled_indices deterministic per seed") {
  auto a = shuffled_indices(100, RngStream(5, 0));
  auto b = shuffled_indices(100, RngStream(5, 0));
  auto c = shuffled_indices(100, RngStream(6, 0));
  CHECK(a == b);
  CHECK(a != c);
  std::sort(a.begin(), a.end());
  for (std::size_t i = 0; i < 100; ++i) CHECK(a[i] == i);
}

TEST_CASE("batch_classification pads and masks") {
  ClassificationData data;
  data.vocab = 10;
  data.classes = 2;
  data.items.push_back({{1, 2, 3}, 0});
  data.items.push_back({{4, 5, 6, 7, 8}, 1});
  TokenBatch batch = batch_classification(data, {0, 1});
  REQUIRE(batch.tokens.size() == 5);  // padded to the longest
  CHECK(batch.lengths == std::vector<int>{3, 5});
  double mask0 = 0.0, mask1 = 0.0;
  for (const auto& m : batch.masks) {
    mask0 += m.data()[0];
    mask1 += m.data()[1];
  }
  CHECK(mask0 == 3.0);
  CHECK(mask1 == 5.0);
  CHECK(batch.tokens[4][0] == 0);  // pad id
  CHECK(batch.tokens[4][1] == 8);

  // batch of one: no padding
  TokenBatch single = batch_classification(data, {0});
  CHECK(single.tokens.size() == 3);
}

TEST_CASE("batch_pianoroll builds next-step targets") {
  std::vector<PianoRoll> rolls;
  rolls.push_back(PianoRoll{{{60}, {60, 64}, {67}}});
  rolls.push_back(PianoRoll{{{50}, {51}}});
  RollBatch batch = batch_pianoroll(rolls, {0, 1});
  REQUIRE(batch.inputs.size() == 2);  // max T - 1
  // inputs are steps 0..T-2, targets steps 1..T-1
  CHECK(batch.inputs[0].at(0, 60) == 1.0);
  CHECK(batch.targets[0].at(0, 64) == 1.0);
  CHECK(batch.targets[0].at(1, 51) == 1.0);
  CHECK(batch.masks[0].data()[0] == 1.0);
  CHECK(batch.masks[0].data()[1] == 1.0);
  // step 1: only sequence 0 still has a target
  CHECK(batch.masks[1].data()[0] == 1.0);
  CHECK(batch.masks[1].data()[1] == 0.0);
}

TEST_CASE("batch_pixels lays out 784 columns") {
  PixelDataset data = make_synthetic_digits(3, 11);
  PixelBatch batch = batch_pixels(data, {2, 0});
  REQUIRE(batch.inputs.size() == kPixelsPerImage);
  CHECK(batch.inputs[0].shape() == Shape{2, 1});
  CHECK(batch.inputs[100].at(0, 0) == data.images[2][100]);
  CHECK(batch.inputs[100].at(1, 0) == data.images[0][100]);
  CHECK(batch.labels == std::vector<int>{data.labels[2], data.labels[0]});
}

TEST_CASE("two-regime dataset: labels follow the overwrite rule") {
  ClassificationData data = make_two_regime_dataset(50, 12, 4, 99);
  CHECK(data.vocab == 8);
  CHECK(data.classes == 4);
  for (const auto& item : data.items) {
    int remembered = -1;
    for (int tok : item.tokens) {
      const bool overwrite = tok >= 4;
      const int value = tok % 4;
      if (overwrite) remembered = value;
    }
    CHECK(item.label == remembered);
  }
  // determinism
  ClassificationData again = make_two_regime_dataset(50, 12, 4, 99);
  CHECK(again.items.size() == data.items.size());
  for (std::size_t i = 0; i < data.items.size(); ++i) {
    CHECK(again.items[i].tokens == data.items[i].tokens);
  }
}

TEST_CASE("synthetic pianoroll: valid rolls with structure") {
  auto rolls = make_synthetic_pianoroll(20, 8, 16, 5);
  CHECK(rolls.size() == 20);
  for (const auto& roll : rolls) {
    CHECK(roll.steps.size() >= 8);
    CHECK(roll.steps.size() <= 16);
    for (const auto& step : roll.steps) {
      CHECK(!step.empty());
      for (int n : step) {
        CHECK(n >= 0);
        CHECK(n < kNumNotes);
      }
    }
  }
}

TEST_CASE("synthetic digits: both classes present and separable-ish") {
  PixelDataset data = make_synthetic_digits(100, 3);
  int ones = 0;
  for (int label : data.labels) ones += label;
  CHECK(ones > 20);
  CHECK(ones < 80);
  for (const auto& img : data.images) {
    CHECK(img.size() == kPixelsPerImage);
    for (double v : img) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
}
