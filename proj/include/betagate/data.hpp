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

#ifndef BETAGATE_DATA_HPP_
#define BETAGATE_DATA_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "betagate/rng.hpp"
#include "betagate/tensor.hpp"

namespace betagate {

inline constexpr int kNumNotes = 88;
inline constexpr int kPixelsPerImage = 784;

// ---- classification (JSONL) -------------------------------------------------

struct LabeledSequence {
  std::vector<int> tokens;
  int label = 0;
};

struct ClassificationData {
  std::vector<LabeledSequence> items;
  int vocab = 0;
  int classes = 0;
  int rejected = 0;  // records dropped for empty token lists
};

// One JSON object per line with fields "tokens" and "label"; an optional
// first-line header {"vocab": V, "classes": C}. Without a header the vocab
// is max id + 1 and the class count max label + 1. Empty-token records are
// rejected and counted; any other malformed line is an error naming the
// line number.
ClassificationData load_jsonl_classification(const std::string& path);
void write_jsonl_classification(const std::string& path,
                                const ClassificationData& data,
                                bool with_header = true);

// ---- piano rolls (JSON) -----------------------------------------------------

// steps[t] = active note indices in [0, 88); T >= 2 so next-step prediction
// has at least one target.
struct PianoRoll {
  std::vector<std::vector<int>> steps;
};

std::vector<PianoRoll> load_pianoroll_json(const std::string& path);
void write_pianoroll_json(const std::string& path,
                          const std::vector<PianoRoll>& rolls);

// ---- MNIST (IDX) ------------------------------------------------------------

enum class MnistVariant { kSequential, kPermuted };

struct PixelDataset {
  // Row-major flattened pixels scaled to [0,1]; length 784 each.
  std::vector<std::vector<double>> images;
  std::vector<int> labels;
  std::uint64_t permutation_seed = 0;  // recorded for pMNIST runs
};

// Standard IDX pair (0x803 images / 0x801 labels, big-endian dims). The
// permuted variant applies one Fisher-Yates permutation, drawn from the
// seeded stream, to every image.
PixelDataset load_mnist_idx(const std::string& images_path,
                            const std::string& labels_path,
                            MnistVariant variant,
                            std::uint64_t permutation_seed);
void write_mnist_idx(const std::string& images_path,
                     const std::string& labels_path,
                     const std::vector<std::vector<double>>& images,
                     const std::vector<int>& labels);

// ---- feature vectors for the kernel prior ----------------------------------

struct FeatureTable {
  int dim = 0;
  std::vector<std::vector<double>> vectors;  // one per token id
};

// Text format: header "featvec <vocab> <dim>", then one line of <dim>
// numbers per token id.
FeatureTable load_feature_table(const std::string& path);
void write_feature_table(const std::string& path, const FeatureTable& table);

// ---- batching ---------------------------------------------------------------

// Deterministic shuffled index order for one epoch.
std::vector<std::size_t> shuffled_indices(std::size_t n, RngStream rng);

// Padded token batch: tokens[t][b] (pad id 0 past each sequence's end),
// masks[t] the [B] validity column for step t.
struct TokenBatch {
  std::vector<std::vector<int>> tokens;
  std::vector<Tensor> masks;
  std::vector<int> labels;
  std::vector<int> lengths;
};

TokenBatch batch_classification(const ClassificationData& data,
                                const std::vector<std::size_t>& indices);

// Piano-roll batch for next-step prediction: inputs[t] are the binary
// frames at step t, targets[t] the frames at t+1, masks[t] marks rows whose
// target step exists.
struct RollBatch {
  std::vector<Tensor> inputs;   // [T-1] of [B x 88]
  std::vector<Tensor> targets;  // [T-1] of [B x 88]
  std::vector<Tensor> masks;    // [T-1] of [B]
  std::vector<int> lengths;     // original sequence lengths
};

RollBatch batch_pianoroll(const std::vector<PianoRoll>& rolls,
                          const std::vector<std::size_t>& indices);

// Pixel batch: inputs[t] is the [B x 1] column of pixel t.
struct PixelBatch {
  std::vector<Tensor> inputs;  // [784] of [B x 1]
  std::vector<int> labels;
};

PixelBatch batch_pixels(const PixelDataset& data,
                        const std::vector<std::size_t>& indices);

// ---- synthetic desk-scale datasets -----------------------------------------

// Two-regime memory task. Each step carries a value in [0, values) and a
// regime bit: "overwrite" steps replace the remembered value, "copy" steps
// keep it. The label is the remembered value at the end. Token encoding:
// value + values * regime_bit.
ClassificationData make_two_regime_dataset(std::size_t n, int seq_len,
                                           int values, std::uint64_t seed);

// Markov chord progressions over a small chord alphabet, rendered as
// piano-roll triads with occasional passing tones.
std::vector<PianoRoll> make_synthetic_pianoroll(std::size_t n, int min_len,
                                                int max_len,
                                                std::uint64_t seed);

// Procedural 28x28 images of the digits 0 (ellipse ring) and 1 (vertical
// stroke) with pose and intensity noise.
PixelDataset make_synthetic_digits(std::size_t n, std::uint64_t seed);

}  // namespace betagate

#endif  // BETAGATE_DATA_HPP_
