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

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "betagate/error.hpp"

namespace betagate {

namespace {

std::uint32_t read_be32(std::istream& in, const std::string& path) {
  unsigned char buf[4];
  in.read(reinterpret_cast<char*>(buf), 4);
  if (!in) throw DataError("unexpected end of file in " + path);
  return (std::uint32_t(buf[0]) << 24) | (std::uint32_t(buf[1]) << 16) |
         (std::uint32_t(buf[2]) << 8) | std::uint32_t(buf[3]);
}

void write_be32(std::ostream& out, std::uint32_t v) {
  unsigned char buf[4] = {static_cast<unsigned char>(v >> 24),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v)};
  out.write(reinterpret_cast<char*>(buf), 4);
}

}  // namespace

ClassificationData load_jsonl_classification(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  ClassificationData data;
  int max_token = -1, max_label = -1;
  bool header_vocab = false, header_classes = false;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path + ":" + std::to_string(line_no) +
                      ": malformed JSON: " + e.what());
    }
    if (line_no == 1 && !rec.contains("tokens")) {
      // optional header record
      if (rec.contains("vocab")) {
        data.vocab = rec["vocab"].get<int>();
        header_vocab = true;
      }
      if (rec.contains("classes")) {
        data.classes = rec["classes"].get<int>();
        header_classes = true;
      }
      continue;
    }
    if (!rec.contains("tokens") || !rec.contains("label")) {
      throw DataError(path + ":" + std::to_string(line_no) +
                      ": record needs \"tokens\" and \"label\"");
    }
    LabeledSequence item;
    try {
      item.tokens = rec["tokens"].get<std::vector<int>>();
      item.label = rec["label"].get<int>();
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path + ":" + std::to_string(line_no) +
                      ": bad field type: " + e.what());
    }
    if (item.tokens.empty()) {
      ++data.rejected;
      continue;
    }
    for (int t : item.tokens) {
      if (t < 0) {
        throw DataError(path + ":" + std::to_string(line_no) +
                        ": negative token id");
      }
      max_token = std::max(max_token, t);
    }
    if (item.label < 0) {
      throw DataError(path + ":" + std::to_string(line_no) +
                      ": negative label");
    }
    max_label = std::max(max_label, item.label);
    data.items.push_back(std::move(item));
  }
  if (!header_vocab) data.vocab = max_token + 1;
  if (!header_classes) data.classes = max_label + 1;
  return data;
}

void write_jsonl_classification(const std::string& path,
                                const ClassificationData& data,
                                bool with_header) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open " + path + " for writing");
  if (with_header) {
    nlohmann::json header;
    header["vocab"] = data.vocab;
    header["classes"] = data.classes;
    out << header.dump() << "\n";
  }
  for (const auto& item : data.items) {
    nlohmann::json rec;
    rec["tokens"] = item.tokens;
    rec["label"] = item.label;
    out << rec.dump() << "\n";
  }
}

std::vector<PianoRoll> load_pianoroll_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path + ": malformed JSON: " + e.what());
  }
  if (!doc.is_array()) throw DataError(path + ": expected a top-level list");
  std::vector<PianoRoll> rolls;
  for (std::size_t s = 0; s < doc.size(); ++s) {
    const auto& seq = doc[s];
    if (!seq.is_array() || seq.size() < 2) {
      throw DataError(path + ": sequence " + std::to_string(s) +
                      " needs at least 2 timesteps");
    }
    PianoRoll roll;
    for (std::size_t t = 0; t < seq.size(); ++t) {
      if (!seq[t].is_array()) {
        throw DataError(path + ": sequence " + std::to_string(s) + " step " +
                        std::to_string(t) + " is not a list");
      }
      std::vector<int> notes;
      for (const auto& n : seq[t]) {
        const int note = n.get<int>();
        if (note < 0 || note >= kNumNotes) {
          throw DataError(path + ": sequence " + std::to_string(s) +
                          " step " + std::to_string(t) + ": note " +
                          std::to_string(note) + " outside [0, 88)");
        }
        notes.push_back(note);
      }
      std::sort(notes.begin(), notes.end());
      notes.erase(std::unique(notes.begin(), notes.end()), notes.end());
      roll.steps.push_back(std::move(notes));
    }
    rolls.push_back(std::move(roll));
  }
  return rolls;
}

void write_pianoroll_json(const std::string& path,
                          const std::vector<PianoRoll>& rolls) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open " + path + " for writing");
  nlohmann::json doc = nlohmann::json::array();
  for (const auto& roll : rolls) {
    nlohmann::json seq = nlohmann::json::array();
    for (const auto& step : roll.steps) seq.push_back(step);
    doc.push_back(std::move(seq));
  }
  out << doc.dump() << "\n";
}

PixelDataset load_mnist_idx(const std::string& images_path,
                            const std::string& labels_path,
                            MnistVariant variant,
                            std::uint64_t permutation_seed) {
  std::ifstream imgs(images_path, std::ios::binary);
  if (!imgs) throw DataError("cannot open " + images_path);
  std::ifstream labs(labels_path, std::ios::binary);
  if (!labs) throw DataError("cannot open " + labels_path);

  if (read_be32(imgs, images_path) != 0x00000803u) {
    throw DataError(images_path + ": bad magic, expected 0x00000803");
  }
  const std::uint32_t count = read_be32(imgs, images_path);
  const std::uint32_t rows = read_be32(imgs, images_path);
  const std::uint32_t cols = read_be32(imgs, images_path);
  if (rows * cols != kPixelsPerImage) {
    throw DataError(images_path + ": expected 28x28 images");
  }
  if (read_be32(labs, labels_path) != 0x00000801u) {
    throw DataError(labels_path + ": bad magic, expected 0x00000801");
  }
  if (read_be32(labs, labels_path) != count) {
    throw DataError(labels_path + ": label count differs from image count");
  }

  // pMNIST: one fixed Fisher-Yates permutation applied to every image.
  std::vector<int> perm(kPixelsPerImage);
  std::iota(perm.begin(), perm.end(), 0);
  if (variant == MnistVariant::kPermuted) {
    RngStream rng(permutation_seed, 0);
    for (int i = kPixelsPerImage - 1; i > 0; --i) {
      const int j = static_cast<int>(rng.next_u64() % (i + 1));
      std::swap(perm[i], perm[j]);
    }
  }

  PixelDataset data;
  data.permutation_seed =
      variant == MnistVariant::kPermuted ? permutation_seed : 0;
  data.images.reserve(count);
  data.labels.reserve(count);
  std::vector<unsigned char> buf(kPixelsPerImage);
  for (std::uint32_t i = 0; i < count; ++i) {
    imgs.read(reinterpret_cast<char*>(buf.data()), kPixelsPerImage);
    if (!imgs) throw DataError(images_path + ": truncated image data");
    std::vector<double> px(kPixelsPerImage);
    for (int p = 0; p < kPixelsPerImage; ++p) {
      px[p] = static_cast<double>(buf[perm[p]]) / 255.0;
    }
    data.images.push_back(std::move(px));
    const int label = labs.get();
    if (label == EOF) throw DataError(labels_path + ": truncated labels");
    data.labels.push_back(label);
  }
  return data;
}

void write_mnist_idx(const std::string& images_path,
                     const std::string& labels_path,
                     const std::vector<std::vector<double>>& images,
                     const std::vector<int>& labels) {
  if (images.size() != labels.size()) {
    throw UsageError("write_mnist_idx: image/label count mismatch");
  }
  std::ofstream imgs(images_path, std::ios::binary);
  if (!imgs) throw DataError("cannot open " + images_path + " for writing");
  std::ofstream labs(labels_path, std::ios::binary);
  if (!labs) throw DataError("cannot open " + labels_path + " for writing");
  write_be32(imgs, 0x00000803u);
  write_be32(imgs, static_cast<std::uint32_t>(images.size()));
  write_be32(imgs, 28);
  write_be32(imgs, 28);
  write_be32(labs, 0x00000801u);
  write_be32(labs, static_cast<std::uint32_t>(labels.size()));
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (images[i].size() != kPixelsPerImage) {
      throw UsageError("write_mnist_idx: image " + std::to_string(i) +
                       " is not 784 pixels");
    }
    for (double v : images[i]) {
      const int byte = static_cast<int>(std::lround(v * 255.0));
      imgs.put(static_cast<char>(std::clamp(byte, 0, 255)));
    }
    labs.put(static_cast<char>(labels[i]));
  }
}

FeatureTable load_feature_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  std::string tag;
  int vocab = 0, dim = 0;
  in >> tag >> vocab >> dim;
  if (!in || tag != "featvec" || vocab <= 0 || dim <= 0) {
    throw DataError(path + ": expected header \"featvec <vocab> <dim>\"");
  }
  FeatureTable table;
  table.dim = dim;
  table.vectors.assign(vocab, std::vector<double>(dim));
  for (int v = 0; v < vocab; ++v) {
    for (int d = 0; d < dim; ++d) {
      in >> table.vectors[v][d];
      if (!in) {
        throw DataError(path + ": truncated at token " + std::to_string(v));
      }
    }
  }
  return table;
}

void write_feature_table(const std::string& path, const FeatureTable& table) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open " + path + " for writing");
  out << "featvec " << table.vectors.size() << " " << table.dim << "\n";
  out.precision(17);
  for (const auto& vec : table.vectors) {
    for (std::size_t d = 0; d < vec.size(); ++d) {
      if (d) out << " ";
      out << vec[d];
    }
    out << "\n";
  }
}

std::vector<std::size_t> shuffled_indices(std::size_t n, RngStream rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = rng.next_u64() % i;
    std::swap(idx[i - 1], idx[j]);
  }
  return idx;
}

TokenBatch batch_classification(const ClassificationData& data,
                                const std::vector<std::size_t>& indices) {
  if (indices.empty()) throw UsageError("batch_classification: empty batch");
  const std::int64_t batch = static_cast<std::int64_t>(indices.size());
  int max_len = 0;
  TokenBatch out;
  for (std::size_t idx : indices) {
    const auto& item = data.items.at(idx);
    max_len = std::max(max_len, static_cast<int>(item.tokens.size()));
    out.labels.push_back(item.label);
    out.lengths.push_back(static_cast<int>(item.tokens.size()));
  }
  out.tokens.assign(max_len, std::vector<int>(batch, 0));
  for (int t = 0; t < max_len; ++t) {
    std::vector<double> mask(batch, 0.0);
    for (std::int64_t b = 0; b < batch; ++b) {
      const auto& tokens = data.items.at(indices[b]).tokens;
      if (t < static_cast<int>(tokens.size())) {
        out.tokens[t][b] = tokens[t];
        mask[b] = 1.0;
      }
    }
    out.masks.push_back(Tensor({batch}, std::move(mask)));
  }
  return out;
}

RollBatch batch_pianoroll(const std::vector<PianoRoll>& rolls,
                          const std::vector<std::size_t>& indices) {
  if (indices.empty()) throw UsageError("batch_pianoroll: empty batch");
  const std::int64_t batch = static_cast<std::int64_t>(indices.size());
  int max_len = 0;
  RollBatch out;
  for (std::size_t idx : indices) {
    const int len = static_cast<int>(rolls.at(idx).steps.size());
    max_len = std::max(max_len, len);
    out.lengths.push_back(len);
  }
  for (int t = 0; t + 1 < max_len; ++t) {
    std::vector<double> input(batch * kNumNotes, 0.0);
    std::vector<double> target(batch * kNumNotes, 0.0);
    std::vector<double> mask(batch, 0.0);
    for (std::int64_t b = 0; b < batch; ++b) {
      const auto& steps = rolls.at(indices[b]).steps;
      if (t < static_cast<int>(steps.size())) {
        for (int note : steps[t]) input[b * kNumNotes + note] = 1.0;
      }
      if (t + 1 < static_cast<int>(steps.size())) {
        for (int note : steps[t + 1]) target[b * kNumNotes + note] = 1.0;
        mask[b] = 1.0;
      }
    }
    out.inputs.push_back(Tensor({batch, kNumNotes}, std::move(input)));
    out.targets.push_back(Tensor({batch, kNumNotes}, std::move(target)));
    out.masks.push_back(Tensor({batch}, std::move(mask)));
  }
  return out;
}

PixelBatch batch_pixels(const PixelDataset& data,
                        const std::vector<std::size_t>& indices) {
  if (indices.empty()) throw UsageError("batch_pixels: empty batch");
  const std::int64_t batch = static_cast<std::int64_t>(indices.size());
  PixelBatch out;
  out.inputs.reserve(kPixelsPerImage);
  for (int t = 0; t < kPixelsPerImage; ++t) {
    std::vector<double> col(batch);
    for (std::int64_t b = 0; b < batch; ++b) {
      col[b] = data.images.at(indices[b]).at(t);
    }
    out.inputs.push_back(Tensor({batch, 1}, std::move(col)));
  }
  for (std::size_t idx : indices) out.labels.push_back(data.labels.at(idx));
  return out;
}

ClassificationData make_two_regime_dataset(std::size_t n, int seq_len,
                                           int values, std::uint64_t seed) {
  if (seq_len < 2 || values < 2) {
    throw UsageError("make_two_regime_dataset: need seq_len >= 2, values >= 2");
  }
  RngStream rng(seed, 0);
  ClassificationData data;
  data.vocab = 2 * values;
  data.classes = values;
  for (std::size_t i = 0; i < n; ++i) {
    LabeledSequence item;
    int remembered = 0;
    for (int t = 0; t < seq_len; ++t) {
      const int value = static_cast<int>(rng.next_u64() % values);
      // First step always overwrites so the remembered value is defined.
      const bool overwrite = (t == 0) || (rng.next_uniform() < 0.25);
      if (overwrite) remembered = value;
      item.tokens.push_back(value + (overwrite ? values : 0));
    }
    item.label = remembered;
    data.items.push_back(std::move(item));
  }
  return data;
}

std::vector<PianoRoll> make_synthetic_pianoroll(std::size_t n, int min_len,
                                                int max_len,
                                                std::uint64_t seed) {
  if (min_len < 2 || max_len < min_len) {
    throw UsageError("make_synthetic_pianoroll: bad length range");
  }
  RngStream rng(seed, 0);
  // Chord alphabet: root positions across the keyboard, rendered as triads.
  const int roots[8] = {39, 42, 44, 46, 47, 49, 51, 54};
  std::vector<PianoRoll> rolls;
  for (std::size_t i = 0; i < n; ++i) {
    const int len =
        min_len + static_cast<int>(rng.next_u64() %
                                   static_cast<std::uint64_t>(
                                       max_len - min_len + 1));
    PianoRoll roll;
    int chord = static_cast<int>(rng.next_u64() % 8);
    for (int t = 0; t < len; ++t) {
      // Sticky Markov chain: mostly hold, otherwise a neighbour move.
      const double r = rng.next_uniform();
      if (r > 0.7) {
        const int delta = (rng.next_uniform() < 0.5) ? 1 : 7;
        chord = (chord + delta) % 8;
      }
      std::vector<int> notes = {roots[chord], roots[chord] + 4,
                                roots[chord] + 7};
      if (rng.next_uniform() < 0.15) notes.push_back(roots[chord] + 12);
      roll.steps.push_back(std::move(notes));
    }
    rolls.push_back(std::move(roll));
  }
  return rolls;
}

PixelDataset make_synthetic_digits(std::size_t n, std::uint64_t seed) {
  RngStream rng(seed, 0);
  PixelDataset data;
  for (std::size_t i = 0; i < n; ++i) {
    const int label = static_cast<int>(rng.next_u64() % 2);
    std::vector<double> img(kPixelsPerImage, 0.0);
    const double cx = 13.5 + 3.0 * (rng.next_uniform() - 0.5);
    const double cy = 13.5 + 3.0 * (rng.next_uniform() - 0.5);
    if (label == 0) {
      // Ellipse ring.
      const double rx = 6.0 + 2.0 * rng.next_uniform();
      const double ry = 8.0 + 2.0 * rng.next_uniform();
      for (int y = 0; y < 28; ++y) {
        for (int x = 0; x < 28; ++x) {
          const double dx = (x - cx) / rx, dy = (y - cy) / ry;
          const double r = std::sqrt(dx * dx + dy * dy);
          const double band = std::exp(-std::pow((r - 1.0) / 0.18, 2.0));
          img[y * 28 + x] = band;
        }
      }
    } else {
      // Vertical stroke with slight slant.
      const double slant = 0.25 * (rng.next_uniform() - 0.5);
      const double half = 8.0 + 2.0 * rng.next_uniform();
      for (int y = 0; y < 28; ++y) {
        if (std::fabs(y - cy) > half) continue;
        const double center = cx + slant * (y - cy);
        for (int x = 0; x < 28; ++x) {
          const double d = std::fabs(x - center);
          img[y * 28 + x] = std::exp(-std::pow(d / 1.3, 2.0));
        }
      }
    }
    // Pixel noise, then clamp to [0,1] at byte resolution.
    for (double& v : img) {
      v += 0.08 * (rng.next_uniform() - 0.5);
      v = std::clamp(v, 0.0, 1.0);
      v = std::lround(v * 255.0) / 255.0;
    }
    data.images.push_back(std::move(img));
    data.labels.push_back(label);
  }
  return data;
}

}  // namespace betagate
