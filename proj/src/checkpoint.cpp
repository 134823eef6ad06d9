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

#include "betagate/checkpoint.hpp"

#include <fstream>

#include <json.hpp>

#include "betagate/error.hpp"

namespace betagate {

namespace {
constexpr int kFormatVersion = 1;
constexpr const char* kFormatName = "betagate-checkpoint";
}  // namespace

void save_checkpoint(const std::string& path, const ParamMap& params,
                     const std::string& meta_json) {
  nlohmann::json doc;
  doc["format"] = kFormatName;
  doc["version"] = kFormatVersion;
  doc["meta"] = nlohmann::json::parse(meta_json);
  nlohmann::json jp = nlohmann::json::object();
  for (const auto& [name, tensor] : params) {
    nlohmann::json entry;
    entry["shape"] = tensor.shape();
    entry["data"] = tensor.data();
    jp[name] = std::move(entry);
  }
  doc["params"] = std::move(jp);

  std::ofstream out(path);
  if (!out) throw DataError("save_checkpoint: cannot open " + path);
  out << doc.dump();
  out << "\n";
  if (!out) throw DataError("save_checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("load_checkpoint: cannot open " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("load_checkpoint: malformed JSON in " + path + ": " +
                    e.what());
  }
  if (doc.value("format", "") != kFormatName) {
    throw DataError("load_checkpoint: " + path + " is not a " + kFormatName);
  }
  if (doc.value("version", -1) != kFormatVersion) {
    throw DataError("load_checkpoint: unsupported version in " + path);
  }
  Checkpoint ckpt;
  ckpt.meta_json = doc.value("meta", nlohmann::json::object()).dump();
  for (const auto& [name, entry] : doc.at("params").items()) {
    Shape shape = entry.at("shape").get<Shape>();
    std::vector<double> data = entry.at("data").get<std::vector<double>>();
    ckpt.params.emplace(name, Tensor(std::move(shape), std::move(data)));
  }
  return ckpt;
}

}  // namespace betagate
