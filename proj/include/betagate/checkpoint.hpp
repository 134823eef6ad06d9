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

#ifndef BETAGATE_CHECKPOINT_HPP_
#define BETAGATE_CHECKPOINT_HPP_

#include <map>
#include <string>

#include "betagate/tensor.hpp"

namespace betagate {

// Named parameter collection. Iteration order (lexicographic by name) is the
// canonical order for gradient clipping and optimizer updates.
using ParamMap = std::map<std::string, Tensor>;

// Versioned JSON checkpoint: parameter name -> shape + row-major values,
// plus a free-form metadata object. Doubles are serialized with
// shortest-round-trip formatting, so save/load is exact in double precision.
void save_checkpoint(const std::string& path, const ParamMap& params,
                     const std::string& meta_json = "{}");

struct Checkpoint {
  ParamMap params;
  std::string meta_json;
};

Checkpoint load_checkpoint(const std::string& path);

}  // namespace betagate

#endif  // BETAGATE_CHECKPOINT_HPP_
