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

#ifndef BETAGATE_RNG_HPP_
#define BETAGATE_RNG_HPP_

#include <cstdint>

namespace betagate {

// Counter-based splittable generator. The output at draw index n is a pure
// function of (seed, stream id, n), so per-timestep and per-unit draws are
// reproducible regardless of evaluation order once each site owns its own
// split stream. The mixer is SplitMix64.
//
// A stream is single-owner; split() children are statistically independent
// of the parent and of each other and can be handed to other workers.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed, std::uint64_t stream_id = 0);

  std::uint64_t next_u64();

  // Uniform on the open interval (0, 1).
  double next_uniform();

  // Standard normal via Box-Muller (one variate per two uniforms).
  double next_normal();

  // Standard Gumbel: -ln(-ln(U)) with U clamped to [1e-12, 1 - 1e-12].
  double next_gumbel();

  // Derive an independent child stream. Children with distinct ids never
  // collide with each other or with the parent's own draw sequence.
  RngStream split(std::uint64_t child_id) const;

  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }

 private:
  RngStream() = default;

  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

}  // namespace betagate

#endif  // BETAGATE_RNG_HPP_
