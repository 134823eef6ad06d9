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

#ifndef BETAGATE_TAPE_HPP_
#define BETAGATE_TAPE_HPP_

#include <functional>
#include <vector>

#include "betagate/rng.hpp"
#include "betagate/tensor.hpp"

namespace betagate {

// Reverse-mode tape over dense tensors. One tape per training step:
// construction and backward are single-threaded, nodes are visited in exact
// reverse recording order. Every forward op checks its output for NaN/Inf
// and throws NumericError on the spot, naming the op.
//
// Off-tape tensors (node == -1) act as constants: they participate in the
// forward computation but receive no gradient.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Registers a tensor as a differentiable leaf. The returned tensor shares
  // the input's buffer; the input itself is left off-tape.
  Tensor leaf(const Tensor& t);

  // ---- deterministic primitives -----------------------------------------

  // [m x k] * [k x n] -> [m x n]
  Tensor matmul(const Tensor& a, const Tensor& b);
  // Same shape, or bias broadcast [B x H] + [H] (or [1 x H]).
  Tensor add(const Tensor& a, const Tensor& b);
  Tensor sub(const Tensor& a, const Tensor& b);
  Tensor mul(const Tensor& a, const Tensor& b);  // elementwise, same shape
  Tensor div(const Tensor& a, const Tensor& b);  // elementwise, same shape
  Tensor scale(const Tensor& a, double c);
  Tensor add_scalar(const Tensor& a, double c);
  Tensor neg(const Tensor& a) { return scale(a, -1.0); }

  Tensor sigmoid(const Tensor& a);
  Tensor tanh(const Tensor& a);
  Tensor softplus(const Tensor& a);
  Tensor relu(const Tensor& a);
  Tensor exp(const Tensor& a);
  Tensor log(const Tensor& a);

  // Concatenate along the last axis: [B x M] ++ [B x N] -> [B x (M+N)].
  Tensor concat(const Tensor& a, const Tensor& b);
  // Columns [from, to) of the last axis.
  Tensor slice(const Tensor& a, std::int64_t from, std::int64_t to);

  Tensor sum(const Tensor& a);   // -> scalar [1]
  Tensor mean(const Tensor& a);  // -> scalar [1]
  // Row sums: [B x H] -> [B].
  Tensor row_sum(const Tensor& a);
  // Scales row b of x by m[b]: [B x H] * [B] -> [B x H].
  Tensor row_mul(const Tensor& x, const Tensor& m);
  // [1] -> [n] (repeat a scalar), [B] -> [B x h] (repeat each entry along a
  // new last axis).
  Tensor broadcast_scalar(const Tensor& s, std::int64_t n);
  Tensor broadcast_col(const Tensor& v, std::int64_t h);

  // Embedding lookup: table [V x E], ids in [0, V) -> [B x E].
  Tensor embedding(const Tensor& table, const std::vector<int>& ids);

  // Mean over the batch of softmax cross-entropy rows; labels in [0, C).
  Tensor softmax_cross_entropy(const Tensor& logits,
                               const std::vector<int>& labels);

  // ---- stochastic nodes ---------------------------------------------------

  // Elementwise independent Gamma(shape, 1) draws. Each element k draws from
  // rng.split(k), so the draw at a site depends only on that site's stream.
  // Backward multiplies the upstream gradient by the stored elementwise
  // pathwise derivative.
  Tensor gamma_node(const Tensor& shapes, const RngStream& rng);

  // Elementwise binary concrete relaxation at the given temperature.
  Tensor binary_concrete(const Tensor& logits, double temperature,
                         const RngStream& rng);

  // ---- analytic KL node ---------------------------------------------------

  // Elementwise KL( Gamma(q_shape, 1) || Gamma(p_shape, p_rate) ).
  // Differentiable in both shape tensors.
  Tensor kl_gamma_node(const Tensor& q_shapes, const Tensor& p_shapes,
                       double p_rate);

  // ---- reverse pass ---------------------------------------------------------

  // Populates gradients for every recorded node. `loss` must be a scalar
  // living on this tape.
  void backward(const Tensor& loss);

  // Keep intermediate gradient buffers after their node has propagated.
  // Off by default: only leaf gradients survive backward, which halves the
  // peak memory of long unrolls. Diagnostics that read d loss / d c_t turn
  // this on.
  void set_retain_grads(bool retain) { retain_grads_ = retain; }

  // Gradient buffer of a recorded tensor (valid after backward(); zeros for
  // nodes the loss never touched).
  const std::vector<double>& grad(const Tensor& t);

  std::size_t num_nodes() const { return nodes_.size(); }

 private:
  // Called with this node's accumulated upstream gradient.
  using UpstreamFn = std::function<void(Tape&, const std::vector<double>&)>;

  struct Node {
    std::int64_t size = 0;
    UpstreamFn backprop;  // empty for leaves
  };

  int record(std::int64_t size, UpstreamFn backprop);
  Tensor make_result(const char* op, Shape shape, std::vector<double> values,
                     UpstreamFn backprop);
  std::vector<double>& grad_buffer(int node);

  std::vector<Node> nodes_;
  std::vector<std::vector<double>> grads_;
  bool retain_grads_ = false;
};

}  // namespace betagate

#endif  // BETAGATE_TAPE_HPP_
