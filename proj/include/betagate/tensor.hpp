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

#ifndef BETAGATE_TENSOR_HPP_
#define BETAGATE_TENSOR_HPP_

#include <cstdint>
#include <initializer_list>
#include <memory>
#include <string>
#include <vector>

namespace betagate {

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Dense double tensor with value semantics. Copies share the underlying
// buffer; tensors are treated as immutable once they have been recorded on
// a tape. `node` is the handle into the recording tape (-1 = off-tape
// constant).
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, double fill);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0); }
  static Tensor full(Shape shape, double v) {
    return Tensor(std::move(shape), v);
  }
  static Tensor scalar(double v) { return Tensor({1}, std::vector<double>{v}); }
  static Tensor row(std::initializer_list<double> values);

  const Shape& shape() const { return shape_; }
  std::int64_t size() const { return shape_numel(shape_); }
  std::int64_t rows() const { return shape_.empty() ? 0 : shape_[0]; }
  std::int64_t cols() const { return shape_.size() < 2 ? 1 : shape_[1]; }
  bool defined() const { return static_cast<bool>(data_); }

  const std::vector<double>& data() const { return *data_; }
  std::vector<double>& mutable_data() { return *data_; }
  double operator[](std::int64_t i) const { return (*data_)[i]; }
  double at(std::int64_t r, std::int64_t c) const {
    return (*data_)[r * cols() + c];
  }

  bool all_finite() const;

  int node = -1;

 private:
  Shape shape_;
  std::shared_ptr<std::vector<double>> data_;
};

}  // namespace betagate

#endif  // BETAGATE_TENSOR_HPP_
