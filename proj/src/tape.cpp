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

#include "betagate/tape.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <sstream>
#include <utility>

#include "betagate/error.hpp"
#include "betagate/sampling.hpp"
#include "betagate/special_math.hpp"

namespace betagate {

namespace {

using RowMajorMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMajorMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMajorMatrix>;

[[noreturn]] void shape_fail(const char* op, const Shape& a, const Shape& b) {
  std::ostringstream os;
  os << op << ": incompatible shapes " << shape_str(a) << " and "
     << shape_str(b);
  throw UsageError(os.str());
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_fail(op, a.shape(), b.shape());
}

double stable_sigmoid(double x) {
  if (x >= 0.0) {
    const double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double stable_softplus(double x) {
  if (x > 30.0) return x;
  if (x < -30.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

}  // namespace

int Tape::record(std::int64_t size, UpstreamFn backprop) {
  nodes_.push_back(Node{size, std::move(backprop)});
  grads_.emplace_back();
  return static_cast<int>(nodes_.size()) - 1;
}

std::vector<double>& Tape::grad_buffer(int node) {
  auto& g = grads_[node];
  if (g.empty()) g.assign(nodes_[node].size, 0.0);
  return g;
}

Tensor Tape::make_result(const char* op, Shape shape,
                         std::vector<double> values, UpstreamFn backprop) {
  Tensor out(std::move(shape), std::move(values));
  if (!out.all_finite()) {
    std::ostringstream os;
    os << op << ": non-finite value in output of shape "
       << shape_str(out.shape());
    throw NumericError(os.str());
  }
  out.node = record(out.size(), std::move(backprop));
  return out;
}

Tensor Tape::leaf(const Tensor& t) {
  Tensor out = t;
  out.node = record(t.size(), nullptr);
  return out;
}

Tensor Tape::matmul(const Tensor& a, const Tensor& b) {
  if (a.shape().size() != 2 || b.shape().size() != 2 ||
      a.shape()[1] != b.shape()[0]) {
    shape_fail("matmul", a.shape(), b.shape());
  }
  const std::int64_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  std::vector<double> out(static_cast<std::size_t>(m * n));
  {
    ConstMatrixMap ma(a.data().data(), m, k);
    ConstMatrixMap mb(b.data().data(), k, n);
    MatrixMap mo(out.data(), m, n);
    mo.noalias() = ma * mb;
  }
  const int na = a.node, nb = b.node;
  return make_result(
      "matmul", {m, n}, std::move(out),
      [a, b, m, k, n, na, nb](Tape& tape, const std::vector<double>& up) {
        ConstMatrixMap g(up.data(), m, n);
        if (na >= 0) {
          MatrixMap ga(tape.grad_buffer(na).data(), m, k);
          ConstMatrixMap mb(b.data().data(), k, n);
          ga.noalias() += g * mb.transpose();
        }
        if (nb >= 0) {
          MatrixMap gb(tape.grad_buffer(nb).data(), k, n);
          ConstMatrixMap ma(a.data().data(), m, k);
          gb.noalias() += ma.transpose() * g;
        }
      });
}

Tensor Tape::add(const Tensor& a, const Tensor& b) {
  const std::int64_t n = a.size();
  const bool bias_broadcast =
      a.shape().size() == 2 && b.size() == a.shape()[1] &&
      (b.shape().size() == 1 ||
       (b.shape().size() == 2 && b.shape()[0] == 1));
  if (!bias_broadcast) require_same_shape("add", a, b);

  std::vector<double> out(static_cast<std::size_t>(n));
  const auto& da = a.data();
  const auto& db = b.data();
  if (bias_broadcast) {
    const std::int64_t h = a.shape()[1];
    for (std::int64_t i = 0; i < n; ++i) out[i] = da[i] + db[i % h];
  } else {
    for (std::int64_t i = 0; i < n; ++i) out[i] = da[i] + db[i];
  }
  const int na = a.node, nb = b.node;
  const std::int64_t h = bias_broadcast ? a.shape()[1] : 0;
  return make_result(
      "add", a.shape(), std::move(out),
      [na, nb, n, h](Tape& tape, const std::vector<double>& up) {
        if (na >= 0) {
          auto& ga = tape.grad_buffer(na);
          for (std::int64_t i = 0; i < n; ++i) ga[i] += up[i];
        }
        if (nb >= 0) {
          auto& gb = tape.grad_buffer(nb);
          if (h > 0) {
            for (std::int64_t i = 0; i < n; ++i) gb[i % h] += up[i];
          } else {
            for (std::int64_t i = 0; i < n; ++i) gb[i] += up[i];
          }
        }
      });
}

Tensor Tape::sub(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  const std::int64_t n = a.size();
  std::vector<double> out(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) out[i] = a.data()[i] - b.data()[i];
  const int na = a.node, nb = b.node;
  return make_result(
      "sub", a.shape(), std::move(out),
      [na, nb, n](Tape& tape, const std::vector<double>& up) {
        if (na >= 0) {
          auto& ga = tape.grad_buffer(na);
          for (std::int64_t i = 0; i < n; ++i) ga[i] += up[i];
        }
        if (nb >= 0) {
          auto& gb = tape.grad_buffer(nb);
          for (std::int64_t i = 0; i < n; ++i) gb[i] -= up[i];
        }
      });
}

Tensor Tape::mul(const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  const std::int64_t n = a.size();
  std::vector<double> out(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) out[i] = a.data()[i] * b.data()[i];
  const int na = a.node, nb = b.node;
  return make_result(
      "mul", a.shape(), std::move(out),
      [a, b, na, nb, n](Tape& tape, const std::vector<double>& up) {
        if (na >= 0) {
          auto& ga = tape.grad_buffer(na);
          for (std::int64_t i = 0; i < n; ++i) ga[i] += up[i] * b.data()[i];
        }
        if (nb >= 0) {
          auto& gb = tape.grad_buffer(nb);
          for (std::int64_t i = 0; i < n; ++i) gb[i] += up[i] * a.data()[i];
        }
      });
}

Tensor Tape::div(const Tensor& a, const Tensor& b) {
  require_same_shape("div", a, b);
  const std::int64_t n = a.size();
  std::vector<double> out(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) out[i] = a.data()[i] / b.data()[i];
  const int na = a.node, nb = b.node;
  Tensor result = make_result(
      "div", a.shape(), std::move(out),
      [a, b, na, nb, n](Tape& tape, const std::vector<double>& up) {
        if (na >= 0) {
          auto& ga = tape.grad_buffer(na);
          for (std::int64_t i = 0; i < n; ++i) ga[i] += up[i] / b.data()[i];
        }
        if (nb >= 0) {
          auto& gb = tape.grad_buffer(nb);
          for (std::int64_t i = 0; i < n; ++i) {
            const double bi = b.data()[i];
            gb[i] -= up[i] * a.data()[i] / (bi * bi);
          }
        }
      });
  return result;
}

Tensor Tape::scale(const Tensor& a, double c) {
  const std::int64_t n = a.size();
  std::vector<double> out(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) out[i] = a.data()[i] * c;
  const int na = a.node;
  return make_result(
      "scale", a.shape(), std::move(out),
      [na, n, c](Tape& tape, const std::vector<double>& up) {
        if (na < 0) return;
        auto& ga = tape.grad_buffer(na);
        for (std::int64_t i = 0; i < n; ++i) ga[i] += up[i] * c;
      });
}

Tensor Tape::add_scalar(const Tensor& a, double c) {
  const std::int64_t n = a.size();
  std::vector<double> out(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) out[i] = a.data()[i] + c;
  const int na = a.node;
  return make_result(
      "add_scalar", a.shape(), std::move(out),
      [na, n](Tape& tape, const std::vector<double>& up) {
        if (na < 0) return;
        auto& ga = tape.grad_buffer(na);
        for (std::int64_t i = 0; i < n; ++i) ga[i] += up[i];
      });
}

Tensor Tape::sigmoid(const Tensor& a) {
  const std::int64_t n = a.size();
  std::vector<double> out(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) out[i] = stable_sigmoid(a.data()[i]);
  const int na = a.node;
  Tensor result = make_result("sigmoid", a.shape(), std::move(out), nullptr);
  const Tensor value = result;
  nodes_[result.node].backprop = [na, n, value](
                                     Tape& tape,
                                     const std::vector<double>& up) {
    if (na < 0) return;
    auto& ga = tape.grad_buffer(na);
    for (std::int64_t i = 0; i < n; ++i) {
      const double s = value.data()[i];
      ga[i] += up[i] * s * (1.0 - s);
    }
  };
  return result;
}

Tensor Tape::tanh(const Tensor& a) {
  const std::int64_t n = a.size();
  std::vector<double> out(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) out[i] = std::tanh(a.data()[i]);
  const int na = a.node;
  Tensor result = make_result("tanh", a.shape(), std::move(out), nullptr);
  const Tensor value = result;
  nodes_[result.node].backprop = [na, n, value](
                                     Tape& tape,
                                     const std::vector<double>& up) {
    if (na < 0) return;
    auto& ga = tape.grad_buffer(na);
    for (std::int64_t i = 0; i < n; ++i) {
      const double t = value.data()[i];
      ga[i] += up[i] * (1.0 - t * t);
    }
  };
  return result;
}

Tensor Tape::softplus(const Tensor& a) {
  const std::int64_t n = a.size();
  std::vector<double> out(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) out[i] = stable_softplus(a.data()[i]);
  const int na = a.node;
  return make_result(
      "softplus", a.shape(), std::move(out),
      [a, na, n](Tape& tape, const std::vector<double>& up) {
        if (na < 0) return;
        auto& ga = tape.grad_buffer(na);
        for (std::int64_t i = 0; i < n; ++i) {
          ga[i] += up[i] * stable_sigmoid(a.data()[i]);
        }
      });
}

Tensor Tape::relu(const Tensor& a) {
  const std::int64_t n = a.size();
  std::vector<double> out(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) out[i] = std::fmax(0.0, a.data()[i]);
  const int na = a.node;
  return make_result(
      "relu", a.shape(), std::move(out),
      [a, na, n](Tape& tape, const std::vector<double>& up) {
        if (na < 0) return;
        auto& ga = tape.grad_buffer(na);
        for (std::int64_t i = 0; i < n; ++i) {
          if (a.data()[i] > 0.0) ga[i] += up[i];
        }
      });
}

Tensor Tape::exp(const Tensor& a) {
  const std::int64_t n = a.size();
  std::vector<double> out(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) out[i] = std::exp(a.data()[i]);
  const int na = a.node;
  Tensor result = make_result("exp", a.shape(), std::move(out), nullptr);
  const Tensor value = result;
  nodes_[result.node].backprop = [na, n, value](
                                     Tape& tape,
                                     const std::vector<double>& up) {
    if (na < 0) return;
    auto& ga = tape.grad_buffer(na);
    for (std::int64_t i = 0; i < n; ++i) ga[i] += up[i] * value.data()[i];
  };
  return result;
}

Tensor Tape::log(const Tensor& a) {
  const std::int64_t n = a.size();
  std::vector<double> out(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) out[i] = std::log(a.data()[i]);
  const int na = a.node;
  return make_result(
      "log", a.shape(), std::move(out),
      [a, na, n](Tape& tape, const std::vector<double>& up) {
        if (na < 0) return;
        auto& ga = tape.grad_buffer(na);
        for (std::int64_t i = 0; i < n; ++i) ga[i] += up[i] / a.data()[i];
      });
}

Tensor Tape::concat(const Tensor& a, const Tensor& b) {
  if (a.shape().size() != 2 || b.shape().size() != 2 ||
      a.shape()[0] != b.shape()[0]) {
    shape_fail("concat", a.shape(), b.shape());
  }
  const std::int64_t rows = a.shape()[0], ca = a.shape()[1], cb = b.shape()[1];
  std::vector<double> out(static_cast<std::size_t>(rows * (ca + cb)));
  for (std::int64_t r = 0; r < rows; ++r) {
    for (std::int64_t c = 0; c < ca; ++c) out[r * (ca + cb) + c] = a.at(r, c);
    for (std::int64_t c = 0; c < cb; ++c) {
      out[r * (ca + cb) + ca + c] = b.at(r, c);
    }
  }
  const int na = a.node, nb = b.node;
  return make_result(
      "concat", {rows, ca + cb}, std::move(out),
      [na, nb, rows, ca, cb](Tape& tape, const std::vector<double>& up) {
        if (na >= 0) {
          auto& ga = tape.grad_buffer(na);
          for (std::int64_t r = 0; r < rows; ++r) {
            for (std::int64_t c = 0; c < ca; ++c) {
              ga[r * ca + c] += up[r * (ca + cb) + c];
            }
          }
        }
        if (nb >= 0) {
          auto& gb = tape.grad_buffer(nb);
          for (std::int64_t r = 0; r < rows; ++r) {
            for (std::int64_t c = 0; c < cb; ++c) {
              gb[r * cb + c] += up[r * (ca + cb) + ca + c];
            }
          }
        }
      });
}

Tensor Tape::slice(const Tensor& a, std::int64_t from, std::int64_t to) {
  if (a.shape().size() != 2 || from < 0 || to > a.shape()[1] || from >= to) {
    std::ostringstream os;
    os << "slice: invalid range [" << from << ", " << to << ") for shape "
       << shape_str(a.shape());
    throw UsageError(os.str());
  }
  const std::int64_t rows = a.shape()[0], cols = a.shape()[1], w = to - from;
  std::vector<double> out(static_cast<std::size_t>(rows * w));
  for (std::int64_t r = 0; r < rows; ++r) {
    for (std::int64_t c = 0; c < w; ++c) out[r * w + c] = a.at(r, from + c);
  }
  const int na = a.node;
  return make_result(
      "slice", {rows, w}, std::move(out),
      [na, rows, cols, from, w](Tape& tape, const std::vector<double>& up) {
        if (na < 0) return;
        auto& ga = tape.grad_buffer(na);
        for (std::int64_t r = 0; r < rows; ++r) {
          for (std::int64_t c = 0; c < w; ++c) {
            ga[r * cols + from + c] += up[r * w + c];
          }
        }
      });
}

Tensor Tape::sum(const Tensor& a) {
  const std::int64_t n = a.size();
  double s = 0.0;
  for (std::int64_t i = 0; i < n; ++i) s += a.data()[i];
  const int na = a.node;
  return make_result("sum", {1}, {s},
                     [na, n](Tape& tape, const std::vector<double>& up) {
                       if (na < 0) return;
                       auto& ga = tape.grad_buffer(na);
                       for (std::int64_t i = 0; i < n; ++i) ga[i] += up[0];
                     });
}

Tensor Tape::mean(const Tensor& a) {
  const std::int64_t n = a.size();
  double s = 0.0;
  for (std::int64_t i = 0; i < n; ++i) s += a.data()[i];
  const double inv = 1.0 / static_cast<double>(n);
  const int na = a.node;
  return make_result(
      "mean", {1}, {s * inv},
      [na, n, inv](Tape& tape, const std::vector<double>& up) {
        if (na < 0) return;
        auto& ga = tape.grad_buffer(na);
        for (std::int64_t i = 0; i < n; ++i) ga[i] += up[0] * inv;
      });
}

Tensor Tape::row_sum(const Tensor& a) {
  if (a.shape().size() != 2) {
    throw UsageError("row_sum: expected rank-2 tensor, got " +
                     shape_str(a.shape()));
  }
  const std::int64_t rows = a.shape()[0], cols = a.shape()[1];
  std::vector<double> out(static_cast<std::size_t>(rows), 0.0);
  for (std::int64_t r = 0; r < rows; ++r) {
    for (std::int64_t c = 0; c < cols; ++c) out[r] += a.at(r, c);
  }
  const int na = a.node;
  return make_result(
      "row_sum", {rows}, std::move(out),
      [na, rows, cols](Tape& tape, const std::vector<double>& up) {
        if (na < 0) return;
        auto& ga = tape.grad_buffer(na);
        for (std::int64_t r = 0; r < rows; ++r) {
          for (std::int64_t c = 0; c < cols; ++c) ga[r * cols + c] += up[r];
        }
      });
}

Tensor Tape::row_mul(const Tensor& x, const Tensor& m) {
  if (x.shape().size() != 2 || m.size() != x.shape()[0]) {
    shape_fail("row_mul", x.shape(), m.shape());
  }
  const std::int64_t rows = x.shape()[0], cols = x.shape()[1];
  std::vector<double> out(static_cast<std::size_t>(rows * cols));
  for (std::int64_t r = 0; r < rows; ++r) {
    for (std::int64_t c = 0; c < cols; ++c) {
      out[r * cols + c] = x.at(r, c) * m.data()[r];
    }
  }
  const int nx = x.node, nm = m.node;
  return make_result(
      "row_mul", x.shape(), std::move(out),
      [x, m, nx, nm, rows, cols](Tape& tape, const std::vector<double>& up) {
        if (nx >= 0) {
          auto& gx = tape.grad_buffer(nx);
          for (std::int64_t r = 0; r < rows; ++r) {
            for (std::int64_t c = 0; c < cols; ++c) {
              gx[r * cols + c] += up[r * cols + c] * m.data()[r];
            }
          }
        }
        if (nm >= 0) {
          auto& gm = tape.grad_buffer(nm);
          for (std::int64_t r = 0; r < rows; ++r) {
            double acc = 0.0;
            for (std::int64_t c = 0; c < cols; ++c) {
              acc += up[r * cols + c] * x.at(r, c);
            }
            gm[r] += acc;
          }
        }
      });
}

Tensor Tape::broadcast_scalar(const Tensor& s, std::int64_t n) {
  if (s.size() != 1) {
    throw UsageError("broadcast_scalar: expected scalar, got " +
                     shape_str(s.shape()));
  }
  std::vector<double> out(static_cast<std::size_t>(n), s.data()[0]);
  const int ns = s.node;
  return make_result(
      "broadcast_scalar", {n}, std::move(out),
      [ns, n](Tape& tape, const std::vector<double>& up) {
        if (ns < 0) return;
        auto& gs = tape.grad_buffer(ns);
        for (std::int64_t i = 0; i < n; ++i) gs[0] += up[i];
      });
}

Tensor Tape::broadcast_col(const Tensor& v, std::int64_t h) {
  if (v.shape().size() != 1) {
    throw UsageError("broadcast_col: expected rank-1 tensor, got " +
                     shape_str(v.shape()));
  }
  const std::int64_t rows = v.shape()[0];
  std::vector<double> out(static_cast<std::size_t>(rows * h));
  for (std::int64_t r = 0; r < rows; ++r) {
    for (std::int64_t c = 0; c < h; ++c) out[r * h + c] = v.data()[r];
  }
  const int nv = v.node;
  return make_result(
      "broadcast_col", {rows, h}, std::move(out),
      [nv, rows, h](Tape& tape, const std::vector<double>& up) {
        if (nv < 0) return;
        auto& gv = tape.grad_buffer(nv);
        for (std::int64_t r = 0; r < rows; ++r) {
          double acc = 0.0;
          for (std::int64_t c = 0; c < h; ++c) acc += up[r * h + c];
          gv[r] += acc;
        }
      });
}

Tensor Tape::embedding(const Tensor& table, const std::vector<int>& ids) {
  if (table.shape().size() != 2) {
    throw UsageError("embedding: table must be rank-2, got " +
                     shape_str(table.shape()));
  }
  const std::int64_t vocab = table.shape()[0], dim = table.shape()[1];
  const std::int64_t batch = static_cast<std::int64_t>(ids.size());
  std::vector<double> out(static_cast<std::size_t>(batch * dim));
  for (std::int64_t b = 0; b < batch; ++b) {
    const int id = ids[b];
    if (id < 0 || id >= vocab) {
      std::ostringstream os;
      os << "embedding: id " << id << " outside vocabulary of size " << vocab;
      throw UsageError(os.str());
    }
    for (std::int64_t c = 0; c < dim; ++c) out[b * dim + c] = table.at(id, c);
  }
  const int nt = table.node;
  return make_result(
      "embedding", {batch, dim}, std::move(out),
      [nt, ids, dim](Tape& tape, const std::vector<double>& up) {
        if (nt < 0) return;
        auto& gt = tape.grad_buffer(nt);
        for (std::size_t b = 0; b < ids.size(); ++b) {
          for (std::int64_t c = 0; c < dim; ++c) {
            gt[static_cast<std::int64_t>(ids[b]) * dim + c] +=
                up[b * dim + c];
          }
        }
      });
}

Tensor Tape::softmax_cross_entropy(const Tensor& logits,
                                   const std::vector<int>& labels) {
  if (logits.shape().size() != 2 ||
      logits.shape()[0] != static_cast<std::int64_t>(labels.size())) {
    throw UsageError("softmax_cross_entropy: logits " +
                     shape_str(logits.shape()) + " vs " +
                     std::to_string(labels.size()) + " labels");
  }
  const std::int64_t batch = logits.shape()[0], classes = logits.shape()[1];
  // softmax probabilities, computed with the max trick; retained for backward
  auto probs = std::make_shared<std::vector<double>>(
      static_cast<std::size_t>(batch * classes));
  double loss = 0.0;
  for (std::int64_t b = 0; b < batch; ++b) {
    const int label = labels[b];
    if (label < 0 || label >= classes) {
      std::ostringstream os;
      os << "softmax_cross_entropy: label " << label << " outside [0, "
         << classes << ")";
      throw UsageError(os.str());
    }
    double mx = logits.at(b, 0);
    for (std::int64_t c = 1; c < classes; ++c) {
      mx = std::fmax(mx, logits.at(b, c));
    }
    double z = 0.0;
    for (std::int64_t c = 0; c < classes; ++c) {
      const double e = std::exp(logits.at(b, c) - mx);
      (*probs)[b * classes + c] = e;
      z += e;
    }
    for (std::int64_t c = 0; c < classes; ++c) (*probs)[b * classes + c] /= z;
    loss += std::log(z) + mx - logits.at(b, label);
  }
  loss /= static_cast<double>(batch);
  const int nl = logits.node;
  return make_result(
      "softmax_cross_entropy", {1}, {loss},
      [nl, probs, labels, batch, classes](Tape& tape,
                                          const std::vector<double>& up) {
        if (nl < 0) return;
        auto& gl = tape.grad_buffer(nl);
        const double inv = up[0] / static_cast<double>(batch);
        for (std::int64_t b = 0; b < batch; ++b) {
          for (std::int64_t c = 0; c < classes; ++c) {
            const double onehot = (c == labels[b]) ? 1.0 : 0.0;
            gl[b * classes + c] += inv * ((*probs)[b * classes + c] - onehot);
          }
        }
      });
}

Tensor Tape::gamma_node(const Tensor& shapes, const RngStream& rng) {
  const std::int64_t n = shapes.size();
  std::vector<double> out(static_cast<std::size_t>(n));
  auto pathwise = std::make_shared<std::vector<double>>(
      static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    RngStream child = rng.split(static_cast<std::uint64_t>(i));
    const GammaDraw draw = sample_gamma(shapes.data()[i], child);
    out[i] = draw.value;
    (*pathwise)[i] = draw.pathwise_grad;
  }
  const int ns = shapes.node;
  return make_result(
      "gamma_node", shapes.shape(), std::move(out),
      [ns, n, pathwise](Tape& tape, const std::vector<double>& up) {
        if (ns < 0) return;
        auto& gs = tape.grad_buffer(ns);
        for (std::int64_t i = 0; i < n; ++i) gs[i] += up[i] * (*pathwise)[i];
      });
}

Tensor Tape::binary_concrete(const Tensor& logits, double temperature,
                             const RngStream& rng) {
  if (!(temperature > 0.0)) {
    throw DomainError("binary_concrete: temperature must be positive, got " +
                      std::to_string(temperature));
  }
  const std::int64_t n = logits.size();
  std::vector<double> out(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    RngStream child = rng.split(static_cast<std::uint64_t>(i));
    out[i] = sample_binary_concrete(logits.data()[i], temperature, child);
  }
  const int nl = logits.node;
  Tensor result =
      make_result("binary_concrete", logits.shape(), std::move(out), nullptr);
  const Tensor value = result;
  nodes_[result.node].backprop =
      [nl, n, temperature, value](Tape& tape, const std::vector<double>& up) {
        if (nl < 0) return;
        auto& gl = tape.grad_buffer(nl);
        for (std::int64_t i = 0; i < n; ++i) {
          const double v = value.data()[i];
          gl[i] += up[i] * v * (1.0 - v) / temperature;
        }
      };
  return result;
}

Tensor Tape::kl_gamma_node(const Tensor& q_shapes, const Tensor& p_shapes,
                           double p_rate) {
  require_same_shape("kl_gamma_node", q_shapes, p_shapes);
  if (!(p_rate > 0.0)) {
    throw DomainError("kl_gamma_node: prior rate must be positive, got " +
                      std::to_string(p_rate));
  }
  const std::int64_t n = q_shapes.size();
  const double log_rate = std::log(p_rate);
  std::vector<double> out(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    const double aq = q_shapes.data()[i], ap = p_shapes.data()[i];
    if (!(aq > 0.0) || !(ap > 0.0)) {
      throw DomainError("kl_gamma_node: shapes must be positive");
    }
    out[i] = (aq - ap) * digamma(aq) - log_gamma(aq) + log_gamma(ap) -
             ap * log_rate + aq * (p_rate - 1.0);
  }
  const int nq = q_shapes.node, np = p_shapes.node;
  return make_result(
      "kl_gamma_node", q_shapes.shape(), std::move(out),
      [q_shapes, p_shapes, nq, np, n, p_rate, log_rate](
          Tape& tape, const std::vector<double>& up) {
        if (nq >= 0) {
          auto& gq = tape.grad_buffer(nq);
          for (std::int64_t i = 0; i < n; ++i) {
            const double aq = q_shapes.data()[i], ap = p_shapes.data()[i];
            gq[i] += up[i] * ((aq - ap) * trigamma(aq) + (p_rate - 1.0));
          }
        }
        if (np >= 0) {
          auto& gp = tape.grad_buffer(np);
          for (std::int64_t i = 0; i < n; ++i) {
            const double aq = q_shapes.data()[i], ap = p_shapes.data()[i];
            gp[i] += up[i] * (digamma(ap) - digamma(aq) - log_rate);
          }
        }
      });
}

void Tape::backward(const Tensor& loss) {
  if (loss.node < 0 || loss.size() != 1) {
    throw UsageError("backward: loss must be a scalar recorded on this tape");
  }
  grad_buffer(loss.node)[0] = 1.0;
  for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i) {
    if (grads_[i].empty()) continue;       // node not on the loss path
    if (!nodes_[i].backprop) continue;     // leaf
    nodes_[i].backprop(*this, grads_[i]);
    if (!retain_grads_) {
      // nothing earlier on the tape reads this buffer again
      grads_[i].clear();
      grads_[i].shrink_to_fit();
    }
  }
}

const std::vector<double>& Tape::grad(const Tensor& t) {
  if (t.node < 0) {
    throw UsageError("grad: tensor is not recorded on this tape");
  }
  return grad_buffer(t.node);
}

}  // namespace betagate
