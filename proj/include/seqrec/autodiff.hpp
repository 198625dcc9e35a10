// Copyright 2026 The seqrec Authors
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
//
// Minimal reverse-mode differentiation over dense double matrices. A Graph
// is a tape of nodes built by one forward pass; backward() walks it once in
// reverse creation order. Everything is 2-D: scalars are 1x1, row vectors
// 1xn. Double precision throughout.
#pragma once

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "seqrec/rng.hpp"

namespace seqrec::ad {

struct Tensor {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;  // row-major

  Tensor() = default;
  Tensor(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, 0.0) {}

  static Tensor zeros(int r, int c) { return Tensor(r, c); }
  static Tensor full(int r, int c, double v) {
    Tensor t(r, c);
    std::fill(t.data.begin(), t.data.end(), v);
    return t;
  }
  static Tensor scalar(double v) { return full(1, 1, v); }
  static Tensor row(std::span<const double> xs) {
    Tensor t(1, static_cast<int>(xs.size()));
    std::copy(xs.begin(), xs.end(), t.data.begin());
    return t;
  }

  double& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
  double at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
  std::size_t size() const { return data.size(); }
  bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }

  bool operator==(const Tensor& o) const {
    return rows == o.rows && cols == o.cols && data == o.data;
  }
};

// A trainable parameter. The gradient persists across backward passes and
// accumulates additively until zero_grad().
struct Param {
  std::string name;
  Tensor value;
  Tensor grad;

  Param() = default;
  Param(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)) {
    grad = Tensor::zeros(value.rows, value.cols);
  }

  void zero_grad() { std::fill(grad.data.begin(), grad.data.end(), 0.0); }

  void init_uniform(Rng& rng) {
    // +-1/sqrt(fan_in); rows act as the input dimension for row-vector math
    init_uniform_bound(rng, 1.0 / std::sqrt(static_cast<double>(value.rows)));
  }

  void init_uniform_bound(Rng& rng, double bound) {
    for (double& x : value.data) x = rng.next_symmetric(bound);
  }
};

class Graph {
 public:
  using Id = int;

  Id constant(Tensor v) { return add_node(std::move(v), {-1, -1}, nullptr, false); }

  Id param(Param& p) {
    Id id = add_node(p.value, {-1, -1}, nullptr, true);
    nodes_[static_cast<std::size_t>(id)].bound = &p;
    return id;
  }

  const Tensor& value(Id id) const { return nodes_[check(id)].value; }
  const Tensor& grad(Id id) const { return nodes_[check(id)].grad; }

  // ---- primitive operations ------------------------------------------------

  Id matmul(Id a, Id b) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    require(A.cols == B.rows, "matmul", A, B);
    Tensor C(A.rows, B.cols);
    for (int i = 0; i < A.rows; ++i) {
      for (int k = 0; k < A.cols; ++k) {
        double av = A.at(i, k);
        if (av == 0.0) continue;
        for (int j = 0; j < B.cols; ++j) C.at(i, j) += av * B.at(k, j);
      }
    }
    return add_node(std::move(C), {a, b}, [](Graph& g, Id self) {
      auto [a, b] = g.parents(self);
      const Tensor& A = g.value(a);
      const Tensor& B = g.value(b);
      const Tensor& dC = g.grad_ref(self);
      if (g.needs_grad(a)) {
        Tensor& dA = g.grad_ref(a);
        for (int i = 0; i < A.rows; ++i) {
          for (int j = 0; j < B.cols; ++j) {
            double dv = dC.at(i, j);
            if (dv == 0.0) continue;
            for (int k = 0; k < A.cols; ++k) dA.at(i, k) += dv * B.at(k, j);
          }
        }
      }
      if (g.needs_grad(b)) {
        Tensor& dB = g.grad_ref(b);
        for (int i = 0; i < A.rows; ++i) {
          for (int k = 0; k < A.cols; ++k) {
            double av = A.at(i, k);
            if (av == 0.0) continue;
            for (int j = 0; j < B.cols; ++j) dB.at(k, j) += av * dC.at(i, j);
          }
        }
      }
    });
  }

  // a * b^T without materializing the transpose
  Id matmul_nt(Id a, Id b) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    require(A.cols == B.cols, "matmul_nt", A, B);
    Tensor C(A.rows, B.rows);
    for (int i = 0; i < A.rows; ++i) {
      for (int j = 0; j < B.rows; ++j) {
        double s = 0.0;
        for (int k = 0; k < A.cols; ++k) s += A.at(i, k) * B.at(j, k);
        C.at(i, j) = s;
      }
    }
    return add_node(std::move(C), {a, b}, [](Graph& g, Id self) {
      auto [a, b] = g.parents(self);
      const Tensor& A = g.value(a);
      const Tensor& B = g.value(b);
      const Tensor& dC = g.grad_ref(self);
      if (g.needs_grad(a)) {
        Tensor& dA = g.grad_ref(a);
        for (int i = 0; i < A.rows; ++i) {
          for (int j = 0; j < B.rows; ++j) {
            double dv = dC.at(i, j);
            if (dv == 0.0) continue;
            for (int k = 0; k < A.cols; ++k) dA.at(i, k) += dv * B.at(j, k);
          }
        }
      }
      if (g.needs_grad(b)) {
        Tensor& dB = g.grad_ref(b);
        for (int i = 0; i < A.rows; ++i) {
          for (int j = 0; j < B.rows; ++j) {
            double dv = dC.at(i, j);
            if (dv == 0.0) continue;
            for (int k = 0; k < A.cols; ++k) dB.at(j, k) += dv * A.at(i, k);
          }
        }
      }
    });
  }

  Id transpose(Id a) {
    const Tensor& A = value(a);
    Tensor C(A.cols, A.rows);
    for (int i = 0; i < A.rows; ++i) {
      for (int j = 0; j < A.cols; ++j) C.at(j, i) = A.at(i, j);
    }
    return add_node(std::move(C), {a, -1}, [](Graph& g, Id self) {
      auto [a, _] = g.parents(self);
      if (!g.needs_grad(a)) return;
      const Tensor& dC = g.grad_ref(self);
      Tensor& dA = g.grad_ref(a);
      for (int i = 0; i < dC.rows; ++i) {
        for (int j = 0; j < dC.cols; ++j) dA.at(j, i) += dC.at(i, j);
      }
    });
  }

  // b may have the same shape as a, be a 1xN row (broadcast over rows) or a
  // 1x1 scalar (broadcast everywhere).
  Id add(Id a, Id b) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    bool same = A.same_shape(B);
    bool row_bcast = B.rows == 1 && B.cols == A.cols;
    bool scalar_bcast = B.rows == 1 && B.cols == 1;
    require(same || row_bcast || scalar_bcast, "add", A, B);
    Tensor C = A;
    for (int i = 0; i < A.rows; ++i) {
      for (int j = 0; j < A.cols; ++j) {
        double bv = same ? B.at(i, j) : (row_bcast ? B.at(0, j) : B.at(0, 0));
        C.at(i, j) += bv;
      }
    }
    return add_node(std::move(C), {a, b}, [](Graph& g, Id self) {
      auto [a, b] = g.parents(self);
      const Tensor& dC = g.grad_ref(self);
      if (g.needs_grad(a)) {
        Tensor& dA = g.grad_ref(a);
        for (std::size_t i = 0; i < dC.size(); ++i) dA.data[i] += dC.data[i];
      }
      if (g.needs_grad(b)) {
        Tensor& dB = g.grad_ref(b);
        if (dB.same_shape(dC)) {
          for (std::size_t i = 0; i < dC.size(); ++i) dB.data[i] += dC.data[i];
        } else if (dB.cols == dC.cols) {  // row broadcast
          for (int i = 0; i < dC.rows; ++i) {
            for (int j = 0; j < dC.cols; ++j) dB.at(0, j) += dC.at(i, j);
          }
        } else {  // scalar broadcast
          double s = 0.0;
          for (double v : dC.data) s += v;
          dB.at(0, 0) += s;
        }
      }
    });
  }

  // Elementwise product; b may also be a 1x1 scalar.
  Id mul(Id a, Id b) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    bool same = A.same_shape(B);
    bool scalar_bcast = B.rows == 1 && B.cols == 1;
    require(same || scalar_bcast, "mul", A, B);
    Tensor C = A;
    for (int i = 0; i < A.rows; ++i) {
      for (int j = 0; j < A.cols; ++j) C.at(i, j) *= same ? B.at(i, j) : B.at(0, 0);
    }
    return add_node(std::move(C), {a, b}, [](Graph& g, Id self) {
      auto [a, b] = g.parents(self);
      const Tensor& A = g.value(a);
      const Tensor& B = g.value(b);
      const Tensor& dC = g.grad_ref(self);
      bool scalar_bcast = B.rows == 1 && B.cols == 1 && !(A.rows == 1 && A.cols == 1);
      if (g.needs_grad(a)) {
        Tensor& dA = g.grad_ref(a);
        for (int i = 0; i < A.rows; ++i) {
          for (int j = 0; j < A.cols; ++j) {
            dA.at(i, j) += dC.at(i, j) * (scalar_bcast ? B.at(0, 0) : B.at(i, j));
          }
        }
      }
      if (g.needs_grad(b)) {
        Tensor& dB = g.grad_ref(b);
        if (scalar_bcast) {
          double s = 0.0;
          for (int i = 0; i < A.rows; ++i) {
            for (int j = 0; j < A.cols; ++j) s += dC.at(i, j) * A.at(i, j);
          }
          dB.at(0, 0) += s;
        } else {
          for (int i = 0; i < A.rows; ++i) {
            for (int j = 0; j < A.cols; ++j) dB.at(i, j) += dC.at(i, j) * A.at(i, j);
          }
        }
      }
    });
  }

  // alpha * a + beta, with scalar constants
  Id affine(Id a, double alpha, double beta) {
    Tensor C = value(a);
    for (double& v : C.data) v = alpha * v + beta;
    return add_node(std::move(C), {a, -1}, [alpha](Graph& g, Id self) {
      auto [a, _] = g.parents(self);
      if (!g.needs_grad(a)) return;
      const Tensor& dC = g.grad_ref(self);
      Tensor& dA = g.grad_ref(a);
      for (std::size_t i = 0; i < dC.size(); ++i) dA.data[i] += alpha * dC.data[i];
    });
  }

  Id sigmoid(Id a) {
    Tensor C = value(a);
    for (double& v : C.data) v = 1.0 / (1.0 + std::exp(-v));
    return add_node(std::move(C), {a, -1}, [](Graph& g, Id self) {
      auto [a, _] = g.parents(self);
      if (!g.needs_grad(a)) return;
      const Tensor& y = g.value(self);
      const Tensor& dC = g.grad_ref(self);
      Tensor& dA = g.grad_ref(a);
      for (std::size_t i = 0; i < dC.size(); ++i) {
        dA.data[i] += dC.data[i] * y.data[i] * (1.0 - y.data[i]);
      }
    });
  }

  Id tanh_(Id a) {
    Tensor C = value(a);
    for (double& v : C.data) v = std::tanh(v);
    return add_node(std::move(C), {a, -1}, [](Graph& g, Id self) {
      auto [a, _] = g.parents(self);
      if (!g.needs_grad(a)) return;
      const Tensor& y = g.value(self);
      const Tensor& dC = g.grad_ref(self);
      Tensor& dA = g.grad_ref(a);
      for (std::size_t i = 0; i < dC.size(); ++i) {
        dA.data[i] += dC.data[i] * (1.0 - y.data[i] * y.data[i]);
      }
    });
  }

  Id relu(Id a) {
    Tensor C = value(a);
    for (double& v : C.data) v = v > 0.0 ? v : 0.0;
    return add_node(std::move(C), {a, -1}, [](Graph& g, Id self) {
      auto [a, _] = g.parents(self);
      if (!g.needs_grad(a)) return;
      const Tensor& x = g.value(a);
      const Tensor& dC = g.grad_ref(self);
      Tensor& dA = g.grad_ref(a);
      for (std::size_t i = 0; i < dC.size(); ++i) {
        if (x.data[i] > 0.0) dA.data[i] += dC.data[i];
      }
    });
  }

  // Exact GELU: x * Phi(x) with the Gaussian CDF.
  Id gelu(Id a) {
    Tensor C = value(a);
    for (double& v : C.data) v = v * phi_cdf(v);
    return add_node(std::move(C), {a, -1}, [](Graph& g, Id self) {
      auto [a, _] = g.parents(self);
      if (!g.needs_grad(a)) return;
      const Tensor& x = g.value(a);
      const Tensor& dC = g.grad_ref(self);
      Tensor& dA = g.grad_ref(a);
      constexpr double inv_sqrt_2pi = 0.3989422804014327;
      for (std::size_t i = 0; i < dC.size(); ++i) {
        double xv = x.data[i];
        double d = phi_cdf(xv) + xv * inv_sqrt_2pi * std::exp(-0.5 * xv * xv);
        dA.data[i] += dC.data[i] * d;
      }
    });
  }

  Id log_(Id a) {
    Tensor C = value(a);
    for (double& v : C.data) v = std::log(v);
    return add_node(std::move(C), {a, -1}, [](Graph& g, Id self) {
      auto [a, _] = g.parents(self);
      if (!g.needs_grad(a)) return;
      const Tensor& x = g.value(a);
      const Tensor& dC = g.grad_ref(self);
      Tensor& dA = g.grad_ref(a);
      for (std::size_t i = 0; i < dC.size(); ++i) dA.data[i] += dC.data[i] / x.data[i];
    });
  }

  // log(1 + exp(x)), evaluated without overflow
  Id softplus(Id a) {
    Tensor C = value(a);
    for (double& v : C.data) v = v > 30.0 ? v : std::log1p(std::exp(v));
    return add_node(std::move(C), {a, -1}, [](Graph& g, Id self) {
      auto [a, _] = g.parents(self);
      if (!g.needs_grad(a)) return;
      const Tensor& x = g.value(a);
      const Tensor& dC = g.grad_ref(self);
      Tensor& dA = g.grad_ref(a);
      for (std::size_t i = 0; i < dC.size(); ++i) {
        dA.data[i] += dC.data[i] / (1.0 + std::exp(-x.data[i]));
      }
    });
  }

  // Row-wise softmax (last axis), stabilized by the row maximum.
  Id softmax_rows(Id a) {
    Tensor C = value(a);
    softmax_inplace(C);
    return add_node(std::move(C), {a, -1}, [](Graph& g, Id self) {
      auto [a, _] = g.parents(self);
      if (!g.needs_grad(a)) return;
      const Tensor& y = g.value(self);
      const Tensor& dC = g.grad_ref(self);
      Tensor& dA = g.grad_ref(a);
      for (int i = 0; i < y.rows; ++i) {
        double dot = 0.0;
        for (int j = 0; j < y.cols; ++j) dot += dC.at(i, j) * y.at(i, j);
        for (int j = 0; j < y.cols; ++j) {
          dA.at(i, j) += y.at(i, j) * (dC.at(i, j) - dot);
        }
      }
    });
  }

  // Row-wise log softmax via log-sum-exp; the stable route to cross entropy.
  Id log_softmax_rows(Id a) {
    const Tensor& A = value(a);
    Tensor C = A;
    for (int i = 0; i < A.rows; ++i) {
      double mx = -std::numeric_limits<double>::infinity();
      for (int j = 0; j < A.cols; ++j) mx = std::max(mx, A.at(i, j));
      double sum = 0.0;
      for (int j = 0; j < A.cols; ++j) sum += std::exp(A.at(i, j) - mx);
      double lse = mx + std::log(sum);
      for (int j = 0; j < A.cols; ++j) C.at(i, j) = A.at(i, j) - lse;
    }
    return add_node(std::move(C), {a, -1}, [](Graph& g, Id self) {
      auto [a, _] = g.parents(self);
      if (!g.needs_grad(a)) return;
      const Tensor& y = g.value(self);  // log probabilities
      const Tensor& dC = g.grad_ref(self);
      Tensor& dA = g.grad_ref(a);
      for (int i = 0; i < y.rows; ++i) {
        double rowsum = 0.0;
        for (int j = 0; j < y.cols; ++j) rowsum += dC.at(i, j);
        for (int j = 0; j < y.cols; ++j) {
          dA.at(i, j) += dC.at(i, j) - std::exp(y.at(i, j)) * rowsum;
        }
      }
    });
  }

  Id concat_cols(Id a, Id b) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    require(A.rows == B.rows, "concat_cols", A, B);
    Tensor C(A.rows, A.cols + B.cols);
    for (int i = 0; i < A.rows; ++i) {
      for (int j = 0; j < A.cols; ++j) C.at(i, j) = A.at(i, j);
      for (int j = 0; j < B.cols; ++j) C.at(i, A.cols + j) = B.at(i, j);
    }
    return add_node(std::move(C), {a, b}, [](Graph& g, Id self) {
      auto [a, b] = g.parents(self);
      const Tensor& dC = g.grad_ref(self);
      int acols = g.value(a).cols;
      if (g.needs_grad(a)) {
        Tensor& dA = g.grad_ref(a);
        for (int i = 0; i < dA.rows; ++i) {
          for (int j = 0; j < acols; ++j) dA.at(i, j) += dC.at(i, j);
        }
      }
      if (g.needs_grad(b)) {
        Tensor& dB = g.grad_ref(b);
        for (int i = 0; i < dB.rows; ++i) {
          for (int j = 0; j < dB.cols; ++j) dB.at(i, j) += dC.at(i, acols + j);
        }
      }
    });
  }

  Id narrow_rows(Id a, int start, int len) {
    const Tensor& A = value(a);
    if (start < 0 || len < 1 || start + len > A.rows) {
      throw std::invalid_argument("narrow_rows: bad range");
    }
    Tensor C(len, A.cols);
    for (int i = 0; i < len; ++i) {
      for (int j = 0; j < A.cols; ++j) C.at(i, j) = A.at(start + i, j);
    }
    return add_node(std::move(C), {a, -1}, [start](Graph& g, Id self) {
      auto [a, _] = g.parents(self);
      if (!g.needs_grad(a)) return;
      const Tensor& dC = g.grad_ref(self);
      Tensor& dA = g.grad_ref(a);
      for (int i = 0; i < dC.rows; ++i) {
        for (int j = 0; j < dC.cols; ++j) dA.at(start + i, j) += dC.at(i, j);
      }
    });
  }

  Id narrow_cols(Id a, int start, int len) {
    const Tensor& A = value(a);
    if (start < 0 || len < 1 || start + len > A.cols) {
      throw std::invalid_argument("narrow_cols: bad range");
    }
    Tensor C(A.rows, len);
    for (int i = 0; i < A.rows; ++i) {
      for (int j = 0; j < len; ++j) C.at(i, j) = A.at(i, start + j);
    }
    return add_node(std::move(C), {a, -1}, [start](Graph& g, Id self) {
      auto [a, _] = g.parents(self);
      if (!g.needs_grad(a)) return;
      const Tensor& dC = g.grad_ref(self);
      Tensor& dA = g.grad_ref(a);
      for (int i = 0; i < dC.rows; ++i) {
        for (int j = 0; j < dC.cols; ++j) dA.at(i, start + j) += dC.at(i, j);
      }
    });
  }

  // Gathers rows of a table by index; duplicate indices accumulate gradient.
  Id embedding(Id table, std::vector<int> indices) {
    const Tensor& T = value(table);
    Tensor C(static_cast<int>(indices.size()), T.cols);
    for (std::size_t i = 0; i < indices.size(); ++i) {
      int r = indices[i];
      if (r < 0 || r >= T.rows) throw std::invalid_argument("embedding: index out of range");
      for (int j = 0; j < T.cols; ++j) C.at(static_cast<int>(i), j) = T.at(r, j);
    }
    return add_node(std::move(C), {table, -1}, [idx = std::move(indices)](Graph& g, Id self) {
      auto [table, _] = g.parents(self);
      if (!g.needs_grad(table)) return;
      const Tensor& dC = g.grad_ref(self);
      Tensor& dT = g.grad_ref(table);
      for (std::size_t i = 0; i < idx.size(); ++i) {
        for (int j = 0; j < dC.cols; ++j) {
          dT.at(idx[i], j) += dC.at(static_cast<int>(i), j);
        }
      }
    });
  }

  // Writes `fill` where mask != 0; gradient flows only through unmasked
  // entries. Used with a large negative fill before attention softmax.
  Id masked_fill(Id a, Tensor mask, double fill) {
    const Tensor& A = value(a);
    require(A.same_shape(mask), "masked_fill", A, mask);
    Tensor C = A;
    for (std::size_t i = 0; i < C.size(); ++i) {
      if (mask.data[i] != 0.0) C.data[i] = fill;
    }
    return add_node(std::move(C), {a, -1}, [m = std::move(mask)](Graph& g, Id self) {
      auto [a, _] = g.parents(self);
      if (!g.needs_grad(a)) return;
      const Tensor& dC = g.grad_ref(self);
      Tensor& dA = g.grad_ref(a);
      for (std::size_t i = 0; i < dC.size(); ++i) {
        if (m.data[i] == 0.0) dA.data[i] += dC.data[i];
      }
    });
  }

  // Inverted dropout: keep with probability 1-p scaled by 1/(1-p). In
  // evaluation mode this is exactly the identity (the same node is returned).
  Id dropout(Id a, double p, Rng& rng, bool training) {
    if (!training || p <= 0.0) return a;
    if (p >= 1.0) throw std::invalid_argument("dropout: p must be < 1");
    const Tensor& A = value(a);
    Tensor mask(A.rows, A.cols);
    double scale = 1.0 / (1.0 - p);
    for (double& m : mask.data) m = rng.next_double() < p ? 0.0 : scale;
    Tensor C = A;
    for (std::size_t i = 0; i < C.size(); ++i) C.data[i] *= mask.data[i];
    return add_node(std::move(C), {a, -1}, [m = std::move(mask)](Graph& g, Id self) {
      auto [a, _] = g.parents(self);
      if (!g.needs_grad(a)) return;
      const Tensor& dC = g.grad_ref(self);
      Tensor& dA = g.grad_ref(a);
      for (std::size_t i = 0; i < dC.size(); ++i) dA.data[i] += dC.data[i] * m.data[i];
    });
  }

  // Per-row normalization with learnable gain and shift (1 x cols each).
  Id layer_norm(Id a, Id gamma, Id beta, double eps = 1e-8) {
    const Tensor& A = value(a);
    const Tensor& G = value(gamma);
    const Tensor& B = value(beta);
    require(G.rows == 1 && G.cols == A.cols, "layer_norm gamma", A, G);
    require(B.rows == 1 && B.cols == A.cols, "layer_norm beta", A, B);
    Tensor C(A.rows, A.cols);
    Tensor xhat(A.rows, A.cols);
    std::vector<double> inv_std(static_cast<std::size_t>(A.rows));
    int n = A.cols;
    for (int i = 0; i < A.rows; ++i) {
      double mean = 0.0;
      for (int j = 0; j < n; ++j) mean += A.at(i, j);
      mean /= n;
      double var = 0.0;
      for (int j = 0; j < n; ++j) {
        double d = A.at(i, j) - mean;
        var += d * d;
      }
      var /= n;
      double inv = 1.0 / std::sqrt(var + eps);
      inv_std[static_cast<std::size_t>(i)] = inv;
      for (int j = 0; j < n; ++j) {
        double xh = (A.at(i, j) - mean) * inv;
        xhat.at(i, j) = xh;
        C.at(i, j) = G.at(0, j) * xh + B.at(0, j);
      }
    }
    return add_node(std::move(C), {a, gamma},
                    [xh = std::move(xhat), inv = std::move(inv_std), beta](Graph& g, Id self) {
                      auto [a, gamma] = g.parents(self);
                      const Tensor& dC = g.grad_ref(self);
                      const Tensor& G = g.value(gamma);
                      int n = dC.cols;
                      if (g.needs_grad(gamma)) {
                        Tensor& dG = g.grad_ref(gamma);
                        for (int i = 0; i < dC.rows; ++i) {
                          for (int j = 0; j < n; ++j) dG.at(0, j) += dC.at(i, j) * xh.at(i, j);
                        }
                      }
                      if (g.needs_grad(beta)) {
                        Tensor& dB = g.grad_ref(beta);
                        for (int i = 0; i < dC.rows; ++i) {
                          for (int j = 0; j < n; ++j) dB.at(0, j) += dC.at(i, j);
                        }
                      }
                      if (g.needs_grad(a)) {
                        Tensor& dA = g.grad_ref(a);
                        for (int i = 0; i < dC.rows; ++i) {
                          double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
                          for (int j = 0; j < n; ++j) {
                            double dxh = dC.at(i, j) * G.at(0, j);
                            mean_dxhat += dxh;
                            mean_dxhat_xhat += dxh * xh.at(i, j);
                          }
                          mean_dxhat /= n;
                          mean_dxhat_xhat /= n;
                          for (int j = 0; j < n; ++j) {
                            double dxh = dC.at(i, j) * G.at(0, j);
                            dA.at(i, j) += inv[static_cast<std::size_t>(i)] *
                                           (dxh - mean_dxhat - xh.at(i, j) * mean_dxhat_xhat);
                          }
                        }
                      }
                    },
                    beta);
  }

  Id sum_all(Id a) {
    const Tensor& A = value(a);
    double s = 0.0;
    for (double v : A.data) s += v;
    return add_node(Tensor::scalar(s), {a, -1}, [](Graph& g, Id self) {
      auto [a, _] = g.parents(self);
      if (!g.needs_grad(a)) return;
      double dv = g.grad_ref(self).at(0, 0);
      Tensor& dA = g.grad_ref(a);
      for (double& v : dA.data) v += dv;
    });
  }

  // Sums over the last axis: (r x c) -> (r x 1).
  Id sum_cols(Id a) {
    const Tensor& A = value(a);
    Tensor C(A.rows, 1);
    for (int i = 0; i < A.rows; ++i) {
      double s = 0.0;
      for (int j = 0; j < A.cols; ++j) s += A.at(i, j);
      C.at(i, 0) = s;
    }
    return add_node(std::move(C), {a, -1}, [](Graph& g, Id self) {
      auto [a, _] = g.parents(self);
      if (!g.needs_grad(a)) return;
      const Tensor& dC = g.grad_ref(self);
      Tensor& dA = g.grad_ref(a);
      for (int i = 0; i < dA.rows; ++i) {
        for (int j = 0; j < dA.cols; ++j) dA.at(i, j) += dC.at(i, 0);
      }
    });
  }

  // Picks entries (row, col) into a k x 1 column; duplicates accumulate.
  Id gather_entries(Id a, std::vector<std::pair<int, int>> entries) {
    const Tensor& A = value(a);
    Tensor C(static_cast<int>(entries.size()), 1);
    for (std::size_t i = 0; i < entries.size(); ++i) {
      auto [r, c] = entries[i];
      if (r < 0 || r >= A.rows || c < 0 || c >= A.cols) {
        throw std::invalid_argument("gather_entries: index out of range");
      }
      C.at(static_cast<int>(i), 0) = A.at(r, c);
    }
    return add_node(std::move(C), {a, -1}, [es = std::move(entries)](Graph& g, Id self) {
      auto [a, _] = g.parents(self);
      if (!g.needs_grad(a)) return;
      const Tensor& dC = g.grad_ref(self);
      Tensor& dA = g.grad_ref(a);
      for (std::size_t i = 0; i < es.size(); ++i) {
        dA.at(es[i].first, es[i].second) += dC.at(static_cast<int>(i), 0);
      }
    });
  }

  // ---- backward ------------------------------------------------------------

  // Seeds d(loss)/d(loss) = 1 and visits reachable nodes exactly once in
  // reverse creation order. Parameter gradients accumulate into Param::grad;
  // calling backward twice without zero_grad doubles them.
  void backward(Id loss) {
    Node& root = nodes_[check(loss)];
    if (root.value.rows != 1 || root.value.cols != 1) {
      throw std::invalid_argument("backward: loss must be a scalar (1x1)");
    }
    // node gradients are scratch per pass; only Param::grad persists
    for (Node& n : nodes_) std::fill(n.grad.data.begin(), n.grad.data.end(), 0.0);
    std::vector<char> reachable(nodes_.size(), 0);
    mark(loss, reachable);
    ensure_grad(loss);
    root.grad.at(0, 0) += 1.0;
    for (Id id = loss; id >= 0; --id) {
      Node& node = nodes_[static_cast<std::size_t>(id)];
      if (!reachable[static_cast<std::size_t>(id)] || !node.needs_grad) continue;
      if (node.backward) {
        for (Id p : node.parents_all()) {
          if (p >= 0 && nodes_[static_cast<std::size_t>(p)].needs_grad) ensure_grad(p);
        }
        node.backward(*this, id);
      }
      if (node.bound != nullptr) {
        for (std::size_t i = 0; i < node.grad.size(); ++i) {
          node.bound->grad.data[i] += node.grad.data[i];
        }
      }
    }
  }

  std::size_t node_count() const { return nodes_.size(); }

  // internal helpers used by op closures
  std::pair<Id, Id> parents(Id id) const {
    const Node& n = nodes_[check(id)];
    return {n.parents[0], n.parents[1]};
  }
  bool needs_grad(Id id) const { return nodes_[check(id)].needs_grad; }
  Tensor& grad_ref(Id id) {
    ensure_grad(id);
    return nodes_[check(id)].grad;
  }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::array<Id, 3> parents{-1, -1, -1};
    std::function<void(Graph&, Id)> backward;
    Param* bound = nullptr;
    bool needs_grad = false;

    std::array<Id, 3> parents_all() const { return parents; }
  };

  static double phi_cdf(double x) { return 0.5 * (1.0 + std::erf(x * 0.7071067811865476)); }

  static void softmax_inplace(Tensor& t) {
    for (int i = 0; i < t.rows; ++i) {
      double mx = -std::numeric_limits<double>::infinity();
      for (int j = 0; j < t.cols; ++j) mx = std::max(mx, t.at(i, j));
      double sum = 0.0;
      for (int j = 0; j < t.cols; ++j) {
        double e = std::exp(t.at(i, j) - mx);
        t.at(i, j) = e;
        sum += e;
      }
      for (int j = 0; j < t.cols; ++j) t.at(i, j) /= sum;
    }
  }

  std::size_t check(Id id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size()) {
      throw std::logic_error("invalid node id");
    }
    return static_cast<std::size_t>(id);
  }

  void require(bool ok, const char* op, const Tensor& a, const Tensor& b) const {
    if (ok) return;
    throw std::invalid_argument(std::string(op) + ": incompatible shapes " +
                                std::to_string(a.rows) + "x" + std::to_string(a.cols) + " vs " +
                                std::to_string(b.rows) + "x" + std::to_string(b.cols));
  }

  Id add_node(Tensor value, std::array<Id, 2> parents, std::function<void(Graph&, Id)> backward,
              bool force_grad = false, Id extra_parent = -1) {
#ifndef NDEBUG
    for (double v : value.data) {
      if (!std::isfinite(v)) throw std::runtime_error("non-finite value in forward pass");
    }
#endif
    Node node;
    node.value = std::move(value);
    node.parents = {parents[0], parents[1], extra_parent};
    node.backward = std::move(backward);
    node.needs_grad = force_grad;
    for (Id p : node.parents) {
      if (p >= 0 && nodes_[check(p)].needs_grad) node.needs_grad = true;
    }
    nodes_.push_back(std::move(node));
    return static_cast<Id>(nodes_.size()) - 1;
  }

  Id add_node(Tensor value, std::array<Id, 2> parents, std::function<void(Graph&, Id)> backward,
              Id extra_parent) {
    return add_node(std::move(value), parents, std::move(backward), false, extra_parent);
  }

  void ensure_grad(Id id) {
    Node& n = nodes_[check(id)];
    if (n.grad.size() == 0) n.grad = Tensor::zeros(n.value.rows, n.value.cols);
  }

  void mark(Id start, std::vector<char>& reachable) {
    std::vector<Id> stack{start};
    while (!stack.empty()) {
      Id id = stack.back();
      stack.pop_back();
      if (reachable[static_cast<std::size_t>(id)]) continue;
      reachable[static_cast<std::size_t>(id)] = 1;
      for (Id p : nodes_[static_cast<std::size_t>(id)].parents_all()) {
        if (p >= 0 && !reachable[static_cast<std::size_t>(p)]) stack.push_back(p);
      }
    }
  }

  std::vector<Node> nodes_;
};

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::int64_t step = 0;
};

// Standard Adam with bias correction. Aborts on non-finite gradients so a
// diverging run fails loudly instead of training on garbage.
inline void adam_step(std::span<Param* const> params, AdamState& state, double lr,
                      double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8) {
  if (state.m.empty()) {
    for (const Param* p : params) {
      state.m.push_back(Tensor::zeros(p->value.rows, p->value.cols));
      state.v.push_back(Tensor::zeros(p->value.rows, p->value.cols));
    }
  }
  if (state.m.size() != params.size()) {
    throw std::invalid_argument("adam_step: state does not match parameter list");
  }
  // validate first so an abort cannot leave a half-applied update
  for (const Param* p : params) {
    if (!p->grad.same_shape(p->value)) {
      throw std::invalid_argument("adam_step: gradient shape mismatch for " + p->name);
    }
    for (double g : p->grad.data) {
      if (!std::isfinite(g)) {
        throw std::runtime_error("adam_step: non-finite gradient in parameter " + p->name);
      }
    }
  }
  state.step += 1;
  double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
  double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Param& p = *params[pi];
    Tensor& m = state.m[pi];
    Tensor& v = state.v[pi];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      double g = p.grad.data[i];
      m.data[i] = beta1 * m.data[i] + (1.0 - beta1) * g;
      v.data[i] = beta2 * v.data[i] + (1.0 - beta2) * g * g;
      double mhat = m.data[i] / bc1;
      double vhat = v.data[i] / bc2;
      p.value.data[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

// ---------------------------------------------------------------------------
// Parameter checkpoints: versioned binary bundle with an integrity checksum.
// Layout (little endian): magic "SRPB", u32 version, u32 param count, then
// per parameter {u32 name_len, name, u32 rows, u32 cols, f64 data...},
// finally u64 FNV-1a over all preceding payload bytes.
// ---------------------------------------------------------------------------

namespace detail {

class ByteWriter {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void f64(double d) { u64(std::bit_cast<std::uint64_t>(d)); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes.insert(bytes.end(), s.begin(), s.end());
  }
  std::vector<char> bytes;
};

class ByteReader {
 public:
  explicit ByteReader(std::vector<char> b) : bytes_(std::move(b)) {}
  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(take()) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(take()) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    std::uint32_t n = u32();
    return raw(n);
  }
  std::string raw(std::size_t n) {
    std::string s;
    for (std::size_t i = 0; i < n; ++i) s.push_back(static_cast<char>(take()));
    return s;
  }
  std::size_t pos() const { return pos_; }
  std::size_t size() const { return bytes_.size(); }

 private:
  unsigned char take() {
    if (pos_ >= bytes_.size()) throw std::runtime_error("checkpoint truncated");
    return static_cast<unsigned char>(bytes_[pos_++]);
  }
  std::vector<char> bytes_;
  std::size_t pos_ = 0;
};

inline std::uint64_t fnv1a(std::span<const char> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace detail

inline void save_parameters(const std::string& path, std::span<const Param* const> params) {
  detail::ByteWriter w;
  w.bytes.insert(w.bytes.end(), {'S', 'R', 'P', 'B'});
  w.u32(1);
  w.u32(static_cast<std::uint32_t>(params.size()));
  for (const Param* p : params) {
    w.str(p->name);
    w.u32(static_cast<std::uint32_t>(p->value.rows));
    w.u32(static_cast<std::uint32_t>(p->value.cols));
    for (double d : p->value.data) w.f64(d);
  }
  std::uint64_t checksum = detail::fnv1a(w.bytes);
  w.u64(checksum);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write checkpoint: " + path);
  f.write(w.bytes.data(), static_cast<std::streamsize>(w.bytes.size()));
}

inline void load_parameters(const std::string& path, std::span<Param* const> params) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open checkpoint: " + path);
  std::vector<char> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (bytes.size() < 20) throw std::runtime_error("checkpoint truncated: " + path);
  std::span<const char> payload(bytes.data(), bytes.size() - 8);
  detail::ByteReader tail(std::vector<char>(bytes.end() - 8, bytes.end()));
  if (detail::fnv1a(payload) != tail.u64()) {
    throw std::runtime_error("checkpoint checksum mismatch: " + path);
  }
  detail::ByteReader r(std::vector<char>(payload.begin(), payload.end()));
  if (r.raw(4) != "SRPB") throw std::runtime_error("bad checkpoint magic: " + path);
  if (r.u32() != 1) throw std::runtime_error("unsupported checkpoint version: " + path);
  std::uint32_t count = r.u32();
  if (count != params.size()) {
    throw std::runtime_error("checkpoint holds " + std::to_string(count) + " parameters, expected " +
                             std::to_string(params.size()));
  }
  for (Param* p : params) {
    std::string name = r.str();
    int rows = static_cast<int>(r.u32());
    int cols = static_cast<int>(r.u32());
    if (name != p->name || rows != p->value.rows || cols != p->value.cols) {
      throw std::runtime_error("checkpoint parameter mismatch: expected " + p->name + " " +
                               std::to_string(p->value.rows) + "x" + std::to_string(p->value.cols) +
                               ", found " + name + " " + std::to_string(rows) + "x" +
                               std::to_string(cols));
    }
    for (double& d : p->value.data) d = r.f64();
  }
}

}  // namespace seqrec::ad
