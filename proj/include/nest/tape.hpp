// nest/tape.hpp

// Copyright 2026  nest authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "nest/errors.hpp"

namespace nest {

// Reverse-mode autodiff on an append-only tape. Appending keeps nodes in
// topological order, so running the recorded backward closures in reverse
// visits every op after all of its consumers; gradients accumulate with +=
// at fan-out. Activations and gradients are double; parameters stay float32
// (the checkpoint payload type) and are promoted on read.

struct Mat {
  size_t rows = 0;
  size_t cols = 0;
  std::vector<double> d;

  Mat() = default;
  Mat(size_t r, size_t c) : rows(r), cols(c), d(r * c, 0.0) {}

  double &operator()(size_t r, size_t c) { return d[r * cols + c]; }
  double operator()(size_t r, size_t c) const { return d[r * cols + c]; }
  std::span<double> Row(size_t r) { return {d.data() + r * cols, cols}; }
  std::span<const double> Row(size_t r) const {
    return {d.data() + r * cols, cols};
  }
};

// A named model tensor: float32 values, double gradient accumulator.
// `trainable` gates optimizer updates and grad-check sampling; `decay` gates
// decoupled weight decay (off for biases and norm affine terms).
struct ParamTensor {
  std::vector<size_t> shape;
  std::vector<float> v;
  std::vector<double> g;
  bool trainable = true;
  bool decay = true;

  size_t Size() const { return v.size(); }
  void ZeroGrad() { g.assign(v.size(), 0.0); }
};

using NamedParams = std::map<std::string, ParamTensor>;

inline void ZeroGrads(NamedParams &params) {
  for (auto &[name, p] : params) p.ZeroGrad();
}

// Softmax of one row, max-subtracted. Shared by attention and the loss.
inline void SoftmaxInto(std::span<const double> x, std::span<double> out) {
  double mx = x[0];
  for (double v : x) mx = std::max(mx, v);
  double sum = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    out[i] = std::exp(x[i] - mx);
    sum += out[i];
  }
  const double inv = 1.0 / sum;
  for (auto &v : out) v *= inv;
}

class Tape {
 public:
  // Single-coordinate parameter perturbation, consulted on every parameter
  // read. This is what the finite-difference oracle uses: the perturbed
  // value lives in double, so probes are not quantized to float32.
  struct Override {
    const ParamTensor *tensor = nullptr;
    size_t index = 0;
    double delta = 0.0;
  };

  void SetOverride(const ParamTensor *tensor, size_t index, double delta) {
    override_ = {tensor, index, delta};
  }
  void ClearOverride() { override_ = {}; }

  const Mat &Value(size_t id) const { return nodes_[id].value; }
  Mat &Grad(size_t id) { return nodes_[id].grad; }

  size_t Input(Mat m) {
    return PushNode(std::move(m), nullptr);
  }

  size_t InputRows(std::span<const float> data, size_t rows, size_t cols) {
    Mat m(rows, cols);
    for (size_t i = 0; i < rows * cols; ++i) m.d[i] = data[i];
    return PushNode(std::move(m), nullptr);
  }

  // 1-D convolution over time with zero padding; out length = rows/stride.
  // x: T x Cin, w: {Cout, Cin, K}, b: {Cout}.
  size_t Conv1d(size_t x, ParamTensor &w, ParamTensor &b, size_t stride,
                size_t pad_left) {
    const Mat &in = Value(x);
    const size_t c_out = w.shape[0], c_in = w.shape[1], k = w.shape[2];
    if (c_in != in.cols) throw DimMismatchError("conv1d: channel mismatch");
    const size_t t_out = in.rows / stride;
    Mat out(t_out, c_out);
    for (size_t t = 0; t < t_out; ++t) {
      for (size_t co = 0; co < c_out; ++co) {
        double acc = P(b, co);
        for (size_t kk = 0; kk < k; ++kk) {
          const int64_t ti = static_cast<int64_t>(t * stride + kk) -
                             static_cast<int64_t>(pad_left);
          if (ti < 0 || ti >= static_cast<int64_t>(in.rows)) continue;
          const size_t wbase = (co * c_in) * k + kk;
          for (size_t ci = 0; ci < c_in; ++ci) {
            acc += P(w, wbase + ci * k) * in(static_cast<size_t>(ti), ci);
          }
        }
        out(t, co) = acc;
      }
    }
    return PushNode(std::move(out), [this, x, &w, &b, stride, pad_left,
                                     id = NextId()]() {
      const Mat &in = Value(x);
      const Mat &g = nodes_[id].grad;
      Mat &gin = nodes_[x].grad;
      const size_t c_out = w.shape[0], c_in = w.shape[1], k = w.shape[2];
      for (size_t t = 0; t < g.rows; ++t) {
        for (size_t co = 0; co < c_out; ++co) {
          const double go = g(t, co);
          if (go == 0.0) continue;
          b.g[co] += go;
          for (size_t kk = 0; kk < k; ++kk) {
            const int64_t ti = static_cast<int64_t>(t * stride + kk) -
                               static_cast<int64_t>(pad_left);
            if (ti < 0 || ti >= static_cast<int64_t>(in.rows)) continue;
            const size_t wbase = (co * c_in) * k + kk;
            for (size_t ci = 0; ci < c_in; ++ci) {
              w.g[wbase + ci * k] += go * in(static_cast<size_t>(ti), ci);
              gin(static_cast<size_t>(ti), ci) += go * P(w, wbase + ci * k);
            }
          }
        }
      }
    });
  }

  size_t Gelu(size_t x) {
    static const double s = std::sqrt(2.0 / std::numbers::pi);
    const Mat &in = Value(x);
    Mat out(in.rows, in.cols);
    for (size_t i = 0; i < in.d.size(); ++i) {
      const double v = in.d[i];
      out.d[i] = 0.5 * v * (1.0 + std::tanh(s * (v + 0.044715 * v * v * v)));
    }
    return PushNode(std::move(out), [this, x, id = NextId()]() {
      const Mat &in = Value(x);
      const Mat &g = nodes_[id].grad;
      Mat &gin = nodes_[x].grad;
      for (size_t i = 0; i < in.d.size(); ++i) {
        const double v = in.d[i];
        const double u = s * (v + 0.044715 * v * v * v);
        const double th = std::tanh(u);
        const double sech2 = 1.0 - th * th;
        const double local = 0.5 * (1.0 + th) +
                             0.5 * v * sech2 * s * (1.0 + 3.0 * 0.044715 * v * v);
        gin.d[i] += local * g.d[i];
      }
    });
  }

  // Per-row layer norm with affine terms; eps 1e-5.
  size_t LayerNorm(size_t x, ParamTensor &scale, ParamTensor &offset) {
    constexpr double eps = 1e-5;
    const Mat &in = Value(x);
    Mat out(in.rows, in.cols);
    for (size_t r = 0; r < in.rows; ++r) {
      const auto row = in.Row(r);
      double mean = 0.0;
      for (double v : row) mean += v;
      mean /= static_cast<double>(in.cols);
      double var = 0.0;
      for (double v : row) var += (v - mean) * (v - mean);
      var /= static_cast<double>(in.cols);
      const double rstd = 1.0 / std::sqrt(var + eps);
      for (size_t c = 0; c < in.cols; ++c) {
        out(r, c) = (row[c] - mean) * rstd * P(scale, c) + P(offset, c);
      }
    }
    return PushNode(std::move(out), [this, x, &scale, &offset,
                                     id = NextId()]() {
      const Mat &in = Value(x);
      const Mat &g = nodes_[id].grad;
      Mat &gin = nodes_[x].grad;
      const double n = static_cast<double>(in.cols);
      std::vector<double> xhat(in.cols), gs(in.cols);
      for (size_t r = 0; r < in.rows; ++r) {
        const auto row = in.Row(r);
        double mean = 0.0;
        for (double v : row) mean += v;
        mean /= n;
        double var = 0.0;
        for (double v : row) var += (v - mean) * (v - mean);
        var /= n;
        const double rstd = 1.0 / std::sqrt(var + eps);
        double gs_mean = 0.0, gsx_mean = 0.0;
        for (size_t c = 0; c < in.cols; ++c) {
          xhat[c] = (row[c] - mean) * rstd;
          gs[c] = g(r, c) * P(scale, c);
          scale.g[c] += g(r, c) * xhat[c];
          offset.g[c] += g(r, c);
          gs_mean += gs[c];
          gsx_mean += gs[c] * xhat[c];
        }
        gs_mean /= n;
        gsx_mean /= n;
        for (size_t c = 0; c < in.cols; ++c) {
          gin(r, c) += rstd * (gs[c] - gs_mean - xhat[c] * gsx_mean);
        }
      }
    });
  }

  // x: T x din, w: {din, dout}, optional bias {dout}.
  size_t Linear(size_t x, ParamTensor &w, ParamTensor *b = nullptr) {
    const Mat &in = Value(x);
    const size_t din = w.shape[0], dout = w.shape[1];
    if (din != in.cols) throw DimMismatchError("linear: dim mismatch");
    Mat out(in.rows, dout);
    for (size_t t = 0; t < in.rows; ++t) {
      for (size_t j = 0; j < dout; ++j) {
        double acc = b != nullptr ? P(*b, j) : 0.0;
        for (size_t i = 0; i < din; ++i) acc += in(t, i) * P(w, i * dout + j);
        out(t, j) = acc;
      }
    }
    return PushNode(std::move(out), [this, x, &w, b, id = NextId()]() {
      const Mat &in = Value(x);
      const Mat &g = nodes_[id].grad;
      Mat &gin = nodes_[x].grad;
      const size_t din = w.shape[0], dout = w.shape[1];
      for (size_t t = 0; t < in.rows; ++t) {
        for (size_t j = 0; j < dout; ++j) {
          const double go = g(t, j);
          if (go == 0.0) continue;
          if (b != nullptr) b->g[j] += go;
          for (size_t i = 0; i < din; ++i) {
            w.g[i * dout + j] += go * in(t, i);
            gin(t, i) += go * P(w, i * dout + j);
          }
        }
      }
    });
  }

  size_t Add(size_t a, size_t b) {
    const Mat &ma = Value(a), &mb = Value(b);
    if (ma.rows != mb.rows || ma.cols != mb.cols) {
      throw DimMismatchError("add: shape mismatch");
    }
    Mat out = ma;
    for (size_t i = 0; i < out.d.size(); ++i) out.d[i] += mb.d[i];
    return PushNode(std::move(out), [this, a, b, id = NextId()]() {
      const Mat &g = nodes_[id].grad;
      Mat &ga = nodes_[a].grad;
      Mat &gb = nodes_[b].grad;
      for (size_t i = 0; i < g.d.size(); ++i) {
        ga.d[i] += g.d[i];
        gb.d[i] += g.d[i];
      }
    });
  }

  // out = x + table[0..rows); the table is a parameter tensor of shape
  // {max_rows, cols} (the sinusoidal position table).
  size_t AddRows(size_t x, ParamTensor &table) {
    const Mat &in = Value(x);
    const size_t cols = table.shape[1];
    if (cols != in.cols || in.rows > table.shape[0]) {
      throw DimMismatchError("add_rows: table too small");
    }
    Mat out = in;
    for (size_t r = 0; r < in.rows; ++r) {
      for (size_t c = 0; c < cols; ++c) out(r, c) += P(table, r * cols + c);
    }
    return PushNode(std::move(out), [this, x, &table, id = NextId()]() {
      const Mat &g = nodes_[id].grad;
      Mat &gin = nodes_[x].grad;
      for (size_t i = 0; i < g.d.size(); ++i) {
        gin.d[i] += g.d[i];
        table.g[i] += g.d[i];
      }
    });
  }

  size_t Scale(size_t x, double c) {
    Mat out = Value(x);
    for (auto &v : out.d) v *= c;
    return PushNode(std::move(out), [this, x, c, id = NextId()]() {
      const Mat &g = nodes_[id].grad;
      Mat &gin = nodes_[x].grad;
      for (size_t i = 0; i < g.d.size(); ++i) gin.d[i] += c * g.d[i];
    });
  }

  // a: T x d, b: S x d -> T x S (a b^T); attention scores.
  size_t MatmulNT(size_t a, size_t b) {
    const Mat &ma = Value(a), &mb = Value(b);
    if (ma.cols != mb.cols) throw DimMismatchError("matmul_nt: dim mismatch");
    Mat out(ma.rows, mb.rows);
    for (size_t t = 0; t < ma.rows; ++t) {
      for (size_t s = 0; s < mb.rows; ++s) {
        double acc = 0.0;
        for (size_t i = 0; i < ma.cols; ++i) acc += ma(t, i) * mb(s, i);
        out(t, s) = acc;
      }
    }
    return PushNode(std::move(out), [this, a, b, id = NextId()]() {
      const Mat &ma = Value(a), &mb = Value(b);
      const Mat &g = nodes_[id].grad;
      Mat &ga = nodes_[a].grad;
      Mat &gb = nodes_[b].grad;
      for (size_t t = 0; t < ma.rows; ++t) {
        for (size_t s = 0; s < mb.rows; ++s) {
          const double go = g(t, s);
          if (go == 0.0) continue;
          for (size_t i = 0; i < ma.cols; ++i) {
            ga(t, i) += go * mb(s, i);
            gb(s, i) += go * ma(t, i);
          }
        }
      }
    });
  }

  // a: T x S, b: S x d -> T x d.
  size_t MatmulNN(size_t a, size_t b) {
    const Mat &ma = Value(a), &mb = Value(b);
    if (ma.cols != mb.rows) throw DimMismatchError("matmul_nn: dim mismatch");
    Mat out(ma.rows, mb.cols);
    for (size_t t = 0; t < ma.rows; ++t) {
      for (size_t s = 0; s < ma.cols; ++s) {
        const double av = ma(t, s);
        if (av == 0.0) continue;
        for (size_t j = 0; j < mb.cols; ++j) out(t, j) += av * mb(s, j);
      }
    }
    return PushNode(std::move(out), [this, a, b, id = NextId()]() {
      const Mat &ma = Value(a), &mb = Value(b);
      const Mat &g = nodes_[id].grad;
      Mat &ga = nodes_[a].grad;
      Mat &gb = nodes_[b].grad;
      for (size_t t = 0; t < ma.rows; ++t) {
        for (size_t j = 0; j < mb.cols; ++j) {
          const double go = g(t, j);
          if (go == 0.0) continue;
          for (size_t s = 0; s < ma.cols; ++s) {
            ga(t, s) += go * mb(s, j);
            gb(s, j) += go * ma(t, s);
          }
        }
      }
    });
  }

  size_t SoftmaxRows(size_t x) {
    const Mat &in = Value(x);
    Mat out(in.rows, in.cols);
    for (size_t r = 0; r < in.rows; ++r) SoftmaxInto(in.Row(r), out.Row(r));
    return PushNode(std::move(out), [this, x, id = NextId()]() {
      const Mat &p = nodes_[id].value;
      const Mat &g = nodes_[id].grad;
      Mat &gin = nodes_[x].grad;
      for (size_t r = 0; r < p.rows; ++r) {
        double dot = 0.0;
        for (size_t c = 0; c < p.cols; ++c) dot += g(r, c) * p(r, c);
        for (size_t c = 0; c < p.cols; ++c) {
          gin(r, c) += p(r, c) * (g(r, c) - dot);
        }
      }
    });
  }

  // Scalar terminal sum(weights * x); test utility for probing upstream
  // gradients directly.
  size_t DotConst(size_t x, Mat weights) {
    const Mat &in = Value(x);
    if (weights.rows != in.rows || weights.cols != in.cols) {
      throw DimMismatchError("dot_const: shape mismatch");
    }
    Mat out(1, 1);
    for (size_t i = 0; i < in.d.size(); ++i) out.d[0] += weights.d[i] * in.d[i];
    return PushNode(std::move(out),
                    [this, x, w = std::move(weights), id = NextId()]() {
                      const double go = nodes_[id].grad.d[0];
                      Mat &gin = nodes_[x].grad;
                      for (size_t i = 0; i < gin.d.size(); ++i) {
                        gin.d[i] += go * w.d[i];
                      }
                    });
  }

  struct CeOut {
    size_t node = 0;     // 1x1 loss node
    double loss = 0.0;   // mean over positions of -ln softmax[target]
    size_t correct = 0;  // argmax == target count over positions
  };

  // Cross entropy averaged over the selected rows of `logits`. The empty
  // case is the caller's skipped-step path, not a zero-loss node.
  CeOut MaskedCe(size_t logits, std::span<const uint32_t> targets,
                 std::span<const size_t> positions) {
    if (positions.empty()) {
      throw InvalidSpecError("masked_ce: no positions selected");
    }
    const Mat &lg = Value(logits);
    if (targets.size() != lg.rows) {
      throw DimMismatchError("masked_ce: targets length != logits rows");
    }
    for (size_t w : positions) {
      if (w >= lg.rows) throw IndexOutOfRangeError("masked_ce: position OOB");
    }
    CeOut result;
    const size_t n = positions.size();
    Mat probs(n, lg.cols);
    double loss = 0.0;
    for (size_t i = 0; i < n; ++i) {
      const size_t w = positions[i];
      SoftmaxInto(lg.Row(w), probs.Row(i));
      const uint32_t t = targets[w];
      if (t >= lg.cols) throw IndexOutOfRangeError("masked_ce: target OOB");
      loss += -std::log(probs(i, t));
      const auto row = lg.Row(w);
      const size_t arg = static_cast<size_t>(
          std::max_element(row.begin(), row.end()) - row.begin());
      if (arg == t) ++result.correct;
    }
    loss /= static_cast<double>(n);
    Mat out(1, 1);
    out.d[0] = loss;
    result.loss = loss;
    std::vector<uint32_t> tgt(targets.begin(), targets.end());
    std::vector<size_t> pos(positions.begin(), positions.end());
    result.node = PushNode(
        std::move(out), [this, logits, probs = std::move(probs),
                         tgt = std::move(tgt), pos = std::move(pos),
                         id = NextId()]() {
          const double go = nodes_[id].grad.d[0];
          Mat &gin = nodes_[logits].grad;
          const double inv = go / static_cast<double>(pos.size());
          for (size_t i = 0; i < pos.size(); ++i) {
            const size_t w = pos[i];
            for (size_t c = 0; c < gin.cols; ++c) {
              gin(w, c) += inv * probs(i, c);
            }
            gin(w, tgt[w]) -= inv;
          }
        });
    return result;
  }

  // Seeds the terminal gradient and replays the tape in reverse.
  void Backward(size_t terminal, double seed = 1.0) {
    for (auto &node : nodes_) {
      node.grad = Mat(node.value.rows, node.value.cols);
    }
    nodes_[terminal].grad.d.assign(nodes_[terminal].grad.d.size(), 0.0);
    nodes_[terminal].grad.d[0] = seed;
    for (size_t i = nodes_.size(); i-- > 0;) {
      if (nodes_[i].backward) nodes_[i].backward();
    }
  }

 private:
  struct Node {
    Mat value;
    Mat grad;
    std::function<void()> backward;
  };

  size_t NextId() const { return nodes_.size(); }

  size_t PushNode(Mat value, std::function<void()> backward) {
    nodes_.push_back(Node{std::move(value), Mat{}, std::move(backward)});
    return nodes_.size() - 1;
  }

  // Parameter read with the finite-difference override applied.
  double P(const ParamTensor &p, size_t i) const {
    double v = p.v[i];
    if (override_.tensor == &p && override_.index == i) v += override_.delta;
    return v;
  }

  std::vector<Node> nodes_;
  Override override_;
};

}  // namespace nest
