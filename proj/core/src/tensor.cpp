// Copyright 2026 The Mono2Binaural Authors. All Rights Reserved.
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

#include "m2b/tensor.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "m2b/util.hpp"

namespace m2b::nn {

int64_t numel(const std::vector<int>& shape) {
  int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}

std::string shape_str(const std::vector<int>& shape) {
  std::string s = "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

namespace {

void check_shape(const std::vector<int>& shape) {
  if (shape.empty() || shape.size() > 4)
    throw ShapeMismatch("tensor rank must be 1..4, got " + shape_str(shape));
  for (int d : shape) {
    if (d <= 0) throw ShapeMismatch("nonpositive dim in " + shape_str(shape));
  }
}

template <typename T>
using EMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using EMap = Eigen::Map<EMat<T>>;
template <typename T>
using ECMap = Eigen::Map<const EMat<T>>;

}  // namespace

// --- Tensor basics -----------------------------------------------------

template <typename T>
Tensor<T>::Tensor(std::vector<int> shape, bool requires_grad) {
  check_shape(shape);
  node_ = std::make_shared<TensorNode<T>>();
  node_->value.assign(static_cast<size_t>(nn::numel(shape)), T(0));
  node_->shape = std::move(shape);
  node_->requires_grad = requires_grad;
}

template <typename T>
Tensor<T> Tensor<T>::zeros(std::vector<int> shape, bool requires_grad) {
  return Tensor(std::move(shape), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(std::vector<int> shape, T v, bool requires_grad) {
  Tensor t(std::move(shape), requires_grad);
  std::fill(t.value().begin(), t.value().end(), v);
  return t;
}

template <typename T>
Tensor<T> Tensor<T>::from_vector(std::vector<int> shape, std::vector<T> values,
                                 bool requires_grad) {
  check_shape(shape);
  if (static_cast<int64_t>(values.size()) != nn::numel(shape))
    throw ShapeMismatch("value count does not match " + shape_str(shape));
  Tensor t;
  t.node_ = std::make_shared<TensorNode<T>>();
  t.node_->shape = std::move(shape);
  t.node_->value = std::move(values);
  t.node_->requires_grad = requires_grad;
  return t;
}

template <typename T>
Tensor<T> Tensor<T>::randn(std::vector<int> shape, Rng& rng, T stddev,
                           bool requires_grad) {
  Tensor t(std::move(shape), requires_grad);
  for (auto& v : t.value()) v = static_cast<T>(rng.normal()) * stddev;
  return t;
}

template <typename T>
std::vector<T>& Tensor<T>::grad() {
  node_->ensure_grad();
  return node_->grad;
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) throw ShapeMismatch("item() on non-scalar tensor");
  return node_->value[0];
}

template <typename T>
void Tensor<T>::backward() {
  if (!defined() || numel() != 1)
    throw ShapeMismatch("backward() needs a defined scalar tensor");

  // Post-order DFS over parents; reversing yields root-to-leaf order.
  std::vector<TensorNode<T>*> order;
  std::unordered_set<TensorNode<T>*> visited;
  struct Frame {
    TensorNode<T>* node;
    size_t next;
  };
  std::vector<Frame> stack{{node_.get(), 0}};
  visited.insert(node_.get());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next < f.node->parents.size()) {
      TensorNode<T>* p = f.node->parents[f.next++].node();
      if (visited.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(f.node);
      stack.pop_back();
    }
  }

  node_->ensure_grad();
  node_->grad[0] = T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorNode<T>* n = *it;
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
}

template <typename T>
Tensor<T> make_op_result(std::vector<int> shape, std::vector<Tensor<T>> parents,
                         std::function<void(TensorNode<T>&)> backward) {
  bool needs_grad = false;
  for (const auto& p : parents) needs_grad |= p.requires_grad();
  Tensor<T> out(std::move(shape), needs_grad);
  if (needs_grad) {
    out.node()->parents = std::move(parents);
    out.node()->backward = std::move(backward);
  }
  return out;
}

// --- Elementwise and reduction ops ------------------------------------

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape())
    throw ShapeMismatch("add: " + shape_str(a.shape()) + " vs " +
                        shape_str(b.shape()));
  Tensor<T> out = make_op_result<T>(
      a.shape(), {a, b}, [](TensorNode<T>& self) {
        for (size_t k = 0; k < 2; ++k) {
          auto& p = self.parents[k];
          if (!p.requires_grad()) continue;
          auto& g = p.grad();
          for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
      });
  const auto& av = a.value();
  const auto& bv = b.value();
  auto& ov = out.value();
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] + bv[i];
  return out;
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape())
    throw ShapeMismatch("sub: " + shape_str(a.shape()) + " vs " +
                        shape_str(b.shape()));
  Tensor<T> out = make_op_result<T>(
      a.shape(), {a, b}, [](TensorNode<T>& self) {
        if (self.parents[0].requires_grad()) {
          auto& g = self.parents[0].grad();
          for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
        if (self.parents[1].requires_grad()) {
          auto& g = self.parents[1].grad();
          for (size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
        }
      });
  const auto& av = a.value();
  const auto& bv = b.value();
  auto& ov = out.value();
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] - bv[i];
  return out;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape())
    throw ShapeMismatch("mul: " + shape_str(a.shape()) + " vs " +
                        shape_str(b.shape()));
  std::vector<T> av = a.value(), bv = b.value();
  Tensor<T> out = make_op_result<T>(
      a.shape(), {a, b},
      [av, bv](TensorNode<T>& self) {
        if (self.parents[0].requires_grad()) {
          auto& g = self.parents[0].grad();
          for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * bv[i];
        }
        if (self.parents[1].requires_grad()) {
          auto& g = self.parents[1].grad();
          for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * av[i];
        }
      });
  auto& ov = out.value();
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * bv[i];
  return out;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T s) {
  Tensor<T> out = make_op_result<T>(
      a.shape(), {a}, [s](TensorNode<T>& self) {
        if (!self.parents[0].requires_grad()) return;
        auto& g = self.parents[0].grad();
        for (size_t i = 0; i < g.size(); ++i) g[i] += s * self.grad[i];
      });
  const auto& av = a.value();
  auto& ov = out.value();
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = s * av[i];
  return out;
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  Tensor<T> out = make_op_result<T>(
      {1}, {a}, [](TensorNode<T>& self) {
        if (!self.parents[0].requires_grad()) return;
        auto& g = self.parents[0].grad();
        for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[0];
      });
  T acc = T(0);
  for (T v : a.value()) acc += v;
  out.value()[0] = acc;
  return out;
}

template <typename T>
Tensor<T> weighted_sum(const Tensor<T>& a, const std::vector<T>& weights) {
  if (weights.size() != a.value().size())
    throw ShapeMismatch("weighted_sum: weight count mismatch");
  Tensor<T> out = make_op_result<T>(
      {1}, {a}, [weights](TensorNode<T>& self) {
        if (!self.parents[0].requires_grad()) return;
        auto& g = self.parents[0].grad();
        for (size_t i = 0; i < g.size(); ++i)
          g[i] += self.grad[0] * weights[i];
      });
  T acc = T(0);
  const auto& av = a.value();
  for (size_t i = 0; i < av.size(); ++i) acc += av[i] * weights[i];
  out.value()[0] = acc;
  return out;
}

// --- Activations --------------------------------------------------------

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  std::vector<T> xv = x.value();
  Tensor<T> out = make_op_result<T>(
      x.shape(), {x}, [xv](TensorNode<T>& self) {
        if (!self.parents[0].requires_grad()) return;
        auto& g = self.parents[0].grad();
        for (size_t i = 0; i < g.size(); ++i) {
          if (xv[i] > T(0)) g[i] += self.grad[i];
        }
      });
  auto& ov = out.value();
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = xv[i] > T(0) ? xv[i] : T(0);
  return out;
}

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, T slope) {
  std::vector<T> xv = x.value();
  Tensor<T> out = make_op_result<T>(
      x.shape(), {x}, [xv, slope](TensorNode<T>& self) {
        if (!self.parents[0].requires_grad()) return;
        auto& g = self.parents[0].grad();
        for (size_t i = 0; i < g.size(); ++i) {
          g[i] += self.grad[i] * (xv[i] > T(0) ? T(1) : slope);
        }
      });
  auto& ov = out.value();
  for (size_t i = 0; i < ov.size(); ++i)
    ov[i] = xv[i] > T(0) ? xv[i] : slope * xv[i];
  return out;
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  const auto& xv = x.value();
  std::vector<T> yv(xv.size());
  for (size_t i = 0; i < xv.size(); ++i) {
    yv[i] = T(1) / (T(1) + std::exp(-xv[i]));
  }
  Tensor<T> out = make_op_result<T>(
      x.shape(), {x}, [yv](TensorNode<T>& self) {
        if (!self.parents[0].requires_grad()) return;
        auto& g = self.parents[0].grad();
        for (size_t i = 0; i < g.size(); ++i) {
          g[i] += self.grad[i] * yv[i] * (T(1) - yv[i]);
        }
      });
  out.value() = yv;
  return out;
}

template <typename T>
Tensor<T> scaled_sigmoid(const Tensor<T>& x) {
  const auto& xv = x.value();
  std::vector<T> sv(xv.size());
  for (size_t i = 0; i < xv.size(); ++i) {
    sv[i] = T(1) / (T(1) + std::exp(-xv[i]));
  }
  Tensor<T> out = make_op_result<T>(
      x.shape(), {x}, [sv](TensorNode<T>& self) {
        if (!self.parents[0].requires_grad()) return;
        auto& g = self.parents[0].grad();
        for (size_t i = 0; i < g.size(); ++i) {
          g[i] += self.grad[i] * T(2) * sv[i] * (T(1) - sv[i]);
        }
      });
  auto& ov = out.value();
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = T(2) * sv[i] - T(1);
  return out;
}

// --- Losses -------------------------------------------------------------

template <typename T>
Tensor<T> mse_loss(const Tensor<T>& pred, const Tensor<T>& target) {
  if (pred.shape() != target.shape())
    throw ShapeMismatch("mse_loss: " + shape_str(pred.shape()) + " vs " +
                        shape_str(target.shape()));
  const auto& pv = pred.value();
  const auto& tv = target.value();
  const T inv_n = T(1) / static_cast<T>(pv.size());
  std::vector<T> diff(pv.size());
  T acc = T(0);
  for (size_t i = 0; i < pv.size(); ++i) {
    diff[i] = pv[i] - tv[i];
    acc += diff[i] * diff[i];
  }
  Tensor<T> out = make_op_result<T>(
      {1}, {pred, target}, [diff, inv_n](TensorNode<T>& self) {
        T g0 = self.grad[0];
        if (self.parents[0].requires_grad()) {
          auto& g = self.parents[0].grad();
          for (size_t i = 0; i < g.size(); ++i)
            g[i] += g0 * T(2) * inv_n * diff[i];
        }
        if (self.parents[1].requires_grad()) {
          auto& g = self.parents[1].grad();
          for (size_t i = 0; i < g.size(); ++i)
            g[i] -= g0 * T(2) * inv_n * diff[i];
        }
      });
  out.value()[0] = acc * inv_n;
  return out;
}

template <typename T>
Tensor<T> l1_loss(const Tensor<T>& pred, const Tensor<T>& target) {
  if (pred.shape() != target.shape())
    throw ShapeMismatch("l1_loss: " + shape_str(pred.shape()) + " vs " +
                        shape_str(target.shape()));
  const auto& pv = pred.value();
  const auto& tv = target.value();
  const T inv_n = T(1) / static_cast<T>(pv.size());
  std::vector<T> sign(pv.size());
  T acc = T(0);
  for (size_t i = 0; i < pv.size(); ++i) {
    T d = pv[i] - tv[i];
    acc += std::abs(d);
    sign[i] = d > T(0) ? T(1) : (d < T(0) ? T(-1) : T(0));
  }
  Tensor<T> out = make_op_result<T>(
      {1}, {pred, target}, [sign, inv_n](TensorNode<T>& self) {
        T g0 = self.grad[0];
        if (self.parents[0].requires_grad()) {
          auto& g = self.parents[0].grad();
          for (size_t i = 0; i < g.size(); ++i) g[i] += g0 * inv_n * sign[i];
        }
        if (self.parents[1].requires_grad()) {
          auto& g = self.parents[1].grad();
          for (size_t i = 0; i < g.size(); ++i) g[i] -= g0 * inv_n * sign[i];
        }
      });
  out.value()[0] = acc * inv_n;
  return out;
}

// --- Convolutions ---------------------------------------------------------

namespace {

struct ConvGeom {
  int in_c, in_h, in_w;
  int out_h, out_w;
  int k, stride, pad;
};

// col is [in_c*k*k, out_h*out_w] row-major.
template <typename T>
void im2col(const T* img, const ConvGeom& g, T* col) {
  const int hw = g.out_h * g.out_w;
  for (int c = 0; c < g.in_c; ++c) {
    const T* src = img + static_cast<size_t>(c) * g.in_h * g.in_w;
    for (int ki = 0; ki < g.k; ++ki) {
      for (int kj = 0; kj < g.k; ++kj) {
        T* dst = col + (static_cast<size_t>(c) * g.k * g.k + ki * g.k + kj) * hw;
        for (int i = 0; i < g.out_h; ++i) {
          int yy = i * g.stride - g.pad + ki;
          if (yy < 0 || yy >= g.in_h) {
            std::fill(dst + static_cast<size_t>(i) * g.out_w,
                      dst + static_cast<size_t>(i + 1) * g.out_w, T(0));
            continue;
          }
          const T* row = src + static_cast<size_t>(yy) * g.in_w;
          for (int j = 0; j < g.out_w; ++j) {
            int xx = j * g.stride - g.pad + kj;
            dst[static_cast<size_t>(i) * g.out_w + j] =
                (xx >= 0 && xx < g.in_w) ? row[xx] : T(0);
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-adds col back into img (img must be zeroed).
template <typename T>
void col2im(const T* col, const ConvGeom& g, T* img) {
  const int hw = g.out_h * g.out_w;
  for (int c = 0; c < g.in_c; ++c) {
    T* dst = img + static_cast<size_t>(c) * g.in_h * g.in_w;
    for (int ki = 0; ki < g.k; ++ki) {
      for (int kj = 0; kj < g.k; ++kj) {
        const T* src =
            col + (static_cast<size_t>(c) * g.k * g.k + ki * g.k + kj) * hw;
        for (int i = 0; i < g.out_h; ++i) {
          int yy = i * g.stride - g.pad + ki;
          if (yy < 0 || yy >= g.in_h) continue;
          T* row = dst + static_cast<size_t>(yy) * g.in_w;
          for (int j = 0; j < g.out_w; ++j) {
            int xx = j * g.stride - g.pad + kj;
            if (xx >= 0 && xx < g.in_w)
              row[xx] += src[static_cast<size_t>(i) * g.out_w + j];
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight,
                 const Tensor<T>& bias, int stride, int pad) {
  if (x.rank() != 4 || weight.rank() != 4)
    throw ShapeMismatch("conv2d expects rank-4 input and weight");
  const int n = x.dim(0), ci = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int co = weight.dim(0), kh = weight.dim(2), kw = weight.dim(3);
  if (weight.dim(1) != ci)
    throw ShapeMismatch("conv2d: weight in-channels " +
                        std::to_string(weight.dim(1)) + " vs input " +
                        std::to_string(ci));
  if (kh != kw) throw ShapeMismatch("conv2d: only square kernels");
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != co))
    throw ShapeMismatch("conv2d: bias must be [out_channels]");
  const int oh = (h + 2 * pad - kh) / stride + 1;
  const int ow = (w + 2 * pad - kw) / stride + 1;
  if (oh <= 0 || ow <= 0) throw ShapeMismatch("conv2d: empty output");

  const ConvGeom geom{ci, h, w, oh, ow, kh, stride, pad};
  const int ckk = ci * kh * kw;
  const int hw = oh * ow;
  const size_t in_stride = static_cast<size_t>(ci) * h * w;
  const size_t out_stride = static_cast<size_t>(co) * hw;

  std::vector<Tensor<T>> parents = {x, weight};
  if (bias.defined()) parents.push_back(bias);

  Tensor<T> out = make_op_result<T>(
      {n, co, oh, ow}, parents,
      [geom, n, co, ckk, hw, in_stride, out_stride](TensorNode<T>& self) {
        Tensor<T>& x_p = self.parents[0];
        Tensor<T>& w_p = self.parents[1];
        const bool has_bias = self.parents.size() > 2;

        const std::vector<T>& gy = self.grad;
        ECMap<T> wm(w_p.value().data(), co, ckk);

        if (has_bias && self.parents[2].requires_grad()) {
          auto& gb = self.parents[2].grad();
          for (int s = 0; s < n; ++s) {
            const T* gys = gy.data() + static_cast<size_t>(s) * out_stride;
            for (int c = 0; c < co; ++c) {
              T acc = T(0);
              for (int i = 0; i < hw; ++i)
                acc += gys[static_cast<size_t>(c) * hw + i];
              gb[static_cast<size_t>(c)] += acc;
            }
          }
        }

        const bool need_dx = x_p.requires_grad();
        const bool need_dw = w_p.requires_grad();
        std::vector<T> dw_scratch;
        if (need_dw) dw_scratch.assign(static_cast<size_t>(n) * co * ckk, T(0));
        std::vector<T>* dx = need_dx ? &x_p.grad() : nullptr;

        parallel_for(n, worker_threads(), [&](int64_t s) {
          std::vector<T> col(static_cast<size_t>(ckk) * hw);
          ECMap<T> gys(gy.data() + static_cast<size_t>(s) * out_stride, co, hw);
          if (need_dw) {
            im2col(x_p.value().data() + static_cast<size_t>(s) * in_stride,
                   geom, col.data());
            EMap<T> dws(dw_scratch.data() + static_cast<size_t>(s) * co * ckk,
                        co, ckk);
            ECMap<T> colm(col.data(), ckk, hw);
            dws.noalias() = gys * colm.transpose();
          }
          if (need_dx) {
            EMap<T> dcol(col.data(), ckk, hw);
            dcol.noalias() = wm.transpose() * gys;
            std::vector<T> dximg(in_stride, T(0));
            col2im(col.data(), geom, dximg.data());
            T* dst = dx->data() + static_cast<size_t>(s) * in_stride;
            for (size_t i = 0; i < in_stride; ++i) dst[i] += dximg[i];
          }
        });

        if (need_dw) {
          auto& gw = w_p.grad();
          for (int s = 0; s < n; ++s) {
            const T* src = dw_scratch.data() + static_cast<size_t>(s) * co * ckk;
            for (size_t i = 0; i < gw.size(); ++i) gw[i] += src[i];
          }
        }
      });

  // Forward pass.
  ECMap<T> wm(weight.value().data(), co, ckk);
  const T* bias_data = bias.defined() ? bias.value().data() : nullptr;
  parallel_for(n, worker_threads(), [&](int64_t s) {
    std::vector<T> col(static_cast<size_t>(ckk) * hw);
    im2col(x.value().data() + static_cast<size_t>(s) * in_stride, geom,
           col.data());
    ECMap<T> colm(col.data(), ckk, hw);
    EMap<T> ym(out.value().data() + static_cast<size_t>(s) * out_stride, co, hw);
    ym.noalias() = wm * colm;
    if (bias_data) {
      for (int c = 0; c < co; ++c) ym.row(c).array() += bias_data[c];
    }
  });
  return out;
}

template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const Tensor<T>& weight,
                           const Tensor<T>& bias, int stride, int pad) {
  if (x.rank() != 4 || weight.rank() != 4)
    throw ShapeMismatch("conv_transpose2d expects rank-4 input and weight");
  const int n = x.dim(0), ci = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int co = weight.dim(1), kh = weight.dim(2), kw = weight.dim(3);
  if (weight.dim(0) != ci)
    throw ShapeMismatch("conv_transpose2d: weight in-channels " +
                        std::to_string(weight.dim(0)) + " vs input " +
                        std::to_string(ci));
  if (kh != kw) throw ShapeMismatch("conv_transpose2d: only square kernels");
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != co))
    throw ShapeMismatch("conv_transpose2d: bias must be [out_channels]");
  const int oh = (h - 1) * stride - 2 * pad + kh;
  const int ow = (w - 1) * stride - 2 * pad + kw;
  if (oh <= 0 || ow <= 0) throw ShapeMismatch("conv_transpose2d: empty output");

  // The output plays the role of the convolution input in im2col/col2im.
  const ConvGeom geom{co, oh, ow, h, w, kh, stride, pad};
  const int ckk = co * kh * kw;
  const int hw = h * w;
  const size_t in_stride = static_cast<size_t>(ci) * hw;
  const size_t out_stride = static_cast<size_t>(co) * oh * ow;

  std::vector<Tensor<T>> parents = {x, weight};
  if (bias.defined()) parents.push_back(bias);

  Tensor<T> out = make_op_result<T>(
      {n, co, oh, ow}, parents,
      [geom, n, ci, co, ckk, hw, in_stride, out_stride](TensorNode<T>& self) {
        Tensor<T>& x_p = self.parents[0];
        Tensor<T>& w_p = self.parents[1];
        const bool has_bias = self.parents.size() > 2;
        const std::vector<T>& gy = self.grad;
        ECMap<T> wm(w_p.value().data(), ci, ckk);

        if (has_bias && self.parents[2].requires_grad()) {
          auto& gb = self.parents[2].grad();
          const int ohw = geom.in_h * geom.in_w;
          for (int s = 0; s < n; ++s) {
            const T* gys = gy.data() + static_cast<size_t>(s) * out_stride;
            for (int c = 0; c < co; ++c) {
              T acc = T(0);
              for (int i = 0; i < ohw; ++i)
                acc += gys[static_cast<size_t>(c) * ohw + i];
              gb[static_cast<size_t>(c)] += acc;
            }
          }
        }

        const bool need_dx = x_p.requires_grad();
        const bool need_dw = w_p.requires_grad();
        std::vector<T> dw_scratch;
        if (need_dw) dw_scratch.assign(static_cast<size_t>(n) * ci * ckk, T(0));
        std::vector<T>* dx = need_dx ? &x_p.grad() : nullptr;

        parallel_for(n, worker_threads(), [&](int64_t s) {
          // col holds im2col of the upstream gradient.
          std::vector<T> col(static_cast<size_t>(ckk) * hw);
          im2col(gy.data() + static_cast<size_t>(s) * out_stride, geom,
                 col.data());
          ECMap<T> colm(col.data(), ckk, hw);
          if (need_dx) {
            EMap<T> dxs(dx->data() + static_cast<size_t>(s) * in_stride, ci, hw);
            dxs.noalias() += wm * colm;
          }
          if (need_dw) {
            ECMap<T> xs(x_p.value().data() + static_cast<size_t>(s) * in_stride,
                        ci, hw);
            EMap<T> dws(dw_scratch.data() + static_cast<size_t>(s) * ci * ckk,
                        ci, ckk);
            dws.noalias() = xs * colm.transpose();
          }
        });

        if (need_dw) {
          auto& gw = w_p.grad();
          for (int s = 0; s < n; ++s) {
            const T* src = dw_scratch.data() + static_cast<size_t>(s) * ci * ckk;
            for (size_t i = 0; i < gw.size(); ++i) gw[i] += src[i];
          }
        }
      });

  // Forward: out_n = col2im(W^T x_n), plus bias.
  ECMap<T> wm(weight.value().data(), ci, ckk);
  const T* bias_data = bias.defined() ? bias.value().data() : nullptr;
  parallel_for(n, worker_threads(), [&](int64_t s) {
    std::vector<T> col(static_cast<size_t>(ckk) * hw);
    ECMap<T> xs(x.value().data() + static_cast<size_t>(s) * in_stride, ci, hw);
    EMap<T> colm(col.data(), ckk, hw);
    colm.noalias() = wm.transpose() * xs;
    T* dst = out.value().data() + static_cast<size_t>(s) * out_stride;
    col2im(col.data(), geom, dst);
    if (bias_data) {
      const int ohw = oh * ow;
      for (int c = 0; c < co; ++c) {
        for (int i = 0; i < ohw; ++i)
          dst[static_cast<size_t>(c) * ohw + i] += bias_data[c];
      }
    }
  });
  return out;
}

// --- Batch normalization ----------------------------------------------

template <typename T>
Tensor<T> batchnorm2d(const Tensor<T>& x, const Tensor<T>& gamma,
                      const Tensor<T>& beta, std::vector<T>& running_mean,
                      std::vector<T>& running_var, bool training, T momentum,
                      T eps) {
  if (x.rank() != 4) throw ShapeMismatch("batchnorm2d expects rank-4 input");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (gamma.numel() != c || beta.numel() != c ||
      static_cast<int>(running_mean.size()) != c ||
      static_cast<int>(running_var.size()) != c)
    throw ShapeMismatch("batchnorm2d: per-channel parameter size mismatch");
  if (training && n < 2)
    throw DegenerateBatch("batchnorm2d training requires batch >= 2");

  const int64_t m = static_cast<int64_t>(n) * h * w;  // per-channel count
  const size_t chw = static_cast<size_t>(c) * h * w;
  const size_t hw = static_cast<size_t>(h) * w;
  const auto& xv = x.value();

  std::vector<T> mean(c), var(c), inv_std(c);
  if (training) {
    for (int ch = 0; ch < c; ++ch) {
      double acc = 0.0;
      for (int s = 0; s < n; ++s) {
        const T* p = xv.data() + static_cast<size_t>(s) * chw + ch * hw;
        for (size_t i = 0; i < hw; ++i) acc += static_cast<double>(p[i]);
      }
      mean[ch] = static_cast<T>(acc / static_cast<double>(m));
      double vacc = 0.0;
      for (int s = 0; s < n; ++s) {
        const T* p = xv.data() + static_cast<size_t>(s) * chw + ch * hw;
        for (size_t i = 0; i < hw; ++i) {
          double d = static_cast<double>(p[i]) - static_cast<double>(mean[ch]);
          vacc += d * d;
        }
      }
      var[ch] = static_cast<T>(vacc / static_cast<double>(m));
    }
    // Unbiased variance enters the running estimate.
    for (int ch = 0; ch < c; ++ch) {
      T unbiased = var[ch] * static_cast<T>(m) / static_cast<T>(m - 1);
      running_mean[ch] = (T(1) - momentum) * running_mean[ch] + momentum * mean[ch];
      running_var[ch] = (T(1) - momentum) * running_var[ch] + momentum * unbiased;
    }
  } else {
    for (int ch = 0; ch < c; ++ch) {
      mean[ch] = running_mean[ch];
      var[ch] = running_var[ch];
    }
  }
  for (int ch = 0; ch < c; ++ch)
    inv_std[ch] = T(1) / std::sqrt(var[ch] + eps);

  std::vector<T> xhat(xv.size());
  for (int s = 0; s < n; ++s) {
    for (int ch = 0; ch < c; ++ch) {
      const T* p = xv.data() + static_cast<size_t>(s) * chw + ch * hw;
      T* q = xhat.data() + static_cast<size_t>(s) * chw + ch * hw;
      for (size_t i = 0; i < hw; ++i) q[i] = (p[i] - mean[ch]) * inv_std[ch];
    }
  }

  Tensor<T> out = make_op_result<T>(
      x.shape(), {x, gamma, beta},
      [xhat, inv_std, training, n, c, hw, chw, m](TensorNode<T>& self) {
        Tensor<T>& x_p = self.parents[0];
        Tensor<T>& gamma_p = self.parents[1];
        Tensor<T>& beta_p = self.parents[2];
        const std::vector<T>& gy = self.grad;
        const std::vector<T>& gv = gamma_p.value();

        std::vector<T> sum_gy(c, T(0)), sum_gy_xhat(c, T(0));
        for (int s = 0; s < n; ++s) {
          for (int ch = 0; ch < c; ++ch) {
            const T* g = gy.data() + static_cast<size_t>(s) * chw + ch * hw;
            const T* xh = xhat.data() + static_cast<size_t>(s) * chw + ch * hw;
            T a = T(0), b = T(0);
            for (size_t i = 0; i < hw; ++i) {
              a += g[i];
              b += g[i] * xh[i];
            }
            sum_gy[ch] += a;
            sum_gy_xhat[ch] += b;
          }
        }
        if (beta_p.requires_grad()) {
          auto& gb = beta_p.grad();
          for (int ch = 0; ch < c; ++ch) gb[ch] += sum_gy[ch];
        }
        if (gamma_p.requires_grad()) {
          auto& gg = gamma_p.grad();
          for (int ch = 0; ch < c; ++ch) gg[ch] += sum_gy_xhat[ch];
        }
        if (x_p.requires_grad()) {
          auto& gx = x_p.grad();
          const T inv_m = T(1) / static_cast<T>(m);
          for (int s = 0; s < n; ++s) {
            for (int ch = 0; ch < c; ++ch) {
              const T* g = gy.data() + static_cast<size_t>(s) * chw + ch * hw;
              const T* xh = xhat.data() + static_cast<size_t>(s) * chw + ch * hw;
              T* dst = gx.data() + static_cast<size_t>(s) * chw + ch * hw;
              T k = gv[ch] * inv_std[ch];
              if (training) {
                T mean_gy = sum_gy[ch] * inv_m;
                T mean_gy_xhat = sum_gy_xhat[ch] * inv_m;
                for (size_t i = 0; i < hw; ++i) {
                  dst[i] += k * (g[i] - mean_gy - xh[i] * mean_gy_xhat);
                }
              } else {
                for (size_t i = 0; i < hw; ++i) dst[i] += k * g[i];
              }
            }
          }
        }
      });

  auto& ov = out.value();
  const auto& gv = gamma.value();
  const auto& bv = beta.value();
  for (int s = 0; s < n; ++s) {
    for (int ch = 0; ch < c; ++ch) {
      const T* xh = xhat.data() + static_cast<size_t>(s) * chw + ch * hw;
      T* q = ov.data() + static_cast<size_t>(s) * chw + ch * hw;
      for (size_t i = 0; i < hw; ++i) q[i] = gv[ch] * xh[i] + bv[ch];
    }
  }
  return out;
}

// --- Structure ops ------------------------------------------------------

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 4 || b.rank() != 4)
    throw ShapeMismatch("concat_channels expects rank-4 inputs");
  if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3))
    throw ShapeMismatch("concat_channels: " + shape_str(a.shape()) + " vs " +
                        shape_str(b.shape()));
  const int n = a.dim(0), ca = a.dim(1), cb = b.dim(1);
  const int h = a.dim(2), w = a.dim(3);
  const size_t hw = static_cast<size_t>(h) * w;
  const size_t sa = static_cast<size_t>(ca) * hw, sb = static_cast<size_t>(cb) * hw;

  Tensor<T> out = make_op_result<T>(
      {n, ca + cb, h, w}, {a, b},
      [n, sa, sb](TensorNode<T>& self) {
        const std::vector<T>& gy = self.grad;
        for (int k = 0; k < 2; ++k) {
          auto& p = self.parents[k];
          if (!p.requires_grad()) continue;
          auto& g = p.grad();
          const size_t mine = k == 0 ? sa : sb;
          const size_t off = k == 0 ? 0 : sa;
          for (int s = 0; s < n; ++s) {
            const T* src = gy.data() + static_cast<size_t>(s) * (sa + sb) + off;
            T* dst = g.data() + static_cast<size_t>(s) * mine;
            for (size_t i = 0; i < mine; ++i) dst[i] += src[i];
          }
        }
      });

  auto& ov = out.value();
  for (int s = 0; s < n; ++s) {
    std::copy_n(a.value().data() + static_cast<size_t>(s) * sa, sa,
                ov.data() + static_cast<size_t>(s) * (sa + sb));
    std::copy_n(b.value().data() + static_cast<size_t>(s) * sb, sb,
                ov.data() + static_cast<size_t>(s) * (sa + sb) + sa);
  }
  return out;
}

template <typename T>
Tensor<T> tile_vector(const Tensor<T>& v, int h, int w) {
  if (v.rank() != 2) throw ShapeMismatch("tile_vector expects [N, C]");
  const int n = v.dim(0), c = v.dim(1);
  const size_t hw = static_cast<size_t>(h) * w;
  Tensor<T> out = make_op_result<T>(
      {n, c, h, w}, {v}, [n, c, hw](TensorNode<T>& self) {
        auto& p = self.parents[0];
        if (!p.requires_grad()) return;
        auto& g = p.grad();
        const std::vector<T>& gy = self.grad;
        for (int s = 0; s < n; ++s) {
          for (int ch = 0; ch < c; ++ch) {
            const T* src = gy.data() + (static_cast<size_t>(s) * c + ch) * hw;
            T acc = T(0);
            for (size_t i = 0; i < hw; ++i) acc += src[i];
            g[static_cast<size_t>(s) * c + ch] += acc;
          }
        }
      });
  auto& ov = out.value();
  const auto& vv = v.value();
  for (int s = 0; s < n; ++s) {
    for (int ch = 0; ch < c; ++ch) {
      T val = vv[static_cast<size_t>(s) * c + ch];
      T* dst = ov.data() + (static_cast<size_t>(s) * c + ch) * hw;
      std::fill(dst, dst + hw, val);
    }
  }
  return out;
}

template <typename T>
Tensor<T> flatten_spatial(const Tensor<T>& x) {
  if (x.rank() != 4) throw ShapeMismatch("flatten_spatial expects rank-4");
  const int n = x.dim(0);
  const int rest = static_cast<int>(x.numel() / n);
  Tensor<T> out = make_op_result<T>(
      {n, rest}, {x}, [](TensorNode<T>& self) {
        auto& p = self.parents[0];
        if (!p.requires_grad()) return;
        auto& g = p.grad();
        for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
      });
  out.value() = x.value();
  return out;
}

template <typename T>
Tensor<T> complex_mul_channels(const Tensor<T>& mask, const Tensor<T>& x) {
  if (mask.shape() != x.shape() || mask.rank() != 4 || mask.dim(1) != 2)
    throw ShapeMismatch("complex_mul_channels expects matching [N,2,H,W]");
  const int n = x.dim(0), h = x.dim(2), w = x.dim(3);
  const size_t hw = static_cast<size_t>(h) * w;
  const size_t stride = 2 * hw;
  std::vector<T> mv = mask.value(), xv = x.value();

  Tensor<T> out = make_op_result<T>(
      x.shape(), {mask, x},
      [mv, xv, n, hw, stride](TensorNode<T>& self) {
        const std::vector<T>& gy = self.grad;
        Tensor<T>& mask_p = self.parents[0];
        Tensor<T>& x_p = self.parents[1];
        for (int s = 0; s < n; ++s) {
          const size_t base = static_cast<size_t>(s) * stride;
          const T* mr = mv.data() + base;
          const T* mi = mv.data() + base + hw;
          const T* xr = xv.data() + base;
          const T* xi = xv.data() + base + hw;
          const T* gr = gy.data() + base;
          const T* gi = gy.data() + base + hw;
          if (mask_p.requires_grad()) {
            auto& g = mask_p.grad();
            T* dmr = g.data() + base;
            T* dmi = g.data() + base + hw;
            for (size_t i = 0; i < hw; ++i) {
              dmr[i] += gr[i] * xr[i] + gi[i] * xi[i];
              dmi[i] += -gr[i] * xi[i] + gi[i] * xr[i];
            }
          }
          if (x_p.requires_grad()) {
            auto& g = x_p.grad();
            T* dxr = g.data() + base;
            T* dxi = g.data() + base + hw;
            for (size_t i = 0; i < hw; ++i) {
              dxr[i] += gr[i] * mr[i] + gi[i] * mi[i];
              dxi[i] += -gr[i] * mi[i] + gi[i] * mr[i];
            }
          }
        }
      });

  auto& ov = out.value();
  for (int s = 0; s < n; ++s) {
    const size_t base = static_cast<size_t>(s) * stride;
    const T* mr = mv.data() + base;
    const T* mi = mv.data() + base + hw;
    const T* xr = xv.data() + base;
    const T* xi = xv.data() + base + hw;
    T* yr = ov.data() + base;
    T* yi = ov.data() + base + hw;
    for (size_t i = 0; i < hw; ++i) {
      yr[i] = mr[i] * xr[i] - mi[i] * xi[i];
      yi[i] = mr[i] * xi[i] + mi[i] * xr[i];
    }
  }
  return out;
}

// --- Optimizer ------------------------------------------------------------

template <typename T>
void Adam<T>::add_group(std::vector<Tensor<T>> params, T lr_scale) {
  for (auto& p : params) {
    Slot slot;
    slot.param = p;
    slot.m.assign(p.value().size(), T(0));
    slot.v.assign(p.value().size(), T(0));
    slot.lr_scale = lr_scale;
    slots_.push_back(std::move(slot));
  }
}

template <typename T>
void Adam<T>::zero_grad() {
  for (auto& slot : slots_) slot.param.zero_grad();
}

template <typename T>
void Adam<T>::step() {
  ++step_;
  const T bc1 = T(1) - std::pow(beta1_, static_cast<T>(step_));
  const T bc2 = T(1) - std::pow(beta2_, static_cast<T>(step_));
  for (auto& slot : slots_) {
    auto& value = slot.param.value();
    auto& grad = slot.param.grad();
    if (grad.size() != value.size())
      throw ShapeMismatch("adam: gradient/parameter size drift");
    const T lr = lr_ * slot.lr_scale;
    for (size_t i = 0; i < value.size(); ++i) {
      T g = grad[i] + weight_decay_ * value[i];
      slot.m[i] = beta1_ * slot.m[i] + (T(1) - beta1_) * g;
      slot.v[i] = beta2_ * slot.v[i] + (T(1) - beta2_) * g * g;
      T mhat = slot.m[i] / bc1;
      T vhat = slot.v[i] / bc2;
      value[i] -= lr * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

// --- Gradient checking ------------------------------------------------

double grad_check(const std::function<Tensor<double>()>& fn,
                  std::span<Tensor<double>> leaves, double h, int max_coords,
                  uint64_t seed) {
  for (auto& leaf : leaves) {
    leaf.set_requires_grad(true);
    leaf.zero_grad();
  }
  Tensor<double> out = fn();
  out.backward();

  std::vector<std::vector<double>> analytic;
  analytic.reserve(leaves.size());
  for (auto& leaf : leaves) analytic.push_back(leaf.grad());

  Rng rng(seed);
  double max_err = 0.0;
  for (size_t li = 0; li < leaves.size(); ++li) {
    auto& leaf = leaves[li];
    int64_t n = leaf.numel();
    std::vector<int64_t> coords;
    if (max_coords <= 0 || n <= max_coords) {
      coords.resize(static_cast<size_t>(n));
      for (int64_t i = 0; i < n; ++i) coords[static_cast<size_t>(i)] = i;
    } else {
      for (int i = 0; i < max_coords; ++i)
        coords.push_back(rng.uniform_int(0, n - 1));
    }
    for (int64_t ci : coords) {
      double orig = leaf.value()[static_cast<size_t>(ci)];
      leaf.value()[static_cast<size_t>(ci)] = orig + h;
      double f1 = fn().item();
      leaf.value()[static_cast<size_t>(ci)] = orig - h;
      double f2 = fn().item();
      leaf.value()[static_cast<size_t>(ci)] = orig;
      double numeric = (f1 - f2) / (2.0 * h);
      double exact = analytic[li][static_cast<size_t>(ci)];
      double denom = std::max({1.0, std::abs(numeric), std::abs(exact)});
      max_err = std::max(max_err, std::abs(numeric - exact) / denom);
    }
  }
  return max_err;
}

// --- Explicit instantiations -------------------------------------------

#define M2B_INSTANTIATE(T)                                                    \
  template class Tensor<T>;                                                   \
  template class Adam<T>;                                                     \
  template Tensor<T> make_op_result<T>(std::vector<int>, std::vector<Tensor<T>>, \
                                       std::function<void(TensorNode<T>&)>);  \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                 \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                 \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                 \
  template Tensor<T> scale(const Tensor<T>&, T);                              \
  template Tensor<T> sum(const Tensor<T>&);                                   \
  template Tensor<T> weighted_sum(const Tensor<T>&, const std::vector<T>&);   \
  template Tensor<T> relu(const Tensor<T>&);                                  \
  template Tensor<T> leaky_relu(const Tensor<T>&, T);                         \
  template Tensor<T> sigmoid(const Tensor<T>&);                               \
  template Tensor<T> scaled_sigmoid(const Tensor<T>&);                        \
  template Tensor<T> mse_loss(const Tensor<T>&, const Tensor<T>&);            \
  template Tensor<T> l1_loss(const Tensor<T>&, const Tensor<T>&);             \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&,               \
                            const Tensor<T>&, int, int);                      \
  template Tensor<T> conv_transpose2d(const Tensor<T>&, const Tensor<T>&,     \
                                      const Tensor<T>&, int, int);            \
  template Tensor<T> batchnorm2d(const Tensor<T>&, const Tensor<T>&,          \
                                 const Tensor<T>&, std::vector<T>&,           \
                                 std::vector<T>&, bool, T, T);                \
  template Tensor<T> concat_channels(const Tensor<T>&, const Tensor<T>&);     \
  template Tensor<T> tile_vector(const Tensor<T>&, int, int);                 \
  template Tensor<T> flatten_spatial(const Tensor<T>&);                       \
  template Tensor<T> complex_mul_channels(const Tensor<T>&, const Tensor<T>&);

M2B_INSTANTIATE(float)
M2B_INSTANTIATE(double)

#undef M2B_INSTANTIATE

}  // namespace m2b::nn
