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

// Minimal reverse-mode automatic differentiation over dense tensors of
// up to 4 dims (batch, channel, height, width). Each operation records a
// backward closure; Tensor::backward() runs the tape in reverse
// topological order. float is used for training, double for gradient
// checking; both instantiations are compiled.

#ifndef M2B_TENSOR_HPP_
#define M2B_TENSOR_HPP_

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "m2b/error.hpp"
#include "m2b/rng.hpp"

namespace m2b::nn {

int64_t numel(const std::vector<int>& shape);
std::string shape_str(const std::vector<int>& shape);

template <typename T>
class Tensor;

template <typename T>
struct TensorNode {
  std::vector<int> shape;
  std::vector<T> value;
  std::vector<T> grad;  // allocated lazily during backward
  bool requires_grad = false;
  std::vector<Tensor<T>> parents;
  std::function<void(TensorNode<T>&)> backward;

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), T(0));
  }
};

template <typename T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape, bool requires_grad = false);
  static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
  static Tensor full(std::vector<int> shape, T v, bool requires_grad = false);
  static Tensor from_vector(std::vector<int> shape, std::vector<T> values,
                            bool requires_grad = false);
  static Tensor randn(std::vector<int> shape, Rng& rng, T stddev = T(1),
                      bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const std::vector<int>& shape() const { return node_->shape; }
  int dim(int i) const { return node_->shape[size_t(i)]; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  int64_t numel() const { return static_cast<int64_t>(node_->value.size()); }

  std::vector<T>& value() { return node_->value; }
  const std::vector<T>& value() const { return node_->value; }
  std::vector<T>& grad();
  bool has_grad() const { return !node_->grad.empty(); }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool rg) { node_->requires_grad = rg; }
  void zero_grad() { node_->grad.assign(node_->value.size(), T(0)); }

  // Reverse accumulation from a scalar (1-element) tensor.
  void backward();

  T item() const;

  TensorNode<T>* node() const { return node_.get(); }
  std::shared_ptr<TensorNode<T>> node_ptr() const { return node_; }

 private:
  std::shared_ptr<TensorNode<T>> node_;
};

// Graph construction helpers used by the ops below.
template <typename T>
Tensor<T> make_op_result(std::vector<int> shape, std::vector<Tensor<T>> parents,
                         std::function<void(TensorNode<T>&)> backward);

// --- Elementwise and reduction ops ------------------------------------

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> scale(const Tensor<T>& a, T s);
template <typename T>
Tensor<T> sum(const Tensor<T>& a);
// Scalar dot(a, weights) with constant weights; handy for grad checks.
template <typename T>
Tensor<T> weighted_sum(const Tensor<T>& a, const std::vector<T>& weights);

// --- Activations --------------------------------------------------------

template <typename T>
Tensor<T> relu(const Tensor<T>& x);
template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, T slope = T(0.2));
template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x);
// 2*sigmoid(x) - 1, bounding outputs to (-1, 1).
template <typename T>
Tensor<T> scaled_sigmoid(const Tensor<T>& x);

// --- Losses (mean reductions) -------------------------------------------

template <typename T>
Tensor<T> mse_loss(const Tensor<T>& pred, const Tensor<T>& target);
template <typename T>
Tensor<T> l1_loss(const Tensor<T>& pred, const Tensor<T>& target);

// --- Convolutions ---------------------------------------------------------

// x: [N, Ci, H, W], weight: [Co, Ci, kh, kw], bias: [Co] (may be empty).
// Output spatial size: (H + 2*pad - k)/stride + 1.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight,
                 const Tensor<T>& bias, int stride = 2, int pad = 1);

// x: [N, Ci, H, W], weight: [Ci, Co, kh, kw], bias: [Co]. Exact adjoint
// of conv2d with the same weight buffer. Output spatial size:
// (H - 1)*stride - 2*pad + k.
template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const Tensor<T>& weight,
                           const Tensor<T>& bias, int stride = 2, int pad = 1);

// --- Batch normalization ----------------------------------------------

// Training mode standardizes by batch statistics over (N, H, W) per
// channel and updates the running stats in place (momentum 0.1, unbiased
// variance). Eval mode applies the frozen affine map. Throws
// DegenerateBatch for a training batch of one sample.
template <typename T>
Tensor<T> batchnorm2d(const Tensor<T>& x, const Tensor<T>& gamma,
                      const Tensor<T>& beta, std::vector<T>& running_mean,
                      std::vector<T>& running_var, bool training,
                      T momentum = T(0.1), T eps = T(1e-5));

// --- Structure ops ------------------------------------------------------

// Concatenate along the channel dimension: [N,Ca,H,W] + [N,Cb,H,W].
template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b);

// Replicate a [N, C] vector across h x w spatial positions -> [N,C,h,w].
template <typename T>
Tensor<T> tile_vector(const Tensor<T>& v, int h, int w);

// Flatten [N, C, H, W] -> [N, C*H*W].
template <typename T>
Tensor<T> flatten_spatial(const Tensor<T>& x);

// Complex product over 2-channel (real, imag) maps:
// out = (mr*xr - mi*xi, mr*xi + mi*xr). Both inputs [N, 2, H, W].
template <typename T>
Tensor<T> complex_mul_channels(const Tensor<T>& mask, const Tensor<T>& x);

// --- Optimizer ------------------------------------------------------------

// Adam with classic L2 weight decay folded into the gradient. Parameter
// groups scale the base learning rate (used for the visual branch).
template <typename T>
class Adam {
 public:
  Adam(T lr, T weight_decay, T beta1 = T(0.9), T beta2 = T(0.999),
       T eps = T(1e-8))
      : lr_(lr), weight_decay_(weight_decay), beta1_(beta1), beta2_(beta2),
        eps_(eps) {}

  void add_group(std::vector<Tensor<T>> params, T lr_scale = T(1));
  void set_lr(T lr) { lr_ = lr; }
  T lr() const { return lr_; }
  int64_t step_count() const { return step_; }

  void zero_grad();
  void step();

  // Moment access for checkpointing, parallel to the flattened
  // parameter order.
  struct Slot {
    Tensor<T> param;
    std::vector<T> m;
    std::vector<T> v;
    T lr_scale;
  };
  std::vector<Slot>& slots() { return slots_; }
  void set_step_count(int64_t s) { step_ = s; }

 private:
  T lr_, weight_decay_, beta1_, beta2_, eps_;
  int64_t step_ = 0;
  std::vector<Slot> slots_;
};

// --- Gradient checking ------------------------------------------------

// Central finite differences against the analytic gradient. fn() must
// rebuild the graph from the current leaf values. Checks at most
// max_coords coordinates per leaf (0 = all), chosen deterministically.
// Returns the maximum relative error, with the denominator floored at 1
// so near-zero gradients are compared absolutely.
double grad_check(const std::function<Tensor<double>()>& fn,
                  std::span<Tensor<double>> leaves, double h = 1e-5,
                  int max_coords = 0, uint64_t seed = 17);

}  // namespace m2b::nn

#endif  // M2B_TENSOR_HPP_
