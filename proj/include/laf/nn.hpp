// Copyright 2026 The LAF Authors
// SPDX-License-Identifier: Apache-2.0

// Minimal feed-forward building blocks with hand-written backward passes.
//
// Layers own only their parameters. Everything a backward pass needs is kept
// in a caller-owned Cache, so a trained network can be shared read-only while
// several forward/backward passes run against it.

#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "laf/common.hpp"

namespace laf::nn {

using Rng = std::mt19937_64;

struct Cache {
  Matrix input;
  Matrix output;
  std::vector<Index> indices;
  std::vector<Cache> children;
};

class Layer {
 public:
  virtual ~Layer() = default;

  virtual std::string kind() const = 0;
  virtual Index in_width() const = 0;
  virtual Index out_width() const = 0;

  /// Pure forward pass. When `cache` is non-null it receives whatever
  /// backward() needs.
  virtual Matrix forward(const Matrix& x, Cache* cache) const = 0;

  /// Backpropagates `grad_out`. Parameter gradients are *added* to
  /// `param_grads`, which is either empty (parameters frozen) or holds exactly
  /// num_params() matrices in collect_params() order. Returns the gradient
  /// with respect to the input, or an empty matrix if `need_input_grad` is
  /// false.
  virtual Matrix backward(const Matrix& grad_out, const Cache& cache,
                          std::span<Matrix> param_grads, bool need_input_grad) const = 0;

  virtual std::size_t num_params() const { return 0; }
  virtual void collect_params(std::vector<Matrix*>&) {}
  virtual void collect_params(std::vector<const Matrix*>&) const {}

  virtual std::unique_ptr<Layer> clone() const = 0;
};

/// y = x W^T + b
class Linear final : public Layer {
 public:
  Linear(Index in, Index out, Rng& rng);

  std::string kind() const override { return "linear"; }
  Index in_width() const override { return weight_.cols(); }
  Index out_width() const override { return weight_.rows(); }
  Matrix forward(const Matrix& x, Cache* cache) const override;
  Matrix backward(const Matrix& grad_out, const Cache& cache, std::span<Matrix> param_grads,
                  bool need_input_grad) const override;
  std::size_t num_params() const override { return 2; }
  void collect_params(std::vector<Matrix*>& out) override;
  void collect_params(std::vector<const Matrix*>& out) const override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Linear>(*this); }

  Matrix& weight() { return weight_; }
  Matrix& bias() { return bias_; }
  const Matrix& weight() const { return weight_; }
  const Matrix& bias() const { return bias_; }

 private:
  Matrix weight_;  // out x in
  Matrix bias_;    // 1 x out
};

class ReLU final : public Layer {
 public:
  explicit ReLU(Index width) : width_(width) {}

  std::string kind() const override { return "relu"; }
  Index in_width() const override { return width_; }
  Index out_width() const override { return width_; }
  Matrix forward(const Matrix& x, Cache* cache) const override;
  Matrix backward(const Matrix& grad_out, const Cache& cache, std::span<Matrix> param_grads,
                  bool need_input_grad) const override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<ReLU>(*this); }

 private:
  Index width_;
};

/// 2-D convolution over CHW-flattened rows, lowered to a single GEMM per batch.
class Conv2d final : public Layer {
 public:
  Conv2d(InputShape in, int out_channels, int kernel, int stride, int padding, Rng& rng);

  std::string kind() const override { return "conv2d"; }
  Index in_width() const override { return in_.flat(); }
  Index out_width() const override { return out_shape().flat(); }
  InputShape out_shape() const;
  Matrix forward(const Matrix& x, Cache* cache) const override;
  Matrix backward(const Matrix& grad_out, const Cache& cache, std::span<Matrix> param_grads,
                  bool need_input_grad) const override;
  std::size_t num_params() const override { return 2; }
  void collect_params(std::vector<Matrix*>& out) override;
  void collect_params(std::vector<const Matrix*>& out) const override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Conv2d>(*this); }

  int out_channels() const { return static_cast<int>(weight_.rows()); }

 private:
  Matrix im2col(const Matrix& x) const;
  Matrix col2im(const Matrix& cols, Index batch) const;

  InputShape in_;
  int kernel_;
  int stride_;
  int padding_;
  Matrix weight_;  // out_channels x (in_channels * kernel * kernel)
  Matrix bias_;    // 1 x out_channels
};

class MaxPool2d final : public Layer {
 public:
  MaxPool2d(InputShape in, int window);

  std::string kind() const override { return "maxpool2d"; }
  Index in_width() const override { return in_.flat(); }
  Index out_width() const override { return out_shape().flat(); }
  InputShape out_shape() const;
  Matrix forward(const Matrix& x, Cache* cache) const override;
  Matrix backward(const Matrix& grad_out, const Cache& cache, std::span<Matrix> param_grads,
                  bool need_input_grad) const override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<MaxPool2d>(*this); }

 private:
  InputShape in_;
  int window_;
};

/// Mean over the spatial positions of each channel.
class GlobalAvgPool final : public Layer {
 public:
  explicit GlobalAvgPool(InputShape in) : in_(in) {}

  std::string kind() const override { return "global_avg_pool"; }
  Index in_width() const override { return in_.flat(); }
  Index out_width() const override { return in_.channels; }
  Matrix forward(const Matrix& x, Cache* cache) const override;
  Matrix backward(const Matrix& grad_out, const Cache& cache, std::span<Matrix> param_grads,
                  bool need_input_grad) const override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<GlobalAvgPool>(*this); }

 private:
  InputShape in_;
};

/// Layers applied in order. Copying deep-copies every layer.
class Sequential final : public Layer {
 public:
  Sequential() = default;
  Sequential(const Sequential& other);
  Sequential& operator=(const Sequential& other);
  Sequential(Sequential&&) noexcept = default;
  Sequential& operator=(Sequential&&) noexcept = default;

  void add(std::unique_ptr<Layer> layer);
  template <typename L, typename... Args>
  L& emplace(Args&&... args) {
    auto layer = std::make_unique<L>(std::forward<Args>(args)...);
    L& ref = *layer;
    add(std::move(layer));
    return ref;
  }

  std::string kind() const override { return "sequential"; }
  Index in_width() const override;
  Index out_width() const override;
  Matrix forward(const Matrix& x, Cache* cache) const override;
  Matrix forward(const Matrix& x) const { return forward(x, nullptr); }
  Matrix backward(const Matrix& grad_out, const Cache& cache, std::span<Matrix> param_grads,
                  bool need_input_grad) const override;
  std::size_t num_params() const override;
  void collect_params(std::vector<Matrix*>& out) override;
  void collect_params(std::vector<const Matrix*>& out) const override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Sequential>(*this); }

  std::vector<Matrix*> params();
  std::vector<const Matrix*> params() const;
  /// Zero-filled gradient buffers matching params().
  std::vector<Matrix> zero_grads() const;

  std::size_t size() const { return layers_.size(); }
  bool empty() const { return layers_.empty(); }
  const Layer& layer(std::size_t i) const { return *layers_.at(i); }
  Layer& layer(std::size_t i) { return *layers_.at(i); }

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
};

/// relu(main(x) + shortcut(x)); the shortcut is the identity unless the
/// block changes shape, in which case it is a strided 1x1 convolution.
class ResidualBlock final : public Layer {
 public:
  ResidualBlock(InputShape in, int out_channels, int stride, Rng& rng);

  std::string kind() const override { return "residual"; }
  Index in_width() const override { return main_.in_width(); }
  Index out_width() const override { return main_.out_width(); }
  InputShape out_shape() const { return out_; }
  Matrix forward(const Matrix& x, Cache* cache) const override;
  Matrix backward(const Matrix& grad_out, const Cache& cache, std::span<Matrix> param_grads,
                  bool need_input_grad) const override;
  std::size_t num_params() const override { return main_.num_params() + shortcut_.num_params(); }
  void collect_params(std::vector<Matrix*>& out) override;
  void collect_params(std::vector<const Matrix*>& out) const override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<ResidualBlock>(*this); }

 private:
  InputShape out_;
  Sequential main_;
  Sequential shortcut_;  // empty means identity
};

/// Adam with bias correction. Moment buffers are created on the first step
/// and bound to the parameter order used then.
class Adam {
 public:
  struct Options {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
  };

  explicit Adam(double lr) : Adam(Options{lr}) {}
  explicit Adam(Options opts) : opts_(opts) {}

  void step(const std::vector<Matrix*>& params, const std::vector<Matrix>& grads);
  long steps() const { return t_; }
  double lr() const { return opts_.lr; }

 private:
  Options opts_;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
  long t_ = 0;
};

/// Row-wise numerically stable softmax.
Matrix softmax(const Matrix& logits);

struct LossAndGrad {
  double loss = 0.0;
  Matrix grad;  // d loss / d logits
};

/// Mean cross-entropy over the batch, with its gradient w.r.t. the logits.
LossAndGrad cross_entropy(const Matrix& logits, std::span<const int> labels);

/// Per-row cross-entropy values (no reduction).
Vector cross_entropy_rows(const Matrix& logits, std::span<const int> labels);

bool all_finite(const Matrix& m);

}  // namespace laf::nn
