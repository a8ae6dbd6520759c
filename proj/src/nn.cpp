// Copyright 2026 The LAF Authors
// SPDX-License-Identifier: Apache-2.0

#include "laf/nn.hpp"

#include <cmath>
#include <limits>

namespace laf::nn {
namespace {

void init_uniform(Matrix& m, double bound, Rng& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
}

void check_width(const Matrix& x, Index expected, const char* layer) {
  if (x.cols() != expected) {
    throw InputError(std::string(layer) + ": expected input width " + std::to_string(expected) +
                     ", got " + std::to_string(x.cols()));
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Linear

Linear::Linear(Index in, Index out, Rng& rng) : weight_(out, in), bias_(1, out) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  init_uniform(weight_, bound, rng);
  init_uniform(bias_, bound, rng);
}

Matrix Linear::forward(const Matrix& x, Cache* cache) const {
  check_width(x, in_width(), "linear");
  Matrix y = x * weight_.transpose();
  y.rowwise() += bias_.row(0);
  if (cache) cache->input = x;
  return y;
}

Matrix Linear::backward(const Matrix& grad_out, const Cache& cache, std::span<Matrix> param_grads,
                        bool need_input_grad) const {
  if (!param_grads.empty()) {
    param_grads[0].noalias() += grad_out.transpose() * cache.input;
    param_grads[1].row(0) += grad_out.colwise().sum();
  }
  if (!need_input_grad) return {};
  return grad_out * weight_;
}

void Linear::collect_params(std::vector<Matrix*>& out) {
  out.push_back(&weight_);
  out.push_back(&bias_);
}

void Linear::collect_params(std::vector<const Matrix*>& out) const {
  out.push_back(&weight_);
  out.push_back(&bias_);
}

// ---------------------------------------------------------------------------
// ReLU

Matrix ReLU::forward(const Matrix& x, Cache* cache) const {
  check_width(x, width_, "relu");
  Matrix y = x.cwiseMax(0.0);
  if (cache) cache->output = y;
  return y;
}

Matrix ReLU::backward(const Matrix& grad_out, const Cache& cache, std::span<Matrix>,
                      bool need_input_grad) const {
  if (!need_input_grad) return {};
  return (cache.output.array() > 0.0).select(grad_out, 0.0);
}

// ---------------------------------------------------------------------------
// Conv2d

Conv2d::Conv2d(InputShape in, int out_channels, int kernel, int stride, int padding, Rng& rng)
    : in_(in),
      kernel_(kernel),
      stride_(stride),
      padding_(padding),
      weight_(out_channels, Index{in.channels} * kernel * kernel),
      bias_(1, out_channels) {
  if (kernel < 1 || stride < 1 || padding < 0) throw ConfigError("conv2d: invalid geometry");
  const auto o = out_shape();
  if (o.height < 1 || o.width < 1) {
    throw ConfigError("conv2d: kernel " + std::to_string(kernel) + " does not fit input " +
                      in.to_string());
  }
  const double bound = 1.0 / std::sqrt(static_cast<double>(weight_.cols()));
  init_uniform(weight_, bound, rng);
  init_uniform(bias_, bound, rng);
}

InputShape Conv2d::out_shape() const {
  const int h = (in_.height + 2 * padding_ - kernel_) / stride_ + 1;
  const int w = (in_.width + 2 * padding_ - kernel_) / stride_ + 1;
  return {static_cast<int>(weight_.rows()), h, w};
}

Matrix Conv2d::im2col(const Matrix& x) const {
  const auto o = out_shape();
  const Index n = x.rows();
  const Index plane = Index{o.height} * o.width;
  const int k = kernel_;
  Matrix cols = Matrix::Zero(weight_.cols(), n * plane);
  for (Index s = 0; s < n; ++s) {
    const double* src = x.row(s).data();
    for (int c = 0; c < in_.channels; ++c) {
      const double* chan = src + Index{c} * in_.height * in_.width;
      for (int ki = 0; ki < k; ++ki) {
        for (int kj = 0; kj < k; ++kj) {
          double* dst = cols.row((Index{c} * k + ki) * k + kj).data() + s * plane;
          for (int oy = 0; oy < o.height; ++oy) {
            const int iy = oy * stride_ - padding_ + ki;
            if (iy < 0 || iy >= in_.height) continue;
            for (int ox = 0; ox < o.width; ++ox) {
              const int ix = ox * stride_ - padding_ + kj;
              if (ix < 0 || ix >= in_.width) continue;
              dst[oy * o.width + ox] = chan[iy * in_.width + ix];
            }
          }
        }
      }
    }
  }
  return cols;
}

Matrix Conv2d::col2im(const Matrix& cols, Index batch) const {
  const auto o = out_shape();
  const Index plane = Index{o.height} * o.width;
  const int k = kernel_;
  Matrix x = Matrix::Zero(batch, in_.flat());
  for (Index s = 0; s < batch; ++s) {
    double* dst = x.row(s).data();
    for (int c = 0; c < in_.channels; ++c) {
      double* chan = dst + Index{c} * in_.height * in_.width;
      for (int ki = 0; ki < k; ++ki) {
        for (int kj = 0; kj < k; ++kj) {
          const double* src = cols.row((Index{c} * k + ki) * k + kj).data() + s * plane;
          for (int oy = 0; oy < o.height; ++oy) {
            const int iy = oy * stride_ - padding_ + ki;
            if (iy < 0 || iy >= in_.height) continue;
            for (int ox = 0; ox < o.width; ++ox) {
              const int ix = ox * stride_ - padding_ + kj;
              if (ix < 0 || ix >= in_.width) continue;
              chan[iy * in_.width + ix] += src[oy * o.width + ox];
            }
          }
        }
      }
    }
  }
  return x;
}

Matrix Conv2d::forward(const Matrix& x, Cache* cache) const {
  check_width(x, in_width(), "conv2d");
  const auto o = out_shape();
  const Index n = x.rows();
  const Index plane = Index{o.height} * o.width;
  Matrix y = weight_ * im2col(x);  // out_channels x (n * plane)
  Matrix out(n, o.flat());
  for (Index s = 0; s < n; ++s) {
    for (int c = 0; c < o.channels; ++c) {
      out.row(s).segment(c * plane, plane) =
          y.row(c).segment(s * plane, plane).array() + bias_(0, c);
    }
  }
  if (cache) cache->input = x;
  return out;
}

Matrix Conv2d::backward(const Matrix& grad_out, const Cache& cache, std::span<Matrix> param_grads,
                        bool need_input_grad) const {
  const auto o = out_shape();
  const Index n = grad_out.rows();
  const Index plane = Index{o.height} * o.width;
  Matrix dy(o.channels, n * plane);
  for (Index s = 0; s < n; ++s) {
    for (int c = 0; c < o.channels; ++c) {
      dy.row(c).segment(s * plane, plane) = grad_out.row(s).segment(c * plane, plane);
    }
  }
  if (!param_grads.empty()) {
    param_grads[0].noalias() += dy * im2col(cache.input).transpose();
    param_grads[1].row(0) += dy.rowwise().sum().transpose();
  }
  if (!need_input_grad) return {};
  Matrix dcols = weight_.transpose() * dy;
  return col2im(dcols, n);
}

void Conv2d::collect_params(std::vector<Matrix*>& out) {
  out.push_back(&weight_);
  out.push_back(&bias_);
}

void Conv2d::collect_params(std::vector<const Matrix*>& out) const {
  out.push_back(&weight_);
  out.push_back(&bias_);
}

// ---------------------------------------------------------------------------
// MaxPool2d

MaxPool2d::MaxPool2d(InputShape in, int window) : in_(in), window_(window) {
  if (window < 1 || in.height < window || in.width < window) {
    throw ConfigError("maxpool2d: window " + std::to_string(window) + " does not fit input " +
                      in.to_string());
  }
}

InputShape MaxPool2d::out_shape() const {
  return {in_.channels, in_.height / window_, in_.width / window_};
}

Matrix MaxPool2d::forward(const Matrix& x, Cache* cache) const {
  check_width(x, in_width(), "maxpool2d");
  const auto o = out_shape();
  const Index n = x.rows();
  Matrix out(n, o.flat());
  std::vector<Index> argmax;
  if (cache) argmax.resize(static_cast<std::size_t>(n * o.flat()));
  for (Index s = 0; s < n; ++s) {
    const double* src = x.row(s).data();
    for (int c = 0; c < in_.channels; ++c) {
      for (int oy = 0; oy < o.height; ++oy) {
        for (int ox = 0; ox < o.width; ++ox) {
          Index best = Index{c} * in_.height * in_.width + Index{oy} * window_ * in_.width +
                       Index{ox} * window_;
          double best_v = src[best];
          for (int dy = 0; dy < window_; ++dy) {
            for (int dx = 0; dx < window_; ++dx) {
              const Index idx = Index{c} * in_.height * in_.width +
                                Index{oy * window_ + dy} * in_.width + ox * window_ + dx;
              if (src[idx] > best_v) {
                best_v = src[idx];
                best = idx;
              }
            }
          }
          const Index o_idx = (Index{c} * o.height + oy) * o.width + ox;
          out(s, o_idx) = best_v;
          if (cache) argmax[static_cast<std::size_t>(s * o.flat() + o_idx)] = best;
        }
      }
    }
  }
  if (cache) cache->indices = std::move(argmax);
  return out;
}

Matrix MaxPool2d::backward(const Matrix& grad_out, const Cache& cache, std::span<Matrix>,
                           bool need_input_grad) const {
  if (!need_input_grad) return {};
  const Index n = grad_out.rows();
  const Index width = grad_out.cols();
  Matrix dx = Matrix::Zero(n, in_.flat());
  for (Index s = 0; s < n; ++s) {
    for (Index j = 0; j < width; ++j) {
      dx(s, cache.indices[static_cast<std::size_t>(s * width + j)]) += grad_out(s, j);
    }
  }
  return dx;
}

// ---------------------------------------------------------------------------
// GlobalAvgPool

Matrix GlobalAvgPool::forward(const Matrix& x, Cache*) const {
  check_width(x, in_width(), "global_avg_pool");
  const Index plane = Index{in_.height} * in_.width;
  Matrix out(x.rows(), in_.channels);
  for (Index s = 0; s < x.rows(); ++s) {
    for (int c = 0; c < in_.channels; ++c) out(s, c) = x.row(s).segment(c * plane, plane).mean();
  }
  return out;
}

Matrix GlobalAvgPool::backward(const Matrix& grad_out, const Cache&, std::span<Matrix>,
                               bool need_input_grad) const {
  if (!need_input_grad) return {};
  const Index plane = Index{in_.height} * in_.width;
  Matrix dx(grad_out.rows(), in_.flat());
  for (Index s = 0; s < grad_out.rows(); ++s) {
    for (int c = 0; c < in_.channels; ++c) {
      dx.row(s).segment(c * plane, plane).setConstant(grad_out(s, c) / static_cast<double>(plane));
    }
  }
  return dx;
}

// ---------------------------------------------------------------------------
// Sequential

Sequential::Sequential(const Sequential& other) {
  layers_.reserve(other.layers_.size());
  for (const auto& l : other.layers_) layers_.push_back(l->clone());
}

Sequential& Sequential::operator=(const Sequential& other) {
  if (this != &other) {
    Sequential copy(other);
    *this = std::move(copy);
  }
  return *this;
}

void Sequential::add(std::unique_ptr<Layer> layer) {
  if (!layers_.empty() && layers_.back()->out_width() != layer->in_width()) {
    throw ConfigError("sequential: " + layer->kind() + " expects width " +
                      std::to_string(layer->in_width()) + " but previous layer emits " +
                      std::to_string(layers_.back()->out_width()));
  }
  layers_.push_back(std::move(layer));
}

Index Sequential::in_width() const { return layers_.empty() ? 0 : layers_.front()->in_width(); }
Index Sequential::out_width() const { return layers_.empty() ? 0 : layers_.back()->out_width(); }

Matrix Sequential::forward(const Matrix& x, Cache* cache) const {
  if (cache) cache->children.resize(layers_.size());
  Matrix h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    h = layers_[i]->forward(h, cache ? &cache->children[i] : nullptr);
  }
  return h;
}

Matrix Sequential::backward(const Matrix& grad_out, const Cache& cache,
                            std::span<Matrix> param_grads, bool need_input_grad) const {
  std::vector<std::size_t> offsets(layers_.size() + 1, 0);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    offsets[i + 1] = offsets[i] + layers_[i]->num_params();
  }
  Matrix g = grad_out;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    std::span<Matrix> sub;
    if (!param_grads.empty()) sub = param_grads.subspan(offsets[i], offsets[i + 1] - offsets[i]);
    const bool want_input = i > 0 || need_input_grad;
    g = layers_[i]->backward(g, cache.children[i], sub, want_input);
  }
  return g;
}

std::size_t Sequential::num_params() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += l->num_params();
  return n;
}

void Sequential::collect_params(std::vector<Matrix*>& out) {
  for (auto& l : layers_) l->collect_params(out);
}

void Sequential::collect_params(std::vector<const Matrix*>& out) const {
  for (const auto& l : layers_) static_cast<const Layer&>(*l).collect_params(out);
}

std::vector<Matrix*> Sequential::params() {
  std::vector<Matrix*> out;
  collect_params(out);
  return out;
}

std::vector<const Matrix*> Sequential::params() const {
  std::vector<const Matrix*> out;
  collect_params(out);
  return out;
}

std::vector<Matrix> Sequential::zero_grads() const {
  std::vector<Matrix> grads;
  for (const Matrix* p : params()) grads.push_back(Matrix::Zero(p->rows(), p->cols()));
  return grads;
}

// ---------------------------------------------------------------------------
// ResidualBlock

ResidualBlock::ResidualBlock(InputShape in, int out_channels, int stride, Rng& rng) {
  auto& c1 = main_.emplace<Conv2d>(in, out_channels, 3, stride, 1, rng);
  main_.emplace<ReLU>(c1.out_width());
  auto& c2 = main_.emplace<Conv2d>(c1.out_shape(), out_channels, 3, 1, 1, rng);
  out_ = c2.out_shape();
  if (stride != 1 || in.channels != out_channels) {
    shortcut_.emplace<Conv2d>(in, out_channels, 1, stride, 0, rng);
    if (shortcut_.out_width() != main_.out_width()) {
      throw ConfigError("residual: shortcut shape mismatch for input " + in.to_string());
    }
  }
}

Matrix ResidualBlock::forward(const Matrix& x, Cache* cache) const {
  if (cache) cache->children.resize(2);
  Matrix pre = main_.forward(x, cache ? &cache->children[0] : nullptr);
  if (shortcut_.empty()) {
    pre += x;
  } else {
    pre += shortcut_.forward(x, cache ? &cache->children[1] : nullptr);
  }
  Matrix y = pre.cwiseMax(0.0);
  if (cache) cache->output = y;
  return y;
}

Matrix ResidualBlock::backward(const Matrix& grad_out, const Cache& cache,
                               std::span<Matrix> param_grads, bool need_input_grad) const {
  const Matrix g = (cache.output.array() > 0.0).select(grad_out, 0.0);
  std::span<Matrix> main_grads;
  std::span<Matrix> short_grads;
  if (!param_grads.empty()) {
    main_grads = param_grads.subspan(0, main_.num_params());
    short_grads = param_grads.subspan(main_.num_params());
  }
  Matrix dx = main_.backward(g, cache.children[0], main_grads, need_input_grad);
  if (shortcut_.empty()) {
    if (need_input_grad) dx += g;
  } else {
    Matrix ds = shortcut_.backward(g, cache.children[1], short_grads, need_input_grad);
    if (need_input_grad) dx += ds;
  }
  return dx;
}

void ResidualBlock::collect_params(std::vector<Matrix*>& out) {
  main_.collect_params(out);
  shortcut_.collect_params(out);
}

void ResidualBlock::collect_params(std::vector<const Matrix*>& out) const {
  main_.collect_params(out);
  shortcut_.collect_params(out);
}

// ---------------------------------------------------------------------------
// Adam

void Adam::step(const std::vector<Matrix*>& params, const std::vector<Matrix>& grads) {
  if (params.size() != grads.size()) throw PreconditionError("adam: params/grads size mismatch");
  if (m_.empty()) {
    for (const Matrix& g : grads) {
      m_.push_back(Matrix::Zero(g.rows(), g.cols()));
      v_.push_back(Matrix::Zero(g.rows(), g.cols()));
    }
  } else if (m_.size() != params.size()) {
    throw PreconditionError("adam: parameter set changed between steps");
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(t_));
  const double step = opts_.lr / bc1;
  const double sqrt_bc2 = std::sqrt(bc2);
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = opts_.beta1 * m_[i] + (1.0 - opts_.beta1) * grads[i];
    v_[i] = opts_.beta2 * v_[i] + (1.0 - opts_.beta2) * grads[i].cwiseAbs2();
    params[i]->array() -=
        step * m_[i].array() / (v_[i].array().sqrt() / sqrt_bc2 + opts_.eps);
  }
}

// ---------------------------------------------------------------------------
// Losses

Matrix softmax(const Matrix& logits) {
  Matrix p = logits;
  for (Index i = 0; i < p.rows(); ++i) {
    const double mx = p.row(i).maxCoeff();
    p.row(i) = (p.row(i).array() - mx).exp();
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

Vector cross_entropy_rows(const Matrix& logits, std::span<const int> labels) {
  if (static_cast<Index>(labels.size()) != logits.rows()) {
    throw InputError("cross_entropy: label count does not match logits rows");
  }
  Vector out(logits.rows());
  for (Index i = 0; i < logits.rows(); ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= logits.cols()) throw InputError("cross_entropy: label out of range");
    const double mx = logits.row(i).maxCoeff();
    const double lse = mx + std::log((logits.row(i).array() - mx).exp().sum());
    out(i) = lse - logits(i, y);
  }
  return out;
}

LossAndGrad cross_entropy(const Matrix& logits, std::span<const int> labels) {
  LossAndGrad r;
  const Index n = logits.rows();
  if (n == 0) {
    r.grad = Matrix::Zero(0, logits.cols());
    return r;
  }
  r.loss = cross_entropy_rows(logits, labels).mean();
  r.grad = softmax(logits);
  for (Index i = 0; i < n; ++i) r.grad(i, labels[static_cast<std::size_t>(i)]) -= 1.0;
  r.grad /= static_cast<double>(n);
  return r;
}

bool all_finite(const Matrix& m) { return m.allFinite(); }

}  // namespace laf::nn
