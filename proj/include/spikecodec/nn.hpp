#pragma once

// Small layer library with hand-written backward passes. Activations are
// channel x (batch * steps) matrices: sample b occupies columns
// [b * steps, (b + 1) * steps). Layers cache what their backward pass needs
// from the most recent forward call.

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "spikecodec/error.hpp"

namespace spikecodec::nn {

using Index = Eigen::Index;

template <typename Real>
using Matrix = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Real>
using Vector = Eigen::Matrix<Real, Eigen::Dynamic, 1>;

template <typename Real>
struct Param {
  std::string name;
  Matrix<Real> value;
  Matrix<Real> grad;
  Matrix<Real> m;  // Adam moments
  Matrix<Real> v;

  Param() = default;
  Param(std::string n, Index rows, Index cols)
      : name(std::move(n)),
        value(Matrix<Real>::Zero(rows, cols)),
        grad(Matrix<Real>::Zero(rows, cols)),
        m(Matrix<Real>::Zero(rows, cols)),
        v(Matrix<Real>::Zero(rows, cols)) {}

  void init_uniform(std::mt19937_64& rng, double bound) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (Index i = 0; i < value.size(); ++i) value.data()[i] = static_cast<Real>(dist(rng));
  }
};

template <typename Real>
using ParamList = std::vector<Param<Real>*>;

// ---------------------------------------------------------------------------
// Heaviside binarizer with the triangular surrogate derivative.

// 1 where l > 0 (so H(0) = 0).
template <typename Derived>
auto heaviside_forward(const Eigen::MatrixBase<Derived>& logits) {
  using Real = typename Derived::Scalar;
  return (logits.array() > Real(0)).template cast<Real>().matrix().eval();
}

// upstream * max(0, 1 - |l|)
template <typename Derived, typename Other>
auto heaviside_backward(const Eigen::MatrixBase<Derived>& logits,
                        const Eigen::MatrixBase<Other>& upstream) {
  using Real = typename Derived::Scalar;
  if (logits.rows() != upstream.rows() || logits.cols() != upstream.cols()) {
    throw ShapeError("heaviside_backward: logits and upstream differ in shape");
  }
  return (upstream.array() * (Real(1) - logits.array().abs()).max(Real(0))).matrix().eval();
}

// ---------------------------------------------------------------------------

enum class Padding { Same, Causal };

// Temporal convolution, zero padded per sample. Tap j looks at offset
// (j - (kernel - 1) / 2) * dilation for Same, (j - (kernel - 1)) * dilation
// for Causal (output t never sees inputs after t).
template <typename Real>
class Conv1d {
public:
  Conv1d(std::string name, Index in, Index out, Index kernel, Index dilation = 1,
         Padding padding = Padding::Same)
      : in_(in), out_(out), kernel_(kernel), dilation_(dilation), padding_(padding),
        weight_(name + ".weight", out, in * kernel), bias_(name + ".bias", out, 1) {}

  void init(std::mt19937_64& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in_ * kernel_));
    weight_.init_uniform(rng, bound);
    bias_.init_uniform(rng, bound);
  }

  Matrix<Real> forward(const Matrix<Real>& x, Index steps) {
    steps_ = steps;
    if (kernel_ == 1) {
      cols_ = x;
    } else {
      cols_.setZero(in_ * kernel_, x.cols());
      for_each_tap(x.cols(), [&](Index j, Index dst, Index src, Index len) {
        cols_.block(j * in_, dst, in_, len) = x.block(0, src, in_, len);
      });
    }
    Matrix<Real> y(out_, x.cols());
    y.noalias() = weight_.value * cols_;
    y.colwise() += bias_.value.col(0);
    return y;
  }

  Matrix<Real> backward(const Matrix<Real>& dy) {
    weight_.grad.noalias() += dy * cols_.transpose();
    bias_.grad.col(0) += dy.rowwise().sum();
    Matrix<Real> dcols(in_ * kernel_, dy.cols());
    dcols.noalias() = weight_.value.transpose() * dy;
    if (kernel_ == 1) return dcols;
    Matrix<Real> dx = Matrix<Real>::Zero(in_, dy.cols());
    for_each_tap(dy.cols(), [&](Index j, Index dst, Index src, Index len) {
      dx.block(0, src, in_, len) += dcols.block(j * in_, dst, in_, len);
    });
    return dx;
  }

  ParamList<Real> params() { return {&weight_, &bias_}; }
  Param<Real>& weight() { return weight_; }
  Param<Real>& bias() { return bias_; }

private:
  template <typename Fn>
  void for_each_tap(Index total_cols, Fn&& fn) const {
    const Index batch = total_cols / steps_;
    const Index centre = padding_ == Padding::Causal ? kernel_ - 1 : (kernel_ - 1) / 2;
    for (Index j = 0; j < kernel_; ++j) {
      const Index offset = (j - centre) * dilation_;
      const Index t0 = std::max<Index>(0, -offset);
      const Index t1 = std::min<Index>(steps_, steps_ - offset);
      if (t1 <= t0) continue;
      for (Index b = 0; b < batch; ++b) {
        fn(j, b * steps_ + t0, b * steps_ + t0 + offset, t1 - t0);
      }
    }
  }

  Index in_, out_, kernel_, dilation_;
  Padding padding_;
  Param<Real> weight_;
  Param<Real> bias_;
  Matrix<Real> cols_;
  Index steps_ = 1;
};

// x * sigmoid(x)
template <typename Real>
class Silu {
public:
  Matrix<Real> forward(const Matrix<Real>& x) {
    x_ = x;
    sig_ = (Real(1) / (Real(1) + (-x.array()).exp())).matrix();
    return (x.array() * sig_.array()).matrix();
  }

  Matrix<Real> backward(const Matrix<Real>& dy) const {
    return (dy.array() * sig_.array() * (Real(1) + x_.array() * (Real(1) - sig_.array())))
        .matrix();
  }

private:
  Matrix<Real> x_;
  Matrix<Real> sig_;
};

// Sequence-to-sequence mixer with a clip-wide receptive field:
//   y = x + W_out silu(W_local x + W_global mean_t(x) + b)
// where the mean runs over every step of the same sample.
template <typename Real>
class ContextMixer {
public:
  ContextMixer(std::string name, Index width)
      : width_(width),
        local_(name + ".local", width, width),
        global_(name + ".global", width, width),
        bias_(name + ".bias", width, 1),
        out_(name + ".out", width, width) {}

  void init(std::mt19937_64& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(width_));
    local_.init_uniform(rng, bound);
    global_.init_uniform(rng, bound);
    bias_.init_uniform(rng, bound);
    out_.init_uniform(rng, bound);
  }

  Matrix<Real> forward(const Matrix<Real>& x, Index steps) {
    steps_ = steps;
    const Index batch = x.cols() / steps;
    pooled_.resize(width_, batch);
    for (Index b = 0; b < batch; ++b) {
      pooled_.col(b) = x.middleCols(b * steps, steps).rowwise().mean();
    }
    Matrix<Real> context(width_, batch);
    context.noalias() = global_.value * pooled_;
    Matrix<Real> h(width_, x.cols());
    h.noalias() = local_.value * x;
    h.colwise() += bias_.value.col(0);
    for (Index b = 0; b < batch; ++b) {
      h.middleCols(b * steps, steps).colwise() += context.col(b);
    }
    x_ = x;
    const Matrix<Real> a = act_.forward(h);
    a_ = a;
    Matrix<Real> y = x;
    y.noalias() += out_.value * a;
    return y;
  }

  Matrix<Real> backward(const Matrix<Real>& dy) {
    out_.grad.noalias() += dy * a_.transpose();
    Matrix<Real> da(width_, dy.cols());
    da.noalias() = out_.value.transpose() * dy;
    const Matrix<Real> dh = act_.backward(da);
    local_.grad.noalias() += dh * x_.transpose();
    bias_.grad.col(0) += dh.rowwise().sum();
    Matrix<Real> dx = dy;
    dx.noalias() += local_.value.transpose() * dh;
    const Index batch = dy.cols() / steps_;
    Matrix<Real> dcontext(width_, batch);
    for (Index b = 0; b < batch; ++b) {
      dcontext.col(b) = dh.middleCols(b * steps_, steps_).rowwise().sum();
    }
    global_.grad.noalias() += dcontext * pooled_.transpose();
    Matrix<Real> dpooled(width_, batch);
    dpooled.noalias() = global_.value.transpose() * dcontext;
    for (Index b = 0; b < batch; ++b) {
      dx.middleCols(b * steps_, steps_).colwise() +=
          dpooled.col(b) / static_cast<Real>(steps_);
    }
    return dx;
  }

  ParamList<Real> params() { return {&local_, &global_, &bias_, &out_}; }

private:
  Index width_;
  Param<Real> local_, global_, bias_, out_;
  Silu<Real> act_;
  Matrix<Real> x_, a_, pooled_;
  Index steps_ = 1;
};

// Per-channel normalisation over all (batch x step) columns. Training mode
// uses batch statistics and updates running averages; evaluation mode uses
// the frozen running averages.
template <typename Real>
class BatchNorm {
public:
  static constexpr Real kEpsilon = Real(1e-5);

  BatchNorm(std::string name, Index channels, Real momentum = Real(0.99))
      : momentum_(momentum),
        scale_(name + ".scale", channels, 1),
        shift_(name + ".shift", channels, 1),
        running_mean_(Vector<Real>::Zero(channels)),
        running_var_(Vector<Real>::Ones(channels)) {
    scale_.value.setOnes();
  }

  Matrix<Real> forward(const Matrix<Real>& x, bool training) {
    Vector<Real> mean;
    Vector<Real> var;
    if (training) {
      mean = x.rowwise().mean();
      var = (x.colwise() - mean).array().square().rowwise().mean();
      running_mean_ = momentum_ * running_mean_ + (Real(1) - momentum_) * mean;
      running_var_ = momentum_ * running_var_ + (Real(1) - momentum_) * var;
    } else {
      mean = running_mean_;
      var = running_var_;
    }
    inv_std_ = (var.array() + kEpsilon).rsqrt().matrix();
    normalized_ = ((x.colwise() - mean).array().colwise() * inv_std_.array()).matrix();
    Matrix<Real> y = (normalized_.array().colwise() * scale_.value.col(0).array()).matrix();
    y.colwise() += shift_.value.col(0);
    training_ = training;
    return y;
  }

  Matrix<Real> backward(const Matrix<Real>& dy) {
    scale_.grad.col(0) += (dy.array() * normalized_.array()).rowwise().sum().matrix();
    shift_.grad.col(0) += dy.rowwise().sum();
    const Matrix<Real> dn = (dy.array().colwise() * scale_.value.col(0).array()).matrix();
    if (!training_) {
      return (dn.array().colwise() * inv_std_.array()).matrix();
    }
    const auto m = static_cast<Real>(dy.cols());
    const Vector<Real> sum_dn = dn.rowwise().sum();
    const Vector<Real> sum_dn_n = (dn.array() * normalized_.array()).rowwise().sum().matrix();
    Matrix<Real> dx = dn * m;
    dx.colwise() -= sum_dn;
    dx -= (normalized_.array().colwise() * sum_dn_n.array()).matrix();
    return (dx.array().colwise() * (inv_std_.array() / m)).matrix();
  }

  ParamList<Real> params() { return {&scale_, &shift_}; }
  Param<Real>& scale() { return scale_; }
  Param<Real>& shift() { return shift_; }
  Vector<Real>& running_mean() { return running_mean_; }
  Vector<Real>& running_var() { return running_var_; }

private:
  Real momentum_;
  Param<Real> scale_, shift_;
  Vector<Real> running_mean_, running_var_;
  Vector<Real> inv_std_;
  Matrix<Real> normalized_;
  bool training_ = true;
};

// Learnable per-index vectors added to every step of a sample.
template <typename Real>
class Embedding {
public:
  Embedding(std::string name, Index width, Index count) : table_(name + ".table", width, count) {}

  void init(std::mt19937_64& rng, double bound) { table_.init_uniform(rng, bound); }

  Index count() const { return table_.value.cols(); }

  void add_to(Matrix<Real>& x, std::span<const int> indices, Index steps) const {
    for (std::size_t b = 0; b < indices.size(); ++b) {
      x.middleCols(static_cast<Index>(b) * steps, steps).colwise() += table_.value.col(indices[b]);
    }
  }

  void backward(const Matrix<Real>& dy, std::span<const int> indices, Index steps) {
    for (std::size_t b = 0; b < indices.size(); ++b) {
      table_.grad.col(indices[b]) +=
          dy.middleCols(static_cast<Index>(b) * steps, steps).rowwise().sum();
    }
  }

  ParamList<Real> params() { return {&table_}; }

private:
  Param<Real> table_;
};

// ---------------------------------------------------------------------------

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <typename Real>
class Adam {
public:
  explicit Adam(AdamConfig cfg) : cfg_(cfg) {}

  void step(const ParamList<Real>& params) {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    const auto b1 = static_cast<Real>(cfg_.beta1);
    const auto b2 = static_cast<Real>(cfg_.beta2);
    const auto lr = static_cast<Real>(cfg_.learning_rate * std::sqrt(c2) / c1);
    const auto eps = static_cast<Real>(cfg_.epsilon * std::sqrt(c2));
    for (auto* p : params) {
      p->m = b1 * p->m + (Real(1) - b1) * p->grad;
      p->v = b2 * p->v + (Real(1) - b2) * p->grad.cwiseAbs2();
      p->value.array() -= lr * p->m.array() / (p->v.array().sqrt() + eps);
    }
  }

  static void zero_grad(const ParamList<Real>& params) {
    for (auto* p : params) p->grad.setZero();
  }

private:
  AdamConfig cfg_;
  std::uint64_t t_ = 0;
};

}  // namespace spikecodec::nn
