// SPDX-License-Identifier: Apache-2.0
//
// Minimal differentiable layer for the sequence VAE: parameter tensors with
// gradient slots, numerically stable softmax cross-entropy, GRU layers with
// hand-written backpropagation, and a central-difference gradient checker.
//
// Sequences are laid out time-major in a single matrix: column t*B + b is
// time step t of batch element b.

#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mvae::nn {

using Index = Eigen::Index;
template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

class ShapeMismatch : public std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

inline void require_shape(bool ok, const std::string &what) {
  if (!ok) throw ShapeMismatch(what);
}

template <typename Scalar>
struct Tensor {
  std::string name;
  Matrix<Scalar> value;
  Matrix<Scalar> grad;

  Tensor() = default;
  Tensor(std::string n, Index rows, Index cols)
      : name(std::move(n)), value(Matrix<Scalar>::Zero(rows, cols)),
        grad(Matrix<Scalar>::Zero(rows, cols)) {}

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
  Index size() const { return value.size(); }

  void init_uniform(Scalar bound, std::mt19937_64 &rng) {
    std::uniform_real_distribution<double> u(-static_cast<double>(bound),
                                             static_cast<double>(bound));
    for (Index i = 0; i < value.size(); ++i) value.data()[i] = static_cast<Scalar>(u(rng));
  }
  void init_normal(Scalar stddev, std::mt19937_64 &rng) {
    std::normal_distribution<double> n(0.0, static_cast<double>(stddev));
    for (Index i = 0; i < value.size(); ++i) value.data()[i] = static_cast<Scalar>(n(rng));
  }
};

template <typename Scalar>
using ParameterList = std::vector<Tensor<Scalar> *>;

template <typename Derived>
auto sigmoid(const Eigen::ArrayBase<Derived> &x) {
  using S = typename Derived::Scalar;
  return (S(1) + (-x).exp()).inverse();
}

/// -log softmax(logits)[target], computed with max subtraction.
template <typename Scalar>
Scalar softmax_cross_entropy(const Eigen::Ref<const Vector<Scalar>> &logits, int target) {
  require_shape(logits.size() >= 2, "softmax_cross_entropy: need at least two classes");
  require_shape(target >= 0 && target < logits.size(), "softmax_cross_entropy: target out of range");
  const Scalar m = logits.maxCoeff();
  const Scalar lse = m + std::log((logits.array() - m).exp().sum());
  return lse - logits(target);
}

template <typename Scalar>
Vector<Scalar> softmax(const Eigen::Ref<const Vector<Scalar>> &logits) {
  const Scalar m = logits.maxCoeff();
  Vector<Scalar> p = (logits.array() - m).exp().matrix();
  return p / p.sum();
}

/// Column-wise cross-entropy. Columns whose target is negative are skipped.
/// Returns per-column losses; when `dlogits` is non-null it receives
/// softmax - onehot for scored columns and zero elsewhere.
template <typename Scalar>
Vector<Scalar> cross_entropy_columns(const Matrix<Scalar> &logits, std::span<const int> targets,
                                     Matrix<Scalar> *dlogits) {
  require_shape(static_cast<Index>(targets.size()) == logits.cols(),
                "cross_entropy_columns: one target per column");
  const Index n = logits.cols();
  Vector<Scalar> loss = Vector<Scalar>::Zero(n);
  if (dlogits) dlogits->setZero(logits.rows(), n);
  for (Index c = 0; c < n; ++c) {
    const int t = targets[c];
    if (t < 0) continue;
    require_shape(t < logits.rows(), "cross_entropy_columns: target out of range");
    const Scalar m = logits.col(c).maxCoeff();
    auto e = (logits.col(c).array() - m).exp();
    const Scalar s = e.sum();
    loss(c) = m + std::log(s) - logits(t, c);
    if (dlogits) {
      dlogits->col(c) = (e / s).matrix();
      (*dlogits)(t, c) -= Scalar(1);
    }
  }
  return loss;
}

/// Saved activations of one GRU layer over a sequence, used by backward().
template <typename Scalar>
struct GruTrace {
  Index steps = 0;
  Index batch = 0;
  bool reverse = false;
  Matrix<Scalar> input;   // D x TB
  Matrix<Scalar> h_prev;  // H x TB, state entering each step
  Matrix<Scalar> r, z, n, hn;
  Matrix<Scalar> mask;  // 1 x TB
};

/// GRU layer with gate order (r, z, n):
///   r  = sigmoid(W_r x + U_r h + b_r)
///   z  = sigmoid(W_z x + U_z h + b_z)
///   n  = tanh(W_n x + b_in + r * (U_n h + b_hn))
///   h' = (1 - z) * n + z * h
/// A masked step (mask 0) carries h through unchanged.
template <typename Scalar>
class GruLayer {
 public:
  GruLayer() = default;
  GruLayer(const std::string &name, Index input_size, Index hidden_size);

  Index input_size() const { return w_input.value.cols(); }
  Index hidden_size() const { return w_hidden.value.cols(); }

  void init(std::mt19937_64 &rng);
  ParameterList<Scalar> parameters() { return {&w_input, &w_hidden, &b_input, &b_hidden_n}; }

  /// One step on a batch: x is D x B, h is H x B.
  Matrix<Scalar> step(const Matrix<Scalar> &x, const Matrix<Scalar> &h) const;

  /// Runs the whole sequence; returns the H x TB state after every step.
  /// With `reverse`, steps are processed from t = T-1 down to 0.
  Matrix<Scalar> forward(const Matrix<Scalar> &x, const Matrix<Scalar> &h0,
                         const Matrix<Scalar> &mask, Index steps, bool reverse,
                         GruTrace<Scalar> *trace) const;

  /// Accumulates parameter gradients given dL/d(outputs). Returns dL/dx and
  /// writes dL/dh0 into `dh0`.
  Matrix<Scalar> backward(const GruTrace<Scalar> &trace, const Matrix<Scalar> &d_out,
                          Matrix<Scalar> *dh0);

  Tensor<Scalar> w_input;     // 3H x D
  Tensor<Scalar> w_hidden;    // 3H x H
  Tensor<Scalar> b_input;     // 3H x 1: b_r, b_z, b_in
  Tensor<Scalar> b_hidden_n;  // H x 1
};

extern template class GruLayer<float>;
extern template class GruLayer<double>;

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class NonFiniteGradient : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

template <typename Scalar>
struct AdamState {
  AdamConfig config;
  long step = 0;
  std::vector<Matrix<Scalar>> m;
  std::vector<Matrix<Scalar>> v;
};

/// Bias-corrected Adam update on every tensor's grad slot. Throws
/// NonFiniteGradient (and leaves parameters and state untouched) when any
/// gradient entry is NaN or infinite.
template <typename Scalar>
void adam_step(const ParameterList<Scalar> &params, AdamState<Scalar> &state);

/// Rescales all gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
template <typename Scalar>
double clip_grad_norm(const ParameterList<Scalar> &params, double max_norm);

extern template void adam_step<float>(const ParameterList<float> &, AdamState<float> &);
extern template void adam_step<double>(const ParameterList<double> &, AdamState<double> &);
extern template double clip_grad_norm<float>(const ParameterList<float> &, double);
extern template double clip_grad_norm<double>(const ParameterList<double> &, double);

/// |analytic - numeric| / max(|analytic|, |numeric|, floor).
inline double relative_error(double analytic, double numeric, double floor = 1e-4) {
  return std::abs(analytic - numeric) /
         std::max({std::abs(analytic), std::abs(numeric), floor});
}

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  std::string worst;  // "<tensor>[i]"
};

/// Compares analytic gradients against central differences for a scalar
/// function of a plain parameter vector.
inline GradCheckResult grad_check(const std::function<double(const std::vector<double> &)> &f,
                                  const std::function<std::vector<double>(const std::vector<double> &)> &df,
                                  std::vector<double> theta, double step = 1e-5) {
  GradCheckResult res;
  const auto analytic = df(theta);
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double orig = theta[i];
    theta[i] = orig + step;
    const double fp = f(theta);
    theta[i] = orig - step;
    const double fm = f(theta);
    theta[i] = orig;
    const double numeric = (fp - fm) / (2 * step);
    const double e = relative_error(analytic[i], numeric);
    if (e > res.max_relative_error) {
      res.max_relative_error = e;
      res.worst = "theta[" + std::to_string(i) + "]";
    }
    ++res.checked;
  }
  return res;
}

/// Tensor form: `loss_and_grad` must zero and refill every grad slot and
/// return the loss; `loss` evaluates the loss only. Every `stride`-th entry
/// of each tensor is perturbed.
template <typename Scalar>
GradCheckResult grad_check(const ParameterList<Scalar> &params,
                           const std::function<double()> &loss_and_grad,
                           const std::function<double()> &loss, double step = 1e-5,
                           Index stride = 1) {
  GradCheckResult res;
  loss_and_grad();
  std::vector<Matrix<Scalar>> analytic;
  for (auto *p : params) analytic.push_back(p->grad);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto *p = params[k];
    for (Index i = 0; i < p->value.size(); i += stride) {
      Scalar &w = p->value.data()[i];
      const Scalar orig = w;
      w = orig + static_cast<Scalar>(step);
      const double fp = loss();
      w = orig - static_cast<Scalar>(step);
      const double fm = loss();
      w = orig;
      const double numeric = (fp - fm) / (2 * step);
      const double e = relative_error(static_cast<double>(analytic[k].data()[i]), numeric);
      if (e > res.max_relative_error) {
        res.max_relative_error = e;
        res.worst = p->name + "[" + std::to_string(i) + "]";
      }
      ++res.checked;
    }
  }
  return res;
}

}  // namespace mvae::nn
