// SPDX-License-Identifier: Apache-2.0

#include <cmath>

#include "mvae/nn.hpp"

namespace mvae::nn {

template <typename Scalar>
void adam_step(const ParameterList<Scalar> &params, AdamState<Scalar> &state) {
  for (auto *p : params) {
    require_shape(p->grad.rows() == p->value.rows() && p->grad.cols() == p->value.cols(),
                  "adam_step: gradient shape differs from " + p->name);
    if (!p->grad.allFinite()) throw NonFiniteGradient("non-finite gradient in " + p->name);
  }
  if (state.m.empty()) {
    for (auto *p : params) {
      state.m.push_back(Matrix<Scalar>::Zero(p->value.rows(), p->value.cols()));
      state.v.push_back(Matrix<Scalar>::Zero(p->value.rows(), p->value.cols()));
    }
  }
  require_shape(state.m.size() == params.size(), "adam_step: optimizer state does not match parameters");

  const auto &c = state.config;
  ++state.step;
  const Scalar b1 = static_cast<Scalar>(c.beta1);
  const Scalar b2 = static_cast<Scalar>(c.beta2);
  const Scalar bc1 = static_cast<Scalar>(1.0 - std::pow(c.beta1, static_cast<double>(state.step)));
  const Scalar bc2 = static_cast<Scalar>(1.0 - std::pow(c.beta2, static_cast<double>(state.step)));
  const Scalar lr = static_cast<Scalar>(c.lr);
  const Scalar eps = static_cast<Scalar>(c.eps);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto &g = params[k]->grad;
    auto &m = state.m[k];
    auto &v = state.v[k];
    require_shape(m.rows() == g.rows() && m.cols() == g.cols(), "adam_step: moment shape mismatch");
    m = b1 * m + (Scalar(1) - b1) * g;
    v.array() = b2 * v.array() + (Scalar(1) - b2) * g.array().square();
    params[k]->value.array() -=
        lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + eps);
  }
}

template <typename Scalar>
double clip_grad_norm(const ParameterList<Scalar> &params, double max_norm) {
  double sq = 0.0;
  for (auto *p : params) sq += static_cast<double>(p->grad.squaredNorm());
  const double norm = std::sqrt(sq);
  if (std::isfinite(norm) && norm > max_norm) {
    const Scalar s = static_cast<Scalar>(max_norm / norm);
    for (auto *p : params) p->grad *= s;
  }
  return norm;
}

template void adam_step<float>(const ParameterList<float> &, AdamState<float> &);
template void adam_step<double>(const ParameterList<double> &, AdamState<double> &);
template double clip_grad_norm<float>(const ParameterList<float> &, double);
template double clip_grad_norm<double>(const ParameterList<double> &, double);

}  // namespace mvae::nn
