// SPDX-License-Identifier: Apache-2.0

#include <cmath>

#include "mvae/nn.hpp"

namespace mvae::nn {

template <typename Scalar>
GruLayer<Scalar>::GruLayer(const std::string &name, Index input_size, Index hidden_size)
    : w_input(name + ".w_input", 3 * hidden_size, input_size),
      w_hidden(name + ".w_hidden", 3 * hidden_size, hidden_size),
      b_input(name + ".b_input", 3 * hidden_size, 1),
      b_hidden_n(name + ".b_hidden_n", hidden_size, 1) {}

template <typename Scalar>
void GruLayer<Scalar>::init(std::mt19937_64 &rng) {
  const Scalar bound = Scalar(1) / std::sqrt(static_cast<Scalar>(hidden_size()));
  for (auto *p : parameters()) p->init_uniform(bound, rng);
}

template <typename Scalar>
Matrix<Scalar> GruLayer<Scalar>::step(const Matrix<Scalar> &x, const Matrix<Scalar> &h) const {
  const Index H = hidden_size();
  require_shape(x.rows() == input_size() && h.rows() == H && x.cols() == h.cols(),
                "GruLayer::step: shape mismatch");
  Matrix<Scalar> gx = w_input.value * x;
  gx.colwise() += b_input.value.col(0);
  const Matrix<Scalar> gh = w_hidden.value * h;
  const auto r = sigmoid((gx.topRows(H) + gh.topRows(H)).array()).eval();
  const auto z = sigmoid((gx.middleRows(H, H) + gh.middleRows(H, H)).array()).eval();
  const auto hn = (gh.bottomRows(H).colwise() + b_hidden_n.value.col(0)).array().eval();
  const auto n = (gx.bottomRows(H).array() + r * hn).tanh().eval();
  return ((Scalar(1) - z) * n + z * h.array()).matrix();
}

template <typename Scalar>
Matrix<Scalar> GruLayer<Scalar>::forward(const Matrix<Scalar> &x, const Matrix<Scalar> &h0,
                                         const Matrix<Scalar> &mask, Index steps, bool reverse,
                                         GruTrace<Scalar> *trace) const {
  const Index H = hidden_size();
  const Index B = h0.cols();
  require_shape(x.rows() == input_size() && x.cols() == steps * B,
                "GruLayer::forward: input must be D x (T*B)");
  require_shape(h0.rows() == H, "GruLayer::forward: h0 must be H x B");
  require_shape(mask.rows() == 1 && mask.cols() == steps * B, "GruLayer::forward: mask must be 1 x (T*B)");

  Matrix<Scalar> gx = w_input.value * x;
  gx.colwise() += b_input.value.col(0);

  Matrix<Scalar> out(H, steps * B);
  if (trace) {
    trace->steps = steps;
    trace->batch = B;
    trace->reverse = reverse;
    trace->input = x;
    trace->mask = mask;
    trace->h_prev.resize(H, steps * B);
    trace->r.resize(H, steps * B);
    trace->z.resize(H, steps * B);
    trace->n.resize(H, steps * B);
    trace->hn.resize(H, steps * B);
  }

  Matrix<Scalar> h = h0;
  Matrix<Scalar> gh(3 * H, B);
  for (Index k = 0; k < steps; ++k) {
    const Index c = (reverse ? steps - 1 - k : k) * B;
    gh.noalias() = w_hidden.value * h;
    const auto r = sigmoid((gx.block(0, c, H, B) + gh.topRows(H)).array()).eval();
    const auto z = sigmoid((gx.block(H, c, H, B) + gh.middleRows(H, H)).array()).eval();
    const auto hn = (gh.bottomRows(H).colwise() + b_hidden_n.value.col(0)).array().eval();
    const auto n = (gx.block(2 * H, c, H, B).array() + r * hn).tanh().eval();
    if (trace) {
      trace->h_prev.middleCols(c, B) = h;
      trace->r.middleCols(c, B) = r.matrix();
      trace->z.middleCols(c, B) = z.matrix();
      trace->n.middleCols(c, B) = n.matrix();
      trace->hn.middleCols(c, B) = hn.matrix();
    }
    const auto m = mask.row(0).segment(c, B).array();
    const Matrix<Scalar> h_new = ((Scalar(1) - z) * n + z * h.array()).matrix();
    h.array() += (h_new - h).array().rowwise() * m;
    out.middleCols(c, B) = h;
  }
  return out;
}

template <typename Scalar>
Matrix<Scalar> GruLayer<Scalar>::backward(const GruTrace<Scalar> &tr, const Matrix<Scalar> &d_out,
                                          Matrix<Scalar> *dh0) {
  const Index H = hidden_size();
  const Index B = tr.batch;
  const Index T = tr.steps;
  require_shape(d_out.rows() == H && d_out.cols() == T * B, "GruLayer::backward: d_out must be H x (T*B)");

  Matrix<Scalar> d_gx(3 * H, T * B);
  Matrix<Scalar> d_gh(3 * H, T * B);
  Matrix<Scalar> dh = Matrix<Scalar>::Zero(H, B);
  for (Index k = 0; k < T; ++k) {
    const Index c = (tr.reverse ? k : T - 1 - k) * B;
    dh += d_out.middleCols(c, B);
    const auto m = tr.mask.row(0).segment(c, B).array();
    const Matrix<Scalar> dh_new = (dh.array().rowwise() * m).matrix();
    const Matrix<Scalar> dh_carry = (dh.array().rowwise() * (Scalar(1) - m)).matrix();

    const auto hp = tr.h_prev.middleCols(c, B).array();
    const auto r = tr.r.middleCols(c, B).array();
    const auto z = tr.z.middleCols(c, B).array();
    const auto n = tr.n.middleCols(c, B).array();
    const auto hn = tr.hn.middleCols(c, B).array();

    const auto dz = (dh_new.array() * (hp - n)).eval();
    const auto dpre_n = (dh_new.array() * (Scalar(1) - z) * (Scalar(1) - n.square())).eval();
    const auto dpre_r = (dpre_n * hn * r * (Scalar(1) - r)).eval();
    const auto dpre_z = (dz * z * (Scalar(1) - z)).eval();

    d_gx.block(0, c, H, B) = dpre_r.matrix();
    d_gx.block(H, c, H, B) = dpre_z.matrix();
    d_gx.block(2 * H, c, H, B) = dpre_n.matrix();
    d_gh.block(0, c, H, B) = dpre_r.matrix();
    d_gh.block(H, c, H, B) = dpre_z.matrix();
    d_gh.block(2 * H, c, H, B) = (dpre_n * r).matrix();

    dh = dh_carry + (dh_new.array() * z).matrix();
    dh.noalias() += w_hidden.value.transpose() * d_gh.middleCols(c, B);
  }
  if (dh0) *dh0 = dh;

  w_hidden.grad.noalias() += d_gh * tr.h_prev.transpose();
  b_hidden_n.grad += d_gh.bottomRows(H).rowwise().sum();
  w_input.grad.noalias() += d_gx * tr.input.transpose();
  b_input.grad += d_gx.rowwise().sum();
  return w_input.value.transpose() * d_gx;
}

template class GruLayer<float>;
template class GruLayer<double>;

}  // namespace mvae::nn
