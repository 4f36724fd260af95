// SPDX-License-Identifier: Apache-2.0

#include "mvae/vae.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace mvae::vae {

void ModelConfig::validate() const {
  if (vocab_size < 2 || embed_dim <= 0 || hidden <= 0 || latent <= 0 || encoder_layers <= 0 ||
      decoder_layers <= 0) {
    throw std::invalid_argument("ModelConfig: all sizes must be positive and vocab_size >= 2");
  }
}

void LossWeights::validate() const {
  if (mode == Mode::Beta) {
    if (!(beta >= 0.0) || beta > 1.0) throw InvalidWeight("beta must lie in [0, 1]");
  } else if (!(alpha >= 1.0)) {
    throw InvalidWeight("alpha must be >= 1");
  }
}

double rebalanced_loss(double recon_sum, double kl, const LossWeights &w) {
  w.validate();
  return w.recon_coefficient() * recon_sum + w.kl_coefficient() * kl;
}

PaddedBatch PaddedBatch::from(std::span<const TokenSequence> seqs) {
  PaddedBatch p;
  p.batch = static_cast<Index>(seqs.size());
  for (const auto &s : seqs) {
    p.lengths.push_back(static_cast<int>(s.size()));
    p.steps = std::max<Index>(p.steps, static_cast<Index>(s.size()));
  }
  p.tokens.assign(p.steps * p.batch, Vocabulary::kPad);
  for (Index b = 0; b < p.batch; ++b)
    for (Index t = 0; t < static_cast<Index>(seqs[b].size()); ++t) p.tokens[t * p.batch + b] = seqs[b][t];
  return p;
}

template <typename Scalar>
SequenceVae<Scalar>::SequenceVae(const ModelConfig &c, std::uint64_t seed) : config_(c) {
  c.validate();
  const Index V = c.vocab_size, E = c.embed_dim, H = c.hidden, L = c.latent;
  embedding = nn::Tensor<Scalar>("embedding", E, V);
  for (int l = 0; l < c.encoder_layers; ++l) {
    const Index in = l == 0 ? E : 2 * H;
    encoder_forward.emplace_back("encoder." + std::to_string(l) + ".forward", in, H);
    encoder_backward.emplace_back("encoder." + std::to_string(l) + ".backward", in, H);
  }
  mu_weight = nn::Tensor<Scalar>("mu.weight", L, 2 * H);
  mu_bias = nn::Tensor<Scalar>("mu.bias", L, 1);
  logvar_weight = nn::Tensor<Scalar>("logvar.weight", L, 2 * H);
  logvar_bias = nn::Tensor<Scalar>("logvar.bias", L, 1);
  for (int l = 0; l < c.decoder_layers; ++l) {
    init_weight.emplace_back("decoder." + std::to_string(l) + ".init.weight", H, L);
    init_bias.emplace_back("decoder." + std::to_string(l) + ".init.bias", H, 1);
    decoder.emplace_back("decoder." + std::to_string(l), l == 0 ? E : H, H);
  }
  out_weight = nn::Tensor<Scalar>("output.weight", V, H);
  out_bias = nn::Tensor<Scalar>("output.bias", V, 1);

  std::mt19937_64 rng(seed);
  embedding.init_normal(Scalar(1), rng);
  for (auto &g : encoder_forward) g.init(rng);
  for (auto &g : encoder_backward) g.init(rng);
  const Scalar head = Scalar(1) / std::sqrt(static_cast<Scalar>(2 * H));
  for (auto *t : {&mu_weight, &mu_bias, &logvar_weight, &logvar_bias}) t->init_uniform(head, rng);
  const Scalar init = Scalar(1) / std::sqrt(static_cast<Scalar>(L));
  for (int l = 0; l < c.decoder_layers; ++l) {
    init_weight[l].init_uniform(init, rng);
    init_bias[l].init_uniform(init, rng);
    decoder[l].init(rng);
  }
  const Scalar out = Scalar(1) / std::sqrt(static_cast<Scalar>(H));
  out_weight.init_uniform(out, rng);
  out_bias.init_uniform(out, rng);
}

template <typename Scalar>
nn::ParameterList<Scalar> SequenceVae<Scalar>::parameters() {
  nn::ParameterList<Scalar> p{&embedding};
  for (std::size_t l = 0; l < encoder_forward.size(); ++l) {
    for (auto *t : encoder_forward[l].parameters()) p.push_back(t);
    for (auto *t : encoder_backward[l].parameters()) p.push_back(t);
  }
  for (auto *t : {&mu_weight, &mu_bias, &logvar_weight, &logvar_bias}) p.push_back(t);
  for (std::size_t l = 0; l < decoder.size(); ++l) {
    p.push_back(&init_weight[l]);
    p.push_back(&init_bias[l]);
    for (auto *t : decoder[l].parameters()) p.push_back(t);
  }
  p.push_back(&out_weight);
  p.push_back(&out_bias);
  return p;
}

template <typename Scalar>
void SequenceVae<Scalar>::zero_grad() {
  for (auto *p : parameters()) p->zero_grad();
}

template <typename Scalar>
struct SequenceVae<Scalar>::Tape {
  std::vector<nn::GruTrace<Scalar>> enc_f, enc_b, dec;
  Matrix<Scalar> summary;  // 2H x B
  LatentBatch<Scalar> latent;
  Matrix<Scalar> z;
  Matrix<Scalar> top;  // H x (Td*B)
  Matrix<Scalar> dlogits;
  std::vector<int> dec_inputs;
  Index dec_steps = 0;
};

template <typename Scalar>
Matrix<Scalar> SequenceVae<Scalar>::embed(std::span<const int> tokens) const {
  Matrix<Scalar> out(config_.embed_dim, static_cast<Index>(tokens.size()));
  for (Index c = 0; c < out.cols(); ++c) {
    nn::require_shape(tokens[c] >= 0 && tokens[c] < config_.vocab_size, "token id out of vocabulary");
    out.col(c) = embedding.value.col(tokens[c]);
  }
  return out;
}

template <typename Scalar>
void SequenceVae<Scalar>::embed_backward(std::span<const int> tokens, const Matrix<Scalar> &d) {
  for (Index c = 0; c < d.cols(); ++c) embedding.grad.col(tokens[c]) += d.col(c);
}

namespace {

template <typename Scalar>
Matrix<Scalar> length_mask(const PaddedBatch &x, Index steps, int offset) {
  Matrix<Scalar> m(1, steps * x.batch);
  for (Index t = 0; t < steps; ++t)
    for (Index b = 0; b < x.batch; ++b) m(0, t * x.batch + b) = t < x.lengths[b] - offset ? Scalar(1) : Scalar(0);
  return m;
}

}  // namespace

template <typename Scalar>
Matrix<Scalar> SequenceVae<Scalar>::encoder_summary(const PaddedBatch &x, Tape *tape) const {
  const Index T = x.steps, B = x.batch, H = config_.hidden;
  nn::require_shape(T >= 1 && B >= 1, "encode: empty batch");
  const Matrix<Scalar> mask = length_mask<Scalar>(x, T, 0);
  const Matrix<Scalar> h0 = Matrix<Scalar>::Zero(H, B);
  Matrix<Scalar> input = embed(x.tokens);
  Matrix<Scalar> fwd, bwd;
  const auto layers = encoder_forward.size();
  if (tape) {
    tape->enc_f.resize(layers);
    tape->enc_b.resize(layers);
  }
  for (std::size_t l = 0; l < layers; ++l) {
    fwd = encoder_forward[l].forward(input, h0, mask, T, false, tape ? &tape->enc_f[l] : nullptr);
    bwd = encoder_backward[l].forward(input, h0, mask, T, true, tape ? &tape->enc_b[l] : nullptr);
    if (l + 1 < layers) {
      input.resize(2 * H, T * B);
      input << fwd, bwd;
    }
  }
  Matrix<Scalar> summary(2 * H, B);
  summary << fwd.middleCols((T - 1) * B, B), bwd.middleCols(0, B);
  return summary;
}

template <typename Scalar>
LatentBatch<Scalar> SequenceVae<Scalar>::encode(const PaddedBatch &x) const {
  const Matrix<Scalar> s = encoder_summary(x, nullptr);
  LatentBatch<Scalar> d;
  d.mu = (mu_weight.value * s).colwise() + mu_bias.value.col(0);
  d.logvar = (logvar_weight.value * s).colwise() + logvar_bias.value.col(0);
  return d;
}

template <typename Scalar>
std::vector<Matrix<Scalar>> SequenceVae<Scalar>::initial_states(const Matrix<Scalar> &z) const {
  nn::require_shape(z.rows() == config_.latent, "decoder: z has wrong latent dimension");
  std::vector<Matrix<Scalar>> h;
  for (std::size_t l = 0; l < decoder.size(); ++l)
    h.push_back((init_weight[l].value * z).colwise() + init_bias[l].value.col(0));
  return h;
}

template <typename Scalar>
Matrix<Scalar> SequenceVae<Scalar>::decoder_top(const Matrix<Scalar> &z, const PaddedBatch &x,
                                                std::vector<int> *targets, Tape *tape) const {
  const Index B = x.batch;
  nn::require_shape(z.cols() == B, "decoder: one latent column per sequence");
  nn::require_shape(x.steps >= 2, "decoder: sequences need at least SOS and EOS");
  const Index Td = x.steps - 1;
  std::vector<int> inputs(x.tokens.begin(), x.tokens.begin() + Td * B);
  if (targets) {
    targets->assign(Td * B, -1);
    for (Index t = 0; t < Td; ++t)
      for (Index b = 0; b < B; ++b)
        if (t < x.lengths[b] - 1) (*targets)[t * B + b] = x.at(t + 1, b);
  }
  const Matrix<Scalar> mask = length_mask<Scalar>(x, Td, 1);
  const auto h0 = initial_states(z);
  Matrix<Scalar> h = embed(inputs);
  if (tape) tape->dec.resize(decoder.size());
  for (std::size_t l = 0; l < decoder.size(); ++l)
    h = decoder[l].forward(h, h0[l], mask, Td, false, tape ? &tape->dec[l] : nullptr);
  if (tape) {
    tape->dec_inputs = std::move(inputs);
    tape->dec_steps = Td;
  }
  return h;
}

template <typename Scalar>
Matrix<Scalar> SequenceVae<Scalar>::teacher_forced_logits(const Matrix<Scalar> &z,
                                                          const PaddedBatch &x) const {
  const Matrix<Scalar> top = decoder_top(z, x, nullptr, nullptr);
  return (out_weight.value * top).colwise() + out_bias.value.col(0);
}

template <typename Scalar>
LossBreakdown SequenceVae<Scalar>::decode_teacher_forced(const Matrix<Scalar> &z,
                                                         const PaddedBatch &x) const {
  std::vector<int> targets;
  const Matrix<Scalar> top = decoder_top(z, x, &targets, nullptr);
  const Matrix<Scalar> logits = (out_weight.value * top).colwise() + out_bias.value.col(0);
  const Vector<Scalar> nll = nn::cross_entropy_columns<Scalar>(logits, targets, nullptr);
  LossBreakdown out;
  out.sequences = x.batch;
  out.tokens = std::count_if(targets.begin(), targets.end(), [](int t) { return t >= 0; });
  const double total = static_cast<double>(nll.sum());
  out.recon_sum = total / static_cast<double>(x.batch);
  out.recon_per_token = out.tokens ? total / static_cast<double>(out.tokens) : 0.0;
  out.total = out.recon_sum;
  return out;
}

template <typename Scalar>
FreeRunResult SequenceVae<Scalar>::decode_free_running(const Matrix<Scalar> &z,
                                                       const PaddedBatch *reference,
                                                       DecodeMode mode, std::mt19937_64 &rng,
                                                       Index max_steps) const {
  const Index B = z.cols();
  if (reference) nn::require_shape(reference->batch == B, "decode_free_running: reference batch size");
  const Index steps = reference ? std::max<Index>(reference->steps - 1, 0) : max_steps;

  FreeRunResult res;
  res.emitted.assign(B, {});
  res.finished.assign(B, false);
  auto h = initial_states(z);
  std::vector<int> input(B, Vocabulary::kSos);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  double nll = 0.0;
  long scored = 0;
  Index remaining = B;

  for (Index t = 0; t < steps; ++t) {
    Matrix<Scalar> x = embed(input);
    for (std::size_t l = 0; l < decoder.size(); ++l) {
      h[l] = decoder[l].step(x, h[l]);
      x = h[l];
    }
    const Matrix<Scalar> logits = (out_weight.value * x).colwise() + out_bias.value.col(0);
    for (Index b = 0; b < B; ++b) {
      const auto col = logits.col(b);
      const Scalar m = col.maxCoeff();
      const Vector<Scalar> e = (col.array() - m).exp().matrix();
      const Scalar sum = e.sum();
      int emit = 0;
      if (mode == DecodeMode::Greedy) {
        col.maxCoeff(&emit);
      } else {
        double u = uniform(rng) * static_cast<double>(sum);
        emit = static_cast<int>(e.size()) - 1;
        for (Index k = 0; k < e.size(); ++k) {
          u -= static_cast<double>(e(k));
          if (u < 0.0) {
            emit = static_cast<int>(k);
            break;
          }
        }
      }
      if (reference && t < reference->lengths[b] - 1) {
        const int target = reference->at(t + 1, b);
        nll += static_cast<double>(m + std::log(sum) - col(target));
        ++scored;
      }
      if (!res.finished[b]) {
        res.emitted[b].push_back(emit);
        if (emit == Vocabulary::kEos) {
          res.finished[b] = true;
          --remaining;
        }
      }
      input[b] = emit;
    }
    if (!reference && remaining == 0) break;
  }
  res.loss.sequences = B;
  res.loss.tokens = scored;
  if (reference) {
    res.loss.recon_sum = nll / static_cast<double>(B);
    res.loss.recon_per_token = scored ? nll / static_cast<double>(scored) : 0.0;
    res.loss.total = res.loss.recon_sum;
  }
  return res;
}

template <typename Scalar>
LossBreakdown SequenceVae<Scalar>::run(const PaddedBatch &x, const Matrix<Scalar> &eps,
                                       const LossWeights &w, Tape *tape) const {
  w.validate();
  const Index B = x.batch;
  const Matrix<Scalar> summary = encoder_summary(x, tape);
  LatentBatch<Scalar> lat;
  lat.mu = (mu_weight.value * summary).colwise() + mu_bias.value.col(0);
  lat.logvar = (logvar_weight.value * summary).colwise() + logvar_bias.value.col(0);
  const Matrix<Scalar> z = reparameterize(lat, eps);

  std::vector<int> targets;
  Matrix<Scalar> top = decoder_top(z, x, &targets, tape);
  const Matrix<Scalar> logits = (out_weight.value * top).colwise() + out_bias.value.col(0);
  Matrix<Scalar> dlogits;
  const Vector<Scalar> nll = nn::cross_entropy_columns<Scalar>(logits, targets, tape ? &dlogits : nullptr);
  const Vector<Scalar> kl = kl_to_standard_normal(lat);

  LossBreakdown out;
  out.sequences = B;
  out.tokens = std::count_if(targets.begin(), targets.end(), [](int t) { return t >= 0; });
  out.recon_sum = static_cast<double>(nll.sum()) / static_cast<double>(B);
  out.recon_per_token = out.tokens ? static_cast<double>(nll.sum()) / static_cast<double>(out.tokens) : 0.0;
  out.kl = static_cast<double>(kl.sum()) / static_cast<double>(B);
  out.beta = w.kl_coefficient();
  out.total = rebalanced_loss(out.recon_sum, out.kl, w);

  if (tape) {
    tape->summary = summary;
    tape->latent = std::move(lat);
    tape->z = z;
    tape->top = std::move(top);
    tape->dlogits = std::move(dlogits);
  }
  return out;
}

template <typename Scalar>
void SequenceVae<Scalar>::backward(const PaddedBatch &x, const Matrix<Scalar> &eps,
                                   const LossWeights &w, Tape &tape) {
  const Index B = x.batch, T = x.steps, H = config_.hidden;
  const Scalar rw = static_cast<Scalar>(w.recon_coefficient() / static_cast<double>(B));
  const Scalar kw = static_cast<Scalar>(w.kl_coefficient() / static_cast<double>(B));

  // Output projection and decoder stack.
  tape.dlogits *= rw;
  out_weight.grad.noalias() += tape.dlogits * tape.top.transpose();
  out_bias.grad += tape.dlogits.rowwise().sum();
  Matrix<Scalar> d = out_weight.value.transpose() * tape.dlogits;
  Matrix<Scalar> dz = Matrix<Scalar>::Zero(config_.latent, B);
  for (std::size_t l = decoder.size(); l-- > 0;) {
    Matrix<Scalar> dh0;
    d = decoder[l].backward(tape.dec[l], d, &dh0);
    init_weight[l].grad.noalias() += dh0 * tape.z.transpose();
    init_bias[l].grad += dh0.rowwise().sum();
    dz.noalias() += init_weight[l].value.transpose() * dh0;
  }
  embed_backward(tape.dec_inputs, d);

  // Reparameterization and KL.
  const auto &mu = tape.latent.mu;
  const auto &lv = tape.latent.logvar;
  const Matrix<Scalar> dmu = dz + kw * mu;
  const Matrix<Scalar> dlv =
      (dz.array() * eps.array() * Scalar(0.5) * (Scalar(0.5) * lv.array()).exp() +
       kw * Scalar(0.5) * (lv.array().exp() - Scalar(1)))
          .matrix();
  mu_weight.grad.noalias() += dmu * tape.summary.transpose();
  mu_bias.grad += dmu.rowwise().sum();
  logvar_weight.grad.noalias() += dlv * tape.summary.transpose();
  logvar_bias.grad += dlv.rowwise().sum();
  const Matrix<Scalar> dsummary =
      mu_weight.value.transpose() * dmu + logvar_weight.value.transpose() * dlv;

  // Encoder stack: only the last forward step and first backward step feed the heads.
  Matrix<Scalar> d_f = Matrix<Scalar>::Zero(H, T * B);
  Matrix<Scalar> d_b = Matrix<Scalar>::Zero(H, T * B);
  d_f.middleCols((T - 1) * B, B) = dsummary.topRows(H);
  d_b.middleCols(0, B) = dsummary.bottomRows(H);
  for (std::size_t l = encoder_forward.size(); l-- > 0;) {
    Matrix<Scalar> dx = encoder_forward[l].backward(tape.enc_f[l], d_f, nullptr);
    dx += encoder_backward[l].backward(tape.enc_b[l], d_b, nullptr);
    if (l > 0) {
      d_f = dx.topRows(H);
      d_b = dx.bottomRows(H);
    } else {
      embed_backward(x.tokens, dx);
    }
  }
}

template <typename Scalar>
LossBreakdown SequenceVae<Scalar>::forward_backward(const PaddedBatch &x, const Matrix<Scalar> &eps,
                                                    const LossWeights &w) {
  Tape tape;
  const LossBreakdown out = run(x, eps, w, &tape);
  backward(x, eps, w, tape);
  return out;
}

template <typename Scalar>
LossBreakdown SequenceVae<Scalar>::loss(const PaddedBatch &x, const Matrix<Scalar> &eps,
                                        const LossWeights &w) const {
  return run(x, eps, w, nullptr);
}

template class SequenceVae<float>;
template class SequenceVae<double>;

}  // namespace mvae::vae
