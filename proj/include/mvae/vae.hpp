// SPDX-License-Identifier: Apache-2.0
//
// GRU sequence VAE: bidirectional encoder, latent Gaussian heads, and a
// stacked unidirectional decoder whose initial states are affine maps of z.

#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "mvae/nn.hpp"
#include "mvae/vocabulary.hpp"

namespace mvae::vae {

using nn::Index;
using nn::Matrix;
using nn::Vector;

struct ModelConfig {
  int vocab_size = 0;
  int embed_dim = 64;
  int hidden = 128;
  int latent = 16;
  int encoder_layers = 2;
  int decoder_layers = 4;

  void validate() const;
  bool operator==(const ModelConfig &) const = default;
};

/// Time-major padded token matrix: tokens[t * batch + b], PAD past each
/// sequence's length.
struct PaddedBatch {
  Index steps = 0;
  Index batch = 0;
  std::vector<int> tokens;
  std::vector<int> lengths;

  static PaddedBatch from(std::span<const TokenSequence> seqs);
  int at(Index t, Index b) const { return tokens[t * batch + b]; }
};

template <typename Scalar>
struct LatentDistribution {
  Vector<Scalar> mu;
  Vector<Scalar> logvar;
};

/// One distribution per column.
template <typename Scalar>
struct LatentBatch {
  Matrix<Scalar> mu;      // L x B
  Matrix<Scalar> logvar;  // L x B

  Index size() const { return mu.cols(); }
  LatentDistribution<Scalar> at(Index b) const { return {mu.col(b), logvar.col(b)}; }
};

/// z = mu + exp(logvar / 2) * eps
template <typename Scalar>
Vector<Scalar> reparameterize(const LatentDistribution<Scalar> &d, const Vector<Scalar> &eps) {
  nn::require_shape(eps.size() == d.mu.size(), "reparameterize: eps dimension differs from latent");
  return d.mu + ((Scalar(0.5) * d.logvar.array()).exp() * eps.array()).matrix();
}

template <typename Scalar>
Matrix<Scalar> reparameterize(const LatentBatch<Scalar> &d, const Matrix<Scalar> &eps) {
  nn::require_shape(eps.rows() == d.mu.rows() && eps.cols() == d.mu.cols(),
                    "reparameterize: eps shape differs from latent batch");
  return d.mu + ((Scalar(0.5) * d.logvar.array()).exp() * eps.array()).matrix();
}

/// KL(N(mu, diag(exp(logvar))) || N(0, I)) in nats.
template <typename Scalar>
Scalar kl_to_standard_normal(const LatentDistribution<Scalar> &d) {
  return Scalar(0.5) *
         (d.mu.array().square() + d.logvar.array().exp() - Scalar(1) - d.logvar.array()).sum();
}

/// Per-column KL of a latent batch.
template <typename Scalar>
Vector<Scalar> kl_to_standard_normal(const LatentBatch<Scalar> &d) {
  return (Scalar(0.5) *
          (d.mu.array().square() + d.logvar.array().exp() - Scalar(1) - d.logvar.array()))
      .colwise()
      .sum()
      .transpose()
      .matrix();
}

/// Draws n latent vectors from N(0, I) as columns.
template <typename Scalar>
Matrix<Scalar> sample_prior(Index n, Index latent, std::mt19937_64 &rng) {
  if (n < 1) throw std::invalid_argument("sample_prior: n must be >= 1");
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix<Scalar> z(latent, n);
  for (Index c = 0; c < n; ++c)
    for (Index r = 0; r < latent; ++r) z(r, c) = static_cast<Scalar>(normal(rng));
  return z;
}

template <typename Scalar>
Matrix<Scalar> standard_normal(Index rows, Index cols, std::mt19937_64 &rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix<Scalar> m(rows, cols);
  for (Index c = 0; c < cols; ++c)
    for (Index r = 0; r < rows; ++r) m(r, c) = static_cast<Scalar>(normal(rng));
  return m;
}

class InvalidWeight : public std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Exactly one re-weighting is active: alpha scales the reconstruction term,
/// beta scales the KL term. alpha = 1 / beta gives the same minimizers.
struct LossWeights {
  enum class Mode { Alpha, Beta };
  Mode mode = Mode::Beta;
  double alpha = 1.0;
  double beta = 1.0;

  static LossWeights beta_weight(double beta) { return {Mode::Beta, 1.0, beta}; }
  static LossWeights alpha_weight(double alpha) { return {Mode::Alpha, alpha, 1.0}; }
  void validate() const;
  double recon_coefficient() const { return mode == Mode::Alpha ? alpha : 1.0; }
  double kl_coefficient() const { return mode == Mode::Beta ? beta : 1.0; }
};

/// Minimization form: alpha * recon + kl, or recon + beta * kl.
double rebalanced_loss(double recon_sum, double kl, const LossWeights &w);

struct LossBreakdown {
  double recon_sum = 0.0;        // nats per sequence, batch mean
  double recon_per_token = 0.0;  // nats per scored token
  double kl = 0.0;               // nats per sequence, batch mean
  double beta = 1.0;
  double total = 0.0;
  long tokens = 0;
  long sequences = 0;
};

enum class DecodeMode { Greedy, Sample };

struct FreeRunResult {
  LossBreakdown loss;                  // scored only when a reference is given
  std::vector<TokenSequence> emitted;  // emitted ids, EOS included when reached
  std::vector<bool> finished;          // EOS emitted within the step budget
};

template <typename Scalar>
class SequenceVae {
 public:
  using scalar_type = Scalar;

  SequenceVae() = default;
  SequenceVae(const ModelConfig &config, std::uint64_t seed);

  const ModelConfig &config() const { return config_; }
  nn::ParameterList<Scalar> parameters();
  void zero_grad();

  LatentBatch<Scalar> encode(const PaddedBatch &x) const;

  /// Decoder input at step t is the ground-truth token x_{t-1}, x_0 = SOS.
  LossBreakdown decode_teacher_forced(const Matrix<Scalar> &z, const PaddedBatch &x) const;
  Matrix<Scalar> teacher_forced_logits(const Matrix<Scalar> &z, const PaddedBatch &x) const;

  /// Decoder input at step t is the model's own previous emission. With a
  /// reference, exactly the reference's steps are run and each position is
  /// scored against the reference token; without one, up to `max_steps`
  /// tokens are emitted, stopping once every column has emitted EOS.
  FreeRunResult decode_free_running(const Matrix<Scalar> &z, const PaddedBatch *reference,
                                    DecodeMode mode, std::mt19937_64 &rng,
                                    Index max_steps) const;

  /// Full objective through encode, reparameterize (with the given eps) and
  /// teacher-forced decode. forward_backward() accumulates gradients.
  LossBreakdown forward_backward(const PaddedBatch &x, const Matrix<Scalar> &eps,
                                 const LossWeights &w);
  LossBreakdown loss(const PaddedBatch &x, const Matrix<Scalar> &eps, const LossWeights &w) const;

 private:
  struct Tape;
  LossBreakdown run(const PaddedBatch &x, const Matrix<Scalar> &eps, const LossWeights &w,
                    Tape *tape) const;
  void backward(const PaddedBatch &x, const Matrix<Scalar> &eps, const LossWeights &w, Tape &tape);
  Matrix<Scalar> embed(std::span<const int> tokens) const;
  void embed_backward(std::span<const int> tokens, const Matrix<Scalar> &d);
  std::vector<Matrix<Scalar>> initial_states(const Matrix<Scalar> &z) const;
  Matrix<Scalar> encoder_summary(const PaddedBatch &x, Tape *tape) const;
  Matrix<Scalar> decoder_top(const Matrix<Scalar> &z, const PaddedBatch &x,
                             std::vector<int> *targets, Tape *tape) const;

  ModelConfig config_;

 public:
  nn::Tensor<Scalar> embedding;  // E x V, shared by encoder and decoder inputs
  std::vector<nn::GruLayer<Scalar>> encoder_forward;
  std::vector<nn::GruLayer<Scalar>> encoder_backward;
  nn::Tensor<Scalar> mu_weight, mu_bias;          // L x 2H, L x 1
  nn::Tensor<Scalar> logvar_weight, logvar_bias;  // L x 2H, L x 1
  std::vector<nn::Tensor<Scalar>> init_weight;    // per decoder layer: H x L
  std::vector<nn::Tensor<Scalar>> init_bias;      // H x 1
  std::vector<nn::GruLayer<Scalar>> decoder;
  nn::Tensor<Scalar> out_weight, out_bias;  // V x H, V x 1
};

extern template class SequenceVae<float>;
extern template class SequenceVae<double>;

}  // namespace mvae::vae
