// SPDX-License-Identifier: Apache-2.0
//
// Posterior-collapse diagnostics: the mutual information I_q between data
// and latent code, and the teacher-forcing underestimation ratio.

#pragma once

#include <algorithm>
#include <random>
#include <span>
#include <stdexcept>

#include "mvae/vae.hpp"

namespace mvae::diagnostics {

using vae::Index;

class DegenerateBatch : public std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

class DivisionByZero : public std::domain_error {
  using std::domain_error::domain_error;
};

struct MiEstimate {
  double avg_kl = 0.0;       // mean closed-form KL(q(z|x) || p(z))
  double marginal_kl = 0.0;  // Monte-Carlo KL(q(z) || p(z))
  double mi = 0.0;           // avg_kl - marginal_kl
  double std_error = 0.0;    // of marginal_kl, hence of mi
  double tolerance = 0.0;    // 3 standard errors
  long n_samples = 0;
  long n_data = 0;
};

/// I_q = E_x KL(q(z|x) || p(z)) - KL(q(z) || p(z)) for the aggregate
/// posterior q(z) = (1/N) sum_j q(z|x_j). Sample s is drawn from
/// q(z|x_{s mod N}). The mixture density includes each sample's own
/// component, so the estimate is biased upward; its expectation is at most
/// log N.
MiEstimate mutual_information(const vae::LatentBatch<double> &posteriors, long n_samples,
                              std::mt19937_64 &rng);

/// Encodes `data` in chunks of `batch` and estimates I_q over the resulting
/// posteriors; n_samples <= 0 draws one sample per datum.
template <typename Model>
MiEstimate mutual_information(const Model &model, std::span<const TokenSequence> data,
                              long n_samples, std::mt19937_64 &rng, Index batch = 256) {
  if (data.size() < 2) throw DegenerateBatch("mutual_information needs at least two inputs");
  const Index n = static_cast<Index>(data.size());
  const Index latent = model.config().latent;
  vae::LatentBatch<double> post{nn::Matrix<double>(latent, n), nn::Matrix<double>(latent, n)};
  for (Index start = 0; start < n; start += batch) {
    const Index count = std::min(batch, n - start);
    const auto x = vae::PaddedBatch::from(data.subspan(start, count));
    const auto d = model.encode(x);
    post.mu.middleCols(start, count) = d.mu.template cast<double>();
    post.logvar.middleCols(start, count) = d.logvar.template cast<double>();
  }
  return mutual_information(post, n_samples > 0 ? n_samples : static_cast<long>(n), rng);
}

struct UnderestimationReport {
  double tf_loss = 0.0;  // teacher-forced nats per token
  double fr_loss = 0.0;  // free-running nats per token
  double ratio = 0.0;    // tf_loss / fr_loss; 0 when fr_loss is 0
  long tokens = 0;
};

UnderestimationReport make_report(double tf_loss, double fr_loss, long tokens = 0);

/// alpha = fr_loss / tf_loss. Throws DivisionByZero when tf_loss is 0.
double alpha_from_ratio(const UnderestimationReport &r);

/// Teacher-forced and free-running per-token losses on the same z draws
/// (one reparameterized sample per sequence).
template <typename Model>
UnderestimationReport underestimation_ratio(const Model &model, std::span<const TokenSequence> data,
                                            std::mt19937_64 &rng,
                                            vae::DecodeMode mode = vae::DecodeMode::Sample,
                                            Index batch = 256) {
  using Scalar = typename Model::scalar_type;
  if (data.empty()) throw DegenerateBatch("underestimation_ratio needs a nonempty batch");
  double tf = 0.0, fr = 0.0;
  long tokens = 0;
  const Index n = static_cast<Index>(data.size());
  for (Index start = 0; start < n; start += batch) {
    const Index count = std::min(batch, n - start);
    const auto x = vae::PaddedBatch::from(data.subspan(start, count));
    const auto d = model.encode(x);
    const auto z = vae::reparameterize(d, vae::standard_normal<Scalar>(d.mu.rows(), count, rng));
    const auto t = model.decode_teacher_forced(z, x);
    const auto f = model.decode_free_running(z, &x, mode, rng, 0).loss;
    tf += t.recon_per_token * static_cast<double>(t.tokens);
    fr += f.recon_per_token * static_cast<double>(f.tokens);
    tokens += t.tokens;
  }
  return make_report(tokens ? tf / static_cast<double>(tokens) : 0.0,
                     tokens ? fr / static_cast<double>(tokens) : 0.0, tokens);
}

}  // namespace mvae::diagnostics
