// SPDX-License-Identifier: Apache-2.0
//
// Reconstruction accuracy (encode x10, decode x10 per molecule), prior
// sampling validity (1000 latents x 100 decodes), and unique valid
// generation. Functions are generic over any model exposing encode(),
// decode_free_running() and config().latent.

#pragma once

#include <algorithm>
#include <chrono>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "mvae/smiles.hpp"
#include "mvae/vae.hpp"

namespace mvae::evaluation {

using vae::Index;

class Timeout : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Decoding cap for a model trained on bodies of at most `train_max_length`
/// tokens: ten extra tokens plus the EOS step.
inline Index max_decode_steps(int train_max_length) { return train_max_length + 10 + 1; }

struct DecodeOptions {
  vae::DecodeMode mode = vae::DecodeMode::Sample;
  Index max_steps = max_decode_steps(60);
  Index batch = 500;  // columns per decoder call
};

/// SMILES text of an emission, or nothing when the emission never reached
/// EOS or contains a special token before it.
std::optional<std::string> emitted_smiles(const Vocabulary &vocab, const TokenSequence &emitted,
                                          bool finished);

/// Verdict for one decode; a missing EOS is a lexical error.
smiles::ValidityVerdict classify_emission(const std::optional<std::string> &text);

/// Fraction of reference positions (body tokens and EOS) reproduced at the
/// same position.
double token_match_fraction(const TokenSequence &reference, const TokenSequence &emitted);

struct ReconOptions : DecodeOptions {
  int encodes = 10;
  int decodes = 10;
};

struct ReconReport {
  double sequence_accuracy = 0.0;  // exact string matches / attempts
  double token_accuracy = 0.0;     // mean per-attempt token match fraction
  double valid_but_unmatched_fraction = 0.0;
  long molecules = 0;
  long encodes = 0;   // encoder draws performed
  long attempts = 0;  // decodes performed
  long matches = 0;
  int encodes_per_molecule = 0;
  int decodes_per_encoding = 0;
};

template <typename Model>
ReconReport reconstruction_accuracy(const Model &model, const Vocabulary &vocab,
                                    std::span<const std::string> smiles,
                                    std::span<const TokenSequence> sequences,
                                    const ReconOptions &opt, std::mt19937_64 &rng) {
  using Scalar = typename Model::scalar_type;
  if (smiles.size() != sequences.size())
    throw std::invalid_argument("reconstruction_accuracy: smiles and sequences differ in length");
  if (opt.encodes < 1 || opt.decodes < 1)
    throw std::invalid_argument("reconstruction_accuracy: encodes and decodes must be >= 1");
  ReconReport rep;
  rep.encodes_per_molecule = opt.encodes;
  rep.decodes_per_encoding = opt.decodes;
  const Index per_mol = static_cast<Index>(opt.encodes) * opt.decodes;
  const Index chunk = std::max<Index>(1, opt.batch / per_mol);
  const Index n = static_cast<Index>(sequences.size());
  double token_sum = 0.0;
  long valid_unmatched = 0;
  for (Index start = 0; start < n; start += chunk) {
    const Index count = std::min(chunk, n - start);
    const auto x = vae::PaddedBatch::from(sequences.subspan(start, count));
    const auto d = model.encode(x);
    const Index L = d.mu.rows();
    nn::Matrix<Scalar> z(L, count * per_mol);
    for (Index m = 0; m < count; ++m) {
      for (int e = 0; e < opt.encodes; ++e) {
        const nn::Vector<Scalar> eps = vae::standard_normal<Scalar>(L, 1, rng);
        const nn::Vector<Scalar> ze = vae::reparameterize(d.at(m), eps);
        ++rep.encodes;
        for (int k = 0; k < opt.decodes; ++k) z.col(m * per_mol + e * opt.decodes + k) = ze;
      }
    }
    const auto out = model.decode_free_running(z, nullptr, opt.mode, rng, opt.max_steps);
    for (Index c = 0; c < z.cols(); ++c) {
      const Index m = c / per_mol;
      const auto text = emitted_smiles(vocab, out.emitted[c], out.finished[c]);
      const bool exact = text && *text == smiles[start + m];
      ++rep.attempts;
      rep.matches += exact ? 1 : 0;
      token_sum += token_match_fraction(sequences[start + m], out.emitted[c]);
      if (!exact && text && smiles::check_validity(*text).valid) ++valid_unmatched;
    }
    rep.molecules += count;
  }
  if (rep.attempts > 0) {
    const double a = static_cast<double>(rep.attempts);
    rep.sequence_accuracy = static_cast<double>(rep.matches) / a;
    rep.token_accuracy = token_sum / a;
    rep.valid_but_unmatched_fraction = static_cast<double>(valid_unmatched) / a;
  }
  return rep;
}

struct ValidityOptions : DecodeOptions {
  int latents = 1000;
  int decodes = 100;
};

struct ValidityReport {
  double validity = 0.0;
  long latents = 0;   // prior draws
  long attempts = 0;  // decodes
  long valid = 0;
  long unique_valid = 0;
  std::map<std::string, long> errors;  // error class name -> count
};

template <typename Model>
ValidityReport prior_validity(const Model &model, const Vocabulary &vocab, const ValidityOptions &opt,
                              std::mt19937_64 &rng) {
  using Scalar = typename Model::scalar_type;
  if (opt.latents < 1 || opt.decodes < 1)
    throw std::invalid_argument("prior_validity: latents and decodes must be >= 1");
  ValidityReport rep;
  const Index L = model.config().latent;
  const Index chunk = std::max<Index>(1, opt.batch / opt.decodes);
  std::unordered_set<std::string> unique;
  for (Index start = 0; start < opt.latents; start += chunk) {
    const Index count = std::min<Index>(chunk, opt.latents - start);
    const nn::Matrix<Scalar> prior = vae::sample_prior<Scalar>(count, L, rng);
    rep.latents += count;
    nn::Matrix<Scalar> z(L, count * opt.decodes);
    for (Index c = 0; c < z.cols(); ++c) z.col(c) = prior.col(c / opt.decodes);
    const auto out = model.decode_free_running(z, nullptr, opt.mode, rng, opt.max_steps);
    for (Index c = 0; c < z.cols(); ++c) {
      ++rep.attempts;
      const auto text = emitted_smiles(vocab, out.emitted[c], out.finished[c]);
      const auto verdict = classify_emission(text);
      if (verdict.valid) {
        ++rep.valid;
        unique.insert(*text);
      } else {
        ++rep.errors[std::string(smiles::to_string(verdict.error_class))];
      }
    }
  }
  rep.unique_valid = static_cast<long>(unique.size());
  rep.validity = static_cast<double>(rep.valid) / static_cast<double>(rep.attempts);
  return rep;
}

struct GenerationResult {
  std::vector<std::string> molecules;  // in discovery order
  long attempts = 0;
  double wall_seconds = 0.0;
};

/// Samples priors and decodes until `n` distinct valid SMILES are found.
/// Throws Timeout once `max_attempts` decodes are spent.
template <typename Model>
GenerationResult generate_unique_valid(const Model &model, const Vocabulary &vocab, long n,
                                       long max_attempts, const DecodeOptions &opt,
                                       std::mt19937_64 &rng) {
  using Scalar = typename Model::scalar_type;
  if (n < 1) throw std::invalid_argument("generate_unique_valid: n must be >= 1");
  const auto t0 = std::chrono::steady_clock::now();
  GenerationResult res;
  std::unordered_set<std::string> seen;
  const Index L = model.config().latent;
  while (static_cast<long>(res.molecules.size()) < n) {
    if (res.attempts >= max_attempts)
      throw Timeout("generate_unique_valid: " + std::to_string(res.molecules.size()) + " of " +
                    std::to_string(n) + " after " + std::to_string(res.attempts) + " attempts");
    const Index count = std::min<Index>(opt.batch, max_attempts - res.attempts);
    const auto z = vae::sample_prior<Scalar>(count, L, rng);
    const auto out = model.decode_free_running(z, nullptr, opt.mode, rng, opt.max_steps);
    for (Index c = 0; c < count && static_cast<long>(res.molecules.size()) < n; ++c) {
      ++res.attempts;
      const auto text = emitted_smiles(vocab, out.emitted[c], out.finished[c]);
      if (classify_emission(text).valid && seen.insert(*text).second) res.molecules.push_back(*text);
    }
  }
  res.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

}  // namespace mvae::evaluation
