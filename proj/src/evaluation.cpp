// SPDX-License-Identifier: Apache-2.0

#include "mvae/evaluation.hpp"

namespace mvae::evaluation {

std::optional<std::string> emitted_smiles(const Vocabulary &vocab, const TokenSequence &emitted,
                                          bool finished) {
  if (!finished || emitted.empty() || emitted.back() != Vocabulary::kEos) return std::nullopt;
  std::string out;
  for (std::size_t i = 0; i + 1 < emitted.size(); ++i) {
    if (emitted[i] < Vocabulary::kSpecialCount) return std::nullopt;
    out += vocab.text(emitted[i]);
  }
  return out;
}

smiles::ValidityVerdict classify_emission(const std::optional<std::string> &text) {
  if (!text) return {false, smiles::ErrorClass::Lexical, "no EOS or special token in emission"};
  return smiles::check_validity(*text);
}

double token_match_fraction(const TokenSequence &reference, const TokenSequence &emitted) {
  if (reference.size() < 2) return 0.0;
  const std::size_t positions = reference.size() - 1;
  std::size_t hit = 0;
  for (std::size_t t = 0; t < positions && t < emitted.size(); ++t) hit += emitted[t] == reference[t + 1] ? 1 : 0;
  return static_cast<double>(hit) / static_cast<double>(positions);
}

}  // namespace mvae::evaluation
