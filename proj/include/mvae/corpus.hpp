// SPDX-License-Identifier: Apache-2.0
//
// Newline-delimited SMILES corpora and their token-id encodings.

#pragma once

#include <cstddef>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "mvae/vocabulary.hpp"

namespace mvae {

class IoError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

class EmptyCorpus : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CorpusStats {
  std::size_t lines = 0;     // non-blank lines read
  std::size_t kept = 0;
  std::size_t too_long = 0;  // more than max_length body tokens
  std::size_t illegal = 0;   // lexical errors, skipped with a warning
};

struct Corpus {
  std::vector<std::string> smiles;
  std::vector<TokenSequence> sequences;
  CorpusStats stats;

  std::size_t size() const { return smiles.size(); }
  /// Longest body (tokens between SOS and EOS).
  int max_body_length() const;
};

/// Trimmed non-blank lines of a text file.
std::vector<std::string> read_smiles_file(const std::filesystem::path &path);

/// Tokenizes, drops illegal and over-length lines, and encodes with `vocab`.
/// Unknown tokens become UNK.
Corpus encode_corpus(const std::vector<std::string> &lines, const Vocabulary &vocab, int max_length);

struct TrainingCorpus {
  Corpus corpus;
  Vocabulary vocab;
};

/// Builds the vocabulary from the kept training lines only (sorted token
/// texts after the four specials). Throws EmptyCorpus when nothing is kept.
TrainingCorpus load_training_corpus(const std::filesystem::path &path, int max_length);

/// Loads an evaluation split against an existing vocabulary.
Corpus load_corpus(const std::filesystem::path &path, const Vocabulary &vocab, int max_length);

}  // namespace mvae
