// SPDX-License-Identifier: Apache-2.0

#include "mvae/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "mvae/smiles.hpp"

namespace mvae {

int Corpus::max_body_length() const {
  int m = 0;
  for (const auto &s : sequences) m = std::max(m, static_cast<int>(s.size()) - 2);
  return m;
}

std::vector<std::string> read_smiles_file(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    const auto first = line.find_first_not_of(" \t\r\n");
    if (first == std::string::npos) continue;
    const auto last = line.find_last_not_of(" \t\r\n");
    lines.push_back(line.substr(first, last - first + 1));
  }
  if (in.bad()) throw IoError("read failure on " + path.string());
  return lines;
}

namespace {

struct Tokenized {
  std::vector<std::string> smiles;
  std::vector<std::vector<std::string>> tokens;
  CorpusStats stats;
};

Tokenized tokenize_lines(const std::vector<std::string> &lines, int max_length) {
  Tokenized t;
  for (const auto &s : lines) {
    ++t.stats.lines;
    std::vector<std::string> toks;
    try {
      toks = smiles::tokenize(s);
    } catch (const smiles::LexicalError &) {
      ++t.stats.illegal;
      continue;
    }
    if (static_cast<int>(toks.size()) > max_length) {
      ++t.stats.too_long;
      continue;
    }
    t.smiles.push_back(s);
    t.tokens.push_back(std::move(toks));
  }
  t.stats.kept = t.smiles.size();
  return t;
}

Corpus encode(Tokenized &&t, const Vocabulary &vocab) {
  Corpus c;
  c.stats = t.stats;
  c.smiles = std::move(t.smiles);
  c.sequences.reserve(t.tokens.size());
  for (const auto &toks : t.tokens) c.sequences.push_back(vocab.encode_tokens(toks));
  return c;
}

}  // namespace

Corpus encode_corpus(const std::vector<std::string> &lines, const Vocabulary &vocab, int max_length) {
  return encode(tokenize_lines(lines, max_length), vocab);
}

TrainingCorpus load_training_corpus(const std::filesystem::path &path, int max_length) {
  auto t = tokenize_lines(read_smiles_file(path), max_length);
  if (t.smiles.empty()) throw EmptyCorpus("no usable SMILES in " + path.string());
  std::set<std::string> texts;
  for (const auto &toks : t.tokens) texts.insert(toks.begin(), toks.end());
  Vocabulary vocab(std::vector<std::string>(texts.begin(), texts.end()));
  return {encode(std::move(t), vocab), std::move(vocab)};
}

Corpus load_corpus(const std::filesystem::path &path, const Vocabulary &vocab, int max_length) {
  return encode(tokenize_lines(read_smiles_file(path), max_length), vocab);
}

}  // namespace mvae
