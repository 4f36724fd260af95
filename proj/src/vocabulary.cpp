// SPDX-License-Identifier: Apache-2.0

#include "mvae/vocabulary.hpp"

#include "mvae/smiles.hpp"

namespace mvae {

Vocabulary::Vocabulary() {
  for (const char *s : {"<pad>", "<sos>", "<eos>", "<unk>"}) add(s);
}

Vocabulary::Vocabulary(std::vector<std::string> body_tokens) : Vocabulary() {
  for (const auto &t : body_tokens) add(t);
}

int Vocabulary::add(std::string_view token) {
  const std::string key(token);
  if (auto it = index_.find(key); it != index_.end()) return it->second;
  const int id = size();
  tokens_.push_back(key);
  index_.emplace(key, id);
  return id;
}

int Vocabulary::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

TokenSequence Vocabulary::encode_tokens(std::span<const std::string> tokens) const {
  TokenSequence out;
  out.reserve(tokens.size() + 2);
  out.push_back(kSos);
  for (const auto &t : tokens) out.push_back(id(t));
  out.push_back(kEos);
  return out;
}

TokenSequence Vocabulary::encode(std::string_view smiles) const {
  return encode_tokens(smiles::tokenize(smiles));
}

std::string Vocabulary::decode(std::span<const int> ids) const {
  std::string out;
  for (int id : ids) {
    if (id == kEos) break;
    if (id == kSos || id == kPad) continue;
    out += text(id);
  }
  return out;
}

}  // namespace mvae
