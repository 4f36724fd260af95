// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace mvae {

/// Token ids of one molecule: SOS, body tokens, EOS. Never padded.
using TokenSequence = std::vector<int>;

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kSos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;
  static constexpr int kSpecialCount = 4;

  Vocabulary();
  explicit Vocabulary(std::vector<std::string> body_tokens);

  int add(std::string_view token);
  int id(std::string_view token) const;
  const std::string &text(int id) const { return tokens_.at(id); }
  int size() const { return static_cast<int>(tokens_.size()); }
  const std::vector<std::string> &tokens() const { return tokens_; }

  /// SOS + ids of tokenize(smiles) + EOS; unknown tokens map to UNK.
  TokenSequence encode(std::string_view smiles) const;
  TokenSequence encode_tokens(std::span<const std::string> tokens) const;

  /// Concatenates body tokens up to the first EOS; SOS and PAD are skipped.
  std::string decode(std::span<const int> ids) const;

  bool operator==(const Vocabulary &o) const { return tokens_ == o.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

}  // namespace mvae
