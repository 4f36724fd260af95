// SPDX-License-Identifier: Apache-2.0
//
// SMILES tokenization, parsing into a molecule graph, and chemical validity.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mvae::smiles {

// Tokenization regex, kept byte-for-byte as published for SMILES language
// models. Anything the alternation cannot consume is a lexical error.
inline constexpr std::string_view kTokenPattern =
    R"((\[[^\]]+]|Br?|Cl?|N|O|S|P|F|I|b|c|n|o|s|p|\(|\)|\.|=|#|-|\+|\\|\/|:|~|@|\?|>|\*|\$|%[0-9]{2}|[0-9]))";

class SmilesError : public std::runtime_error {
 public:
  SmilesError(const std::string &what, std::size_t position)
      : std::runtime_error(what), position_(position) {}
  std::size_t position() const noexcept { return position_; }

 private:
  std::size_t position_;
};

class LexicalError : public SmilesError {
  using SmilesError::SmilesError;
};
class ParenthesesError : public SmilesError {
  using SmilesError::SmilesError;
};
class UnclosedRingError : public SmilesError {
 public:
  UnclosedRingError(const std::string &what, std::size_t position, int ring_label)
      : SmilesError(what, position), ring_label_(ring_label) {}
  int ring_label() const noexcept { return ring_label_; }

 private:
  int ring_label_;
};

/// Splits `s` into lexical units. Throws LexicalError at the first
/// character no pattern alternative matches.
std::vector<std::string> tokenize(std::string_view s);

std::string detokenize(std::span<const std::string> tokens);

enum class BondType : std::uint8_t { Single, Double, Triple, Quadruple, Aromatic };

/// Valence contribution of a bond; aromatic bonds count as 1 before
/// kekulization assigns their double bonds.
int bond_order(BondType t);

struct Atom {
  std::string element;  // capitalized symbol, "*" for wildcard
  int charge = 0;
  int explicit_h = 0;
  int isotope = 0;
  bool aromatic = false;
  bool bracket = false;
};

struct Bond {
  int begin = 0;
  int end = 0;
  BondType type = BondType::Single;
};

struct MoleculeGraph {
  std::vector<Atom> atoms;
  std::vector<Bond> bonds;
  // Smallest set of smallest rings, each an ordered cycle of atom indices.
  std::vector<std::vector<int>> rings;

  std::vector<std::vector<int>> adjacency() const;  // atom -> incident bond ids
  int other(int bond, int atom) const {
    return bonds[bond].begin == atom ? bonds[bond].end : bonds[bond].begin;
  }
};

/// Parses a SMILES string. Ring closures are resolved, branches closed
/// and ring perception performed.
MoleculeGraph parse(std::string_view s);

enum class ErrorClass : std::uint8_t {
  None,
  Unkekulized,
  Valence,
  UnclosedRing,
  Parentheses,
  Lexical,
};

inline constexpr std::size_t kErrorClassCount = 6;

std::string_view to_string(ErrorClass c);

struct ValidityVerdict {
  bool valid = true;
  ErrorClass error_class = ErrorClass::None;
  std::string message;

  bool operator==(const ValidityVerdict &) const = default;
};

/// Failures are reported in the order lexical, parentheses, unclosed ring,
/// valence, unkekulized; the first class hit wins.
ValidityVerdict check_validity(std::string_view s);

/// Number of perceived rings with more than six atoms.
int count_large_rings(const MoleculeGraph &g);

/// Smallest set of smallest rings (minimum cycle basis). Ties between
/// equal-size cycles go to the lexicographically smallest atom list.
std::vector<std::vector<int>> perceive_rings(const MoleculeGraph &g);

/// Allowed valences for an element at a formal charge, ascending. Empty
/// when the element carries no valence constraint.
std::vector<int> allowed_valences(std::string_view element, int charge);

}  // namespace mvae::smiles
