// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <array>
#include <map>
#include <optional>

#include "mvae/smiles.hpp"

namespace mvae::smiles {

namespace {

constexpr std::array<std::string_view, 118> kElements{
    "H",  "He", "Li", "Be", "B",  "C",  "N",  "O",  "F",  "Ne", "Na", "Mg", "Al", "Si", "P",
    "S",  "Cl", "Ar", "K",  "Ca", "Sc", "Ti", "V",  "Cr", "Mn", "Fe", "Co", "Ni", "Cu", "Zn",
    "Ga", "Ge", "As", "Se", "Br", "Kr", "Rb", "Sr", "Y",  "Zr", "Nb", "Mo", "Tc", "Ru", "Rh",
    "Pd", "Ag", "Cd", "In", "Sn", "Sb", "Te", "I",  "Xe", "Cs", "Ba", "La", "Ce", "Pr", "Nd",
    "Pm", "Sm", "Eu", "Gd", "Tb", "Dy", "Ho", "Er", "Tm", "Yb", "Lu", "Hf", "Ta", "W",  "Re",
    "Os", "Ir", "Pt", "Au", "Hg", "Tl", "Pb", "Bi", "Po", "At", "Rn", "Fr", "Ra", "Ac", "Th",
    "Pa", "U",  "Np", "Pu", "Am", "Cm", "Bk", "Cf", "Es", "Fm", "Md", "No", "Lr", "Rf", "Db",
    "Sg", "Bh", "Hs", "Mt", "Ds", "Rg", "Cn", "Nh", "Fl", "Mc", "Lv", "Ts", "Og"};

constexpr std::array<std::string_view, 9> kAromaticBracket{"se", "as", "te", "b", "c",
                                                           "n",  "o",  "s",  "p"};

bool is_element(std::string_view s) {
  return std::find(kElements.begin(), kElements.end(), s) != kElements.end();
}

bool is_digit(char c) { return c >= '0' && c <= '9'; }

std::string capitalize(std::string_view s) {
  std::string out(s);
  if (!out.empty()) out[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(out[0])));
  return out;
}

// Parses the inside of "[...]". Returns nullopt on malformed content.
std::optional<Atom> parse_bracket(std::string_view body) {
  Atom atom;
  atom.bracket = true;
  std::size_t i = 0;
  auto peek = [&](std::size_t k = 0) -> char { return i + k < body.size() ? body[i + k] : '\0'; };

  while (is_digit(peek())) atom.isotope = atom.isotope * 10 + (body[i++] - '0');

  if (peek() == '*') {
    atom.element = "*";
    ++i;
  } else {
    bool found = false;
    for (auto sym : kAromaticBracket) {
      if (body.substr(i, sym.size()) == sym) {
        atom.element = capitalize(sym);
        atom.aromatic = true;
        i += sym.size();
        found = true;
        break;
      }
    }
    if (!found) {
      if (!std::isupper(static_cast<unsigned char>(peek()))) return std::nullopt;
      if (std::islower(static_cast<unsigned char>(peek(1))) && is_element(body.substr(i, 2))) {
        atom.element = std::string(body.substr(i, 2));
        i += 2;
      } else if (is_element(body.substr(i, 1))) {
        atom.element = std::string(body.substr(i, 1));
        i += 1;
      } else {
        return std::nullopt;
      }
    }
  }

  if (peek() == '@') {
    ++i;
    if (peek() == '@') {
      ++i;
    } else {
      static constexpr std::array<std::string_view, 5> kClasses{"TH", "AL", "SP", "TB", "OH"};
      for (auto cls : kClasses) {
        if (body.substr(i, 2) == cls) {
          i += 2;
          if (!is_digit(peek())) return std::nullopt;
          while (is_digit(peek())) ++i;
          break;
        }
      }
    }
  }

  if (peek() == 'H') {
    ++i;
    atom.explicit_h = 1;
    if (is_digit(peek())) {
      atom.explicit_h = 0;
      while (is_digit(peek())) atom.explicit_h = atom.explicit_h * 10 + (body[i++] - '0');
    }
  }

  if (peek() == '+' || peek() == '-') {
    const char sign = body[i++];
    int magnitude = 1;
    if (is_digit(peek())) {
      magnitude = 0;
      while (is_digit(peek())) magnitude = magnitude * 10 + (body[i++] - '0');
    } else {
      while (peek() == sign) {
        ++magnitude;
        ++i;
      }
    }
    atom.charge = sign == '+' ? magnitude : -magnitude;
  }

  if (peek() == ':') {
    ++i;
    if (!is_digit(peek())) return std::nullopt;
    while (is_digit(peek())) ++i;
  }
  if (i != body.size()) return std::nullopt;
  return atom;
}

std::optional<BondType> bond_symbol(std::string_view t) {
  if (t == "-" || t == "/" || t == "\\") return BondType::Single;
  if (t == "=") return BondType::Double;
  if (t == "#") return BondType::Triple;
  if (t == "$") return BondType::Quadruple;
  if (t == ":") return BondType::Aromatic;
  return std::nullopt;
}

struct RingOpening {
  int atom;
  std::optional<BondType> bond;
  std::size_t position;
};

class Parser {
 public:
  explicit Parser(std::string_view s) : source_(s) {}

  MoleculeGraph run() {
    const auto tokens = tokenize(source_);
    if (tokens.empty()) throw LexicalError("empty SMILES", 0);

    std::size_t pos = 0;
    for (const auto &tok : tokens) {
      step(tok, pos);
      pos += tok.size();
    }
    if (pending_) lexical("dangling bond at end", pos);
    if (!branches_.empty()) paren("unclosed branch", branches_.back().position);
    for (const auto &[label, open] : open_rings_) {
      if (!ring_error_) ring_error_.emplace("unclosed ring " + std::to_string(label), open.position, label);
    }
    if (lexical_) throw *lexical_;
    if (paren_) throw *paren_;
    if (ring_error_) throw *ring_error_;
    graph_.rings = perceive_rings(graph_);
    return std::move(graph_);
  }

 private:
  struct Branch {
    int atom;
    std::size_t position;
    std::size_t atoms_at_open;
  };

  void lexical(const std::string &msg, std::size_t pos) {
    if (!lexical_) lexical_.emplace(msg, pos);
  }
  void paren(const std::string &msg, std::size_t pos) {
    if (!paren_) paren_.emplace(msg, pos);
  }
  void ring(const std::string &msg, std::size_t pos, int label) {
    if (!ring_error_) ring_error_.emplace(msg, pos, label);
  }

  BondType default_bond(int a, int b) const {
    return graph_.atoms[a].aromatic && graph_.atoms[b].aromatic ? BondType::Aromatic
                                                                : BondType::Single;
  }

  bool bonded(int a, int b) const {
    return std::any_of(graph_.bonds.begin(), graph_.bonds.end(), [&](const Bond &x) {
      return (x.begin == a && x.end == b) || (x.begin == b && x.end == a);
    });
  }

  void add_atom(Atom atom) {
    const int idx = static_cast<int>(graph_.atoms.size());
    graph_.atoms.push_back(std::move(atom));
    if (prev_ >= 0) {
      graph_.bonds.push_back({prev_, idx, pending_.value_or(default_bond(prev_, idx))});
    }
    pending_.reset();
    prev_ = idx;
  }

  void ring_closure(int label, std::size_t pos) {
    auto it = open_rings_.find(label);
    if (it == open_rings_.end()) {
      open_rings_.emplace(label, RingOpening{prev_, pending_, pos});
      pending_.reset();
      return;
    }
    const RingOpening open = it->second;
    open_rings_.erase(it);
    if (open.atom == prev_) {
      ring("ring bond " + std::to_string(label) + " closes on its own atom", pos, label);
    } else if (bonded(open.atom, prev_)) {
      ring("duplicate bond from ring closure " + std::to_string(label), pos, label);
    }
    if (open.bond && pending_ && *open.bond != *pending_) {
      ring("conflicting bond orders on ring closure " + std::to_string(label), pos, label);
    }
    const auto type = open.bond ? *open.bond : pending_.value_or(default_bond(open.atom, prev_));
    graph_.bonds.push_back({open.atom, prev_, type});
    pending_.reset();
  }

  void step(const std::string &tok, std::size_t pos) {
    const char c = tok[0];
    const bool at_branch_start = branch_start_;
    branch_start_ = c == '(' || (branch_start_ && bond_symbol(tok));
    if (c == '[') {
      auto atom = parse_bracket(std::string_view(tok).substr(1, tok.size() - 2));
      if (!atom) {
        lexical("malformed bracket atom " + tok, pos);
        atom = Atom{.element = "*", .bracket = true};
      }
      add_atom(std::move(*atom));
    } else if (tok == "*") {
      add_atom(Atom{.element = "*"});
    } else if (std::isalpha(static_cast<unsigned char>(c))) {
      Atom atom;
      atom.aromatic = std::islower(static_cast<unsigned char>(c)) != 0;
      atom.element = capitalize(tok);
      add_atom(std::move(atom));
    } else if (auto bond = bond_symbol(tok)) {
      if (prev_ < 0) lexical("bond without preceding atom", pos);
      if (pending_) lexical("consecutive bond symbols", pos);
      pending_ = bond;
    } else if (c == '(') {
      if (prev_ < 0) paren("branch without preceding atom", pos);
      if (pending_) lexical("bond before branch", pos);
      branches_.push_back({prev_, pos, graph_.atoms.size()});
    } else if (c == ')') {
      if (branches_.empty()) {
        paren("unmatched ')'", pos);
        return;
      }
      if (pending_) lexical("dangling bond in branch", pos);
      if (graph_.atoms.size() == branches_.back().atoms_at_open) paren("empty branch", pos);
      prev_ = branches_.back().atom;
      branches_.pop_back();
      pending_.reset();
    } else if (c == '.') {
      if (prev_ < 0) lexical("'.' without preceding atom", pos);
      if (pending_) lexical("bond before '.'", pos);
      prev_ = -1;
      pending_.reset();
    } else if (is_digit(c) || c == '%') {
      const int label = c == '%' ? std::stoi(tok.substr(1)) : c - '0';
      if (prev_ < 0) {
        lexical("ring label without preceding atom", pos);
        return;
      }
      if (at_branch_start) paren("ring label before the first atom of a branch", pos);
      ring_closure(label, pos);
    } else {
      lexical("unexpected token '" + tok + "'", pos);
    }
  }

  std::string_view source_;
  MoleculeGraph graph_;
  int prev_ = -1;
  std::optional<BondType> pending_;
  bool branch_start_ = false;
  std::vector<Branch> branches_;
  std::map<int, RingOpening> open_rings_;
  std::optional<LexicalError> lexical_;
  std::optional<ParenthesesError> paren_;
  std::optional<UnclosedRingError> ring_error_;
};

}  // namespace

MoleculeGraph parse(std::string_view s) { return Parser(s).run(); }

}  // namespace mvae::smiles
