// SPDX-License-Identifier: Apache-2.0

#include "mvae/smiles.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <functional>
#include <optional>

namespace mvae::smiles {

namespace {

bool is_digit(char c) { return c >= '0' && c <= '9'; }

// Length of the token starting at `i`, or 0 when no alternative matches.
// Mirrors kTokenPattern alternative by alternative (leftmost wins).
std::size_t match_token(std::string_view s, std::size_t i) {
  const char c = s[i];
  const std::size_t rest = s.size() - i;
  switch (c) {
    case '[': {
      if (rest < 3 || s[i + 1] == ']') return 0;
      const auto close = s.find(']', i + 1);
      return close == std::string_view::npos ? 0 : close - i + 1;
    }
    case 'B':
      return rest >= 2 && s[i + 1] == 'r' ? 2 : 1;
    case 'C':
      return rest >= 2 && s[i + 1] == 'l' ? 2 : 1;
    case '%':
      return rest >= 3 && is_digit(s[i + 1]) && is_digit(s[i + 2]) ? 3 : 0;
    case 'N': case 'O': case 'S': case 'P': case 'F': case 'I':
    case 'b': case 'c': case 'n': case 'o': case 's': case 'p':
    case '(': case ')': case '.': case '=': case '#': case '-': case '+':
    case '\\': case '/': case ':': case '~': case '@': case '?': case '>':
    case '*': case '$':
      return 1;
    default:
      return is_digit(c) ? 1 : 0;
  }
}

}  // namespace

std::vector<std::string> tokenize(std::string_view s) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < s.size()) {
    const std::size_t n = match_token(s, i);
    if (n == 0) {
      throw LexicalError("unrecognized character '" + std::string(1, s[i]) + "' at " +
                             std::to_string(i),
                         i);
    }
    out.emplace_back(s.substr(i, n));
    i += n;
  }
  return out;
}

std::string detokenize(std::span<const std::string> tokens) {
  std::string out;
  for (const auto &t : tokens) out += t;
  return out;
}

int bond_order(BondType t) {
  switch (t) {
    case BondType::Single: return 1;
    case BondType::Double: return 2;
    case BondType::Triple: return 3;
    case BondType::Quadruple: return 4;
    case BondType::Aromatic: return 1;
  }
  return 1;
}

std::vector<std::vector<int>> MoleculeGraph::adjacency() const {
  std::vector<std::vector<int>> adj(atoms.size());
  for (int b = 0; b < static_cast<int>(bonds.size()); ++b) {
    adj[bonds[b].begin].push_back(b);
    adj[bonds[b].end].push_back(b);
  }
  return adj;
}

std::string_view to_string(ErrorClass c) {
  switch (c) {
    case ErrorClass::None: return "none";
    case ErrorClass::Unkekulized: return "unkekulized";
    case ErrorClass::Valence: return "valence";
    case ErrorClass::UnclosedRing: return "unclosed_ring";
    case ErrorClass::Parentheses: return "parentheses";
    case ErrorClass::Lexical: return "lexical";
  }
  return "unknown";
}

namespace {

struct MainGroup {
  std::string_view symbol;
  int valence_electrons;
  int period;
};

constexpr std::array<MainGroup, 16> kMainGroup{{
    {"H", 1, 1},  {"B", 3, 2},  {"C", 4, 2},  {"N", 5, 2},
    {"O", 6, 2},  {"F", 7, 2},  {"Si", 4, 3}, {"P", 5, 3},
    {"S", 6, 3},  {"Cl", 7, 3}, {"Ge", 4, 4}, {"As", 5, 4},
    {"Se", 6, 4}, {"Br", 7, 4}, {"Te", 6, 5}, {"I", 7, 5},
}};

}  // namespace

// A charged atom takes the valences of its isoelectronic neutral partner:
// N+ behaves like C, O- like F, C- like N.
std::vector<int> allowed_valences(std::string_view element, int charge) {
  const auto it = std::find_if(kMainGroup.begin(), kMainGroup.end(),
                               [&](const MainGroup &m) { return m.symbol == element; });
  if (it == kMainGroup.end()) return {};
  if (it->symbol == "H") return {charge == 0 ? 1 : 0};
  const int e = it->valence_electrons - charge;
  if (e <= 0 || e >= 8) return {0};
  if (e <= 4) return {e};
  const bool expanded = it->period >= 3;
  switch (e) {
    case 5: return expanded ? std::vector<int>{3, 5} : std::vector<int>{3};
    case 6: return expanded ? std::vector<int>{2, 4, 6} : std::vector<int>{2};
    default: return {1};
  }
}

namespace {

struct AtomValence {
  int explicit_sum = 0;  // bond orders plus bracket hydrogens
  int aromatic_bonds = 0;
  std::vector<int> allowed;
};

std::vector<AtomValence> atom_valences(const MoleculeGraph &g) {
  std::vector<AtomValence> v(g.atoms.size());
  for (std::size_t a = 0; a < g.atoms.size(); ++a) {
    v[a].explicit_sum = g.atoms[a].explicit_h;
    v[a].allowed = allowed_valences(g.atoms[a].element, g.atoms[a].charge);
  }
  for (const auto &b : g.bonds) {
    const int o = bond_order(b.type);
    v[b.begin].explicit_sum += o;
    v[b.end].explicit_sum += o;
    if (b.type == BondType::Aromatic) {
      ++v[b.begin].aromatic_bonds;
      ++v[b.end].aromatic_bonds;
    }
  }
  return v;
}

// Perfect matching over `need` atoms using `edges`, by backtracking with a
// most-constrained-first choice.
bool has_perfect_matching(int n_atoms, const std::vector<char> &need,
                          const std::vector<std::pair<int, int>> &edges) {
  std::vector<std::vector<int>> nbr(n_atoms);
  for (auto [a, b] : edges) {
    nbr[a].push_back(b);
    nbr[b].push_back(a);
  }
  std::vector<char> matched(n_atoms, 0);
  int remaining = 0;
  for (int a = 0; a < n_atoms; ++a) remaining += need[a] ? 1 : 0;
  if (remaining % 2 != 0) return false;
  long budget = 2'000'000;

  std::function<bool(int)> solve = [&](int left) -> bool {
    if (left == 0) return true;
    if (--budget < 0) return false;
    int best = -1;
    int best_options = 1 << 30;
    for (int a = 0; a < n_atoms; ++a) {
      if (!need[a] || matched[a]) continue;
      int options = 0;
      for (int b : nbr[a]) options += !matched[b] ? 1 : 0;
      if (options < best_options) {
        best_options = options;
        best = a;
        if (options <= 1) break;
      }
    }
    if (best_options == 0) return false;
    matched[best] = 1;
    for (int b : nbr[best]) {
      if (matched[b]) continue;
      matched[b] = 1;
      if (solve(left - 2)) return true;
      matched[b] = 0;
    }
    matched[best] = 0;
    return false;
  };
  return solve(remaining);
}

std::optional<ValidityVerdict> check_valence(const MoleculeGraph &g,
                                             const std::vector<AtomValence> &val) {
  for (std::size_t a = 0; a < g.atoms.size(); ++a) {
    if (val[a].aromatic_bonds > 3) {
      return ValidityVerdict{false, ErrorClass::Valence,
                             "atom " + std::to_string(a) + " has " +
                                 std::to_string(val[a].aromatic_bonds) + " aromatic bonds"};
    }
    if (val[a].allowed.empty()) continue;
    if (val[a].explicit_sum > val[a].allowed.back()) {
      return ValidityVerdict{false, ErrorClass::Valence,
                             "atom " + std::to_string(a) + " (" + g.atoms[a].element +
                                 ") has valence " + std::to_string(val[a].explicit_sum)};
    }
  }
  return std::nullopt;
}

std::optional<ValidityVerdict> check_kekulization(const MoleculeGraph &g,
                                                  const std::vector<AtomValence> &val) {
  const int n = static_cast<int>(g.atoms.size());
  std::vector<char> in_ring(n, 0);
  for (const auto &ring : g.rings)
    for (int a : ring) in_ring[a] = 1;

  std::vector<char> need(n, 0);
  for (int a = 0; a < n; ++a) {
    const Atom &atom = g.atoms[a];
    if (!atom.aromatic) continue;
    if (!in_ring[a]) {
      return ValidityVerdict{false, ErrorClass::Unkekulized,
                             "non-ring atom " + std::to_string(a) + " marked aromatic"};
    }
    const auto &allowed = val[a].allowed;
    if (allowed.empty()) continue;
    const auto target = std::lower_bound(allowed.begin(), allowed.end(), val[a].explicit_sum);
    need[a] = target != allowed.end() && *target - val[a].explicit_sum >= 1 ? 1 : 0;
  }
  std::vector<std::pair<int, int>> edges;
  for (const auto &b : g.bonds) {
    if (b.type == BondType::Aromatic && need[b.begin] && need[b.end]) {
      edges.emplace_back(b.begin, b.end);
    }
  }
  if (!has_perfect_matching(n, need, edges)) {
    return ValidityVerdict{false, ErrorClass::Unkekulized, "cannot kekulize aromatic system"};
  }
  return std::nullopt;
}

}  // namespace

ValidityVerdict check_validity(std::string_view s) {
  MoleculeGraph g;
  try {
    g = parse(s);
  } catch (const LexicalError &e) {
    return {false, ErrorClass::Lexical, e.what()};
  } catch (const ParenthesesError &e) {
    return {false, ErrorClass::Parentheses, e.what()};
  } catch (const UnclosedRingError &e) {
    return {false, ErrorClass::UnclosedRing, e.what()};
  }
  const auto val = atom_valences(g);
  if (auto v = check_valence(g, val)) return *v;
  if (auto v = check_kekulization(g, val)) return *v;
  return {};
}

int count_large_rings(const MoleculeGraph &g) {
  return static_cast<int>(std::count_if(g.rings.begin(), g.rings.end(),
                                        [](const auto &r) { return r.size() > 6; }));
}

}  // namespace mvae::smiles
