// SPDX-License-Identifier: Apache-2.0

#include "mvae/smiles.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>
#include <random>
#include <regex>
#include <set>

#include "mvae/vocabulary.hpp"

namespace mvae::smiles {
namespace {

std::vector<std::string> read_lines(const std::string &path) {
  std::ifstream in(path);
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);)
    if (!line.empty()) out.push_back(line);
  return out;
}

// Reference tokenizer straight from the published regular expression.
// Returns nullopt if some span is not covered by consecutive matches.
std::optional<std::vector<std::string>> regex_tokenize(const std::string &s) {
  static const std::regex pattern{std::string(kTokenPattern)};
  std::vector<std::string> out;
  auto begin = s.cbegin();
  std::smatch m;
  while (begin != s.cend()) {
    if (!std::regex_search(begin, s.cend(), m, pattern, std::regex_constants::match_continuous))
      return std::nullopt;
    out.push_back(m.str());
    begin = m[0].second;
  }
  return out;
}

TEST(Tokenize, Examples) {
  EXPECT_EQ(tokenize("CCO"), (std::vector<std::string>{"C", "C", "O"}));
  EXPECT_EQ(tokenize("[O-]"), (std::vector<std::string>{"[O-]"}));
  EXPECT_TRUE(tokenize("").empty());
  EXPECT_EQ(tokenize("c1ccccc1"),
            (std::vector<std::string>{"c", "1", "c", "c", "c", "c", "c", "1"}));
  EXPECT_EQ(tokenize("ClCBr%12"), (std::vector<std::string>{"Cl", "C", "Br", "%12"}));
  EXPECT_EQ(tokenize("[O-]C"), (std::vector<std::string>{"[O-]", "C"}));
}

TEST(Tokenize, LexicalErrorCarriesPosition) {
  try {
    tokenize("CCX");
    FAIL() << "expected LexicalError";
  } catch (const LexicalError &e) {
    EXPECT_EQ(e.position(), 2U);
  }
  EXPECT_THROW(tokenize("C[]"), LexicalError);
  EXPECT_THROW(tokenize("C[C"), LexicalError);
  EXPECT_THROW(tokenize("C%1"), LexicalError);
  EXPECT_THROW(tokenize("CH"), LexicalError);
}

TEST(Tokenize, AgreesWithRegexOnRandomStrings) {
  const std::string alphabet = "CcNnOoSsPpBbFIlr[]()=#-+\\/:~@?>*$%0123456789H.xZ";
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<std::size_t> pick(0, alphabet.size() - 1);
  std::uniform_int_distribution<int> len(0, 12);
  for (int trial = 0; trial < 20000; ++trial) {
    std::string s;
    for (int i = len(rng); i > 0; --i) s.push_back(alphabet[pick(rng)]);
    const auto expected = regex_tokenize(s);
    if (expected) {
      EXPECT_EQ(tokenize(s), *expected) << s;
    } else {
      EXPECT_THROW(tokenize(s), LexicalError) << s;
    }
  }
}

TEST(Tokenize, CorpusRoundTripAndRegexAgreement) {
  const auto corpus = read_lines(MVAE_DATA_DIR "/zinc_sample_10k.smi");
  ASSERT_EQ(corpus.size(), 10000U);
  for (const auto &s : corpus) {
    const auto toks = tokenize(s);
    EXPECT_EQ(detokenize(toks), s);
  }
  for (std::size_t i = 0; i < corpus.size(); i += 50) EXPECT_EQ(tokenize(corpus[i]), *regex_tokenize(corpus[i]));
}

TEST(Detokenize, Examples) {
  const std::vector<std::string> a{"C", "Cl"};
  EXPECT_EQ(detokenize(a), "CCl");
  EXPECT_EQ(detokenize(std::vector<std::string>{}), "");
  EXPECT_EQ(detokenize(std::vector<std::string>{"[O-]"}), "[O-]");
}

TEST(Parse, ThreeRing) {
  const auto g = parse("C1CC1");
  EXPECT_EQ(g.atoms.size(), 3U);
  EXPECT_EQ(g.bonds.size(), 3U);
  ASSERT_EQ(g.rings.size(), 1U);
  EXPECT_EQ(g.rings[0].size(), 3U);
}

TEST(Parse, Errors) {
  EXPECT_THROW(parse("C(C"), ParenthesesError);
  try {
    parse("C1CC");
    FAIL() << "expected UnclosedRingError";
  } catch (const UnclosedRingError &e) {
    EXPECT_EQ(e.ring_label(), 1);
  }
  EXPECT_THROW(parse("CC)"), ParenthesesError);
  EXPECT_THROW(parse("C()C"), ParenthesesError);
  EXPECT_THROW(parse("C=="), LexicalError);
  EXPECT_THROW(parse("C~C"), LexicalError);
  EXPECT_THROW(parse("[Xx]"), LexicalError);
  EXPECT_THROW(parse(""), LexicalError);
}

TEST(Parse, BracketAtoms) {
  const auto g = parse("[NH3+]C[13CH2][O-].[Na+]");
  ASSERT_EQ(g.atoms.size(), 5U);
  EXPECT_EQ(g.atoms[0].element, "N");
  EXPECT_EQ(g.atoms[0].explicit_h, 3);
  EXPECT_EQ(g.atoms[0].charge, 1);
  EXPECT_EQ(g.atoms[2].isotope, 13);
  EXPECT_EQ(g.atoms[3].charge, -1);
  EXPECT_EQ(g.bonds.size(), 3U);
  const auto s = parse("[C@@H](F)(Cl)Br");
  EXPECT_EQ(s.atoms[0].explicit_h, 1);
  const auto ar = parse("c1cc[nH]c1");
  EXPECT_TRUE(ar.atoms[3].aromatic);
  EXPECT_EQ(ar.atoms[3].element, "N");
}

TEST(Parse, RingClosureBondTypes) {
  const auto g = parse("C=1CCC1");
  const auto closing = std::find_if(g.bonds.begin(), g.bonds.end(), [](const Bond &b) {
    return (b.begin == 0 && b.end == 3) || (b.begin == 3 && b.end == 0);
  });
  ASSERT_NE(closing, g.bonds.end());
  EXPECT_EQ(closing->type, BondType::Double);
  EXPECT_THROW(parse("C=1CCC#1"), UnclosedRingError);
  EXPECT_THROW(parse("C11"), UnclosedRingError);
  EXPECT_THROW(parse("C12CC12"), UnclosedRingError);  // duplicate bond
  EXPECT_NO_THROW(parse("C%10CC%10"));
}

TEST(Validity, Examples) {
  EXPECT_TRUE(check_validity("C").valid);
  const auto five = check_validity("C(C)(C)(C)(C)C");
  EXPECT_FALSE(five.valid);
  EXPECT_EQ(five.error_class, ErrorClass::Valence);
  const auto odd = check_validity("c1cccc1");
  EXPECT_FALSE(odd.valid);
  EXPECT_EQ(odd.error_class, ErrorClass::Unkekulized);
  EXPECT_TRUE(check_validity("O=C(O)C").valid);
}

TEST(Validity, FourPaperErrorClasses) {
  EXPECT_EQ(check_validity("c1cccc1C").error_class, ErrorClass::Unkekulized);
  EXPECT_EQ(check_validity("CC(=O)(=O)C").error_class, ErrorClass::Valence);
  EXPECT_EQ(check_validity("C1CCC").error_class, ErrorClass::UnclosedRing);
  EXPECT_EQ(check_validity("CC(C(C)C").error_class, ErrorClass::Parentheses);
  EXPECT_EQ(check_validity("CCQ").error_class, ErrorClass::Lexical);
}

TEST(Validity, ClassificationPriority) {
  // Lexical beats an earlier parentheses problem; parentheses beat rings.
  EXPECT_EQ(check_validity("C(C1CC=").error_class, ErrorClass::Lexical);
  EXPECT_EQ(check_validity("C1C(C").error_class, ErrorClass::Parentheses);
  EXPECT_EQ(check_validity("C1CCCC(2CC2)C1").error_class, ErrorClass::Parentheses);
  EXPECT_EQ(check_validity("C1CCCC(=2CC2)C1").error_class, ErrorClass::Parentheses);
  EXPECT_EQ(check_validity("C1C(C)(C)(C)C").error_class, ErrorClass::UnclosedRing);
  EXPECT_EQ(check_validity("c1cccc1C(C)(C)(C)C").error_class, ErrorClass::Valence);
}

TEST(Validity, ChargesAndAromatics) {
  for (const char *ok :
       {"c1ccncc1", "c1cc[nH]c1", "c1ccoc1", "c1ccsc1", "C[N+](C)(C)C", "C[N+](=O)[O-]",
        "c1cc[n+]([O-])cc1", "O=c1cc[nH]cc1", "c1ccc2ccccc2c1", "c1ccc2[nH]ccc2c1",
        "CS(=O)(=O)N", "[Na+].[Cl-]", "c1ccccc1-c1ccccc1", "Cn1cccc1", "C#N", "[O-]C",
        "c1cc[cH-]c1", "C1=CC=CC=C1", "O=S1(=O)CCCC1", "Fc1ccc(cc1)-c1nc2ccccc2o1"}) {
    const auto v = check_validity(ok);
    EXPECT_TRUE(v.valid) << ok << ": " << v.message;
  }
  EXPECT_EQ(check_validity("c1ccnc1").error_class, ErrorClass::Unkekulized);  // pyrrole without H
  EXPECT_EQ(check_validity("CcC").error_class, ErrorClass::Unkekulized);     // aromatic outside ring
  EXPECT_EQ(check_validity("C[N](C)(C)(C)C").error_class, ErrorClass::Valence);
  EXPECT_EQ(check_validity("O=O=O").error_class, ErrorClass::Valence);
  EXPECT_EQ(check_validity("[O-]=C").error_class, ErrorClass::Valence);
  EXPECT_TRUE(check_validity("C[O+](C)C").valid);
  // Four aromatic bonds on one carbon.
  EXPECT_EQ(check_validity("CCCC(=O)Nc1ccc2(c1)sc(=O)n2C").error_class, ErrorClass::Valence);
}

TEST(Validity, ImplicitHydrogensNeverCauseValenceErrors) {
  for (const char *s : {"C", "N", "O", "CC", "C=C", "C#C", "CN", "OO", "S", "P", "B"})
    EXPECT_TRUE(check_validity(s).valid) << s;
}

TEST(Validity, AllowedValenceTable) {
  EXPECT_EQ(allowed_valences("C", 0), (std::vector<int>{4}));
  EXPECT_EQ(allowed_valences("N", 0), (std::vector<int>{3}));
  EXPECT_EQ(allowed_valences("N", 1), (std::vector<int>{4}));
  EXPECT_EQ(allowed_valences("O", -1), (std::vector<int>{1}));
  EXPECT_EQ(allowed_valences("P", 0), (std::vector<int>{3, 5}));
  EXPECT_EQ(allowed_valences("S", 0), (std::vector<int>{2, 4, 6}));
  EXPECT_EQ(allowed_valences("Cl", 0), (std::vector<int>{1}));
  EXPECT_EQ(allowed_valences("B", 0), (std::vector<int>{3}));
  EXPECT_TRUE(allowed_valences("Fe", 2).empty());
}

TEST(Validity, DeterministicAndTotal) {
  std::mt19937_64 rng(11);
  const auto corpus = read_lines(MVAE_DATA_DIR "/zinc_sample_10k.smi");
  for (int i = 0; i < 2000; ++i) {
    std::string s = corpus[i];
    // Single-character mutation.
    std::uniform_int_distribution<std::size_t> pos(0, s.size() - 1);
    const std::string alphabet = "CcNnO()=#123[]+-";
    s[pos(rng)] = alphabet[rng() % alphabet.size()];
    const auto a = check_validity(s);
    const auto b = check_validity(s);
    EXPECT_EQ(a, b);
    EXPECT_EQ(a.valid, a.error_class == ErrorClass::None) << s;
  }
}

TEST(Validity, CorpusAcceptance) {
  const auto corpus = read_lines(MVAE_DATA_DIR "/zinc_sample_10k.smi");
  std::size_t accepted = 0;
  for (const auto &s : corpus) accepted += check_validity(s).valid ? 1 : 0;
  EXPECT_GE(static_cast<double>(accepted) / static_cast<double>(corpus.size()), 0.99);
}

std::vector<std::size_t> ring_sizes(std::string_view s) {
  std::vector<std::size_t> out;
  for (const auto &r : parse(s).rings) out.push_back(r.size());
  std::sort(out.begin(), out.end());
  return out;
}

TEST(Rings, CountLargeRings) {
  EXPECT_EQ(count_large_rings(parse("CC")), 0);
  EXPECT_EQ(count_large_rings(parse("c1ccccc1")), 0);
  EXPECT_EQ(count_large_rings(parse("C1CCCCCC1")), 1);
  EXPECT_EQ(count_large_rings(parse("C1CCCCCCC1.C1CCCCCCCC1")), 2);
}

TEST(Rings, SmallestSetOfSmallestRings) {
  EXPECT_EQ(ring_sizes("c1ccc2ccccc2c1"), (std::vector<std::size_t>{6, 6}));
  EXPECT_EQ(ring_sizes("C1CC2CCC1C2"), (std::vector<std::size_t>{5, 5}));        // norbornane
  EXPECT_EQ(ring_sizes("C12C3C4C1C5C2C3C45"), (std::vector<std::size_t>{4, 4, 4, 4, 4}));  // cubane
  EXPECT_EQ(ring_sizes("C1CCC2(CC1)CCC2"), (std::vector<std::size_t>{4, 6}));    // spiro
  // Macrocycle bridged by one bond: two 7-rings, never the 12-membered envelope.
  EXPECT_EQ(ring_sizes("C1CCCCC2CCCCCC12"), (std::vector<std::size_t>{7, 7}));
  // Each ring is a closed walk over existing bonds.
  const auto g = parse("c1ccc2c(c1)oc1ccccc12");
  for (const auto &ring : g.rings) {
    for (std::size_t i = 0; i < ring.size(); ++i) {
      const int a = ring[i], b = ring[(i + 1) % ring.size()];
      const bool bonded = std::any_of(g.bonds.begin(), g.bonds.end(), [&](const Bond &x) {
        return (x.begin == a && x.end == b) || (x.begin == b && x.end == a);
      });
      EXPECT_TRUE(bonded);
    }
  }
  EXPECT_EQ(g.rings.size(), 3U);
}

TEST(Vocabulary, EncodeDecode) {
  Vocabulary v({"C", "O", "Cl"});
  EXPECT_EQ(v.size(), 7);
  EXPECT_EQ(v.id("<pad>"), Vocabulary::kPad);
  const auto ids = v.encode("CClO");
  EXPECT_EQ(ids, (TokenSequence{Vocabulary::kSos, 4, 6, 5, Vocabulary::kEos}));
  EXPECT_EQ(v.decode(ids), "CClO");
  EXPECT_EQ(v.encode("CN")[2], Vocabulary::kUnk);
}

}  // namespace
}  // namespace mvae::smiles
