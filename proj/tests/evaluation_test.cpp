// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "fake_models.hpp"
#include "mvae/evaluation.hpp"

namespace ev = mvae::evaluation;
using mvae::TokenSequence;
using mvae::Vocabulary;
using mvae::testing::ConstantModel;
using mvae::testing::CopyModel;

namespace {

struct Fixture {
  Vocabulary vocab{{"(", ")", "1", "=", "C", "N", "O", "c"}};
  std::vector<std::string> smiles{"CCO", "c1ccccc1", "CC(=O)N", "N", "CCCCN"};
  std::vector<TokenSequence> seqs;
  Fixture() {
    for (const auto &s : smiles) seqs.push_back(vocab.encode(s));
  }
};

TokenSequence body(const Vocabulary &v, const std::string &s) {
  auto t = v.encode(s);
  return TokenSequence(t.begin() + 1, t.end());
}

}  // namespace

TEST(Emission, DecodeCap) {
  EXPECT_EQ(ev::max_decode_steps(60), 71);
  EXPECT_EQ(ev::DecodeOptions{}.max_steps, 71);
}

TEST(Emission, TextRequiresEosAndNoSpecials) {
  Fixture f;
  EXPECT_EQ(ev::emitted_smiles(f.vocab, body(f.vocab, "CCO"), true), "CCO");
  EXPECT_FALSE(ev::emitted_smiles(f.vocab, body(f.vocab, "CCO"), false));
  TokenSequence no_eos = body(f.vocab, "CCO");
  no_eos.pop_back();
  EXPECT_FALSE(ev::emitted_smiles(f.vocab, no_eos, true));
  TokenSequence with_sos = body(f.vocab, "CCO");
  with_sos.insert(with_sos.begin() + 1, Vocabulary::kSos);
  EXPECT_FALSE(ev::emitted_smiles(f.vocab, with_sos, true));
  TokenSequence with_unk = body(f.vocab, "CCO");
  with_unk[0] = Vocabulary::kUnk;
  EXPECT_FALSE(ev::emitted_smiles(f.vocab, with_unk, true));
  EXPECT_EQ(ev::emitted_smiles(f.vocab, {Vocabulary::kEos}, true), "");
}

TEST(Emission, MissingEosIsLexical) {
  const auto v = ev::classify_emission(std::nullopt);
  EXPECT_FALSE(v.valid);
  EXPECT_EQ(v.error_class, mvae::smiles::ErrorClass::Lexical);
  EXPECT_EQ(ev::classify_emission(std::string("")).error_class, mvae::smiles::ErrorClass::Lexical);
  EXPECT_TRUE(ev::classify_emission(std::string("CCO")).valid);
  EXPECT_EQ(ev::classify_emission(std::string("C(C")).error_class, mvae::smiles::ErrorClass::Parentheses);
}

TEST(Emission, TokenMatchFraction) {
  Fixture f;
  const auto ref = f.vocab.encode("CCO");  // SOS C C O EOS: 4 positions
  EXPECT_DOUBLE_EQ(ev::token_match_fraction(ref, body(f.vocab, "CCO")), 1.0);
  EXPECT_DOUBLE_EQ(ev::token_match_fraction(ref, body(f.vocab, "CCN")), 0.75);
  EXPECT_DOUBLE_EQ(ev::token_match_fraction(ref, body(f.vocab, "C")), 0.25);
  EXPECT_DOUBLE_EQ(ev::token_match_fraction(ref, {}), 0.0);
  EXPECT_DOUBLE_EQ(ev::token_match_fraction(ref, body(f.vocab, "CCOCC")), 0.75);
}

TEST(Reconstruction, CopyDecoderIsPerfect) {
  Fixture f;
  CopyModel m(f.seqs);
  std::mt19937_64 rng(1);
  const auto rep = ev::reconstruction_accuracy(m, f.vocab, f.smiles, f.seqs, ev::ReconOptions{}, rng);
  EXPECT_EQ(rep.sequence_accuracy, 1.0);
  EXPECT_EQ(rep.token_accuracy, 1.0);
  EXPECT_EQ(rep.valid_but_unmatched_fraction, 0.0);
  EXPECT_EQ(rep.molecules, 5);
}

TEST(Reconstruction, ExactlyTenByTenAttempts) {
  Fixture f;
  CopyModel m(f.seqs);
  std::mt19937_64 rng(2);
  ev::ReconOptions opt;
  opt.batch = 130;  // forces several decoder calls, not a multiple of 100
  const auto rep = ev::reconstruction_accuracy(m, f.vocab, f.smiles, f.seqs, opt, rng);
  EXPECT_EQ(rep.encodes_per_molecule, 10);
  EXPECT_EQ(rep.decodes_per_encoding, 10);
  EXPECT_EQ(rep.encodes, 50);
  EXPECT_EQ(rep.attempts, 500);
  EXPECT_EQ(m.decoded_columns, 500);
  EXPECT_EQ(rep.matches, 500);
}

TEST(Reconstruction, HalfWrongGivesHalf) {
  Fixture f;
  CopyModel m(f.seqs, f.vocab.encode("C"), 2);
  std::mt19937_64 rng(3);
  const auto rep = ev::reconstruction_accuracy(m, f.vocab, f.smiles, f.seqs, ev::ReconOptions{}, rng);
  EXPECT_DOUBLE_EQ(rep.sequence_accuracy, 0.5);
  EXPECT_DOUBLE_EQ(rep.valid_but_unmatched_fraction, 0.5);
  EXPECT_EQ(rep.attempts, 500);
}

TEST(Reconstruction, UnfinishedDecodesNeverMatch) {
  Fixture f;
  CopyModel m(f.seqs);
  std::mt19937_64 rng(4);
  ev::ReconOptions opt;
  opt.max_steps = 3;  // "CCO" + EOS needs 4 steps
  opt.encodes = 1;
  opt.decodes = 1;
  const std::vector<std::string> one{"CCO"};
  const std::vector<TokenSequence> seq{f.vocab.encode("CCO")};
  const auto rep = ev::reconstruction_accuracy(m, f.vocab, one, seq, opt, rng);
  EXPECT_EQ(rep.matches, 0);
  EXPECT_DOUBLE_EQ(rep.token_accuracy, 0.75);
}

TEST(Reconstruction, RejectsBadArguments) {
  Fixture f;
  CopyModel m(f.seqs);
  std::mt19937_64 rng(5);
  ev::ReconOptions opt;
  opt.encodes = 0;
  EXPECT_THROW(ev::reconstruction_accuracy(m, f.vocab, f.smiles, f.seqs, opt, rng), std::invalid_argument);
  const std::vector<std::string> fewer(f.smiles.begin(), f.smiles.begin() + 2);
  EXPECT_THROW(ev::reconstruction_accuracy(m, f.vocab, fewer, f.seqs, ev::ReconOptions{}, rng),
               std::invalid_argument);
}

TEST(PriorValidity, ExactlyThousandByHundredDecodes) {
  Fixture f;
  ConstantModel m(body(f.vocab, "CCO"));
  std::mt19937_64 rng(6);
  const auto rep = ev::prior_validity(m, f.vocab, ev::ValidityOptions{}, rng);
  EXPECT_EQ(rep.latents, 1000);
  EXPECT_EQ(rep.attempts, 100000);
  EXPECT_EQ(m.decoded_columns, 100000);
  EXPECT_EQ(m.distinct_latents, 1000);
  EXPECT_EQ(rep.validity, 1.0);
  EXPECT_EQ(rep.unique_valid, 1);
}

TEST(PriorValidity, CountsErrorClasses) {
  Fixture f;
  std::mt19937_64 rng(7);
  ev::ValidityOptions opt;
  opt.latents = 4;
  opt.decodes = 3;
  ConstantModel open_branch(body(f.vocab, "C(C"));
  const auto a = ev::prior_validity(open_branch, f.vocab, opt, rng);
  EXPECT_EQ(a.validity, 0.0);
  EXPECT_EQ(a.errors.at("parentheses"), 12);
  ConstantModel runaway({4, 4, 4}, false);
  const auto b = ev::prior_validity(runaway, f.vocab, opt, rng);
  EXPECT_EQ(b.errors.at("lexical"), 12);
}

TEST(Generation, CollectsDistinctAndTimesOut) {
  Fixture f;
  std::mt19937_64 rng(8);
  ConstantModel m(body(f.vocab, "C"));
  const auto one = ev::generate_unique_valid(m, f.vocab, 1, 10, ev::DecodeOptions{}, rng);
  EXPECT_EQ(one.molecules, std::vector<std::string>{"C"});
  EXPECT_EQ(one.attempts, 1);
  EXPECT_THROW(ev::generate_unique_valid(m, f.vocab, 2, 50, ev::DecodeOptions{}, rng), ev::Timeout);
}

TEST(Evaluation, RealModelRunsEndToEnd) {
  Fixture f;
  mvae::vae::ModelConfig c;
  c.vocab_size = f.vocab.size();
  c.embed_dim = 4;
  c.hidden = 6;
  c.latent = 3;
  mvae::vae::SequenceVae<float> m(c, 1);
  std::mt19937_64 rng(9);
  ev::ReconOptions ro;
  ro.encodes = 2;
  ro.decodes = 3;
  ro.max_steps = 12;
  const auto r = ev::reconstruction_accuracy(m, f.vocab, f.smiles, f.seqs, ro, rng);
  EXPECT_EQ(r.attempts, 30);
  EXPECT_GE(r.token_accuracy, 0.0);
  EXPECT_LE(r.token_accuracy, 1.0);
  ev::ValidityOptions vo;
  vo.latents = 5;
  vo.decodes = 2;
  vo.max_steps = 12;
  const auto v = ev::prior_validity(m, f.vocab, vo, rng);
  EXPECT_EQ(v.attempts, 10);
  long errors = 0;
  for (const auto &[k, n] : v.errors) errors += n;
  EXPECT_EQ(errors + v.valid, 10);
}
