// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "mvae/vae.hpp"

namespace {

using namespace mvae;
using namespace mvae::vae;
using Mat = nn::Matrix<double>;
using Vec = nn::Vector<double>;

constexpr int S = Vocabulary::kSos;
constexpr int E = Vocabulary::kEos;

ModelConfig tiny_config(int vocab = 10) {
  ModelConfig c;
  c.vocab_size = vocab;
  c.embed_dim = 6;
  c.hidden = 8;
  c.latent = 4;
  return c;
}

TEST(Kl, ClosedFormExamples) {
  LatentDistribution<double> d{Vec::Zero(3), Vec::Zero(3)};
  EXPECT_EQ(kl_to_standard_normal(d), 0.0);
  EXPECT_DOUBLE_EQ(kl_to_standard_normal(LatentDistribution<double>{Vec::Ones(1), Vec::Zero(1)}), 0.5);
  const double ln4 = std::log(4.0);
  const double k = kl_to_standard_normal(LatentDistribution<double>{Vec::Zero(1), Vec::Constant(1, ln4)});
  EXPECT_NEAR(k, 0.5 * (4 - 1 - ln4), 1e-15);
  EXPECT_NEAR(k, 0.8069, 5e-5);
}

TEST(Kl, NonNegativeAndZeroOnlyAtPrior) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> nd(0.0, 2.0);
  for (int i = 0; i < 1000; ++i) {
    Vec mu(5), lv(5);
    for (auto &v : mu) v = nd(rng);
    for (auto &v : lv) v = nd(rng);
    EXPECT_GT(kl_to_standard_normal(LatentDistribution<double>{mu, lv}), 0.0);
  }
}

TEST(Kl, BatchFormMatchesPerColumn) {
  LatentBatch<double> b{Mat::Random(3, 4), Mat::Random(3, 4)};
  const Vec k = kl_to_standard_normal(b);
  for (Index c = 0; c < 4; ++c) EXPECT_DOUBLE_EQ(k(c), kl_to_standard_normal(b.at(c)));
}

TEST(Reparameterize, Examples) {
  const Vec mu = (Vec(3) << 0.5, -1.0, 2.0).finished();
  const Vec lv = (Vec(3) << 0.3, -0.2, 1.0).finished();
  EXPECT_EQ(reparameterize(LatentDistribution<double>{mu, lv}, Vec(Vec::Zero(3))), mu);
  const Vec e = (Vec(3) << 1.0, -2.0, 0.25).finished();
  EXPECT_EQ(reparameterize(LatentDistribution<double>{mu, Vec::Zero(3)}, e), mu + e);
  EXPECT_THROW(reparameterize(LatentDistribution<double>{mu, lv}, Vec(Vec::Zero(2))), nn::ShapeMismatch);
}

TEST(Reparameterize, MonteCarloMean) {
  const Vec mu = (Vec(2) << 0.7, -1.5).finished();
  const Vec lv = (Vec(2) << 0.4, -1.0).finished();
  const LatentDistribution<double> d{mu, lv};
  std::mt19937_64 rng(2);
  const int n = 100000;
  Vec sum = Vec::Zero(2);
  for (int i = 0; i < n; ++i) sum += reparameterize(d, Vec(standard_normal<double>(2, 1, rng)));
  const Vec mean = sum / n;
  for (Index k = 0; k < 2; ++k) EXPECT_LT(std::abs(mean(k) - mu(k)), 4 * std::exp(lv(k) / 2) / std::sqrt(n));
}

TEST(SamplePrior, MomentsAndDeterminism) {
  std::mt19937_64 rng(3);
  const int n = 100000;
  const Mat z = sample_prior<double>(n, 6, rng);
  ASSERT_EQ(z.cols(), n);
  const Vec mean = z.rowwise().mean();
  for (Index k = 0; k < 6; ++k) {
    EXPECT_LT(std::abs(mean(k)), 4 / std::sqrt(double(n)));
    const double var = (z.row(k).array() - mean(k)).square().sum() / (n - 1);
    EXPECT_NEAR(var, 1.0, 0.05);
  }
  std::mt19937_64 a(9), b(9);
  EXPECT_EQ(sample_prior<double>(5, 3, a), sample_prior<double>(5, 3, b));
  EXPECT_THROW(sample_prior<double>(0, 3, a), std::invalid_argument);
}

TEST(RebalancedLoss, Arithmetic) {
  EXPECT_DOUBLE_EQ(rebalanced_loss(1.2, 10, LossWeights::beta_weight(0.1)), 2.2);
  EXPECT_DOUBLE_EQ(rebalanced_loss(1.2, 10, LossWeights::beta_weight(1.0)), 11.2);
  EXPECT_DOUBLE_EQ(rebalanced_loss(1.2, 10, LossWeights::beta_weight(0.0)), 1.2);
  EXPECT_DOUBLE_EQ(rebalanced_loss(1.2, 10, LossWeights::alpha_weight(10.0)), 22.0);
}

TEST(RebalancedLoss, InvalidWeights) {
  EXPECT_THROW(rebalanced_loss(1, 1, LossWeights::beta_weight(1.01)), InvalidWeight);
  EXPECT_THROW(rebalanced_loss(1, 1, LossWeights::beta_weight(-0.1)), InvalidWeight);
  EXPECT_THROW(rebalanced_loss(1, 1, LossWeights::beta_weight(std::nan(""))), InvalidWeight);
  EXPECT_THROW(rebalanced_loss(1, 1, LossWeights::alpha_weight(0.5)), InvalidWeight);
}

TEST(RebalancedLoss, AlphaAndBetaModesDifferByScale) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 50.0);
  for (int i = 0; i < 100; ++i) {
    const double r = u(rng), k = u(rng);
    EXPECT_NEAR(rebalanced_loss(r, k, LossWeights::alpha_weight(10.0)),
                10.0 * rebalanced_loss(r, k, LossWeights::beta_weight(0.1)), 1e-10);
  }
}

TEST(RebalancedLoss, MonotoneInEachTerm) {
  for (double beta : {0.0, 0.1, 0.5, 1.0}) {
    const auto w = LossWeights::beta_weight(beta);
    for (double r = 0; r < 5; r += 0.5) {
      EXPECT_LE(rebalanced_loss(r, 2.0, w), rebalanced_loss(r + 0.5, 2.0, w));
      EXPECT_LE(rebalanced_loss(2.0, r, w), rebalanced_loss(2.0, r + 0.5, w));
    }
  }
}

TEST(PaddedBatch, TimeMajorLayout) {
  const std::vector<TokenSequence> seqs{{S, 4, 5, E}, {S, 6, E}};
  const auto p = PaddedBatch::from(seqs);
  EXPECT_EQ(p.steps, 4);
  EXPECT_EQ(p.batch, 2);
  EXPECT_EQ(p.at(1, 0), 4);
  EXPECT_EQ(p.at(1, 1), 6);
  EXPECT_EQ(p.at(3, 1), Vocabulary::kPad);
  EXPECT_EQ(p.lengths, (std::vector<int>{4, 3}));
}

TEST(Encode, DeterministicWithBatchShapes) {
  SequenceVae<double> m(tiny_config(), 5);
  const std::vector<TokenSequence> seqs{{S, 4, 5, 6, E}, {S, 7, E}, {S, 8, 9, E}};
  const auto x = PaddedBatch::from(seqs);
  const auto a = m.encode(x);
  const auto b = m.encode(x);
  EXPECT_EQ(a.mu, b.mu);
  EXPECT_EQ(a.logvar, b.logvar);
  EXPECT_EQ(a.size(), 3);
  EXPECT_EQ(a.mu.rows(), 4);
}

TEST(Encode, PaddingDoesNotLeakIntoShortSequences) {
  SequenceVae<double> m(tiny_config(), 6);
  const TokenSequence shorter{S, 7, 4, E};
  const std::vector<TokenSequence> alone{shorter};
  const std::vector<TokenSequence> mixed{{S, 4, 5, 6, 8, 9, E}, shorter};
  const auto a = m.encode(PaddedBatch::from(alone));
  const auto b = m.encode(PaddedBatch::from(mixed));
  EXPECT_LT((a.mu.col(0) - b.mu.col(1)).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_LT((a.logvar.col(0) - b.logvar.col(1)).cwiseAbs().maxCoeff(), 1e-14);
  const Mat z = Mat::Random(4, 2);
  const auto tf_mixed = m.teacher_forced_logits(z, PaddedBatch::from(mixed));
  const auto tf_alone = m.teacher_forced_logits(z.col(1), PaddedBatch::from(alone));
  for (Index t = 0; t < 3; ++t)
    EXPECT_LT((tf_mixed.col(t * 2 + 1) - tf_alone.col(t)).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Encode, RejectsOutOfVocabularyIds) {
  SequenceVae<double> m(tiny_config(), 6);
  const std::vector<TokenSequence> bad{{S, 12, E}};
  EXPECT_THROW(m.encode(PaddedBatch::from(bad)), nn::ShapeMismatch);
}

TEST(TeacherForced, UniformModelCostsLogVPerToken) {
  SequenceVae<double> m(tiny_config(38), 7);
  m.out_weight.value.setZero();
  m.out_bias.value.setZero();
  TokenSequence s{S};
  for (int i = 0; i < 9; ++i) s.push_back(4 + i);
  s.push_back(E);
  const std::vector<TokenSequence> seqs{s};
  const auto loss = m.decode_teacher_forced(Mat::Random(4, 1), PaddedBatch::from(seqs));
  EXPECT_EQ(loss.tokens, 10);
  EXPECT_NEAR(loss.recon_sum, 10 * std::log(38.0), 1e-12);
  EXPECT_NEAR(loss.recon_per_token, std::log(38.0), 1e-12);
}

TEST(TeacherForced, LossIsPerSequenceMean) {
  SequenceVae<double> m(tiny_config(), 8);
  const std::vector<TokenSequence> a{{S, 4, 5, E}}, b{{S, 6, E}}, both{{S, 4, 5, E}, {S, 6, E}};
  const Mat z = Mat::Random(4, 2);
  const auto la = m.decode_teacher_forced(z.col(0), PaddedBatch::from(a));
  const auto lb = m.decode_teacher_forced(z.col(1), PaddedBatch::from(b));
  const auto lab = m.decode_teacher_forced(z, PaddedBatch::from(both));
  EXPECT_NEAR(lab.recon_sum, (la.recon_sum + lb.recon_sum) / 2, 1e-12);
  EXPECT_EQ(lab.tokens, 5);
  EXPECT_NEAR(lab.recon_per_token, (la.recon_sum + lb.recon_sum) / 5, 1e-12);
}

TEST(FreeRunning, MatchesTeacherForcingWhenEmissionsAgree) {
  SequenceVae<double> m(tiny_config(), 9);
  std::mt19937_64 rng(10);
  const Mat z = sample_prior<double>(3, 4, rng);
  const auto greedy = m.decode_free_running(z, nullptr, DecodeMode::Greedy, rng, 12);
  for (Index b = 0; b < 3; ++b) {
    TokenSequence ref{S};
    ref.insert(ref.end(), greedy.emitted[b].begin(), greedy.emitted[b].end());
    const std::vector<TokenSequence> one{ref};
    const auto x = PaddedBatch::from(one);
    const auto fr = m.decode_free_running(z.col(b), &x, DecodeMode::Greedy, rng, 0);
    const auto tf = m.decode_teacher_forced(z.col(b), x);
    EXPECT_NEAR(fr.loss.recon_sum, tf.recon_sum, 1e-12);
    EXPECT_EQ(fr.loss.tokens, tf.tokens);
    EXPECT_EQ(fr.emitted[0], greedy.emitted[b]);
  }
}

TEST(FreeRunning, SingleTokenSequenceHasNoPrefixToDiffer) {
  SequenceVae<double> m(tiny_config(), 11);
  std::mt19937_64 rng(12);
  const Mat z = sample_prior<double>(2, 4, rng);
  const std::vector<TokenSequence> seqs{{S, 5, E}, {S, 7, E}};
  const auto x = PaddedBatch::from(seqs);
  const auto fr = m.decode_free_running(z, &x, DecodeMode::Sample, rng, 0);
  const Mat logits = m.teacher_forced_logits(z, x);
  // Step 1 is conditioned on SOS in both modes.
  double step1 = 0.0;
  for (Index b = 0; b < 2; ++b) step1 += nn::softmax_cross_entropy<double>(logits.col(b), seqs[b][1]);
  double fr_step1 = 0.0;
  {
    const std::vector<TokenSequence> first{{S, 5}, {S, 7}};
    const auto x1 = PaddedBatch::from(first);
    fr_step1 = m.decode_free_running(z, &x1, DecodeMode::Sample, rng, 0).loss.recon_sum * 2;
  }
  EXPECT_NEAR(fr_step1, step1, 1e-12);
  EXPECT_EQ(fr.loss.tokens, 4);
}

TEST(FreeRunning, StopsWhenAllColumnsEmitEos) {
  auto c = tiny_config();
  SequenceVae<double> m(c, 13);
  // Output bias forces EOS on every step.
  m.out_weight.value.setZero();
  m.out_bias.value.setConstant(-50.0);
  m.out_bias.value(E, 0) = 50.0;
  std::mt19937_64 rng(14);
  const auto r = m.decode_free_running(sample_prior<double>(3, 4, rng), nullptr, DecodeMode::Sample, rng, 20);
  for (Index b = 0; b < 3; ++b) {
    EXPECT_TRUE(r.finished[b]);
    EXPECT_EQ(r.emitted[b], (TokenSequence{E}));
  }
  m.out_bias.value(E, 0) = -50.0;
  m.out_bias.value(4, 0) = 50.0;
  const auto capped = m.decode_free_running(sample_prior<double>(1, 4, rng), nullptr, DecodeMode::Greedy, rng, 7);
  EXPECT_FALSE(capped.finished[0]);
  EXPECT_EQ(capped.emitted[0].size(), 7U);
}

double end_to_end_gradient_error(std::uint64_t seed, const LossWeights &w) {
  SequenceVae<double> m(tiny_config(), seed);
  std::mt19937_64 rng(seed + 1);
  const std::vector<TokenSequence> seqs{{S, 4, 5, 6, 7, E}, {S, 8, 9, E}};
  const auto x = PaddedBatch::from(seqs);
  const Mat eps = standard_normal<double>(4, 2, rng);
  const auto res = nn::grad_check<double>(
      m.parameters(),
      [&] {
        m.zero_grad();
        return m.forward_backward(x, eps, w).total;
      },
      [&] { return m.loss(x, eps, w).total; });
  return res.max_relative_error;
}

TEST(EndToEndGradient, BetaMode) { EXPECT_LE(end_to_end_gradient_error(21, LossWeights::beta_weight(0.3)), 1e-4); }
TEST(EndToEndGradient, AlphaMode) { EXPECT_LE(end_to_end_gradient_error(22, LossWeights::alpha_weight(4.0)), 1e-4); }

TEST(EndToEnd, BetaZeroIsPureReconstruction) {
  SequenceVae<double> m(tiny_config(), 23);
  std::mt19937_64 rng(24);
  const std::vector<TokenSequence> seqs{{S, 4, 5, E}, {S, 6, E}};
  const auto x = PaddedBatch::from(seqs);
  const Mat eps = standard_normal<double>(4, 2, rng);
  const auto l = m.loss(x, eps, LossWeights::beta_weight(0.0));
  EXPECT_EQ(l.total, l.recon_sum);
  EXPECT_GT(l.kl, 0.0);
  const auto full = m.loss(x, eps, LossWeights::beta_weight(1.0));
  EXPECT_NEAR(full.total, full.recon_sum + full.kl, 1e-12);
}

TEST(EndToEnd, SinglePrecisionTracksDoublePrecision) {
  SequenceVae<double> md(tiny_config(), 25);
  SequenceVae<float> mf(tiny_config(), 25);
  std::mt19937_64 rng(26);
  const std::vector<TokenSequence> seqs{{S, 4, 5, 6, E}, {S, 6, E}};
  const auto x = PaddedBatch::from(seqs);
  const Mat eps = standard_normal<double>(4, 2, rng);
  const auto ld = md.loss(x, eps, LossWeights::beta_weight(0.5));
  const auto lf = mf.loss(x, eps.cast<float>(), LossWeights::beta_weight(0.5));
  EXPECT_NEAR(lf.total, ld.total, 1e-4 * std::abs(ld.total));
}

TEST(ModelConfig, Validation) {
  auto c = tiny_config();
  c.hidden = 0;
  EXPECT_THROW(SequenceVae<double>(c, 1), std::invalid_argument);
}

}  // namespace
