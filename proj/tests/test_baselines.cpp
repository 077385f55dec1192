// Copyright (C) 2026 The sdt Authors
// SPDX-License-Identifier: Apache-2.0

#include "sdt/baselines.hpp"
#include "sdt/harness.hpp"

#include "grad_checks.hpp"

#include <gtest/gtest.h>

#include <cmath>

namespace sdt {
namespace {

using gradtest::normal;

TEST(Mmd, Examples) {
  Rng rng(1);
  const MatD x = normal(rng, 12, 3);
  EXPECT_NEAR(mmd_loss(x, x, 1.0).value, 0.0, 1e-12);
  const auto l = mmd_loss(MatD{{0.0}}, MatD{{1.0}}, 1.0);
  EXPECT_NEAR(l.value, 2.0 - 2.0 * std::exp(-0.5), 1e-12);
  EXPECT_NEAR(l.value, 0.78693, 1e-5);
}

TEST(Mmd, MedianBandwidth) {
  // Pairwise distances on {0, 1, 3} are 1, 3 and 2.
  EXPECT_EQ(median_bandwidth(MatD{{0.0}, {1.0}}, MatD{{3.0}}), 2.0);
  EXPECT_THROW(mmd_loss(MatD{{0.0}}, MatD{{1.0}}, 0.0), InvalidArgument);
}

TEST(Coral, Examples) {
  Rng rng(2);
  const MatD x = normal(rng, 10, 4);
  MatD shifted = x;
  shifted.rowwise() += RowVec<double>::Constant(4, 3.0);
  EXPECT_NEAR(coral_loss(x, shifted).value, 0.0, 1e-12);
  EXPECT_NEAR(coral_loss(MatD{{0.0}, {2.0}}, MatD{{0.0}, {0.0}}).value, 1.0, 1e-12);
  EXPECT_THROW(coral_loss(MatD{{0.0}}, MatD{{0.0}, {1.0}}), InvalidArgument);
}

TEST(Grl, ValueIgnoresLambdaAndZeroLambdaBlocksFeatureGradients) {
  Rng rng(3);
  const MatD s = normal(rng, 6, 4), t = normal(rng, 5, 4);
  const DomainClassifier<double> clf(4, 8, 11);
  const auto a = grl_adapt_loss(s, t, clf, 0.0);
  const auto b = grl_adapt_loss(s, t, clf, 2.5);
  EXPECT_EQ(a.value, b.value);
  EXPECT_EQ(a.grad_classifier, b.grad_classifier);
  EXPECT_EQ(a.grad_source.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(a.grad_target.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_GT(b.grad_source.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_THROW(grl_adapt_loss(s, t, clf, -1.0), InvalidArgument);
}

TEST(Tcc, IdenticalWellSeparatedSequencesGiveNearZeroLoss) {
  MatD u(5, 2);
  for (int i = 0; i < 5; ++i) u.row(i) << 3.0 * i, -2.0 * i;
  EXPECT_LT(tcc_loss(u, u, 0.05).value, 1e-12);
  EXPECT_GT(tcc_loss(u, u, 50.0).value, 1.0);
}

TEST(Tcc, InvariantToRowPermutations) {
  Rng rng(4);
  const MatD u = normal(rng, 6, 3), v = normal(rng, 7, 3);
  Eigen::PermutationMatrix<Eigen::Dynamic> pu(6), pv(7);
  pu.setIdentity();
  pv.setIdentity();
  std::shuffle(pu.indices().data(), pu.indices().data() + 6, rng);
  std::shuffle(pv.indices().data(), pv.indices().data() + 7, rng);
  const double base = tcc_loss(u, v, 0.5).value;
  EXPECT_NEAR(tcc_loss(MatD(pu * u), v, 0.5).value, base, 1e-12);
  EXPECT_NEAR(tcc_loss(u, MatD(pv * v), 0.5).value, base, 1e-12);
}

TEST(Sdtw, Examples) {
  EXPECT_EQ(sdtw_loss(MatD::Zero(1, 1), 0.1).value, 0.0);
  const MatD c{{1.0, 2.0}, {3.0, 1.0}};
  EXPECT_EQ(dtw(c), 2.0);
  EXPECT_NEAR(sdtw_loss(c, 1e-3).value, 2.0, 1e-3);
  EXPECT_THROW(sdtw_loss(c, 0.0), InvalidArgument);
}

TEST(Sdtw, LowerBoundsDtwAndConvergesAsGammaShrinks) {
  Rng rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 50; ++i) {
    MatD c(4 + i % 3, 5);
    for (Eigen::Index k = 0; k < c.size(); ++k) c.data()[k] = u(rng);
    const double d = dtw(c);
    double prev = -std::numeric_limits<double>::infinity();
    for (double g : {1.0, 0.1, 0.01, 1e-3}) {
      const double s = sdtw_loss(c, g).value;
      EXPECT_LE(s, d + 1e-12);
      EXPECT_GE(s, prev - 1e-12);
      prev = s;
    }
    EXPECT_LE(d - prev, 1e-3 * std::log(3.0) * (c.rows() + c.cols()));
  }
}

TEST(Sdtw, GradientIsSoftAlignment) {
  const MatD c{{1.0, 2.0}, {3.0, 1.0}};
  const MatD g = sdtw_loss(c, 1e-3).grad;
  EXPECT_NEAR(g(0, 0), 1.0, 1e-6);
  EXPECT_NEAR(g(1, 1), 1.0, 1e-6);
  EXPECT_NEAR(g(0, 1) + g(1, 0), 0.0, 1e-6);
}

TEST(RandomPairMse, ConstantSequencesGiveZeroLoss) {
  const MatD ego = MatD::Constant(8, 3, 0.5), exo = MatD::Constant(11, 3, 0.5);
  EXPECT_EQ(random_pair_mse_loss(ego, exo, 1).value, 0.0);
}

TEST(RandomPairMse, SeedDeterminesAssignment) {
  Rng rng(6);
  const MatD ego = normal(rng, 9, 3), exo = normal(rng, 9, 3);
  EXPECT_EQ(random_pair_mse_loss(ego, exo, 3).value, random_pair_mse_loss(ego, exo, 3).value);
  Rng r(7);
  auto idx = random_assignment(9, 9, r);
  std::sort(idx.begin(), idx.end());
  for (Eigen::Index t = 0; t < 9; ++t) EXPECT_EQ(idx[static_cast<std::size_t>(t)], t);
}

TEST(BaselineGradients, MatchFiniteDifferences) {
  for (const auto& c : gradtest::all_checks()) {
    for (std::uint64_t s = 1; s <= 5; ++s) {
      const auto r = c.run(s * 7919);
      EXPECT_TRUE(r.passed) << c.name << ": " << r.message;
    }
  }
}

TEST(LossKinds, NamesRoundTrip) {
  for (auto k : {AdaptLossKind::SyncMse, AdaptLossKind::Mmd, AdaptLossKind::Dcoral, AdaptLossKind::Grl,
                 AdaptLossKind::Tcc, AdaptLossKind::Sdtw, AdaptLossKind::RndMse})
    EXPECT_EQ(parse_loss_kind(loss_kind_name(k)), k);
  for (auto p : {Pairing::RandomVideos, Pairing::SameProcedure, Pairing::Synchronized})
    EXPECT_EQ(parse_pairing(pairing_name(p)), p);
  EXPECT_THROW(parse_loss_kind("cmd"), InvalidArgument);
}

TcnConfig tiny_tcn() {
  TcnConfig c;
  c.input_dim = 4;
  c.hidden_dim = 5;
  c.num_classes = 3;
  c.num_levels = 2;
  c.seed = 3;
  return c;
}

std::vector<FeaturePair<double>> pairs_of(int count, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<FeaturePair<double>> out;
  for (int i = 0; i < count; ++i) {
    const MatD exo = normal(rng, 16 + 4 * i, 4);
    out.push_back({exo, MatD(exo + 0.5 * normal(rng, exo.rows(), 4))});
  }
  return out;
}

TEST(AdaptWithLoss, SyncMseMatchesTasOnlyDistillation) {
  const TcnModel<double> t(tiny_tcn());
  const auto pairs = pairs_of(3, 8);
  DistillConfig d;
  d.stage = DistillStage::TasOnly;
  d.tas.max_epochs = 6;
  d.tas.patience = 6;
  d.seed = 17;
  const auto a = distill_student<double>(t, pairs, d).student;
  AdaptLossConfig l;
  const auto b = adapt_with_loss<double>(t, pairs, l, d.tas, 17);
  EXPECT_EQ(a.params(), b.params());
}

TEST(AdaptWithLoss, EveryKindRunsAndIsDeterministic) {
  const TcnModel<double> t(tiny_tcn());
  const auto pairs = pairs_of(3, 9);
  TrainConfig tc;
  tc.max_epochs = 3;
  tc.patience = 3;
  for (auto k : {AdaptLossKind::Mmd, AdaptLossKind::Dcoral, AdaptLossKind::Grl, AdaptLossKind::Tcc,
                 AdaptLossKind::Sdtw, AdaptLossKind::RndMse}) {
    AdaptLossConfig l;
    l.kind = k;
    TrainLog la, lb;
    const auto a = adapt_with_loss<double>(t, pairs, l, tc, 5, &la);
    const auto b = adapt_with_loss<double>(t, pairs, l, tc, 5, &lb);
    EXPECT_EQ(a.params(), b.params()) << loss_kind_name(k);
    EXPECT_EQ(la.epoch_loss.size(), 3u) << loss_kind_name(k);
    for (double v : la.epoch_loss) EXPECT_TRUE(std::isfinite(v)) << loss_kind_name(k);
  }
}

TEST(AdaptWithLoss, SyncMseRejectsUnsynchronizedPairing) {
  const TcnModel<double> t(tiny_tcn());
  AdaptLossConfig l;
  l.pairing = Pairing::RandomVideos;
  EXPECT_THROW(adapt_with_loss<double>(t, pairs_of(2, 1), l, TrainConfig{}, 1), InvalidArgument);
}

TEST(RandomVideoPairs, IsADerangement) {
  const auto pairs = pairs_of(7, 10);
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto shuffled = random_video_pairs<double>(pairs, seed);
    ASSERT_EQ(shuffled.size(), pairs.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      EXPECT_EQ(shuffled[i].ego, pairs[i].ego);
      // Each pair has a distinct length, so a fixed point would match rows.
      EXPECT_NE(shuffled[i].exo.rows(), pairs[i].exo.rows());
    }
  }
  EXPECT_THROW(random_video_pairs<double>(pairs_of(1, 1), 0), InvalidArgument);
}

}  // namespace
}  // namespace sdt
