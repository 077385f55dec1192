// Copyright (C) 2026 The sdt Authors
// SPDX-License-Identifier: Apache-2.0

#include "sdt/gradcheck.hpp"
#include "sdt/metrics.hpp"
#include "sdt/synthgen.hpp"
#include "sdt/tasmodel.hpp"

#include "grad_checks.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <memory>

namespace sdt {
namespace {

TcnConfig tiny(int levels = 2) {
  TcnConfig c;
  c.input_dim = 3;
  c.hidden_dim = 4;
  c.num_classes = 4;
  c.num_levels = levels;
  c.kernel_width = 3;
  c.seed = 5;
  return c;
}

TEST(Tcn, ZeroParametersGiveZeroLogitsAndClassZero) {
  const auto model = TcnModel<double>::zeros(tiny(3));
  std::mt19937_64 rng(1);
  const auto acts = forward(model, test::random_mat<double>(rng, 13, 3));
  EXPECT_EQ(acts.ensemble.cwiseAbs().maxCoeff(), 0.0);
  for (const auto& z : acts.logits) EXPECT_EQ(z.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(predict_labels(acts), FrameLabels(13, 0));
}

TEST(Tcn, LevelShapes) {
  TcnConfig c = tiny(5);
  const TcnModel<float> model(c);
  const auto tr = forward_trace(model, MatF::Ones(64, 3));
  EXPECT_EQ(tr.bott_out.rows(), 2);
  const std::vector<Eigen::Index> lengths{4, 8, 16, 32, 64};
  for (int l = 1; l <= 5; ++l) {
    EXPECT_EQ(tr.acts.features[l - 1].rows(), lengths[l - 1]);
    EXPECT_EQ(tr.acts.features[l - 1].cols(), c.hidden_dim);
    EXPECT_EQ(tr.acts.logits[l - 1].cols(), c.num_classes);
  }
  EXPECT_EQ(tr.acts.ensemble.rows(), 64);
}

TEST(Tcn, OddLengthsArePaddedAndCropped) {
  const TcnModel<float> model(tiny(3));
  const auto acts = forward(model, MatF::Ones(13, 3));
  EXPECT_EQ(acts.ensemble.rows(), 13);
  EXPECT_EQ(acts.features[0].rows(), 4);  // ceil(13 / 4)
  EXPECT_EQ(acts.features[2].rows(), 13);
}

TEST(Tcn, ForwardIsDeterministic) {
  std::mt19937_64 rng(2);
  const MatF x = test::random_mat<float>(rng, 40, 3);
  const auto a = forward(TcnModel<float>(tiny(3)), x);
  const auto b = forward(TcnModel<float>(tiny(3)), x);
  EXPECT_EQ(a.ensemble, b.ensemble);
  for (std::size_t l = 0; l < a.features.size(); ++l) EXPECT_EQ(a.features[l], b.features[l]);
}

// Oracle: a slot is reached iff backward gives it a nonzero gradient. With
// random weights and inputs no reached slot has an exactly zero gradient.
TEST(Tcn, ReachedParamsMatchNonzeroGradients) {
  std::mt19937_64 rng(9);
  const TcnModel<double> model(tiny(3));
  const auto tr = forward_trace(model, test::random_mat<double>(rng, 24, 3));
  const auto& acts = tr.acts;
  for (int variant = 0; variant < 7; ++variant) {
    ActivationGrads<double> g;
    if (variant < 3) {
      g.features.resize(3);
      g.features[variant] = test::random_mat<double>(rng, acts.features[variant].rows(), acts.features[variant].cols());
    } else if (variant < 6) {
      const int l = variant - 3;
      g.logits.resize(3);
      g.logits[l] = test::random_mat<double>(rng, acts.logits[l].rows(), acts.logits[l].cols());
    } else {
      g.ensemble = test::random_mat<double>(rng, acts.ensemble.rows(), acts.ensemble.cols());
    }
    const auto grad = backward(model, tr, g);
    const auto mask = reached_params(model, g);
    for (const auto& slot : model.params().slots()) {
      bool nonzero = false;
      for (std::size_t i = slot.offset; i < slot.offset + slot.size(); ++i) nonzero = nonzero || grad[i] != 0.0;
      EXPECT_EQ(mask[slot.offset] != 0, nonzero) << "variant " << variant << " slot " << slot.name;
      for (std::size_t i = slot.offset; i < slot.offset + slot.size(); ++i) ASSERT_EQ(mask[i], mask[slot.offset]);
    }
  }
  const auto none = reached_params(model, ActivationGrads<double>{});
  EXPECT_EQ(std::count(none.begin(), none.end(), char(1)), 0);
}

TEST(Adam, InactiveElementsAreUntouched) {
  AdamOptions o;
  o.lr = 0.1;
  o.weight_decay = 0.5;
  Adam<double> opt(3, o);
  Buffer<double> p{1.0, 2.0, 3.0};
  const std::vector<char> active{1, 0, 1};
  for (int i = 0; i < 5; ++i) opt.step(p, Buffer<double>(3, 0.0), &active);
  EXPECT_LT(p[0], 1.0);
  EXPECT_EQ(p[1], 2.0);
  EXPECT_LT(p[2], 3.0);
}

TEST(Tcn, RejectsWrongInputWidth) {
  const TcnModel<float> model(tiny());
  EXPECT_THROW(forward(model, MatF::Ones(8, 5)), InvalidArgument);
}

TEST(Argmax, Examples) {
  MatD onehot = MatD::Zero(3, 4);
  onehot(0, 2) = 1;
  onehot(1, 0) = 1;
  onehot(2, 3) = 1;
  EXPECT_EQ(argmax_labels(onehot), (FrameLabels{2, 0, 3}));
  EXPECT_EQ(argmax_labels(MatD(MatD::Constant(2, 4, 0.7))), (FrameLabels{0, 0}));
  std::mt19937_64 rng(3);
  const MatD z = test::random_mat<double>(rng, 20, 4);
  EXPECT_EQ(argmax_labels(z), argmax_labels(MatD(3.5 * z)));
}

TEST(DownsampleLabels, MajorityWithLowestLabelOnTies) {
  const FrameLabels f{2, 2, 1, 1, 3, 1, 0};
  EXPECT_EQ(downsample_labels(f, 2, 4), (FrameLabels{2, 1, 1, 0}));
  EXPECT_EQ(downsample_labels(f, 4, 4), (FrameLabels{1, 0}));
  EXPECT_EQ(downsample_labels(f, 1, 4), f);
}

TEST(CeLoss, UniformLogitsGiveLogC) {
  const TcnConfig c = tiny(3);
  const auto model = TcnModel<double>::zeros(c);
  const auto tr = forward_trace(model, MatD::Ones(16, 3));
  const FrameLabels y{0, 1, 2, 3, 0, 1, 2, 3, 0, 1, 2, 3, 0, 1, 2, 3};
  const auto l = ce_loss(model, tr, y);
  EXPECT_NEAR(l.ensemble, std::log(4.0), 1e-12);
  ASSERT_EQ(l.per_level.size(), 3u);
  for (double v : l.per_level) EXPECT_NEAR(v, std::log(4.0), 1e-12);
  EXPECT_NEAR(l.total, 4 * std::log(4.0), 1e-12);
}

TEST(CeLoss, PeakedLogitsApproachZero) {
  MatD z = MatD::Zero(5, 3);
  const FrameLabels y{0, 2, 1, 1, 0};
  for (int t = 0; t < 5; ++t) z(t, y[t]) = 60.0;
  EXPECT_LT(cross_entropy(z, y), 1e-20);
}

TEST(CeLoss, GradientMatchesFiniteDifferences) {
  for (std::uint64_t s = 1; s <= 10; ++s) {
    const auto r = gradtest::check_ce_loss(s * 7919);
    EXPECT_TRUE(r.passed) << r.message;
  }
}

TEST(CeLoss, InputGradientMatchesFiniteDifferences) {
  for (std::uint64_t s = 1; s <= 10; ++s) {
    const auto r = gradtest::check_tcn_input_grad(s * 7919);
    EXPECT_TRUE(r.passed) << r.message;
  }
}

TEST(GradCheck, QuadraticIsExactUpToRoundoff) {
  const std::vector<double> a{1.5, -2.0, 0.25, 3.0};
  auto loss = [&](const std::vector<double>& p, std::vector<double>* g) {
    double v = 0;
    if (g) g->assign(p.size(), 0.0);
    for (std::size_t i = 0; i < p.size(); ++i) {
      v += a[i] * p[i] * p[i] + p[i];
      if (g) (*g)[i] = 2 * a[i] * p[i] + 1;
    }
    return v;
  };
  const auto r = gradient_check(loss, {0.3, -1.2, 2.0, 0.7});
  EXPECT_TRUE(r.passed);
  EXPECT_LT(r.max_rel_error, 1e-8);
}

TEST(GradCheck, CorruptedGradientIsCaught) {
  Rng rng(4);
  const TcnConfig cfg = tiny(2);
  TcnModel<double> model(cfg);
  const MatD x = gradtest::normal(rng, 9, 3);
  const FrameLabels y{0, 1, 1, 2, 2, 3, 3, 0, 0};
  auto loss = [&](const std::vector<double>& p, std::vector<double>* grad) {
    model.params().values().assign(p.begin(), p.end());
    const auto tr = forward_trace(model, x);
    const auto l = ce_loss(model, tr, y);
    if (grad) {
      grad->assign(l.grad.begin(), l.grad.end());
      for (std::size_t i = 0; i < grad->size(); i += 3) (*grad)[i] *= 1.01;
    }
    return l.total;
  };
  GradCheckOptions opt;
  opt.max_checks = 0;
  const auto r = gradient_check(loss, gradtest::plain(model.params().values()), opt);
  EXPECT_FALSE(r.passed) << r.message;
}

TEST(EarlyStopper, PatienceZeroStopsAfterFirstNonImprovingEpoch) {
  EarlyStopper s(0, 0.0);
  EXPECT_TRUE(s.update(3.0));
  EXPECT_FALSE(s.should_stop());
  EXPECT_TRUE(s.update(2.0));
  EXPECT_FALSE(s.update(2.5));
  EXPECT_TRUE(s.should_stop());
}

TEST(EarlyStopper, RelativeImprovementThreshold) {
  EarlyStopper s(1, 0.1);
  s.update(1.0);
  EXPECT_FALSE(s.update(0.95));  // less than 10% better
  EXPECT_TRUE(s.update(0.85));
}

std::vector<LabeledSequence<float>> separable_corpus(int recordings) {
  GeneratorConfig g;
  g.view_gap = 0.0;
  g.min_frames = 60;
  g.max_frames = 120;
  g.min_actions = 3;
  g.max_actions = 4;
  g.min_duration = 15;
  g.max_duration = 30;
  g.num_classes = 4;
  const auto s = generate_synthetic(g, {recordings, 1, 1});
  std::vector<Recording> exo;
  for (const auto& p : s.train) exo.push_back(p.exo);
  return labeled_sequences<float>(exo);
}

TEST(TrainSupervised, LearnsSeparableCorpus) {
  const auto data = separable_corpus(8);
  TcnConfig c;
  c.input_dim = 16;
  c.hidden_dim = 16;
  c.num_classes = 4;
  c.num_levels = 3;
  c.seed = 1;
  TrainConfig tc;
  tc.adam.lr = 1e-3;
  tc.max_epochs = 60;
  tc.seed = 1;
  const auto model = train_supervised(data, c, tc);
  std::vector<FrameLabels> preds, gts;
  for (const auto& d : data) {
    preds.push_back(predict_labels(forward(model, d.features)));
    gts.push_back(d.labels);
  }
  EXPECT_GE(evaluate_corpus(preds, gts).mof, 95.0);
}

TEST(TrainSupervised, PatienceZeroAndDeterminism) {
  const auto data = separable_corpus(3);
  TcnConfig c = tiny(2);
  c.input_dim = 16;
  TrainConfig tc;
  tc.max_epochs = 12;
  tc.patience = 0;
  tc.adam.lr = 0.5;  // large enough to overshoot quickly
  TrainLog a, b;
  const auto ma = train_supervised(data, c, tc, &a);
  const auto mb = train_supervised(data, c, tc, &b);
  EXPECT_EQ(a.epoch_loss, b.epoch_loss);
  EXPECT_EQ(ma.params(), mb.params());
  ASSERT_FALSE(a.epoch_loss.empty());
  if (a.epoch_loss.size() < 12u) {
    // Stopped right after the first epoch that failed to improve.
    const double last = a.epoch_loss.back();
    const double best = *std::min_element(a.epoch_loss.begin(), a.epoch_loss.end() - 1);
    EXPECT_GE(last, best);
    for (std::size_t e = 1; e + 1 < a.epoch_loss.size(); ++e) EXPECT_LT(a.epoch_loss[e], a.epoch_loss[e - 1]);
  }
  EXPECT_EQ(a.best_loss, *std::min_element(a.epoch_loss.begin(), a.epoch_loss.end()));
}

TEST(TrainSupervised, IndependentOfHeapLayout) {
  // Width 32 fills whole AVX packets; before parameter buffers were aligned,
  // the result depended on where malloc happened to place them.
  const auto data = separable_corpus(2);
  TcnConfig c;
  c.input_dim = 16;
  c.hidden_dim = 32;
  c.num_classes = 4;
  c.num_levels = 3;
  TrainConfig tc;
  tc.max_epochs = 3;
  tc.patience = 3;
  const auto ref = train_supervised(data, c, tc);
  for (std::size_t shift = 1; shift <= 4; ++shift) {
    std::vector<std::unique_ptr<char[]>> junk;
    for (std::size_t i = 0; i < shift; ++i) junk.emplace_back(new char[8 * shift + 8]);
    EXPECT_EQ(train_supervised(data, c, tc).params(), ref.params()) << shift;
  }
}

}  // namespace
}  // namespace sdt
