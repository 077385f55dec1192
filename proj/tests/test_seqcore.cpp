// Copyright (C) 2026 The sdt Authors
// SPDX-License-Identifier: Apache-2.0

#include "sdt/seqcore.hpp"

#include "temp_dir.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <fstream>

namespace sdt {
namespace {

using test::TempDir;

constexpr ClassId A = 0, B = 1, C = 2;

TEST(Segments, RunLengthEncoding) {
  const FrameLabels aab{A, A, B};
  EXPECT_EQ(segments_from_frames(aab).segments(), (std::vector<Segment>{{0, 2, A}, {2, 3, B}}));
  const FrameLabels a{A};
  EXPECT_EQ(segments_from_frames(a).segments(), (std::vector<Segment>{{0, 1, A}}));
  const FrameLabels aba{A, B, A};
  EXPECT_EQ(segments_from_frames(aba).segments(), (std::vector<Segment>{{0, 1, A}, {1, 2, B}, {2, 3, A}}));
}

TEST(Segments, Expansion) {
  EXPECT_EQ(frames_from_segments(Segmentation({{0, 2, A}, {2, 3, B}}, 3)), (FrameLabels{A, A, B}));
  EXPECT_EQ(frames_from_segments(Segmentation({{0, 1, C}}, 1)), (FrameLabels{C}));
}

TEST(Segments, RoundTripOnRandomLabels) {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 500; ++i) {
    const FrameLabels f = test::random_frames(rng, 60, 4);
    const Segmentation s = segments_from_frames(f);
    EXPECT_EQ(frames_from_segments(s), f);
    for (std::size_t k = 1; k < s.size(); ++k) EXPECT_NE(s.segments()[k - 1].label, s.segments()[k].label);
  }
}

TEST(Segments, RejectsNonCanonicalInput) {
  EXPECT_THROW(Segmentation({{0, 1, A}, {1, 2, A}}, 2), InvalidArgument);
  EXPECT_THROW(Segmentation({{0, 1, A}, {2, 3, B}}, 3), InvalidArgument);
  EXPECT_THROW(Segmentation({{1, 2, A}}, 2), InvalidArgument);
  EXPECT_THROW(Segmentation({{0, 2, A}}, 3), InvalidArgument);
  EXPECT_THROW(Segmentation({{0, 0, A}}, 0), InvalidArgument);
  EXPECT_THROW(segments_from_frames(FrameLabels{}), InvalidArgument);
}

TEST(Ftsq, RoundTripIsBitExact) {
  TempDir dir("ftsq");
  std::mt19937_64 rng(3);
  FeatureSequence seq;
  seq.data = test::random_mat<float>(rng, 7, 3);
  save_features(seq, dir.path() / "x.ftsq");
  const FeatureSequence back = load_features(dir.path() / "x.ftsq");
  ASSERT_EQ(back.data.rows(), 7);
  ASSERT_EQ(back.data.cols(), 3);
  EXPECT_EQ(std::memcmp(back.data.data(), seq.data.data(), sizeof(float) * 21), 0);
  EXPECT_EQ(peek_feature_shape(dir.path() / "x.ftsq"), std::make_pair(7u, 3u));
}

TEST(Ftsq, FormatErrors) {
  MatF m = MatF::Ones(4, 2);
  const std::string good = encode_features(m);
  std::string zero_t = good;
  zero_t[8] = zero_t[9] = zero_t[10] = zero_t[11] = 0;
  EXPECT_THROW(decode_features(zero_t), FormatError);
  EXPECT_THROW(decode_features(good.substr(0, good.size() - 5)), FormatError);
  EXPECT_THROW(decode_features(good + "xx"), FormatError);
  std::string bad_magic = good;
  bad_magic[0] = 'X';
  try {
    decode_features(bad_magic);
    FAIL() << "expected a format error";
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 0u);
  }
}

TEST(Labels, CsvAndPerFrameFormats) {
  const Segmentation s({{0, 3, A}, {3, 5, C}}, 5);
  EXPECT_EQ(decode_labels(encode_labels_csv(s)), s);
  EXPECT_EQ(decode_labels("0\n0\n0\n2\n2\n"), s);
  EXPECT_THROW(decode_labels(""), InvalidArgument);
  EXPECT_THROW(decode_labels("start,end,label\n0,2\n"), InvalidArgument);
  EXPECT_THROW(decode_labels("0\nx\n"), InvalidArgument);
}

TEST(Keys, BaseKeyStripsViewSuffix) {
  EXPECT_EQ(base_key("rec01_exo"), "rec01");
  EXPECT_EQ(base_key("rec01_ego"), "rec01");
  EXPECT_EQ(base_key("rec01"), "rec01");
  EXPECT_EQ(base_key("_ego"), "_ego");
}

class ManifestTest : public ::testing::Test {
 protected:
  void write_pair(std::int64_t exo_frames, std::int64_t ego_frames) {
    FeatureSequence a, b;
    a.data = MatF::Zero(exo_frames, 2);
    b.data = MatF::Ones(ego_frames, 2);
    save_features(a, dir_.path() / "p_exo.ftsq");
    save_features(b, dir_.path() / "p_ego.ftsq");
  }
  nlohmann::json manifest(const std::string& role = "adapt_pair") const {
    return {{"num_classes", 3},
            {"entries", {{{"role", role}, {"features", "p_exo.ftsq"}, {"features_ego", "p_ego.ftsq"}}}}};
  }
  TempDir dir_{"manifest"};
};

TEST_F(ManifestTest, EqualLengthPairLoads) {
  write_pair(100, 100);
  const CorpusManifest m = parse_manifest(manifest(), dir_.path());
  ASSERT_EQ(m.entries.size(), 1u);
  const Corpus c = load_corpus(m);
  ASSERT_EQ(c.adapt_pairs.size(), 1u);
  EXPECT_FALSE(c.adapt_pairs[0].exo.labels.has_value());
  EXPECT_EQ(c.adapt_pairs[0].ego.features.frames(), 100);
}

TEST_F(ManifestTest, UnsynchronizedPairIsRejected) {
  write_pair(100, 99);
  EXPECT_THROW(parse_manifest(manifest(), dir_.path()), InvalidArgument);
}

TEST_F(ManifestTest, UnknownRoleIsRejected) {
  write_pair(10, 10);
  EXPECT_THROW(parse_manifest(manifest("validation"), dir_.path()), InvalidArgument);
  EXPECT_THROW(parse_role("validation"), InvalidArgument);
}

TEST_F(ManifestTest, SaveLoadRoundTrip) {
  write_pair(10, 10);
  const CorpusManifest m = parse_manifest(manifest(), dir_.path());
  save_manifest(m, dir_.path() / "manifest.json");
  const CorpusManifest back = load_manifest(dir_.path() / "manifest.json");
  EXPECT_EQ(manifest_to_json(back), manifest_to_json(m));
}

TEST_F(ManifestTest, MalformedJsonIsFormatError) {
  std::ofstream(dir_.path() / "bad.json") << "{\"num_classes\": ";
  EXPECT_THROW(load_manifest(dir_.path() / "bad.json"), FormatError);
}

}  // namespace
}  // namespace sdt
