#include "botinject/encoder.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace botinject;

namespace {

UserAttributes user(Rng& rng, Index ds) {
  UserAttributes a;
  a.desc.resize(ds);
  a.tweet.resize(ds);
  for (Index i = 0; i < ds; ++i) a.desc(i) = rng.normal();
  for (Index i = 0; i < ds; ++i) a.tweet(i) = rng.normal();
  for (auto& x : a.numerical) x = std::round(rng.uniform(0, 500));
  for (auto&& c : a.categorical) c = rng.bernoulli(0.5);
  return a;
}

EncoderParams fitted_params(Index ds, Index dim, Rng& rng) {
  EncoderParams p(ds, dim, rng);
  Matrix values(20, kNumNumerical);
  for (Index i = 0; i < 20; ++i)
    for (Index j = 0; j < kNumNumerical; ++j) values(i, j) = rng.uniform(0, 100);
  p.stats = zscore(values).stats;
  return p;
}

}  // namespace

TEST(ZScore, ConstantFeatureMapsToZero) {
  const Matrix v = Matrix::Constant(4, 1, 7.0);
  const ZScoreResult r = zscore(v);
  EXPECT_TRUE(r.normalized.isZero(0.0));
  EXPECT_EQ(r.stats.std(0), 1.0);
}

TEST(ZScore, PopulationStandardDeviation) {
  Matrix v(3, 1);
  v << 1, 2, 3;
  const ZScoreResult r = zscore(v);
  EXPECT_NEAR(r.normalized(0, 0), -1.224744871391589, 1e-12);
  EXPECT_NEAR(r.normalized(1, 0), 0.0, 1e-15);
  EXPECT_NEAR(r.normalized(2, 0), 1.224744871391589, 1e-12);
  EXPECT_NEAR(r.stats.std(0), std::sqrt(2.0 / 3.0), 1e-15);
}

TEST(ZScore, RoundTrip) {
  Rng rng(1);
  Matrix v(10, 5);
  for (Index i = 0; i < 10; ++i)
    for (Index j = 0; j < 5; ++j) v(i, j) = rng.uniform(-1000, 1000);
  const ZScoreResult r = zscore(v);
  EXPECT_LE((r.stats.invert(r.normalized) - v).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(ZScore, FitRowsOnlyAndReuse) {
  Matrix v(4, 1);
  v << 0, 2, 100, -50;
  const std::vector<Index> rows{0, 1};
  const ZScoreResult r = zscore(v, std::nullopt, rows);
  EXPECT_DOUBLE_EQ(r.stats.mean(0), 1.0);
  EXPECT_DOUBLE_EQ(r.normalized(2, 0), 99.0);
  const ZScoreResult again = zscore(v * 2.0, r.stats);
  EXPECT_DOUBLE_EQ(again.stats.mean(0), 1.0);
}

TEST(ZScore, NonFiniteInputThrows) {
  Matrix v(2, 1);
  v << 1, std::nan("");
  EXPECT_THROW(zscore(v), std::invalid_argument);
}

TEST(EncodeNumerical, ZeroWeightsGiveZero) {
  Rng rng(2);
  EncoderParams p = fitted_params(4, 16, rng);
  p.numerical.weight.value.setZero();
  p.numerical.bias.value.setZero();
  Tape t;
  EXPECT_TRUE(encode_numerical(t, t.constant(Matrix::Random(3, 5)), p).value().isZero(0.0));
}

TEST(EncodeNumerical, FeatureMeanGivesZeroThroughIdentityWeights) {
  Rng rng(3);
  EncoderParams p = fitted_params(4, 32, rng);
  p.numerical.weight.value.setZero();
  p.numerical.weight.value.topLeftCorner(5, 5).setIdentity();
  p.numerical.bias.value.setZero();
  const Matrix at_mean = p.stats->apply(p.stats->mean);
  Tape t;
  EXPECT_LE(encode_numerical(t, t.constant(at_mean), p).value().leftCols(5).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(EncodeNumerical, MatchesPrimitiveComposition) {
  Rng rng(4);
  EncoderParams p = fitted_params(4, 16, rng);
  Matrix raw(3, 5);
  for (Index i = 0; i < 3; ++i)
    for (Index j = 0; j < 5; ++j) raw(i, j) = rng.uniform(0, 100);
  const Matrix z = p.stats->apply(raw);
  Tape t;
  const Matrix got = encode_numerical(t, t.constant(z), p).value();
  Tape u;
  const Matrix want =
      leaky_relu(affine(u.constant(z), u.constant(p.numerical.weight.value), u.constant(p.numerical.bias.value)),
                 kLeakySlope)
          .value();
  EXPECT_EQ(got, want);
}

TEST(EncodeNumerical, RequiresFittedStats) {
  Rng rng(5);
  EncoderParams p(4, 16, rng);
  Tape t;
  EXPECT_THROW(encode_numerical(t, t.constant(Matrix::Zero(1, 5)), p), std::logic_error);
}

TEST(EncodeCategorical, OneHotLayout) {
  RowVector all_false(6), all_true(6);
  all_false << 1, 0, 1, 0, 1, 0;
  all_true << 0, 1, 0, 1, 0, 1;
  EXPECT_EQ(one_hot({false, false, false}), all_false);
  EXPECT_EQ(one_hot({true, true, true}), all_true);
  for (int flip = 0; flip < 3; ++flip) {
    std::array<bool, 3> c{false, false, false};
    c[static_cast<std::size_t>(flip)] = true;
    EXPECT_EQ((one_hot(c) - all_false).cwiseAbs().sum(), 2.0);
  }
}

TEST(EncodeText, ZeroInputZeroBiasGivesZero) {
  Rng rng(6);
  EncoderParams p(8, 16, rng);
  p.desc.bias.value.setZero();
  Tape t;
  EXPECT_TRUE(encode_text(t, t.constant(Matrix::Zero(1, 8)), p.desc).value().isZero(0.0));
}

TEST(EncodeText, ZeroInputGivesActivatedBias) {
  Rng rng(7);
  EncoderParams p(8, 16, rng);
  Tape t;
  EXPECT_EQ(encode_text(t, t.constant(Matrix::Zero(1, 8)), p.tweet).value(), leaky_relu(p.tweet.bias.value));
}

TEST(EncodeText, IdentityWeightsPassPositiveInput) {
  Rng rng(8);
  EncoderParams p(4, 16, rng);
  p.desc.weight.value.setIdentity();
  p.desc.bias.value.setZero();
  Matrix x(1, 4);
  x << 0.5, 1.0, 2.0, 3.0;
  Tape t;
  EXPECT_EQ(encode_text(t, t.constant(x), p.desc).value(), x);
}

TEST(EncodeText, LengthMismatchThrows) {
  Rng rng(9);
  EncoderParams p(4, 16, rng);
  Tape t;
  EXPECT_THROW(encode_text(t, t.constant(Matrix::Zero(1, 5)), p.desc), std::invalid_argument);
}

TEST(UserEmbedding, SliceBoundaries) {
  Rng rng(10);
  const EncoderParams p = fitted_params(32, 128, rng);
  EXPECT_EQ(p.slice_width(), 32);
  EXPECT_EQ(slice_offset(Slice::Tweet, 128), 32);
  EXPECT_EQ(slice_offset(Slice::Numerical, 128), 64);
  EXPECT_EQ(slice_offset(Slice::Categorical, 128), 96);
  EXPECT_EQ(user_embedding(user(rng, 32), p).size(), 128);
}

TEST(UserEmbedding, NumericalChangeOnlyTouchesNumericalSlice) {
  Rng rng(11);
  const EncoderParams p = fitted_params(6, 32, rng);
  UserAttributes a = user(rng, 6);
  const RowVector before = user_embedding(a, p);
  a.numerical[kStatus] += 37;
  a.numerical[kFollowers] += 5;
  const RowVector after = user_embedding(a, p);
  const RowVector diff = (after - before).cwiseAbs();
  EXPECT_EQ(diff.segment(0, 16).maxCoeff(), 0.0);
  EXPECT_GT(diff.segment(16, 8).maxCoeff(), 0.0);
  EXPECT_EQ(diff.segment(24, 8).maxCoeff(), 0.0);
}

TEST(UserEmbedding, EqualsConcatenationOfSubEncoders) {
  Rng rng(12);
  EncoderParams p = fitted_params(6, 32, rng);
  std::vector<UserAttributes> users{user(rng, 6), user(rng, 6), user(rng, 6)};
  const EncoderInputs in = EncoderInputs::from_attributes(users, *p.stats);
  Tape t;
  const Matrix joint = user_embedding(t, in, p).value();
  Tape u;
  const Matrix d = encode_text(u, u.constant(in.desc), p.desc).value();
  const Matrix tw = encode_text(u, u.constant(in.tweet), p.tweet).value();
  const Matrix n = encode_numerical(u, u.constant(in.numerical), p).value();
  const Matrix c = encode_categorical(u, u.constant(in.categorical), p).value();
  Matrix want(3, 32);
  want << d, tw, n, c;
  EXPECT_EQ(joint, want);
  for (Index i = 0; i < 3; ++i) {
    EXPECT_LE((user_embedding(users[static_cast<std::size_t>(i)], p) - want.row(i)).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(EncoderParams, DimensionMustBeDivisibleByFour) {
  Rng rng(13);
  EXPECT_THROW(EncoderParams(4, 18, rng), std::invalid_argument);
}

TEST(EncoderParams, CheckpointRoundTrip) {
  Rng rng(14);
  const EncoderParams p = fitted_params(5, 16, rng);
  Checkpoint ckpt;
  p.save(ckpt);
  const EncoderParams back = EncoderParams::load(ckpt);
  EXPECT_EQ(back.numerical.weight.value, p.numerical.weight.value);
  EXPECT_EQ(back.desc.bias.value, p.desc.bias.value);
  EXPECT_EQ(back.stats->mean, p.stats->mean);
  EXPECT_EQ(back.stats->std, p.stats->std);
}
