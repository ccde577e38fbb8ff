#include "botinject/recovery.hpp"

#include "botinject/config.hpp"

#include <gtest/gtest.h>

#include <array>
#include <cmath>
#include <sstream>

using namespace botinject;

namespace {

InverterTrainOptions experiment_inverter() { return ExperimentConfig{}.inverter; }

Matrix random_matrix(Rng& rng, Index rows, Index cols) {
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = rng.normal();
  return m;
}

}  // namespace

TEST(ConstraintProfile, Cresci2015Clamps) {
  const ConstraintProfile p = ConstraintProfile::named("cresci2015");
  std::array<double, kNumNumerical> raw{};
  raw[kFollowers] = 812;
  raw[kActiveDays] = 25000;
  raw[kScreenNameLength] = -3;
  raw[kFollowings] = 120;
  raw[kStatus] = std::nan("");
  const auto c = p.clamp(raw);
  EXPECT_EQ(c[kFollowers], 0.0);
  EXPECT_EQ(c[kActiveDays], 100.0);
  EXPECT_EQ(c[kScreenNameLength], 0.0);
  EXPECT_EQ(c[kFollowings], 120.0);
  EXPECT_EQ(c[kStatus], 0.0);
  EXPECT_EQ(p.violation(c), "");
  EXPECT_NE(p.violation(raw), "");
}

TEST(ConstraintProfile, Violations) {
  const ConstraintProfile p = ConstraintProfile::named("cresci2015");
  std::array<double, kNumNumerical> ok{0, 100, 15, 5000, 500};
  EXPECT_EQ(p.violation(ok), "");
  auto frac = ok;
  frac[kStatus] = 3.5;
  EXPECT_NE(p.violation(frac).find("integer"), std::string::npos);
  auto followers = ok;
  followers[kFollowers] = 1;
  EXPECT_NE(p.violation(followers), "");
  auto days = ok;
  days[kActiveDays] = 101;
  EXPECT_NE(p.violation(days), "");
  EXPECT_THROW(ConstraintProfile::named("friendster"), std::invalid_argument);
}

TEST(ConstraintProfile, TwibotAlternativeFixesFollowers) {
  const ConstraintProfile p = ConstraintProfile::named("twibot22-alt");
  const auto c = p.clamp({0, 50, 8, 30000, 20000});
  EXPECT_EQ(c[kFollowers], 600.0);
  EXPECT_EQ(c[kFollowings], 5000.0);
  EXPECT_EQ(c[kStatus], 18000.0);
  EXPECT_EQ(p.violation(c), "");
  EXPECT_EQ(profile_names().size(), 3u);
}

TEST(DecodeOneHot, ArgmaxPerPairTiesToFalse) {
  RowVector six(6);
  six << 0.9, 0.1, 0.5, 0.5, 0.2, 0.7;
  const auto c = decode_one_hot(six);
  EXPECT_FALSE(c[0]);
  EXPECT_FALSE(c[1]);
  EXPECT_TRUE(c[2]);
  EXPECT_THROW(decode_one_hot(RowVector::Zero(5)), std::invalid_argument);
}

TEST(DecodeOneHot, AlwaysReencodesToValidOneHot) {
  Rng rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    const RowVector oh = one_hot(decode_one_hot(random_matrix(rng, 1, 6).row(0)));
    for (int i = 0; i < kNumCategorical; ++i) {
      EXPECT_EQ(oh(2 * i) + oh(2 * i + 1), 1.0);
      EXPECT_TRUE(oh(2 * i) == 0.0 || oh(2 * i) == 1.0);
    }
  }
}

TEST(NumericInverter, LossWithZeroInverterIsClosedForm) {
  Rng rng(2);
  Mlp inverter("inv", {4, 3, kNumNumerical}, rng);
  for (Linear& l : inverter.layers) {
    l.weight.value.setZero();
    l.bias.value.setZero();
  }
  Linear enc("enc", kNumNumerical, 4, rng);
  const Matrix slices = random_matrix(rng, 3, 4);
  const Matrix z = random_matrix(rng, 3, kNumNumerical);
  const double alpha = 0.25;
  double want = 0.0;
  const RowVector phi_b = leaky_relu(Matrix(enc.bias.value)).row(0);
  for (Index i = 0; i < 3; ++i) want += z.row(i).cwiseAbs().sum() + alpha * (phi_b - slices.row(i)).cwiseAbs().sum();
  want /= 3.0;
  Tape t;
  EXPECT_NEAR(numeric_inverter_loss(t, inverter, slices, z, enc, alpha).scalar(), want, 1e-12);
  Tape u;
  EXPECT_NEAR(numeric_inverter_loss(u, inverter, slices, z, enc, 0.0).scalar(), z.cwiseAbs().sum() / 3.0, 1e-12);
}

TEST(NumericInverter, RecoversLinearEncoderOnHeldOutNodes) {
  Rng rng(3);
  Linear enc("enc", kNumNumerical, kNumNumerical, rng);
  enc.weight.value = Matrix::Identity(5, 5) + 0.3 * random_matrix(rng, 5, 5);
  const Matrix z_train = random_matrix(rng, 400, kNumNumerical);
  const Matrix z_test = random_matrix(rng, 100, kNumNumerical);
  const Matrix s_train = enc.apply(z_train);
  const Matrix s_test = enc.apply(z_test);
  InverterTrainOptions o = experiment_inverter();
  o.alpha = 0.0;
  InverterTrainReport report;
  const Mlp inv = train_numeric_inverter(s_train, z_train, enc, o, 4, &report);
  const double mae = (inv.apply(s_test) - z_test).cwiseAbs().mean();
  EXPECT_LT(mae, 0.05);
  ASSERT_EQ(report.epoch_loss.size(), 200u);
  double first = 0.0, last = 0.0;
  for (int e = 0; e < 50; ++e) first += report.epoch_loss[static_cast<std::size_t>(e)];
  for (int e = 150; e < 200; ++e) last += report.epoch_loss[static_cast<std::size_t>(e)];
  EXPECT_LT(last, first);
}

TEST(NumericInverter, AlphaTermPullsReencodingTowardInput) {
  Rng rng(5);
  Linear enc("enc", kNumNumerical, 8, rng);
  const Matrix z = random_matrix(rng, 300, kNumNumerical);
  const Matrix s = leaky_relu(Matrix(enc.apply(z)));
  auto fit = [&](double alpha) {
    InverterTrainOptions o = experiment_inverter();
    o.alpha = alpha;
    const Matrix out = train_numeric_inverter(s, z, enc, o, 6).apply(s);
    return std::pair{(out - z).cwiseAbs().mean(), (leaky_relu(Matrix(enc.apply(out))) - s).cwiseAbs().mean()};
  };
  const auto [mae0, re0] = fit(0.0);
  const auto [mae_small, re_small] = fit(0.01);
  const auto [mae1, re1] = fit(1.0);
  EXPECT_LT(re1, re0);
  EXPECT_LT(mae_small, 1.1 * mae0);
  (void)re_small;
  (void)mae1;
}

TEST(CategoricalInverter, LearnsOneHotRoundTrip) {
  Rng rng(7);
  Linear enc("enc", 6, 8, rng);
  std::vector<std::array<bool, kNumCategorical>> codes;
  Matrix oh(256, 6);
  for (Index i = 0; i < 256; ++i) {
    std::array<bool, kNumCategorical> c{};
    for (auto&& b : c) b = rng.bernoulli(0.5);
    codes.push_back(c);
    oh.row(i) = one_hot(c);
  }
  const Matrix s = leaky_relu(Matrix(enc.apply(oh)));
  const Mlp inv = train_categorical_inverter(s, oh, experiment_inverter(), 8);
  int correct = 0;
  for (Index i = 0; i < 256; ++i) correct += recover_categorical(s.row(i), inv) == codes[static_cast<std::size_t>(i)];
  EXPECT_EQ(correct, 256);
}

TEST(RecoverNumeric, RoundsAndClamps) {
  Rng rng(9);
  Mlp identity("id", {kNumNumerical, kNumNumerical}, rng);
  identity.layers[0].weight.value.setIdentity();
  identity.layers[0].bias.value.setZero();
  NormStats stats{RowVector::Zero(5), RowVector::Ones(5)};
  RowVector slice(5);
  slice << 7.2, 40.4, 3.6, 9000, -2;
  const auto r = recover_numeric(slice, identity, stats, ConstraintProfile::named("cresci2015"));
  EXPECT_EQ(r[kFollowers], 0.0);
  EXPECT_EQ(r[kActiveDays], 40.0);
  EXPECT_EQ(r[kScreenNameLength], 4.0);
  EXPECT_EQ(r[kFollowings], 5000.0);
  EXPECT_EQ(r[kStatus], 0.0);
}

TEST(Materialize, RandomEmbeddingsSatisfyProfileAndBudget) {
  SynthOptions so;
  so.nodes = 60;
  so.text_dim = 5;
  const SocialGraph g = synth_graph(so);
  DetectorModel sub = create_detector(DetectorKind::SubstituteRgcn, g, {1, 16}, 1);
  InverterTrainOptions io;
  io.epochs = 10;
  const Inverters inv = train_inverters(sub, g, io, 1);
  const ConstraintProfile profile = ConstraintProfile::named("cresci2015");
  const RowVector phi_desc = leaky_relu(Matrix(sub.encoder.desc.bias.value)).row(0);
  const RowVector phi_tweet = leaky_relu(Matrix(sub.encoder.tweet.bias.value)).row(0);
  Rng rng(10);
  for (int trial = 0; trial < 100; ++trial) {
    InjectionOutcome o;
    o.target = static_cast<Index>(rng.below(static_cast<std::uint64_t>(g.size())));
    o.candidates = candidate_set(g, o.target);
    o.attach_node = o.candidates[rng.below(o.candidates.size())];
    o.x_inj = 10.0 * random_matrix(rng, 1, 16).row(0);
    const MaterializedNode m = materialize(o, g, inv, sub.encoder, profile);
    EXPECT_EQ(profile.violation(m.attributes.numerical), "");
    EXPECT_EQ(single_injection_violation(g, m.perturbed), "");
    EXPECT_EQ(m.node, g.size());
    EXPECT_EQ(m.edge, (Edge{g.size(), o.attach_node, Relation::Follow}));
    EXPECT_EQ(m.perturbed.label(m.node), Label::Bot);
    EXPECT_TRUE(m.attributes.desc.isZero(0.0));
    EXPECT_TRUE(m.attributes.tweet.isZero(0.0));
    EXPECT_EQ(m.reencoded.segment(0, 4), phi_desc);
    EXPECT_EQ(m.reencoded.segment(4, 4), phi_tweet);
    EXPECT_NEAR(m.embedding_gap, (m.reencoded - o.x_inj).norm(), 1e-12);
  }
}

TEST(Materialize, WrongWidthThrows) {
  SynthOptions so;
  so.nodes = 40;
  so.text_dim = 4;
  const SocialGraph g = synth_graph(so);
  DetectorModel sub = create_detector(DetectorKind::SubstituteRgcn, g, {1, 16}, 1);
  InverterTrainOptions io;
  io.epochs = 1;
  const Inverters inv = train_inverters(sub, g, io, 1);
  InjectionOutcome o;
  o.x_inj = RowVector::Zero(12);
  EXPECT_THROW(materialize(o, g, inv, sub.encoder, ConstraintProfile::named("twibot22")), std::invalid_argument);
  std::ostringstream os;
  write_checkpoint(os, inv.to_checkpoint());
  std::istringstream is(os.str());
  const Inverters back = Inverters::from_checkpoint(read_checkpoint(is));
  EXPECT_EQ(checkpoint_digest(back.to_checkpoint()), checkpoint_digest(inv.to_checkpoint()));
}

TEST(RecoveredMisclassification, MatchesMaterializedGraphs) {
  SynthOptions so;
  so.nodes = 90;
  so.text_dim = 5;
  const SocialGraph g = synth_graph(so);
  DetectorModel sub = create_detector(DetectorKind::SubstituteRgcn, g, {2, 16}, 2);
  DetectorTrainOptions t;
  t.epochs = 20;
  train_detector(sub, g, t);
  InverterTrainOptions io;
  io.epochs = 10;
  const Inverters inv = train_inverters(sub, g, io, 2);
  const ConstraintProfile profile = ConstraintProfile::named("cresci2015");
  const AttackContext ctx = AttackContext::build(sub, g);
  AttackModel attack = create_attack_model(16, 3);
  std::vector<TargetFrame> frames;
  Index fooled = 0;
  for (Index v = 0; v < g.size(); v += 3) {
    frames.push_back(make_frame(ctx, v));
    const MaterializedNode m = materialize(inject(ctx, v, attack, InjectionMode::Full, 0), g, inv, sub.encoder, profile);
    fooled += predict_node(sub, m.perturbed, v).first == Label::Human;
  }
  EXPECT_DOUBLE_EQ(recovered_misclassification(ctx, attack, frames, inv, profile),
                   static_cast<double>(fooled) / static_cast<double>(frames.size()));
  EXPECT_EQ(recovered_misclassification(ctx, attack, {}, inv, profile), 0.0);
}

TEST(RecoveryProjection, MatchesUnroundedRecoveryAndDifferentiates) {
  SynthOptions so;
  so.nodes = 60;
  so.text_dim = 5;
  const SocialGraph g = synth_graph(so);
  DetectorModel sub = create_detector(DetectorKind::SubstituteRgcn, g, {1, 16}, 1);
  InverterTrainOptions io;
  io.epochs = 10;
  const Inverters inv = train_inverters(sub, g, io, 1);
  const ConstraintProfile profile = ConstraintProfile::named("cresci2015");
  const NormStats& stats = sub.encoder.require_stats();
  auto project = recovery_projection(inv, sub.encoder, profile);
  Rng rng(4);
  Parameter x("x", 3.0 * random_matrix(rng, 20, 16));
  Tape tape;
  const Matrix out = project(tape, tape.constant(x.value)).value();
  ASSERT_EQ(out.rows(), 20);
  ASSERT_EQ(out.cols(), 16);
  for (Index i = 0; i < x.value.rows(); ++i) {
    const RowVector row = x.value.row(i);
    const RowVector recovered = user_embedding(recover_attributes(row, 5, inv, sub.encoder, profile), sub.encoder);
    EXPECT_EQ(RowVector(out.row(i).segment(0, 8)), RowVector(recovered.segment(0, 8)));
    EXPECT_EQ(RowVector(out.row(i).segment(12, 4)), RowVector(recovered.segment(12, 4)));
    const Matrix raw = stats.invert(inv.numeric.apply(row.segment(8, 4)));
    std::array<double, kNumNumerical> values{};
    for (int f = 0; f < kNumNumerical; ++f) values[static_cast<std::size_t>(f)] = raw(0, f);
    const std::array<double, kNumNumerical> clamped = profile.clamp(values);
    Matrix clamped_row(1, kNumNumerical);
    for (int f = 0; f < kNumNumerical; ++f) clamped_row(0, f) = clamped[static_cast<std::size_t>(f)];
    const Matrix want = leaky_relu(sub.encoder.numerical.apply(stats.apply(clamped_row)));
    EXPECT_LT((out.row(i).segment(8, 4) - want.row(0)).cwiseAbs().maxCoeff(), 1e-10);
  }
  Parameter* params[] = {&x};
  const GradCheckResult r = grad_check(
      [&](Tape& t) { return squared_norm(project(t, t.param(x))); }, params);
  EXPECT_GT(r.coords_checked, 0);
  EXPECT_LE(r.max_error, 1e-4);
  EXPECT_THROW(project(tape, tape.constant(Matrix::Zero(1, 12))), std::invalid_argument);
}
