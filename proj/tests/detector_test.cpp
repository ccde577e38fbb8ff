#include "botinject/detector.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>
#include <set>

using namespace botinject;

namespace {

UserAttributes random_user(Rng& rng, Index ds) {
  UserAttributes a;
  a.desc.resize(ds);
  a.tweet.resize(ds);
  for (Index i = 0; i < ds; ++i) a.desc(i) = rng.normal();
  for (Index i = 0; i < ds; ++i) a.tweet(i) = rng.normal();
  for (auto& x : a.numerical) x = std::round(rng.uniform(0, 300));
  for (auto&& c : a.categorical) c = rng.bernoulli(0.4);
  return a;
}

SocialGraph random_graph(Index k, double density, Rng& rng, Index ds = 3) {
  std::vector<UserAttributes> attrs;
  std::vector<Label> labels;
  std::vector<Split> splits;
  for (Index i = 0; i < k; ++i) {
    attrs.push_back(random_user(rng, ds));
    labels.push_back(rng.bernoulli(0.4) ? Label::Bot : Label::Human);
    splits.push_back(i % 3 == 2 ? Split::Val : Split::Train);
  }
  std::vector<Edge> edges;
  for (Index u = 0; u < k; ++u) {
    for (Index v = 0; v < k; ++v) {
      if (u == v) continue;
      if (rng.bernoulli(density)) edges.push_back({u, v, Relation::Friend});
      if (rng.bernoulli(density)) edges.push_back({u, v, Relation::Follow});
    }
  }
  return SocialGraph(ds, attrs, labels, edges, splits);
}

Matrix dense_mean_adjacency(const SocialGraph& g, Relation r) {
  const Index k = g.size();
  std::vector<std::set<Index>> nb(static_cast<std::size_t>(k));
  for (const Edge& e : g.edges()) {
    if (e.relation != r) continue;
    nb[static_cast<std::size_t>(e.src)].insert(e.dst);
    nb[static_cast<std::size_t>(e.dst)].insert(e.src);
  }
  Matrix a = Matrix::Zero(k, k);
  for (Index i = 0; i < k; ++i) {
    const auto& s = nb[static_cast<std::size_t>(i)];
    for (Index j : s) a(i, j) = 1.0 / static_cast<double>(s.size());
  }
  return a;
}

RelationalLayer random_layer(Index d, Rng& rng, bool tied = false) {
  RelationalLayer l;
  l.tied = tied;
  l.self = uniform_parameter("s", d, d, d, rng);
  l.friend_rel = uniform_parameter("f", d, d, d, rng);
  if (!tied) l.follow_rel = uniform_parameter("o", d, d, d, rng);
  return l;
}

Matrix random_matrix(Index r, Index c, Rng& rng) {
  Matrix m(r, c);
  for (Index i = 0; i < r; ++i)
    for (Index j = 0; j < c; ++j) m(i, j) = rng.normal();
  return m;
}

}  // namespace

TEST(RgcnLayer, IsolatedNodeUsesSelfOnly) {
  Rng rng(1);
  const SocialGraph g = random_graph(4, 0.0, rng);
  const RelationalLayer l = random_layer(6, rng);
  const Matrix x = random_matrix(4, 6, rng);
  EXPECT_EQ(rgcn_layer(x, g, l), x * l.self.value);
}

TEST(RgcnLayer, SingleFriend) {
  Rng rng(2);
  std::vector<UserAttributes> attrs{random_user(rng, 2), random_user(rng, 2)};
  const SocialGraph g(2, attrs, {Label::Human, Label::Bot}, {{1, 0, Relation::Friend}},
                      {Split::Train, Split::Train});
  const RelationalLayer l = random_layer(5, rng);
  const Matrix x = random_matrix(2, 5, rng);
  const Matrix out = rgcn_layer(x, g, l);
  const RowVector want = x.row(0) * l.self.value + x.row(1) * l.friend_rel.value;
  EXPECT_LE((out.row(0) - want).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(RgcnLayer, MatchesDenseOracleOnRandomGraphs) {
  Rng rng(3);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto k = static_cast<Index>(2 + rng.below(49));
    const SocialGraph g = random_graph(k, rng.uniform(0.0, 0.2), rng, 2);
    const Index d = 8;
    const RelationalLayer l = random_layer(d, rng);
    const Matrix x = random_matrix(k, d, rng);
    const Matrix want = x * l.self.value + dense_mean_adjacency(g, Relation::Friend) * x * l.friend_rel.value +
                        dense_mean_adjacency(g, Relation::Follow) * x * l.follow_rel.value;
    worst = std::max(worst, (rgcn_layer(x, g, l) - want).cwiseAbs().maxCoeff());

    Tape tape;
    BoundDetector::Layer bl{tape.constant(l.self.value), tape.constant(l.friend_rel.value),
                            tape.constant(l.follow_rel.value)};
    const Matrix taped = rgcn_layer(tape.constant(x), bl, false, graph_aggregator(g)).value();
    worst = std::max(worst, (taped - want).cwiseAbs().maxCoeff());
  }
  EXPECT_LE(worst, 1e-9);
}

TEST(RgcnLayer, TiedLayerAggregatesUnion) {
  Rng rng(4);
  const SocialGraph g = random_graph(12, 0.15, rng);
  const RelationalLayer l = random_layer(4, rng, true);
  const Matrix x = random_matrix(12, 4, rng);
  Matrix any = Matrix::Zero(12, 12);
  for (Index i = 0; i < 12; ++i) {
    const auto nb = g.first_order_neighbors(i);
    for (Index j : nb) any(i, j) = 1.0 / static_cast<double>(nb.size());
  }
  const Matrix want = x * l.self.value + any * x * l.friend_rel.value;
  EXPECT_LE((rgcn_layer(x, g, l) - want).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Forward, ZeroWeightsGiveUniformProbabilities) {
  Rng rng(5);
  const SocialGraph g = random_graph(10, 0.1, rng);
  for (DetectorKind kind : {DetectorKind::SubstituteRgcn, DetectorKind::VictimBotRgcn}) {
    DetectorModel m = create_detector(kind, g, {1, 8}, 3);
    for (Parameter* p : m.parameters()) p->value.setZero();
    const Prediction pred = forward(m, g);
    EXPECT_TRUE(pred.probs.isApproxToConstant(0.5, 1e-15));
    for (Label l : pred.labels) EXPECT_EQ(l, Label::Human);
  }
}

TEST(Forward, RowsSumToOne) {
  Rng rng(6);
  const SocialGraph g = random_graph(20, 0.1, rng);
  DetectorModel m = create_detector(DetectorKind::VictimGcn, g, {2, 16}, 9);
  const Prediction p = forward(m, g);
  for (Index i = 0; i < p.probs.rows(); ++i) EXPECT_NEAR(p.probs.row(i).sum(), 1.0, 1e-9);
}

TEST(Forward, PermutationEquivariance) {
  Rng rng(7);
  const SocialGraph g = random_graph(15, 0.12, rng);
  std::vector<Index> perm(15);
  for (Index i = 0; i < 15; ++i) perm[static_cast<std::size_t>(i)] = i;
  rng.shuffle(perm.begin(), perm.end());
  std::vector<UserAttributes> attrs(15);
  std::vector<Label> labels(15);
  std::vector<Split> splits(15);
  for (Index i = 0; i < 15; ++i) {
    const auto p = static_cast<std::size_t>(perm[static_cast<std::size_t>(i)]);
    attrs[p] = g.attributes(i);
    labels[p] = g.label(i);
    splits[p] = g.split(i);
  }
  std::vector<Edge> edges;
  for (const Edge& e : g.edges()) {
    edges.push_back({perm[static_cast<std::size_t>(e.src)], perm[static_cast<std::size_t>(e.dst)], e.relation});
  }
  const SocialGraph h(g.text_dim(), attrs, labels, edges, splits);
  DetectorModel m = create_detector(DetectorKind::SubstituteRgcn, g, {2, 8}, 1);
  const Prediction a = forward(m, g);
  const Prediction b = forward(m, h);
  for (Index i = 0; i < 15; ++i) {
    EXPECT_LE((a.probs.row(i) - b.probs.row(perm[static_cast<std::size_t>(i)])).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Forward, TwoLayersEqualManualComposition) {
  Rng rng(8);
  const SocialGraph g = random_graph(18, 0.1, rng);
  DetectorModel m = create_detector(DetectorKind::SubstituteRgcn, g, {2, 8}, 4);
  const Matrix x0 = node_embeddings(m, g);
  const Matrix h1 = rgcn_layer(x0, g, m.layers[0]);
  const Matrix h2 = rgcn_layer(leaky_relu(h1), g, m.layers[1]);
  Matrix logits = m.head.apply(h2);
  Matrix probs(logits.rows(), 2);
  for (Index i = 0; i < logits.rows(); ++i) {
    const double a = std::exp(logits(i, 0));
    const double b = std::exp(logits(i, 1));
    probs(i, 0) = a / (a + b);
    probs(i, 1) = b / (a + b);
  }
  EXPECT_LE((forward(m, g).probs - probs).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(PredictNode, TieGoesToHumanAndBotWins) {
  EXPECT_EQ(label_from_probs(0.5, 0.5), Label::Human);
  EXPECT_EQ(label_from_probs(0.1, 0.9), Label::Bot);
}

TEST(PredictNode, ConsistentWithForwardRow) {
  Rng rng(9);
  const SocialGraph g = random_graph(25, 0.08, rng);
  DetectorModel m = create_detector(DetectorKind::VictimBotRgcn, g, {2, 8}, 2);
  const Prediction p = forward(m, g);
  for (Index v = 0; v < g.size(); ++v) {
    const auto [label, p_bot] = predict_node(m, g, v);
    EXPECT_EQ(label, p.labels[static_cast<std::size_t>(v)]);
    EXPECT_NEAR(p_bot, p.probs(v, 1), 1e-12);
  }
  EXPECT_THROW(predict_node(m, g, 25), std::out_of_range);
}

TEST(VictimBotRgcn, KindMismatchAndArchitecture) {
  Rng rng(10);
  const SocialGraph g = random_graph(10, 0.1, rng);
  DetectorModel sub = create_detector(DetectorKind::SubstituteRgcn, g, {2, 16}, 1);
  DetectorModel vic = create_detector(DetectorKind::VictimBotRgcn, g, {2, 16}, 1);
  EXPECT_THROW(victim_botrgcn_forward(sub, g), std::invalid_argument);
  EXPECT_NO_THROW(victim_botrgcn_forward(vic, g));
  EXPECT_NE(sub.parameter_count(), vic.parameter_count());
}

TEST(Detector, GcnKindsTieRelations) {
  Rng rng(11);
  const SocialGraph g = random_graph(10, 0.1, rng);
  const DetectorModel gcn = create_detector(DetectorKind::SubstituteGcn, g, {1, 8}, 1);
  const DetectorModel rgcn = create_detector(DetectorKind::SubstituteRgcn, g, {1, 8}, 1);
  EXPECT_TRUE(gcn.layers[0].tied);
  EXPECT_FALSE(rgcn.layers[0].tied);
  EXPECT_EQ(rgcn.parameter_count() - gcn.parameter_count(), 64);
}

TEST(Detector, CheckpointRoundTripPredictsIdentically) {
  Rng rng(12);
  const SocialGraph g = random_graph(14, 0.1, rng);
  for (DetectorKind kind : {DetectorKind::SubstituteRgcn, DetectorKind::SubstituteGcn, DetectorKind::VictimGcn,
                            DetectorKind::VictimBotRgcn}) {
    DetectorModel m = create_detector(kind, g, {2, 8}, 5);
    std::ostringstream os;
    write_checkpoint(os, m.to_checkpoint());
    std::istringstream is(os.str());
    DetectorModel back = DetectorModel::from_checkpoint(read_checkpoint(is));
    EXPECT_EQ(back.kind, kind);
    EXPECT_EQ(back.layer_count(), 2);
    EXPECT_EQ(forward(back, g).probs, forward(m, g).probs);
  }
}

TEST(TrainDetector, DefaultsReduceTrainingLoss) {
  SynthOptions o;
  o.nodes = 300;
  const SocialGraph g = synth_graph(o);
  DetectorModel m = create_detector(DetectorKind::SubstituteRgcn, g, {1, 32}, 1);
  const DetectorTrainReport r = train_detector(m, g, {});
  ASSERT_EQ(r.train_loss.size(), 150u);
  EXPECT_LT(r.final_train_loss, r.train_loss.front());
}

TEST(TrainDetector, SameSeedSameFinalLoss) {
  SynthOptions o;
  o.nodes = 120;
  const SocialGraph g = synth_graph(o);
  DetectorTrainOptions t;
  t.epochs = 20;
  DetectorModel a = create_detector(DetectorKind::VictimGcn, g, {2, 16}, 8);
  DetectorModel b = create_detector(DetectorKind::VictimGcn, g, {2, 16}, 8);
  EXPECT_EQ(train_detector(a, g, t).final_train_loss, train_detector(b, g, t).final_train_loss);
}

TEST(TrainDetector, HugeLambdaCollapsesToMajorityClass) {
  SynthOptions o;
  o.nodes = 120;
  const SocialGraph g = synth_graph(o);
  DetectorModel m = create_detector(DetectorKind::SubstituteRgcn, g, {1, 16}, 2);
  DetectorTrainOptions t;
  t.lambda = 1e6;
  t.lr = 1e-7;
  t.epochs = 60;
  train_detector(m, g, t);
  double largest = 0.0;
  for (Parameter* p : m.parameters()) largest = std::max(largest, p->value.cwiseAbs().maxCoeff());
  EXPECT_LT(largest, 1e-3);
  const Prediction p = forward(m, g);
  for (Label l : p.labels) EXPECT_EQ(l, Label::Human);
}

TEST(TrainDetector, DivergenceNamesEpoch) {
  SynthOptions o;
  o.nodes = 60;
  const SocialGraph g = synth_graph(o);
  DetectorModel m = create_detector(DetectorKind::SubstituteRgcn, g, {1, 16}, 2);
  DetectorTrainOptions t;
  t.lr = 1e200;
  t.epochs = 10;
  try {
    train_detector(m, g, t);
    FAIL();
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("epoch"), std::string::npos);
  }
}
