#include "botinject/detector.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace botinject {

std::string to_string(DetectorKind kind) {
  switch (kind) {
    case DetectorKind::SubstituteRgcn: return "substitute-rgcn";
    case DetectorKind::SubstituteGcn: return "substitute-gcn";
    case DetectorKind::VictimGcn: return "victim-gcn";
    case DetectorKind::VictimBotRgcn: return "victim-botrgcn";
  }
  return "?";
}

DetectorKind parse_detector_kind(const std::string& name) {
  for (DetectorKind k : {DetectorKind::SubstituteRgcn, DetectorKind::SubstituteGcn,
                         DetectorKind::VictimGcn, DetectorKind::VictimBotRgcn}) {
    if (to_string(k) == name) return k;
  }
  throw std::invalid_argument("unknown detector kind '" + name + "'");
}

bool relation_blind(DetectorKind kind) {
  return kind == DetectorKind::SubstituteGcn || kind == DetectorKind::VictimGcn;
}

Index default_layer_count(DetectorKind kind) {
  return kind == DetectorKind::VictimGcn || kind == DetectorKind::VictimBotRgcn ? 2 : 1;
}

const Parameter& RelationalLayer::relation_weight(Relation r) const {
  return tied || r == Relation::Friend ? friend_rel : follow_rel;
}

std::vector<Parameter*> DetectorModel::parameters() {
  std::vector<Parameter*> out;
  if (kind == DetectorKind::VictimBotRgcn) {
    joint.collect(out);
  } else {
    encoder.collect(out);
  }
  for (RelationalLayer& l : layers) {
    out.push_back(&l.self);
    out.push_back(&l.friend_rel);
    if (!l.tied) out.push_back(&l.follow_rel);
  }
  head.collect(out);
  return out;
}

Index DetectorModel::parameter_count() const {
  Index n = 0;
  for (Parameter* p : const_cast<DetectorModel*>(this)->parameters()) n += p->value.size();
  return n;
}

Checkpoint DetectorModel::to_checkpoint() const {
  Checkpoint c;
  c.set_meta("kind", to_string(kind));
  c.set_meta("L", std::to_string(layers.size()));
  c.set_meta("dim", std::to_string(dim));
  c.set_meta("text_dim", std::to_string(text_dim));
  if (kind == DetectorKind::VictimBotRgcn) {
    joint.save(c);
    c.add("norm.mean", encoder.require_stats().mean);
    c.add("norm.std", encoder.require_stats().std);
  } else {
    encoder.save(c);
  }
  for (std::size_t l = 0; l < layers.size(); ++l) {
    c.add(layers[l].self);
    c.add(layers[l].friend_rel);
    if (!layers[l].tied) c.add(layers[l].follow_rel);
  }
  head.save(c);
  return c;
}

DetectorModel DetectorModel::from_checkpoint(const Checkpoint& c) {
  DetectorModel m;
  m.kind = parse_detector_kind(c.require_meta("kind"));
  const Index L = std::stol(c.require_meta("L"));
  m.dim = std::stol(c.require_meta("dim"));
  m.text_dim = std::stol(c.require_meta("text_dim"));
  if (L < 1) throw std::runtime_error("checkpoint: detector needs L >= 1");
  if (m.kind == DetectorKind::VictimBotRgcn) {
    m.joint = Linear::load(c, "joint");
    m.encoder.stats = NormStats{c.require("norm.mean"), c.require("norm.std")};
  } else {
    m.encoder = EncoderParams::load(c);
  }
  const bool tied = relation_blind(m.kind);
  for (Index l = 0; l < L; ++l) {
    const std::string p = "layer" + std::to_string(l);
    RelationalLayer layer;
    layer.tied = tied;
    layer.self = Parameter(p + ".self", c.require(p + ".self"));
    layer.friend_rel = Parameter(p + ".friend", c.require(p + ".friend"));
    if (!tied) layer.follow_rel = Parameter(p + ".follow", c.require(p + ".follow"));
    m.layers.push_back(std::move(layer));
  }
  m.head = Linear::load(c, "head");
  return m;
}

DetectorModel create_detector(DetectorKind kind, const SocialGraph& g, const DetectorShape& shape,
                              std::uint64_t seed) {
  if (shape.layers < 1) throw std::invalid_argument("detector needs at least one relational layer");
  if (shape.dim <= 0 || shape.dim % 4 != 0) {
    throw std::invalid_argument("embedding dimension must be divisible by 4");
  }
  Rng rng(derive_seed(seed, "detector:" + to_string(kind)));
  DetectorModel m;
  m.kind = kind;
  m.dim = shape.dim;
  m.text_dim = g.text_dim();
  const Index D = shape.dim;
  if (kind == DetectorKind::VictimBotRgcn) {
    m.joint = Linear("joint", 2 * g.text_dim() + kNumNumerical + 2 * kNumCategorical, D, rng);
  } else {
    m.encoder = EncoderParams(g.text_dim(), D, rng);
  }
  m.encoder.stats = fit_norm_stats(g);
  const bool tied = relation_blind(kind);
  for (Index l = 0; l < shape.layers; ++l) {
    const std::string p = "layer" + std::to_string(l);
    RelationalLayer layer;
    layer.tied = tied;
    layer.self = uniform_parameter(p + ".self", D, D, D, rng);
    layer.friend_rel = uniform_parameter(p + ".friend", D, D, D, rng);
    if (!tied) layer.follow_rel = uniform_parameter(p + ".follow", D, D, D, rng);
    m.layers.push_back(std::move(layer));
  }
  m.head = Linear("head", D, 2, rng);
  return m;
}

// --- taped building blocks ---------------------------------------------------

Aggregator graph_aggregator(const SocialGraph& g) {
  auto friends = mean_aggregation(g, Neighborhood::Friend);
  auto follows = mean_aggregation(g, Neighborhood::Follow);
  auto any = mean_aggregation(g, Neighborhood::Any);
  return [friends, follows, any](Neighborhood which, Var x) {
    switch (which) {
      case Neighborhood::Friend: return spmm(friends, x);
      case Neighborhood::Follow: return spmm(follows, x);
      case Neighborhood::Any: break;
    }
    return spmm(any, x);
  };
}

BoundDetector BoundDetector::bind(Tape& tape, DetectorModel& model, bool trainable) {
  BoundDetector b;
  b.model = &model;
  b.trainable = trainable;
  for (RelationalLayer& l : model.layers) {
    Layer bl;
    bl.self = botinject::bind(tape, l.self, trainable);
    bl.friend_rel = botinject::bind(tape, l.friend_rel, trainable);
    if (!l.tied) bl.follow_rel = botinject::bind(tape, l.follow_rel, trainable);
    b.layers.push_back(bl);
  }
  b.head_weight = botinject::bind(tape, model.head.weight, trainable);
  b.head_bias = botinject::bind(tape, model.head.bias, trainable);
  return b;
}

Var encode_nodes(Tape& tape, DetectorModel& model, const EncoderInputs& in, bool trainable) {
  if (model.kind == DetectorKind::VictimBotRgcn) {
    return leaky_relu(model.joint(tape, tape.constant(in.joint()), trainable), kLeakySlope);
  }
  return user_embedding(tape, in, model.encoder, trainable);
}

Var rgcn_layer(Var x, const BoundDetector::Layer& layer, bool tied, const Aggregator& agg) {
  Var out = matmul(x, layer.self);
  if (tied) return out + matmul(agg(Neighborhood::Any, x), layer.friend_rel);
  out = out + matmul(agg(Neighborhood::Friend, x), layer.friend_rel);
  return out + matmul(agg(Neighborhood::Follow, x), layer.follow_rel);
}

Var relational_forward(const BoundDetector& d, Var x0, const Aggregator& agg) {
  const bool tied = relation_blind(d.model->kind);
  Var h = x0;
  for (std::size_t l = 0; l < d.layers.size(); ++l) {
    if (l > 0) h = leaky_relu(h, kLeakySlope);
    h = rgcn_layer(h, d.layers[l], tied, agg);
  }
  return h;
}

Var class_logits(const BoundDetector& d, Var h) {
  return affine(h, d.head_weight, d.head_bias);
}

Matrix rgcn_layer(const Matrix& x, const SocialGraph& g, const RelationalLayer& layer) {
  if (x.rows() != g.size()) throw std::invalid_argument("rgcn_layer: row count must equal k");
  if (x.cols() != layer.self.value.rows()) throw std::invalid_argument("rgcn_layer: width mismatch");
  Matrix out = x * layer.self.value;
  if (layer.tied) {
    out += (*mean_aggregation(g, Neighborhood::Any) * x) * layer.friend_rel.value;
  } else {
    out += (*mean_aggregation(g, Neighborhood::Friend) * x) * layer.friend_rel.value;
    out += (*mean_aggregation(g, Neighborhood::Follow) * x) * layer.follow_rel.value;
  }
  return out;
}

// --- inference ----------------------------------------------------------------

Label label_from_probs(double p_human, double p_bot) {
  return p_bot > p_human ? Label::Bot : Label::Human;
}

namespace {

Prediction to_prediction(Matrix probs) {
  Prediction p;
  p.labels.reserve(static_cast<std::size_t>(probs.rows()));
  for (Index i = 0; i < probs.rows(); ++i) p.labels.push_back(label_from_probs(probs(i, 0), probs(i, 1)));
  p.probs = std::move(probs);
  return p;
}

}  // namespace

Prediction forward(DetectorModel& model, const SocialGraph& g) {
  Tape tape;
  const BoundDetector d = BoundDetector::bind(tape, model, false);
  const EncoderInputs in = EncoderInputs::from_graph(g, model.encoder.require_stats());
  Var x0 = encode_nodes(tape, model, in, false);
  Var probs = softmax_rows(class_logits(d, relational_forward(d, x0, graph_aggregator(g))));
  return to_prediction(probs.value());
}

Prediction victim_botrgcn_forward(DetectorModel& model, const SocialGraph& g) {
  if (model.kind != DetectorKind::VictimBotRgcn) {
    throw std::invalid_argument("victim_botrgcn_forward on a " + to_string(model.kind) + " model");
  }
  return forward(model, g);
}

std::pair<Label, double> predict_node(DetectorModel& model, const SocialGraph& g, Index v) {
  if (v < 0 || v >= g.size()) throw std::out_of_range("unknown node id " + std::to_string(v));
  const Index nodes[] = {v};
  const Matrix p = local_probabilities(model, g, nodes);
  return {label_from_probs(p(0, 0), p(0, 1)), p(0, 1)};
}

Matrix local_probabilities(DetectorModel& model, const SocialGraph& g, std::span<const Index> nodes) {
  const std::vector<Index> ball = k_hop_ball(g, nodes, static_cast<int>(model.layer_count()));
  const SocialGraph sub = induced_subgraph(g, ball);
  const Prediction p = forward(model, sub);
  Matrix out(static_cast<Index>(nodes.size()), 2);
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const auto it = std::lower_bound(ball.begin(), ball.end(), nodes[i]);
    out.row(static_cast<Index>(i)) = p.probs.row(it - ball.begin());
  }
  return out;
}

Matrix node_embeddings(DetectorModel& model, const SocialGraph& g) {
  Tape tape;
  const EncoderInputs in = EncoderInputs::from_graph(g, model.encoder.require_stats());
  return encode_nodes(tape, model, in, false).value();
}

// --- training -----------------------------------------------------------------

double accuracy(const Prediction& p, const SocialGraph& g, std::span<const Index> nodes) {
  if (nodes.empty()) return 0.0;
  std::size_t hit = 0;
  for (Index v : nodes) {
    if (p.labels[static_cast<std::size_t>(v)] == g.label(v)) ++hit;
  }
  return static_cast<double>(hit) / static_cast<double>(nodes.size());
}

DetectorTrainReport train_detector(DetectorModel& model, const SocialGraph& g,
                                   const DetectorTrainOptions& options) {
  const std::vector<Index> train = g.mask(Split::Train);
  const std::vector<Index> val = g.mask(Split::Val);
  if (train.empty()) throw std::invalid_argument("train_detector: empty training mask");
  std::vector<int> labels;
  for (Index v : train) labels.push_back(class_index(g.label(v)));

  const EncoderInputs in = EncoderInputs::from_graph(g, model.encoder.require_stats());
  const Aggregator agg = graph_aggregator(g);
  GradientDescent opt(options.lr, options.momentum);
  std::vector<Parameter*> params = model.parameters();
  DetectorTrainReport report;

  auto run = [&](int epoch, bool step) {
    Tape tape;
    const BoundDetector d = BoundDetector::bind(tape, model, true);
    Var x0 = encode_nodes(tape, model, in, true);
    Var logits = class_logits(d, relational_forward(d, x0, agg));
    Var ce;
    try {
      ce = softmax_cross_entropy(gather_rows(logits, train), labels);
    } catch (const std::invalid_argument&) {
      throw std::runtime_error("detector training diverged at epoch " + std::to_string(epoch));
    }
    Var loss = ce;
    if (options.lambda != 0.0) {
      Var reg;
      for (Parameter* p : params) {
        Var sq = squared_norm(tape.param(*p));
        reg = reg.valid() ? reg + sq : sq;
      }
      loss = loss + scale(reg, options.lambda);
    }
    const double value = loss.scalar();
    if (!std::isfinite(value)) {
      throw std::runtime_error("detector training diverged at epoch " + std::to_string(epoch));
    }
    const Prediction pred = to_prediction(softmax_rows(logits).value());
    if (step) {
      tape.backward(loss);
      try {
        opt.step(params);
      } catch (const std::runtime_error& e) {
        throw std::runtime_error("detector training diverged at epoch " + std::to_string(epoch) +
                                 ": " + e.what());
      }
    }
    return std::pair{value, accuracy(pred, g, val)};
  };

  for (int e = 0; e < options.epochs; ++e) {
    const auto [loss, acc] = run(e, true);
    report.train_loss.push_back(loss);
    report.val_accuracy.push_back(acc);
  }
  const auto [loss, acc] = run(options.epochs, false);
  report.final_train_loss = loss;
  report.final_val_accuracy = acc;
  return report;
}

}  // namespace botinject
