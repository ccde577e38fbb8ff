#include "botinject/injector.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace botinject {

std::string to_string(InjectionMode mode) {
  switch (mode) {
    case InjectionMode::Full: return "full";
    case InjectionMode::AssignEmbedding: return "assign-embedding";
    case InjectionMode::RandomEdge: return "random-edge";
  }
  return "?";
}

InjectionMode parse_injection_mode(const std::string& name) {
  for (InjectionMode m : {InjectionMode::Full, InjectionMode::AssignEmbedding, InjectionMode::RandomEdge}) {
    if (to_string(m) == name) return m;
  }
  throw std::invalid_argument("unknown injection mode '" + name + "'");
}

EmbeddingEnvelope EmbeddingEnvelope::of_rows(const Matrix& embeddings, std::span<const Index> rows) {
  if (rows.empty()) throw std::invalid_argument("envelope of an empty node set");
  EmbeddingEnvelope e;
  e.lo = embeddings.row(rows[0]);
  e.hi = e.lo;
  for (Index r : rows) {
    e.lo = e.lo.cwiseMin(embeddings.row(r));
    e.hi = e.hi.cwiseMax(embeddings.row(r));
  }
  return e;
}

bool EmbeddingEnvelope::contains(const RowVector& x) const {
  if (x.size() != lo.size()) return false;
  for (Index j = 0; j < x.size(); ++j) {
    if (!(x(j) >= lo(j) && x(j) <= hi(j))) return false;
  }
  return true;
}

std::vector<Parameter*> AttackModel::parameters() {
  std::vector<Parameter*> out;
  fx.collect(out);
  fe.collect(out);
  fw.collect(out);
  return out;
}

Checkpoint AttackModel::to_checkpoint() const {
  Checkpoint c;
  c.set_meta("kind", "attack");
  c.set_meta("dim", std::to_string(dim));
  fx.save(c);
  fe.save(c);
  fw.save(c);
  return c;
}

AttackModel AttackModel::from_checkpoint(const Checkpoint& c) {
  if (c.require_meta("kind") != "attack") throw std::runtime_error("checkpoint is not an attack model");
  AttackModel m;
  m.dim = std::stol(c.require_meta("dim"));
  m.fx = Mlp::load(c, "atk.fx");
  m.fe = Mlp::load(c, "atk.fe");
  m.fw = Linear::load(c, "atk.fw");
  return m;
}

AttackModel create_attack_model(Index dim, std::uint64_t seed) {
  if (dim <= 0) throw std::invalid_argument("attack model needs a positive dimension");
  Rng rng(derive_seed(seed, "attack-init"));
  AttackModel m;
  m.dim = dim;
  m.fx = Mlp("atk.fx", {6 * dim, dim, dim}, rng);
  m.fe = Mlp("atk.fe", {7 * dim, dim, dim}, rng);
  m.fw = Linear("atk.fw", 4, 2, rng);
  Matrix avg(4, 2);
  avg << 0.5, 0.0, 0.0, 0.5, 0.5, 0.0, 0.0, 0.5;
  m.fw.weight.value = avg;
  m.fw.bias.value.setZero();
  return m;
}

AttackContext AttackContext::build(DetectorModel& substitute, const SocialGraph& g) {
  AttackContext ctx;
  ctx.substitute = &substitute;
  ctx.graph = &g;
  ctx.embeddings = node_embeddings(substitute, g);
  std::vector<Index> train = g.mask(Split::Train);
  if (train.empty()) {
    train.resize(static_cast<std::size_t>(g.size()));
    for (Index v = 0; v < g.size(); ++v) train[static_cast<std::size_t>(v)] = v;
  }
  ctx.envelope = EmbeddingEnvelope::of_rows(ctx.embeddings, train);
  return ctx;
}

std::vector<Index> candidate_set(const SocialGraph& g, Index target) {
  std::vector<Index> c = g.first_order_neighbors(target);
  c.insert(std::lower_bound(c.begin(), c.end(), target), target);
  return c;
}

RowVector neighbor_context(const Matrix& embeddings, const SocialGraph& g, Index target) {
  const std::vector<Index> nb = g.first_order_neighbors(target);
  if (nb.empty()) return embeddings.row(target);
  RowVector acc = RowVector::Zero(embeddings.cols());
  for (Index j : nb) acc += embeddings.row(j);
  return acc / static_cast<double>(nb.size());
}

namespace {

Index local_index(const std::vector<Index>& ball, Index global) {
  const auto it = std::lower_bound(ball.begin(), ball.end(), global);
  if (it == ball.end() || *it != global) return -1;
  return it - ball.begin();
}

std::shared_ptr<const SparseMatrix> local_operator(const SocialGraph& g, const std::vector<Index>& ball,
                                                   Neighborhood which, bool normalize,
                                                   std::vector<Index>* degrees) {
  const auto n = static_cast<Index>(ball.size());
  std::vector<Eigen::Triplet<double>> triplets;
  if (degrees) degrees->assign(static_cast<std::size_t>(n + 1), 0);
  for (Index i = 0; i < n; ++i) {
    const auto nb = g.neighbors(ball[static_cast<std::size_t>(i)], which);
    std::vector<Index> inside;
    for (Index j : nb) {
      const Index lj = local_index(ball, j);
      if (lj >= 0) inside.push_back(lj);
    }
    const double w = normalize && !nb.empty() ? 1.0 / static_cast<double>(nb.size()) : 1.0;
    for (Index lj : inside) triplets.emplace_back(i, lj, w);
    if (degrees) (*degrees)[static_cast<std::size_t>(i)] = static_cast<Index>(nb.size());
  }
  auto m = std::make_shared<SparseMatrix>(n + 1, n + 1);
  m->setFromTriplets(triplets.begin(), triplets.end());
  return m;
}

}  // namespace

TargetFrame make_frame(const AttackContext& ctx, Index target) {
  const SocialGraph& g = *ctx.graph;
  if (target < 0 || target >= g.size()) throw std::out_of_range("unknown target " + std::to_string(target));
  TargetFrame f;
  f.target = target;
  f.tied = relation_blind(ctx.substitute->kind);
  const Index seeds[] = {target};
  f.ball = k_hop_ball(g, seeds, static_cast<int>(ctx.substitute->layer_count()));
  f.local_target = local_index(f.ball, target);
  const auto n = static_cast<Index>(f.ball.size());
  f.x0.resize(n, ctx.embeddings.cols());
  for (Index i = 0; i < n; ++i) f.x0.row(i) = ctx.embeddings.row(f.ball[static_cast<std::size_t>(i)]);
  f.x_bt = ctx.embeddings.row(target);
  f.x_n = neighbor_context(ctx.embeddings, g, target);
  f.candidates = candidate_set(g, target);
  f.candidate_x.resize(static_cast<Index>(f.candidates.size()), ctx.embeddings.cols());
  for (std::size_t c = 0; c < f.candidates.size(); ++c) {
    f.local_candidates.push_back(local_index(f.ball, f.candidates[c]));
    f.candidate_x.row(static_cast<Index>(c)) = ctx.embeddings.row(f.candidates[c]);
  }

  const Neighborhood link = f.tied ? Neighborhood::Any : Neighborhood::Follow;
  if (!f.tied) f.friend_mean = local_operator(g, f.ball, Neighborhood::Friend, true, nullptr);
  std::vector<Index> deg;
  f.link_sum = local_operator(g, f.ball, link, false, &deg);
  f.link_base.resize(n + 1, 1);
  for (Index i = 0; i <= n; ++i) {
    const Index d = deg[static_cast<std::size_t>(i)];
    f.link_base(i, 0) = d > 0 ? static_cast<double>(d) : 1.0;
  }
  f.link_has_deg.resize(static_cast<Index>(f.candidates.size()), 1);
  for (std::size_t c = 0; c < f.local_candidates.size(); ++c) {
    f.link_has_deg(static_cast<Index>(c), 0) = deg[static_cast<std::size_t>(f.local_candidates[c])] > 0 ? 1.0 : 0.0;
  }
  return f;
}

// --- taped pieces -------------------------------------------------------------

Var label_vector(Tape& tape, DetectorModel& substitute, AttackModel& attack, bool trainable) {
  if (substitute.layers.empty() || substitute.head.weight.value.size() == 0) {
    throw std::invalid_argument("label vector needs a trained substitute");
  }
  const RelationalLayer& last = substitute.layers.back();
  const Matrix& w_out = substitute.head.weight.value;
  const Index D = w_out.rows();
  Matrix stacked(D, 4);
  stacked << last.relation_weight(Relation::Friend).value * w_out,
      last.relation_weight(Relation::Follow).value * w_out;
  Var w = affine(tape.constant(std::move(stacked)), bind(tape, attack.fw.weight, trainable),
                 bind(tape, attack.fw.bias, trainable));
  const Var parts[] = {
      transpose(slice_cols(w, class_index(Label::Bot), 1)),
      transpose(slice_cols(w, class_index(Label::Human), 1)),
      flatten_cols(w),
  };
  return concat_cols(parts);
}

Var generate_embedding(Tape& tape, Var x_n, Var x_bt, Var u, AttackModel& attack,
                       const EmbeddingEnvelope& envelope, bool trainable) {
  const Index rows = x_n.rows();
  Var u_rows = rows == 1 ? u : matmul(tape.constant(Matrix::Ones(rows, 1)), u);
  const Var parts[] = {x_n, x_bt, u_rows};
  Var z = attack.fx(tape, concat_cols(parts), trainable);
  const RowVector half_span = (envelope.hi - envelope.lo) / 2.0;
  Var spread = tape.constant(half_span.replicate(rows, 1));
  return add_row(hadamard(add_constant(tanh(z), 1.0), spread), tape.constant(envelope.lo));
}

Var edge_scores(Tape& tape, Var x_inj, Var x_bt, Var x_n, Var u, Var candidates, AttackModel& attack,
                bool trainable) {
  const Var parts[] = {x_bt, x_n, x_inj, u};
  Var q = attack.fe(tape, concat_cols(parts), trainable);
  return scale(matmul(q, transpose(candidates)), 1.0 / std::sqrt(static_cast<double>(q.cols())));
}

namespace {

/// Mean over the injected relation with the new node wired in through `w`.
Var soft_link_mean(const TargetFrame& f, Var h, Var w) {
  Tape& tape = *h.tape();
  const Index n = f.x0.rows();
  const Index v_row[] = {n};
  Var wt = transpose(w);
  Var sums = spmm(f.link_sum, h);
  sums = sums + scatter_rows(matmul(wt, slice_rows(h, n, 1)), f.local_candidates, n + 1);
  sums = sums + scatter_rows(matmul(w, gather_rows(h, f.local_candidates)), v_row, n + 1);
  Var denom = tape.constant(f.link_base) +
              scatter_rows(hadamard(wt, tape.constant(f.link_has_deg)), f.local_candidates, n + 1);
  return row_scale(sums, reciprocal(denom));
}

}  // namespace

Var frame_target_logits(const BoundDetector& d, const TargetFrame& f, Var x_inj, Var w) {
  Tape& tape = *x_inj.tape();
  if (w.cols() != static_cast<Index>(f.candidates.size())) {
    throw std::invalid_argument("attachment weights do not match the candidate set");
  }
  const Var rows[] = {tape.constant(f.x0), x_inj};
  Var h = concat_rows(rows);
  for (std::size_t l = 0; l < d.layers.size(); ++l) {
    if (l > 0) h = leaky_relu(h, kLeakySlope);
    const BoundDetector::Layer& layer = d.layers[l];
    Var out = matmul(h, layer.self);
    Var link = soft_link_mean(f, h, w);
    if (f.tied) {
      out = out + matmul(link, layer.friend_rel);
    } else {
      out = out + matmul(spmm(f.friend_mean, h), layer.friend_rel);
      out = out + matmul(link, layer.follow_rel);
    }
    h = out;
  }
  return class_logits(d, slice_rows(h, f.local_target, 1));
}

Var attack_loss(Var target_logits) {
  Var p = softmax_rows(target_logits);
  return sum(slice_cols(p, class_index(Label::Bot), 1) - slice_cols(p, class_index(Label::Human), 1));
}

// --- untaped ------------------------------------------------------------------

LabelVector build_label_vector(DetectorModel& substitute, AttackModel& attack) {
  Tape tape;
  return LabelVector{label_vector(tape, substitute, attack, false).value()};
}

RowVector generate_embedding(const RowVector& x_bt, const RowVector& x_n, const LabelVector& u,
                             AttackModel& attack, const EmbeddingEnvelope& envelope) {
  Tape tape;
  return generate_embedding(tape, tape.constant(x_n), tape.constant(x_bt), tape.constant(u.u), attack,
                            envelope, false)
      .value();
}

RowVector edge_scores(const RowVector& x_inj, const RowVector& x_bt, const RowVector& x_n,
                      const LabelVector& u, const Matrix& candidate_embeddings, AttackModel& attack) {
  Tape tape;
  return edge_scores(tape, tape.constant(x_inj), tape.constant(x_bt), tape.constant(x_n),
                     tape.constant(u.u), tape.constant(candidate_embeddings), attack, false)
      .value();
}

Index hard_choice(const RowVector& scores) {
  if (scores.size() == 0) throw std::invalid_argument("no attachment candidates");
  Index best = 0;
  for (Index i = 1; i < scores.size(); ++i) {
    if (scores(i) > scores(best)) best = i;
  }
  return best;
}

// --- training -----------------------------------------------------------------

namespace {

struct FrameVars {
  Var x_inj;
  Var scores;
};

FrameVars frame_generation(Tape& tape, const TargetFrame& f, Var u, AttackModel& attack,
                           const EmbeddingEnvelope& envelope, bool trainable) {
  Var x_n = tape.constant(f.x_n);
  Var x_bt = tape.constant(f.x_bt);
  Var x_inj = generate_embedding(tape, x_n, x_bt, u, attack, envelope, trainable);
  Var scores = edge_scores(tape, x_inj, x_bt, x_n, u, tape.constant(f.candidate_x), attack, trainable);
  return {x_inj, scores};
}

Var batch_loss(Tape& tape, const AttackContext& ctx, AttackModel& attack, std::span<const TargetFrame> frames,
               bool trainable) {
  const BoundDetector d = BoundDetector::bind(tape, *ctx.substitute, false);
  Var u = label_vector(tape, *ctx.substitute, attack, trainable);
  std::vector<Var> logits;
  logits.reserve(frames.size());
  for (const TargetFrame& f : frames) {
    const FrameVars fv = frame_generation(tape, f, u, attack, ctx.envelope, trainable);
    const Var x = ctx.realize ? ctx.realize(tape, fv.x_inj) : fv.x_inj;
    logits.push_back(frame_target_logits(d, f, x, softmax_rows(fv.scores)));
  }
  return attack_loss(concat_rows(logits));
}

}  // namespace

double soft_attack_loss(const AttackContext& ctx, AttackModel& attack, std::span<const TargetFrame> frames) {
  double total = 0.0;
  for (const TargetFrame& f : frames) {
    Tape tape;
    total += batch_loss(tape, ctx, attack, std::span<const TargetFrame>(&f, 1), false).scalar();
  }
  return total;
}

double substitute_misclassification(const AttackContext& ctx, AttackModel& attack,
                                    std::span<const TargetFrame> frames) {
  if (frames.empty()) return 0.0;
  const LabelVector u = build_label_vector(*ctx.substitute, attack);
  std::size_t fooled = 0;
  for (const TargetFrame& f : frames) {
    Tape tape;
    const BoundDetector d = BoundDetector::bind(tape, *ctx.substitute, false);
    const FrameVars fv = frame_generation(tape, f, tape.constant(u.u), attack, ctx.envelope, false);
    Matrix one_hot = Matrix::Zero(1, fv.scores.cols());
    one_hot(0, hard_choice(fv.scores.value())) = 1.0;
    const Var x = ctx.realize ? ctx.realize(tape, fv.x_inj) : fv.x_inj;
    const Matrix logits = frame_target_logits(d, f, x, tape.constant(one_hot)).value();
    if (logits(0, 1) <= logits(0, 0)) ++fooled;
  }
  return static_cast<double>(fooled) / static_cast<double>(frames.size());
}

AttackTrainResult train_attack(const AttackContext& ctx, std::span<const Index> train_targets,
                               std::span<const Index> val_targets, const AttackTrainOptions& options,
                               std::uint64_t seed, const AttackValidation& validate) {
  if (train_targets.empty()) throw std::invalid_argument("train_attack: empty target set");
  if (options.batch_size < 1) throw std::invalid_argument("train_attack: batch size must be positive");
  std::vector<TargetFrame> train;
  for (Index t : train_targets) train.push_back(make_frame(ctx, t));
  std::vector<TargetFrame> val;
  for (Index t : val_targets) val.push_back(make_frame(ctx, t));
  const std::vector<TargetFrame>& val_frames = val.empty() ? train : val;
  const auto val_rate = [&](AttackModel& m) {
    return validate ? validate(m) : substitute_misclassification(ctx, m, val_frames);
  };

  AttackTrainResult result{create_attack_model(ctx.substitute->dim, seed), {}};
  AttackModel& model = result.model;
  AttackTrainReport& rep = result.report;
  rep.initial_train_loss = soft_attack_loss(ctx, model, train);
  rep.initial_val_rate = val_rate(model);
  rep.best_val_rate = rep.initial_val_rate;
  AttackModel best = model;

  Rng rng(derive_seed(seed, "attack-batches"));
  GradientDescent opt(options.lr, options.momentum);
  std::vector<Parameter*> params = model.parameters();
  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  const int patience = std::max(1, options.patience);
  int stale = 0;

  for (int epoch = 1; epoch <= options.max_epochs; ++epoch) {
    rng.shuffle(order.begin(), order.end());
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(options.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(options.batch_size));
      std::vector<TargetFrame> batch;
      for (std::size_t i = start; i < end; ++i) batch.push_back(train[order[i]]);
      Tape tape;
      Var loss = batch_loss(tape, ctx, model, batch, true);
      if (!std::isfinite(loss.scalar())) {
        throw std::runtime_error("attack training diverged at epoch " + std::to_string(epoch));
      }
      epoch_loss += loss.scalar();
      tape.backward(loss);
      opt.step(params);
    }
    rep.epoch_loss.push_back(epoch_loss);
    const double rate = val_rate(model);
    rep.val_rate.push_back(rate);
    rep.epochs_run = epoch;
    if (rate > rep.best_val_rate) {
      rep.best_val_rate = rate;
      rep.best_epoch = epoch;
      best = model;
      stale = 0;
    } else if (++stale >= patience) {
      break;
    }
  }
  model = std::move(best);
  rep.final_train_loss = soft_attack_loss(ctx, model, train);
  return result;
}

// --- injection ----------------------------------------------------------------

InjectionOutcome inject(const AttackContext& ctx, Index target, AttackModel& attack, InjectionMode mode,
                        std::uint64_t seed) {
  const SocialGraph& g = *ctx.graph;
  if (target < 0 || target >= g.size()) throw std::out_of_range("unknown target " + std::to_string(target));
  InjectionOutcome out;
  out.target = target;
  out.candidates = candidate_set(g, target);
  const RowVector x_bt = ctx.embeddings.row(target);
  const RowVector x_n = neighbor_context(ctx.embeddings, g, target);
  const LabelVector u = build_label_vector(*ctx.substitute, attack);
  out.x_inj = mode == InjectionMode::AssignEmbedding ? x_bt
                                                      : generate_embedding(x_bt, x_n, u, attack, ctx.envelope);
  Matrix cand_x(static_cast<Index>(out.candidates.size()), ctx.embeddings.cols());
  for (std::size_t c = 0; c < out.candidates.size(); ++c) {
    cand_x.row(static_cast<Index>(c)) = ctx.embeddings.row(out.candidates[c]);
  }
  out.scores = edge_scores(out.x_inj, x_bt, x_n, u, cand_x, attack);
  if (mode == InjectionMode::RandomEdge) {
    Rng rng(derive_seed(seed, "random-edge:" + std::to_string(target)));
    out.attach_node = out.candidates[static_cast<std::size_t>(rng.below(out.candidates.size()))];
  } else {
    out.attach_node = out.candidates[static_cast<std::size_t>(hard_choice(out.scores))];
  }
  return out;
}

Label substitute_target_label(const AttackContext& ctx, const InjectionOutcome& outcome) {
  const TargetFrame f = make_frame(ctx, outcome.target);
  const auto it = std::find(f.candidates.begin(), f.candidates.end(), outcome.attach_node);
  if (it == f.candidates.end()) throw std::invalid_argument("attachment node is not a candidate of the target");
  Tape tape;
  const BoundDetector d = BoundDetector::bind(tape, *ctx.substitute, false);
  Matrix one_hot = Matrix::Zero(1, static_cast<Index>(f.candidates.size()));
  one_hot(0, static_cast<Index>(it - f.candidates.begin())) = 1.0;
  const Matrix logits = frame_target_logits(d, f, tape.constant(outcome.x_inj), tape.constant(one_hot)).value();
  return logits(0, 1) > logits(0, 0) ? Label::Bot : Label::Human;
}

}  // namespace botinject
