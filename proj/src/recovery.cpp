#include "botinject/recovery.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace botinject {

ConstraintProfile ConstraintProfile::named(const std::string& name) {
  if (name == "cresci2015") return {name, 0.0, 100.0, 15.0, 5000.0, 500.0};
  if (name == "twibot22") return {name, 0.0, 100.0, 15.0, 5000.0, 40000.0};
  if (name == "twibot22-alt") return {name, 600.0, 100.0, 15.0, 5000.0, 18000.0};
  throw std::invalid_argument("unknown constraint profile '" + name + "'");
}

std::vector<std::string> profile_names() { return {"cresci2015", "twibot22", "twibot22-alt"}; }

double ConstraintProfile::cap(NumericalFeature f) const {
  switch (f) {
    case kFollowers: return followers;
    case kActiveDays: return active_days_cap;
    case kScreenNameLength: return screen_name_length_cap;
    case kFollowings: return followings_cap;
    case kStatus: return status_cap;
  }
  return 0.0;
}

std::array<double, kNumNumerical> ConstraintProfile::clamp(const std::array<double, kNumNumerical>& raw) const {
  std::array<double, kNumNumerical> out{};
  for (int f = 0; f < kNumNumerical; ++f) {
    const auto i = static_cast<std::size_t>(f);
    if (f == kFollowers) {
      out[i] = followers;
    } else {
      const double v = std::isfinite(raw[i]) ? raw[i] : 0.0;
      out[i] = std::clamp(v, 0.0, cap(static_cast<NumericalFeature>(f)));
    }
  }
  return out;
}

std::string ConstraintProfile::violation(const std::array<double, kNumNumerical>& values) const {
  for (int f = 0; f < kNumNumerical; ++f) {
    const double v = values[static_cast<std::size_t>(f)];
    const std::string feature = numerical_feature_name(f);
    if (!std::isfinite(v) || v != std::round(v)) return feature + " is not an integer";
    if (f == kFollowers) {
      if (v != followers) return feature + " must equal " + format_double(followers);
    } else if (v < 0.0 || v > cap(static_cast<NumericalFeature>(f))) {
      return feature + " outside [0, " + format_double(cap(static_cast<NumericalFeature>(f))) + "]";
    }
  }
  return "";
}

// --- inverters ----------------------------------------------------------------

Var numeric_inverter_loss(Tape& tape, Mlp& inverter, const Matrix& slices, const Matrix& normalized,
                          const Linear& numeric_encoder, double alpha) {
  if (slices.rows() != normalized.rows()) throw std::invalid_argument("inverter: pair count mismatch");
  Var x = tape.constant(slices);
  Var out = inverter(tape, x, true);
  Var l1 = sum(abs(out - tape.constant(normalized)));
  if (alpha == 0.0) return scale(l1, 1.0 / static_cast<double>(slices.rows()));
  Var re = leaky_relu(affine(out, tape.constant(numeric_encoder.weight.value),
                             tape.constant(numeric_encoder.bias.value)),
                      kLeakySlope);
  Var l2 = sum(abs(re - x));
  return scale(l1 + scale(l2, alpha), 1.0 / static_cast<double>(slices.rows()));
}

Var categorical_inverter_loss(Tape& tape, Mlp& inverter, const Matrix& slices, const Matrix& one_hots) {
  if (slices.rows() != one_hots.rows()) throw std::invalid_argument("inverter: pair count mismatch");
  Var out = inverter(tape, tape.constant(slices), true);
  return scale(sum(abs(out - tape.constant(one_hots))), 1.0 / static_cast<double>(slices.rows()));
}

namespace {

Matrix gather(const Matrix& m, std::span<const std::size_t> rows) {
  Matrix out(static_cast<Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Index>(i)) = m.row(static_cast<Index>(rows[i]));
  return out;
}

template <typename LossFn>
Mlp train_inverter(const std::string& name, Index in, Index out, Index n, const InverterTrainOptions& options,
                   std::uint64_t seed, InverterTrainReport* report, LossFn loss_fn) {
  if (n == 0) throw std::invalid_argument("inverter training needs at least one pair");
  if (options.epochs < 1 || options.batch_size < 1) throw std::invalid_argument("inverter: bad schedule");
  Rng rng(derive_seed(seed, name));
  Mlp mlp(name, {in, kInverterHidden, kInverterHidden, out}, rng);
  std::vector<Parameter*> params;
  mlp.collect(params);
  std::vector<std::size_t> order(static_cast<std::size_t>(n));
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  const double ratio = options.lr_end / options.lr_start;
  GradientDescent opt(options.lr_start, options.momentum);
  for (int e = 0; e < options.epochs; ++e) {
    const double t = options.epochs == 1 ? 0.0 : static_cast<double>(e) / (options.epochs - 1);
    const double lr = options.lr_start * std::pow(ratio, t);
    rng.shuffle(order.begin(), order.end());
    double total = 0.0;
    for (std::size_t s = 0; s < order.size(); s += static_cast<std::size_t>(options.batch_size)) {
      const std::size_t end = std::min(order.size(), s + static_cast<std::size_t>(options.batch_size));
      const std::span<const std::size_t> rows(order.data() + s, end - s);
      Tape tape;
      Var loss = loss_fn(tape, mlp, rows);
      if (!std::isfinite(loss.scalar())) {
        throw std::runtime_error(name + " training diverged at epoch " + std::to_string(e));
      }
      total += loss.scalar() * static_cast<double>(rows.size());
      tape.backward(loss);
      opt.set_learning_rate(lr);
      opt.step(params);
    }
    if (report) report->epoch_loss.push_back(total / static_cast<double>(n));
  }
  return mlp;
}

}  // namespace

Mlp train_numeric_inverter(const Matrix& slices, const Matrix& normalized, const Linear& numeric_encoder,
                           const InverterTrainOptions& options, std::uint64_t seed, InverterTrainReport* report) {
  if (slices.rows() != normalized.rows()) throw std::invalid_argument("inverter: pair count mismatch");
  return train_inverter("inv.num", slices.cols(), kNumNumerical, slices.rows(), options, seed, report,
                        [&](Tape& tape, Mlp& mlp, std::span<const std::size_t> rows) {
                          return numeric_inverter_loss(tape, mlp, gather(slices, rows), gather(normalized, rows),
                                                       numeric_encoder, options.alpha);
                        });
}

Mlp train_categorical_inverter(const Matrix& slices, const Matrix& one_hots, const InverterTrainOptions& options,
                               std::uint64_t seed, InverterTrainReport* report) {
  if (slices.rows() != one_hots.rows()) throw std::invalid_argument("inverter: pair count mismatch");
  return train_inverter("inv.cat", slices.cols(), 2 * kNumCategorical, slices.rows(), options, seed, report,
                        [&](Tape& tape, Mlp& mlp, std::span<const std::size_t> rows) {
                          return categorical_inverter_loss(tape, mlp, gather(slices, rows), gather(one_hots, rows));
                        });
}

Checkpoint Inverters::to_checkpoint() const {
  Checkpoint c;
  c.set_meta("kind", "inverters");
  numeric.save(c);
  categorical.save(c);
  return c;
}

Inverters Inverters::from_checkpoint(const Checkpoint& c) {
  if (c.require_meta("kind") != "inverters") throw std::runtime_error("checkpoint does not hold inverters");
  return Inverters{Mlp::load(c, "inv.num"), Mlp::load(c, "inv.cat")};
}

Inverters train_inverters(DetectorModel& substitute, const SocialGraph& g, const InverterTrainOptions& options,
                          std::uint64_t seed) {
  if (substitute.kind == DetectorKind::VictimBotRgcn) {
    throw std::invalid_argument("inverters need a per-type encoder");
  }
  const std::vector<Index> train = g.mask(Split::Train);
  if (train.empty()) throw std::invalid_argument("inverter training needs a training mask");
  const EncoderParams& enc = substitute.encoder;
  const EncoderInputs in = EncoderInputs::from_graph(g, enc.require_stats()).gather(train);
  const Matrix emb = node_embeddings(substitute, g);
  const Index q = enc.slice_width();
  Matrix num(static_cast<Index>(train.size()), q);
  Matrix cat(static_cast<Index>(train.size()), q);
  for (std::size_t i = 0; i < train.size(); ++i) {
    num.row(static_cast<Index>(i)) = emb.row(train[i]).segment(slice_offset(Slice::Numerical, enc.dim()), q);
    cat.row(static_cast<Index>(i)) = emb.row(train[i]).segment(slice_offset(Slice::Categorical, enc.dim()), q);
  }
  Inverters inv;
  inv.numeric = train_numeric_inverter(num, in.numerical, enc.numerical, options, seed);
  inv.categorical = train_categorical_inverter(cat, in.categorical, options, seed);
  return inv;
}

// --- recovery -----------------------------------------------------------------

std::array<double, kNumNumerical> recover_numeric(const RowVector& slice, const Mlp& inverter,
                                                  const NormStats& stats, const ConstraintProfile& profile) {
  const Matrix raw = stats.invert(inverter.apply(slice));
  std::array<double, kNumNumerical> rounded{};
  for (int f = 0; f < kNumNumerical; ++f) rounded[static_cast<std::size_t>(f)] = std::round(raw(0, f));
  return profile.clamp(rounded);
}

std::array<bool, kNumCategorical> decode_one_hot(const RowVector& six) {
  if (six.size() != 2 * kNumCategorical) throw std::invalid_argument("categorical output must have 6 entries");
  std::array<bool, kNumCategorical> out{};
  for (int i = 0; i < kNumCategorical; ++i) out[static_cast<std::size_t>(i)] = six(2 * i + 1) > six(2 * i);
  return out;
}

std::array<bool, kNumCategorical> recover_categorical(const RowVector& slice, const Mlp& inverter) {
  return decode_one_hot(inverter.apply(slice).row(0));
}

UserAttributes recover_attributes(const RowVector& x_inj, Index text_dim, const Inverters& inverters,
                                  const EncoderParams& encoder, const ConstraintProfile& profile) {
  const Index D = encoder.dim();
  const Index q = encoder.slice_width();
  if (x_inj.size() != D) throw std::invalid_argument("injected embedding width does not match the encoder");
  if (inverters.numeric.layers.empty() || inverters.numeric.layers.front().in_features() != q ||
      inverters.categorical.layers.empty() || inverters.categorical.layers.front().in_features() != q) {
    throw std::invalid_argument("inverter input width does not match the embedding slice");
  }
  UserAttributes a;
  a.desc = Vector::Zero(text_dim);
  a.tweet = Vector::Zero(text_dim);
  a.numerical = recover_numeric(x_inj.segment(slice_offset(Slice::Numerical, D), q), inverters.numeric,
                                encoder.require_stats(), profile);
  a.categorical = recover_categorical(x_inj.segment(slice_offset(Slice::Categorical, D), q), inverters.categorical);
  return a;
}

namespace {

Var relu(Var x) { return scale(add(x, abs(x)), 0.5); }

}  // namespace

std::function<Var(Tape&, Var)> recovery_projection(const Inverters& inverters, const EncoderParams& encoder,
                                                   const ConstraintProfile& profile) {
  const Index D = encoder.dim();
  const Index q = encoder.slice_width();
  const NormStats& stats = encoder.require_stats();
  RowVector lo(kNumNumerical), hi(kNumNumerical);
  for (int f = 0; f < kNumNumerical; ++f) {
    hi(f) = profile.cap(static_cast<NumericalFeature>(f));
    lo(f) = f == kFollowers ? hi(f) : 0.0;
  }
  RowVector text(2 * q);
  text << leaky_relu(Matrix(encoder.desc.bias.value)), leaky_relu(Matrix(encoder.tweet.bias.value));
  return [num = inverters.numeric, cat = inverters.categorical, numeric_encoder = encoder.numerical,
          categorical_encoder = encoder.categorical, mean = stats.mean, std = stats.std, lo, hi, text, D,
          q](Tape& tape, Var x) mutable -> Var {
    if (x.cols() != D) throw std::invalid_argument("injected embedding width does not match the encoder");
    const Index n = x.rows();
    Var z = num(tape, slice_cols(x, slice_offset(Slice::Numerical, D), q), false);
    Var raw = add_row(hadamard(z, tape.constant(std.replicate(n, 1))), tape.constant(mean));
    Var y = add_row(relu(add_row(raw, tape.constant(-lo))), tape.constant(lo));
    y = sub(tape.constant(hi.replicate(n, 1)), relu(sub(tape.constant(hi.replicate(n, 1)), y)));
    Var normalized = hadamard(add_row(y, tape.constant(-mean)), tape.constant(std.cwiseInverse().replicate(n, 1)));
    const Matrix six = cat.apply(slice_cols(x, slice_offset(Slice::Categorical, D), q).value());
    Matrix one_hots(n, 2 * kNumCategorical);
    for (Index i = 0; i < n; ++i) one_hots.row(i) = one_hot(decode_one_hot(six.row(i)));
    const Var parts[] = {tape.constant(text.replicate(n, 1)),
                         leaky_relu(numeric_encoder(tape, normalized, false), kLeakySlope),
                         tape.constant(leaky_relu(categorical_encoder.apply(one_hots)))};
    return concat_cols(parts);
  };
}

MaterializedNode materialize(const InjectionOutcome& outcome, const SocialGraph& g, const Inverters& inverters,
                             const EncoderParams& encoder, const ConstraintProfile& profile) {
  UserAttributes a = recover_attributes(outcome.x_inj, g.text_dim(), inverters, encoder, profile);
  const Index node = g.size();
  const Edge edge{node, outcome.attach_node, Relation::Follow};
  RowVector re = user_embedding(a, encoder);
  const double gap = (re - outcome.x_inj).norm();
  return MaterializedNode{a, node, edge, g.with_injected(a, Label::Bot, edge), std::move(re), gap};
}

double recovered_misclassification(const AttackContext& ctx, AttackModel& attack,
                                   std::span<const TargetFrame> frames, const Inverters& inverters,
                                   const ConstraintProfile& profile) {
  if (frames.empty()) return 0.0;
  const EncoderParams& encoder = ctx.substitute->encoder;
  std::size_t fooled = 0;
  for (const TargetFrame& f : frames) {
    const InjectionOutcome o = inject(ctx, f.target, attack, InjectionMode::Full, 0);
    const RowVector re =
        user_embedding(recover_attributes(o.x_inj, ctx.graph->text_dim(), inverters, encoder, profile), encoder);
    Tape tape;
    const BoundDetector d = BoundDetector::bind(tape, *ctx.substitute, false);
    Matrix one_hot = Matrix::Zero(1, static_cast<Index>(f.candidates.size()));
    one_hot(0, hard_choice(o.scores)) = 1.0;
    const Matrix logits = frame_target_logits(d, f, tape.constant(re), tape.constant(one_hot)).value();
    if (label_from_probs(logits(0, 0), logits(0, 1)) == Label::Human) ++fooled;
  }
  return static_cast<double>(fooled) / static_cast<double>(frames.size());
}

}  // namespace botinject
