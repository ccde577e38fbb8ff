#include "botinject/encoder.hpp"

#include <cmath>
#include <stdexcept>

namespace botinject {

Matrix NormStats::apply(const Matrix& values) const {
  if (values.cols() != mean.cols()) throw std::invalid_argument("zscore: feature count mismatch");
  Matrix out = values.rowwise() - mean;
  return out.array().rowwise() / std.array();
}

Matrix NormStats::invert(const Matrix& normalized) const {
  if (normalized.cols() != mean.cols()) throw std::invalid_argument("zscore: feature count mismatch");
  Matrix out = normalized.array().rowwise() * std.array();
  return out.rowwise() + mean;
}

ZScoreResult zscore(const Matrix& values, const std::optional<NormStats>& stats,
                    std::span<const Index> fit_rows) {
  if (!values.allFinite()) throw std::invalid_argument("zscore: non-finite input");
  ZScoreResult r;
  if (stats) {
    r.stats = *stats;
  } else {
    Matrix fit;
    if (fit_rows.empty()) {
      fit = values;
    } else {
      fit.resize(static_cast<Index>(fit_rows.size()), values.cols());
      for (std::size_t i = 0; i < fit_rows.size(); ++i) {
        fit.row(static_cast<Index>(i)) = values.row(fit_rows[i]);
      }
    }
    if (fit.rows() == 0) throw std::invalid_argument("zscore: nothing to fit statistics on");
    r.stats.mean = fit.colwise().mean();
    const Matrix centered = fit.rowwise() - r.stats.mean;
    r.stats.std = (centered.array().square().colwise().sum() / static_cast<double>(fit.rows()))
                      .sqrt()
                      .matrix();
    for (Index j = 0; j < r.stats.std.cols(); ++j) {
      if (r.stats.std(j) < kMinStd) r.stats.std(j) = 1.0;
    }
  }
  r.normalized = r.stats.apply(values);
  return r;
}

Matrix numerical_matrix(const SocialGraph& g) {
  Matrix m(g.size(), kNumNumerical);
  for (Index v = 0; v < g.size(); ++v) {
    const auto& n = g.attributes(v).numerical;
    for (int j = 0; j < kNumNumerical; ++j) m(v, j) = n[static_cast<std::size_t>(j)];
  }
  return m;
}

NormStats fit_norm_stats(const SocialGraph& g) {
  const auto train = g.mask(Split::Train);
  if (train.empty()) throw std::invalid_argument("cannot fit z-score statistics: empty training mask");
  return zscore(numerical_matrix(g), std::nullopt, train).stats;
}

RowVector one_hot(const std::array<bool, kNumCategorical>& c) {
  RowVector r = RowVector::Zero(2 * kNumCategorical);
  for (int i = 0; i < kNumCategorical; ++i) r(2 * i + (c[static_cast<std::size_t>(i)] ? 1 : 0)) = 1.0;
  return r;
}

EncoderInputs EncoderInputs::from_attributes(std::span<const UserAttributes> attrs,
                                             const NormStats& stats) {
  const auto n = static_cast<Index>(attrs.size());
  if (n == 0) throw std::invalid_argument("EncoderInputs: no users");
  const Index ds = attrs[0].desc.size();
  EncoderInputs in;
  in.desc.resize(n, ds);
  in.tweet.resize(n, ds);
  in.categorical.resize(n, 2 * kNumCategorical);
  Matrix raw(n, kNumNumerical);
  for (Index i = 0; i < n; ++i) {
    const UserAttributes& a = attrs[static_cast<std::size_t>(i)];
    if (a.desc.size() != ds || a.tweet.size() != ds) {
      throw std::invalid_argument("EncoderInputs: text vector length mismatch");
    }
    in.desc.row(i) = a.desc.transpose();
    in.tweet.row(i) = a.tweet.transpose();
    for (int j = 0; j < kNumNumerical; ++j) raw(i, j) = a.numerical[static_cast<std::size_t>(j)];
    in.categorical.row(i) = one_hot(a.categorical);
  }
  in.numerical = zscore(raw, stats).normalized;
  return in;
}

EncoderInputs EncoderInputs::from_graph(const SocialGraph& g, const NormStats& stats) {
  return from_attributes(g.all_attributes(), stats);
}

EncoderInputs EncoderInputs::gather(std::span<const Index> rows) const {
  EncoderInputs out;
  const auto n = static_cast<Index>(rows.size());
  out.desc.resize(n, desc.cols());
  out.tweet.resize(n, tweet.cols());
  out.numerical.resize(n, numerical.cols());
  out.categorical.resize(n, categorical.cols());
  for (Index i = 0; i < n; ++i) {
    const Index r = rows[static_cast<std::size_t>(i)];
    out.desc.row(i) = desc.row(r);
    out.tweet.row(i) = tweet.row(r);
    out.numerical.row(i) = numerical.row(r);
    out.categorical.row(i) = categorical.row(r);
  }
  return out;
}

Matrix EncoderInputs::joint() const {
  Matrix m(rows(), desc.cols() + tweet.cols() + numerical.cols() + categorical.cols());
  m << desc, tweet, numerical, categorical;
  return m;
}

EncoderParams::EncoderParams(Index text_dim, Index dim, Rng& rng) {
  if (dim <= 0 || dim % 4 != 0) throw std::invalid_argument("embedding dimension must be divisible by 4");
  const Index q = dim / 4;
  desc = Linear("enc.desc", text_dim, q, rng);
  tweet = Linear("enc.tweet", text_dim, q, rng);
  numerical = Linear("enc.num", kNumNumerical, q, rng);
  categorical = Linear("enc.cat", 2 * kNumCategorical, q, rng);
}

void EncoderParams::collect(std::vector<Parameter*>& out) {
  desc.collect(out);
  tweet.collect(out);
  numerical.collect(out);
  categorical.collect(out);
}

void EncoderParams::save(Checkpoint& ckpt) const {
  desc.save(ckpt);
  tweet.save(ckpt);
  numerical.save(ckpt);
  categorical.save(ckpt);
  if (stats) {
    ckpt.add("norm.mean", stats->mean);
    ckpt.add("norm.std", stats->std);
  }
}

EncoderParams EncoderParams::load(const Checkpoint& ckpt) {
  EncoderParams p;
  p.desc = Linear::load(ckpt, "enc.desc");
  p.tweet = Linear::load(ckpt, "enc.tweet");
  p.numerical = Linear::load(ckpt, "enc.num");
  p.categorical = Linear::load(ckpt, "enc.cat");
  if (ckpt.find("norm.mean") != nullptr) {
    p.stats = NormStats{ckpt.require("norm.mean"), ckpt.require("norm.std")};
  }
  return p;
}

const NormStats& EncoderParams::require_stats() const {
  if (!stats) throw std::logic_error("encoder normalization statistics are not fitted");
  return *stats;
}

Var encode_text(Tape& tape, Var text, Linear& projection, bool trainable) {
  if (text.cols() != projection.in_features()) {
    throw std::invalid_argument("encode_text: vector length does not match the projection");
  }
  return leaky_relu(projection(tape, text, trainable), kLeakySlope);
}

Var encode_numerical(Tape& tape, Var normalized, EncoderParams& p, bool trainable) {
  p.require_stats();
  return leaky_relu(p.numerical(tape, normalized, trainable), kLeakySlope);
}

Var encode_categorical(Tape& tape, Var one_hot, EncoderParams& p, bool trainable) {
  return leaky_relu(p.categorical(tape, one_hot, trainable), kLeakySlope);
}

Var user_embedding(Tape& tape, const EncoderInputs& in, EncoderParams& p, bool trainable) {
  const Var parts[] = {
      encode_text(tape, tape.constant(in.desc), p.desc, trainable),
      encode_text(tape, tape.constant(in.tweet), p.tweet, trainable),
      encode_numerical(tape, tape.constant(in.numerical), p, trainable),
      encode_categorical(tape, tape.constant(in.categorical), p, trainable),
  };
  return concat_cols(parts);
}

RowVector user_embedding(const UserAttributes& a, const EncoderParams& p) {
  const UserAttributes one[] = {a};
  const EncoderInputs in = EncoderInputs::from_attributes(one, p.require_stats());
  const Index q = p.slice_width();
  RowVector out(4 * q);
  out.segment(0, q) = leaky_relu(p.desc.apply(in.desc)).row(0);
  out.segment(q, q) = leaky_relu(p.tweet.apply(in.tweet)).row(0);
  out.segment(2 * q, q) = leaky_relu(p.numerical.apply(in.numerical)).row(0);
  out.segment(3 * q, q) = leaky_relu(p.categorical.apply(in.categorical)).row(0);
  return out;
}

Matrix numerical_embedding(const Matrix& normalized, const EncoderParams& p) {
  return leaky_relu(p.numerical.apply(normalized));
}

}  // namespace botinject
