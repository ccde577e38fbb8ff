#pragma once

// Per-attribute-type user encoder. Each type is projected to D/4 and the four
// slices are concatenated in the order description, tweets, numerical,
// categorical.

#include "botinject/graph.hpp"
#include "botinject/layers.hpp"

#include <optional>
#include <span>

namespace botinject {

/// Per-feature z-score statistics (population standard deviation).
struct NormStats {
  RowVector mean;
  RowVector std;

  Matrix apply(const Matrix& values) const;
  Matrix invert(const Matrix& normalized) const;
};

/// Standard deviations below this are replaced by 1.
inline constexpr double kMinStd = 1e-9;

struct ZScoreResult {
  Matrix normalized;
  NormStats stats;
};

/// Normalizes each column. Without `stats`, they are computed from the rows
/// listed in `fit_rows` (all rows when empty). Throws on non-finite input.
ZScoreResult zscore(const Matrix& values, const std::optional<NormStats>& stats = std::nullopt,
                    std::span<const Index> fit_rows = {});

/// Raw numerical features of every node, k x 5.
Matrix numerical_matrix(const SocialGraph& g);
/// Fits z-score statistics on the training mask of `g`.
NormStats fit_norm_stats(const SocialGraph& g);

/// Width-2 one-hot per boolean, false -> (1, 0), true -> (0, 1).
RowVector one_hot(const std::array<bool, kNumCategorical>& c);

/// Encoder-ready inputs for a set of nodes, one row per node.
struct EncoderInputs {
  Matrix desc;         ///< n x ds
  Matrix tweet;        ///< n x ds
  Matrix numerical;    ///< n x 5, already z-scored
  Matrix categorical;  ///< n x 6 one-hot

  static EncoderInputs from_graph(const SocialGraph& g, const NormStats& stats);
  static EncoderInputs from_attributes(std::span<const UserAttributes> attrs, const NormStats& stats);

  Index rows() const { return desc.rows(); }
  EncoderInputs gather(std::span<const Index> rows) const;
  /// All four inputs side by side: n x (2 ds + 11).
  Matrix joint() const;
};

struct EncoderParams {
  EncoderParams() = default;
  /// Seeded uniform initialization; `dim` is the full embedding width D.
  EncoderParams(Index text_dim, Index dim, Rng& rng);

  Linear desc;         ///< ds -> D/4
  Linear tweet;        ///< ds -> D/4
  Linear numerical;    ///< 5 -> D/4
  Linear categorical;  ///< 6 -> D/4
  std::optional<NormStats> stats;

  Index dim() const { return 4 * desc.out_features(); }
  Index slice_width() const { return desc.out_features(); }

  void collect(std::vector<Parameter*>& out);
  void save(Checkpoint& ckpt) const;
  static EncoderParams load(const Checkpoint& ckpt);

  const NormStats& require_stats() const;
};

// Taped encoders; rows are nodes.
Var encode_text(Tape& tape, Var text, Linear& projection, bool trainable = true);
Var encode_numerical(Tape& tape, Var normalized, EncoderParams& p, bool trainable = true);
Var encode_categorical(Tape& tape, Var one_hot, EncoderParams& p, bool trainable = true);
Var user_embedding(Tape& tape, const EncoderInputs& in, EncoderParams& p, bool trainable = true);

/// Untaped convenience for a single user; the numericals are raw values.
RowVector user_embedding(const UserAttributes& a, const EncoderParams& p);
/// phi(z W_N + b_N) for already-normalized numericals.
Matrix numerical_embedding(const Matrix& normalized, const EncoderParams& p);

/// Column offset of each slice inside the user embedding.
enum class Slice : int { Description = 0, Tweet = 1, Numerical = 2, Categorical = 3 };
inline Index slice_offset(Slice s, Index dim) { return static_cast<Index>(s) * (dim / 4); }

}  // namespace botinject
