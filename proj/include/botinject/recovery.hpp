#pragma once

// Turns a generated embedding back into raw user attributes that respect a
// per-dataset constraint profile.

#include "botinject/detector.hpp"
#include "botinject/injector.hpp"

#include <array>
#include <functional>
#include <string>
#include <vector>

namespace botinject {

struct ConstraintProfile {
  std::string name;
  double followers = 0.0;  ///< fixed value
  double active_days_cap = 0.0;
  double screen_name_length_cap = 0.0;
  double followings_cap = 0.0;
  double status_cap = 0.0;

  /// cresci2015, twibot22 or twibot22-alt.
  static ConstraintProfile named(const std::string& name);

  double cap(NumericalFeature f) const;
  /// Fixes followers and clamps the rest into [0, cap].
  std::array<double, kNumNumerical> clamp(const std::array<double, kNumNumerical>& raw) const;
  /// Empty when `values` are integers that satisfy the profile.
  std::string violation(const std::array<double, kNumNumerical>& values) const;
};

std::vector<std::string> profile_names();

struct InverterTrainOptions {
  int epochs = 200;
  int batch_size = 32;
  double lr_start = 1e-2;
  double lr_end = 1e-5;
  double alpha = 0.01;
  double momentum = 0.0;
};

struct InverterTrainReport {
  std::vector<double> epoch_loss;  ///< mean per-node loss at each epoch
};

/// Width of the hidden layers of both inverters.
inline constexpr Index kInverterHidden = 64;

/// MLP from numerical embedding slices (n x q) to normalized numericals
/// (n x 5). Per node: L1 on the numericals plus alpha times L1 between the
/// re-encoding through the frozen `numeric_encoder` and the input slice.
Mlp train_numeric_inverter(const Matrix& slices, const Matrix& normalized, const Linear& numeric_encoder,
                           const InverterTrainOptions& options, std::uint64_t seed,
                           InverterTrainReport* report = nullptr);
/// MLP from categorical slices (n x q) to the 6-wide one-hot, L1 loss only.
Mlp train_categorical_inverter(const Matrix& slices, const Matrix& one_hots, const InverterTrainOptions& options,
                               std::uint64_t seed, InverterTrainReport* report = nullptr);

/// Taped per-node-mean numeric inverter loss, exposed for gradient checks.
Var numeric_inverter_loss(Tape& tape, Mlp& inverter, const Matrix& slices, const Matrix& normalized,
                          const Linear& numeric_encoder, double alpha);
Var categorical_inverter_loss(Tape& tape, Mlp& inverter, const Matrix& slices, const Matrix& one_hots);

struct Inverters {
  Mlp numeric;
  Mlp categorical;

  Checkpoint to_checkpoint() const;
  static Inverters from_checkpoint(const Checkpoint& ckpt);
};

/// Trains both inverters on the training mask against the frozen substitute encoder.
Inverters train_inverters(DetectorModel& substitute, const SocialGraph& g, const InverterTrainOptions& options,
                          std::uint64_t seed);

/// Inverse z-score, rounding and profile clamping of one numerical slice.
std::array<double, kNumNumerical> recover_numeric(const RowVector& slice, const Mlp& inverter,
                                                  const NormStats& stats, const ConstraintProfile& profile);
/// Each output pair becomes a one-hot by argmax; ties decode to false.
std::array<bool, kNumCategorical> decode_one_hot(const RowVector& six);
std::array<bool, kNumCategorical> recover_categorical(const RowVector& slice, const Mlp& inverter);

/// Raw attributes for an injected embedding: zero text of length `text_dim`,
/// recovered numericals and categoricals.
UserAttributes recover_attributes(const RowVector& x_inj, Index text_dim, const Inverters& inverters,
                                  const EncoderParams& encoder, const ConstraintProfile& profile);

/// Taped stand-in for recovering attributes and re-encoding them: zero text,
/// numericals inverted and clamped to the profile without rounding, and
/// categoricals decoded as constants. Suitable for AttackContext::realize.
std::function<Var(Tape&, Var)> recovery_projection(const Inverters& inverters, const EncoderParams& encoder,
                                                   const ConstraintProfile& profile);

struct MaterializedNode {
  UserAttributes attributes;
  Index node = 0;
  Edge edge;
  SocialGraph perturbed;
  RowVector reencoded;       ///< substitute encoding of the recovered attributes
  double embedding_gap = 0;  ///< ||reencoded - x_inj||
};

/// Recovers attributes for the outcome's embedding, zeroes text, and appends
/// the node (labelled bot) with a Follow edge to the attachment node.
MaterializedNode materialize(const InjectionOutcome& outcome, const SocialGraph& g, const Inverters& inverters,
                             const EncoderParams& encoder, const ConstraintProfile& profile);

/// Fraction of frames the substitute labels human once each full-mode
/// injection is recovered to attributes and re-encoded.
double recovered_misclassification(const AttackContext& ctx, AttackModel& attack,
                                   std::span<const TargetFrame> frames, const Inverters& inverters,
                                   const ConstraintProfile& profile);

}  // namespace botinject
