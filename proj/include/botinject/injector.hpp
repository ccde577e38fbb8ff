#pragma once

// Single-node injection attack: an embedding generator, an attachment-edge
// generator and the label vector that conditions both on the substitute's
// class weights.

#include "botinject/detector.hpp"

#include <functional>
#include <string>
#include <vector>

namespace botinject {

enum class InjectionMode { Full, AssignEmbedding, RandomEdge };

std::string to_string(InjectionMode mode);
InjectionMode parse_injection_mode(const std::string& name);

/// Per-dimension range of observed node embeddings.
struct EmbeddingEnvelope {
  RowVector lo;
  RowVector hi;

  static EmbeddingEnvelope of_rows(const Matrix& embeddings, std::span<const Index> rows);
  bool contains(const RowVector& x) const;
};

struct AttackModel {
  Index dim = 0;
  Mlp fx;     ///< [x_n; x_bt; u] (6D) -> D -> D
  Mlp fe;     ///< [x_bt; x_n; x_inj; u] (7D) -> D -> D, a query scored against candidates
  Linear fw;  ///< row-wise 4 -> 2 aggregation of the stacked relation columns

  std::vector<Parameter*> parameters();
  Checkpoint to_checkpoint() const;
  static AttackModel from_checkpoint(const Checkpoint& ckpt);
};

/// Seeded init; f_W starts as the average of the two relations.
AttackModel create_attack_model(Index dim, std::uint64_t seed);

/// Frozen quantities the attack reads from the substitute and the clean graph.
struct AttackContext {
  DetectorModel* substitute = nullptr;
  const SocialGraph* graph = nullptr;
  Matrix embeddings;  ///< post-encoder embeddings of every node
  EmbeddingEnvelope envelope;
  /// Maps generated embeddings (rows) to what their recovered attributes
  /// encode to during attack training; identity when empty.
  std::function<Var(Tape&, Var)> realize;

  /// Throws std::invalid_argument when the substitute has no fitted statistics.
  static AttackContext build(DetectorModel& substitute, const SocialGraph& g);
};

/// Attachment candidates of a target: its first-order neighbors and itself,
/// ascending by id.
std::vector<Index> candidate_set(const SocialGraph& g, Index target);

/// Mean embedding over first-order neighbors; the target's own embedding when
/// it has none.
RowVector neighbor_context(const Matrix& embeddings, const SocialGraph& g, Index target);

/// Receptive field of one target under the substitute, with room for the
/// injected node as the last local row.
struct TargetFrame {
  Index target = 0;
  std::vector<Index> ball;  ///< global ids, ascending
  Index local_target = 0;
  Matrix x0;  ///< ball embeddings
  RowVector x_bt;
  RowVector x_n;
  std::vector<Index> candidates;        ///< global ids
  std::vector<Index> local_candidates;  ///< rows in the frame
  Matrix candidate_x;                   ///< candidate embeddings, m x D
  std::shared_ptr<const SparseMatrix> friend_mean;  ///< (n+1)^2 mean operator
  std::shared_ptr<const SparseMatrix> link_sum;     ///< unnormalized adjacency of the injected relation
  Matrix link_base;      ///< (n+1) x 1 denominators before the injected edge
  Matrix link_has_deg;   ///< m x 1, 1 where a candidate already has neighbors
  bool tied = false;

  Index rows() const { return x0.rows() + 1; }
};

TargetFrame make_frame(const AttackContext& ctx, Index target);

// --- taped pieces -------------------------------------------------------------

/// u = [W[:,bot]; W[:,human]; vec(W)] as a 1 x 4D row.
Var label_vector(Tape& tape, DetectorModel& substitute, AttackModel& attack, bool trainable);
/// x_inj = G^x(F^x([x_n; x_bt; u])). Rows of x_n and x_bt are targets.
Var generate_embedding(Tape& tape, Var x_n, Var x_bt, Var u, AttackModel& attack,
                       const EmbeddingEnvelope& envelope, bool trainable);
/// One score per candidate (1 x m): F^e query dotted with candidate embeddings.
Var edge_scores(Tape& tape, Var x_inj, Var x_bt, Var x_n, Var u, Var candidates,
                AttackModel& attack, bool trainable);
/// Substitute logits (1 x 2) of the frame's target with the injected node
/// attached through soft weights `w` (1 x m). One-hot `w` is exact.
Var frame_target_logits(const BoundDetector& substitute, const TargetFrame& frame, Var x_inj, Var w);
/// P(bot) - P(human) summed over rows of target logits.
Var attack_loss(Var target_logits);

// --- untaped ------------------------------------------------------------------

struct LabelVector {
  RowVector u;
};
LabelVector build_label_vector(DetectorModel& substitute, AttackModel& attack);

RowVector generate_embedding(const RowVector& x_bt, const RowVector& x_n, const LabelVector& u,
                             AttackModel& attack, const EmbeddingEnvelope& envelope);
RowVector edge_scores(const RowVector& x_inj, const RowVector& x_bt, const RowVector& x_n,
                      const LabelVector& u, const Matrix& candidate_embeddings, AttackModel& attack);
/// Index of the maximum score; ties go to the earliest (lowest id) candidate.
Index hard_choice(const RowVector& scores);

// --- training -----------------------------------------------------------------

struct AttackTrainOptions {
  int max_epochs = 500;
  int patience = 5;
  int batch_size = 32;
  double lr = 1e-5;
  double momentum = 0.0;
};

struct AttackTrainReport {
  double initial_train_loss = 0.0;
  double final_train_loss = 0.0;  ///< at the returned parameters
  double initial_val_rate = 0.0;
  double best_val_rate = 0.0;
  int best_epoch = 0;  ///< 0 when the initial parameters were never beaten
  int epochs_run = 0;
  std::vector<double> epoch_loss;
  std::vector<double> val_rate;
};

struct AttackTrainResult {
  AttackModel model;
  AttackTrainReport report;
};

/// Soft-attachment attack loss summed over `targets` (no parameter update).
double soft_attack_loss(const AttackContext& ctx, AttackModel& attack, std::span<const TargetFrame> frames);
/// Fraction of targets the substitute labels human after hard injection.
double substitute_misclassification(const AttackContext& ctx, AttackModel& attack,
                                    std::span<const TargetFrame> frames);

/// Validation misclassification rate of an attack model; higher is better.
using AttackValidation = std::function<double(AttackModel&)>;

/// Gradient descent on the summed attack loss with the substitute frozen.
/// Stops once the validation misclassification rate has not increased for
/// max(1, patience) epochs and returns the best parameters seen on it. The
/// rate is `validate` when given, else substitute_misclassification on the
/// validation targets.
AttackTrainResult train_attack(const AttackContext& ctx, std::span<const Index> train_targets,
                               std::span<const Index> val_targets, const AttackTrainOptions& options,
                               std::uint64_t seed, const AttackValidation& validate = {});

// --- injection ----------------------------------------------------------------

struct InjectionOutcome {
  Index target = 0;
  RowVector x_inj;
  Index attach_node = 0;
  Relation relation = Relation::Follow;
  std::vector<Index> candidates;
  RowVector scores;
};

InjectionOutcome inject(const AttackContext& ctx, Index target, AttackModel& attack, InjectionMode mode,
                        std::uint64_t seed);

/// Substitute prediction for the target when the raw embedding x_inj is wired
/// in by a hard edge to the outcome's attachment node (no attribute recovery).
Label substitute_target_label(const AttackContext& ctx, const InjectionOutcome& outcome);


}  // namespace botinject
