#pragma once

// Graph bot detectors: the relational substitute, its relation-blind variant,
// and the two victims used only for black-box evaluation.

#include "botinject/encoder.hpp"
#include "botinject/graph.hpp"
#include "botinject/layers.hpp"

#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace botinject {

enum class DetectorKind { SubstituteRgcn, SubstituteGcn, VictimGcn, VictimBotRgcn };

std::string to_string(DetectorKind kind);
DetectorKind parse_detector_kind(const std::string& name);
/// GCN kinds aggregate E_f united with E_o through one tied relation weight.
bool relation_blind(DetectorKind kind);

/// One message-passing layer. Rows are nodes, so a message is x_j * theta.
struct RelationalLayer {
  Parameter self;
  Parameter friend_rel;  ///< theta_f, or the tied theta_r of a relation-blind layer
  Parameter follow_rel;  ///< theta_o; empty when tied
  bool tied = false;

  const Parameter& relation_weight(Relation r) const;
};

struct DetectorModel {
  DetectorKind kind = DetectorKind::SubstituteRgcn;
  Index dim = 0;
  Index text_dim = 0;
  EncoderParams encoder;  ///< per-type encoder; victim-botrgcn only uses its stats
  Linear joint;           ///< victim-botrgcn: all raw inputs -> D
  std::vector<RelationalLayer> layers;
  Linear head;  ///< D -> 2 class logits, column 0 human, column 1 bot

  Index layer_count() const { return static_cast<Index>(layers.size()); }
  std::vector<Parameter*> parameters();
  Index parameter_count() const;

  Checkpoint to_checkpoint() const;
  static DetectorModel from_checkpoint(const Checkpoint& ckpt);
};

struct DetectorShape {
  Index layers = 1;
  Index dim = 128;
};

/// Seeded initialization; z-score statistics are fitted on g's training mask.
DetectorModel create_detector(DetectorKind kind, const SocialGraph& g, const DetectorShape& shape,
                              std::uint64_t seed);

/// Default layer count per kind: 1 for substitutes, 2 for victims.
Index default_layer_count(DetectorKind kind);

// --- taped building blocks ---------------------------------------------------

/// Mean aggregation over a neighborhood: (which, X) -> rows of averaged X.
using Aggregator = std::function<Var(Neighborhood, Var)>;
Aggregator graph_aggregator(const SocialGraph& g);

/// Detector weights bound to one tape.
struct BoundDetector {
  struct Layer {
    Var self;
    Var friend_rel;
    Var follow_rel;
  };
  DetectorModel* model = nullptr;
  std::vector<Layer> layers;
  Var head_weight;
  Var head_bias;
  bool trainable = false;

  static BoundDetector bind(Tape& tape, DetectorModel& model, bool trainable);
};

/// x0 for every input row.
Var encode_nodes(Tape& tape, DetectorModel& model, const EncoderInputs& in, bool trainable);
/// x Theta_self + sum over relations of mean_{j in E_r(i)} x_j Theta_r.
Var rgcn_layer(Var x, const BoundDetector::Layer& layer, bool tied, const Aggregator& agg);
/// All relational layers with leaky-ReLU between them, none after the last.
Var relational_forward(const BoundDetector& d, Var x0, const Aggregator& agg);
Var class_logits(const BoundDetector& d, Var h);

/// Untaped single layer.
Matrix rgcn_layer(const Matrix& x, const SocialGraph& g, const RelationalLayer& layer);

// --- inference ----------------------------------------------------------------

struct Prediction {
  Matrix probs;               ///< k x 2
  std::vector<Label> labels;  ///< argmax, ties to Human
};

Label label_from_probs(double p_human, double p_bot);

Prediction forward(DetectorModel& model, const SocialGraph& g);
/// Throws std::invalid_argument unless model.kind is VictimBotRgcn.
Prediction victim_botrgcn_forward(DetectorModel& model, const SocialGraph& g);
std::pair<Label, double> predict_node(DetectorModel& model, const SocialGraph& g, Index v);
/// Probabilities for `nodes` computed on their receptive field only.
Matrix local_probabilities(DetectorModel& model, const SocialGraph& g, std::span<const Index> nodes);
/// Post-encoder, pre-relational embeddings of every node (k x D).
Matrix node_embeddings(DetectorModel& model, const SocialGraph& g);

// --- training -----------------------------------------------------------------

struct DetectorTrainOptions {
  int epochs = 150;
  double lr = 1e-2;
  double lambda = 5e-4;
  double momentum = 0.0;
};

struct DetectorTrainReport {
  std::vector<double> train_loss;  ///< CE + L2 before each step
  std::vector<double> val_accuracy;
  double final_train_loss = 0.0;
  double final_val_accuracy = 0.0;
};

/// Full-batch descent on mean cross-entropy over the training mask plus
/// lambda * sum of squared parameter entries. Throws std::runtime_error naming
/// the epoch when the loss becomes non-finite.
DetectorTrainReport train_detector(DetectorModel& model, const SocialGraph& g,
                                   const DetectorTrainOptions& options);

/// Fraction of `nodes` whose argmax label matches the graph label.
double accuracy(const Prediction& p, const SocialGraph& g, std::span<const Index> nodes);

}  // namespace botinject
