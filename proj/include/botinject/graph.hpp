#pragma once

// Heterogeneous user graph: two edge relations, raw per-user attributes,
// labels and a train/val/test split.

#include "botinject/tape.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace botinject {

enum class Relation : std::uint8_t { Friend, Follow };
enum class Label : std::uint8_t { Human = 0, Bot = 1 };
enum class Split : std::uint8_t { None, Train, Val, Test };

/// Which neighbor lists an aggregation reads. Any is E_f(v) united with E_o(v).
enum class Neighborhood : std::uint8_t { Friend, Follow, Any };

inline constexpr int kNumNumerical = 5;
inline constexpr int kNumCategorical = 3;

/// Column order of UserAttributes::numerical.
enum NumericalFeature : int {
  kFollowers = 0,
  kActiveDays = 1,
  kScreenNameLength = 2,
  kFollowings = 3,
  kStatus = 4,
};

/// Column order of UserAttributes::categorical.
enum CategoricalFeature : int { kProtected = 0, kVerified = 1, kDefaultProfileImage = 2 };

const char* numerical_feature_name(int feature);

inline int class_index(Label l) { return static_cast<int>(l); }

struct UserAttributes {
  Vector desc;   ///< precomputed description embedding, length ds
  Vector tweet;  ///< mean tweet embedding, length ds
  std::array<double, kNumNumerical> numerical{};
  std::array<bool, kNumCategorical> categorical{};

  /// Bitwise comparison, used by the perturbation-budget checks.
  bool identical_to(const UserAttributes& other) const;
};

struct Edge {
  Index src = 0;
  Index dst = 0;
  Relation relation = Relation::Follow;

  bool operator==(const Edge&) const = default;
};

class SocialGraph {
 public:
  /// Validates every invariant; throws std::invalid_argument with a reason.
  SocialGraph(Index text_dim, std::vector<UserAttributes> attrs, std::vector<Label> labels,
              std::vector<Edge> edges, std::vector<Split> splits);

  Index size() const { return static_cast<Index>(attrs_.size()); }
  Index text_dim() const { return text_dim_; }

  const UserAttributes& attributes(Index v) const;
  Label label(Index v) const;
  Split split(Index v) const;
  std::span<const UserAttributes> all_attributes() const { return attrs_; }
  std::span<const Label> labels() const { return labels_; }
  std::span<const Split> splits() const { return splits_; }
  std::span<const Edge> edges() const { return edges_; }

  /// Sorted node ids in a split.
  std::vector<Index> mask(Split s) const;

  /// Undirected, duplicate-free, sorted neighbor list.
  std::span<const Index> neighbors(Index v, Neighborhood which) const;

  /// E_f(v) united with E_o(v), excluding v. Throws std::out_of_range.
  std::vector<Index> first_order_neighbors(Index v) const;

  /// Copy with one extra node (id == size()) and the given edge appended.
  SocialGraph with_injected(UserAttributes attrs, Label label, Edge edge) const;

  /// Copy with a different split assignment.
  SocialGraph with_splits(std::vector<Split> splits) const;

 private:
  void check_node(Index v) const;

  Index text_dim_;
  std::vector<UserAttributes> attrs_;
  std::vector<Label> labels_;
  std::vector<Edge> edges_;
  std::vector<Split> splits_;
  std::array<std::vector<std::vector<Index>>, 3> adjacency_;
};

/// Row-normalized neighborhood operator: row i averages over the chosen
/// neighbor list of i and is zero when that list is empty.
std::shared_ptr<const SparseMatrix> mean_aggregation(const SocialGraph& g, Neighborhood which);

// --- file format ------------------------------------------------------------

void write_graph(std::ostream& os, const SocialGraph& g);
SocialGraph read_graph(std::istream& is);
void save_graph(const std::filesystem::path& path, const SocialGraph& g);
SocialGraph load_graph(const std::filesystem::path& path);

/// Node line in graph-file syntax (no trailing newline).
std::string format_node_line(Index id, Label label, const UserAttributes& a);
std::string format_edge_line(const Edge& e);

// --- generation and sampling -----------------------------------------------

struct SynthOptions {
  Index nodes = 1000;
  double bot_fraction = 0.3;
  double avg_degree = 6.0;
  std::uint64_t seed = 1;
  Index text_dim = 32;
  /// Probability that an edge endpoint is drawn from the same class.
  double homophily = 0.8;
  /// Edge activity of a bot relative to a human; bots are sparsely connected.
  double bot_activity = 0.15;
};

/// Labeled graph whose classes differ in their attribute distributions.
/// Deterministic per seed; splits are 70/15/15 stratified by label.
SocialGraph synth_graph(const SynthOptions& options);

/// 70/15/15 split per label, seeded.
std::vector<Split> stratified_split(std::span<const Label> labels, std::uint64_t seed);

/// Node-induced subgraph grown breadth-first from a random node until it has
/// target_size nodes; restarts from a fresh random node when a component is
/// exhausted. Surviving nodes keep their relative id order.
SocialGraph sample_subgraph(const SocialGraph& g, Index target_size, std::uint64_t seed);

/// Induced subgraph on `keep` (sorted ascending). Splits are copied.
SocialGraph induced_subgraph(const SocialGraph& g, std::span<const Index> keep);

/// Nodes within `hops` of any seed node, sorted ascending.
std::vector<Index> k_hop_ball(const SocialGraph& g, std::span<const Index> seeds, int hops);

/// Empty string when `after` is `before` plus exactly one node and one edge
/// touching it with every original byte untouched; otherwise the violation.
std::string single_injection_violation(const SocialGraph& before, const SocialGraph& after);

}  // namespace botinject
