#pragma once

// Experiment orchestration: per-seed pipelines, metrics, ablations, parameter
// studies, transfer runs and the key-value report format.

#include "botinject/config.hpp"
#include "botinject/optim.hpp"

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace botinject {

struct Metrics {
  double attack_success_rate = 0.0;
  double new_node_bot_rate = 0.0;
  Index n_targets = 0;
};

/// One target with its perturbed graph G' and the id of the injected node.
struct PerturbedCase {
  Index target = 0;
  Index injected = 0;
  SocialGraph graph;
};

/// ASR is the fraction of targets predicted Human in their G'; the bot rate
/// is the fraction of injected nodes predicted Bot.
Metrics evaluate(DetectorModel& victim, std::span<const PerturbedCase> cases);

/// Fraction of `targets` the model already predicts Human on the clean graph.
double clean_misclassification(DetectorModel& model, const SocialGraph& g, std::span<const Index> targets);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  ///< sample standard deviation, 0 for a single value
};
MeanStd mean_std(std::span<const double> values);

/// Fixed six-decimal rendering used by every report value.
std::string format_fixed(double v);

/// Named checkpoints with a per-stage record of every read and write.
class ArtifactStore {
 public:
  struct StageAccess {
    std::string stage;
    std::vector<std::string> reads;
    std::vector<std::string> writes;
  };

  /// With a directory every write is also saved as `<dir>/<name>.ckpt`.
  explicit ArtifactStore(std::filesystem::path dir = {});

  void begin_stage(const std::string& stage);
  void put(const std::string& name, Checkpoint ckpt);
  const Checkpoint& get(const std::string& name);
  bool contains(const std::string& name) const;
  /// Digest without recording a read.
  std::string digest(const std::string& name) const;

  const std::vector<StageAccess>& audit() const { return audit_; }
  /// Reads made by `stage` of artifacts whose names start with `prefix`.
  std::vector<std::string> reads_with_prefix(const std::string& stage, const std::string& prefix) const;

 private:
  StageAccess& current();
  std::filesystem::path dir_;
  std::map<std::string, Checkpoint> items_;
  std::vector<StageAccess> audit_;
};

/// Ordered `key = value` lines plus a free-form summary table.
class Report {
 public:
  void set(const std::string& key, const std::string& value);
  void set(const std::string& key, const char* value) { set(key, std::string(value)); }
  void set(const std::string& key, double value);
  void set_count(const std::string& key, long long value);
  void add_row(std::vector<std::string> cells);

  bool has(const std::string& key) const;
  const std::string& get(const std::string& key) const;
  double number(const std::string& key) const;
  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

  std::string text() const;
  void write(const std::filesystem::path& path) const;

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
  std::map<std::string, std::size_t> index_;
  std::vector<std::vector<std::string>> table_;
};

SocialGraph load_experiment_graph(const ExperimentConfig& config);
/// Bots of one split in ascending id order, truncated to `cap` when cap > 0.
std::vector<Index> bot_targets(const SocialGraph& g, Split split, Index cap = 0);

/// Trained victims keyed by "<seed>/<kind>/<tag>", shared between runs that
/// use the same graph.
using VictimCache = std::map<std::string, Checkpoint>;

struct ModeRun {
  InjectionMode mode = InjectionMode::Full;
  std::vector<PerturbedCase> cases;
  double substitute_pre_recovery_asr = 0.0;
  Metrics substitute;
  std::map<DetectorKind, Metrics> victims;
  long long budget_violations = 0;
  long long constraint_violations = 0;
  double mean_embedding_gap = 0.0;
  std::vector<std::array<double, kNumNumerical>> recovered;
};

struct SeedRun {
  std::uint64_t seed = 0;
  double substitute_val_accuracy = 0.0;
  AttackTrainReport attack;
  std::string attack_digest;
  std::vector<ModeRun> modes;
  std::map<DetectorKind, double> baseline;
  std::map<DetectorKind, double> victim_val_accuracy;
  std::map<DetectorKind, std::string> victim_digest;
  ArtifactStore store;
};

struct PipelineOptions {
  std::vector<InjectionMode> modes{InjectionMode::Full};
  VictimCache* victim_cache = nullptr;
  /// Distinguishes cached victims trained on different graphs.
  std::string graph_tag = "graph";
  std::ostream* log = nullptr;
  std::filesystem::path artifact_dir;
};

/// Stages in order: substitute, attack, inverters, inject+recover for each
/// mode, victims, evaluation. A failing stage is rethrown as
/// std::runtime_error naming the stage and seed.
SeedRun run_pipeline(const ExperimentConfig& config, const SocialGraph& g, std::uint64_t seed,
                     const PipelineOptions& options);

Report run_experiment(const ExperimentConfig& config, std::ostream* log = nullptr,
                      const std::filesystem::path& artifact_dir = {});
/// `which` is "embedding" or "edge".
Report run_ablation(const ExperimentConfig& config, const std::string& which, std::ostream* log = nullptr);
/// Attack trained once per seed on the source subgraph, then applied to each
/// target subgraph.
Report run_transfer(const ExperimentConfig& config, std::ostream* log = nullptr);
/// `axis` is "substitute-kind" or "layer-count".
Report run_param_study(const ExperimentConfig& config, const std::string& axis, std::ostream* log = nullptr);

struct GradCheckRow {
  std::string name;
  GradCheckResult result;
};
/// Central-difference checks of every trainable component on a 30-node graph.
std::vector<GradCheckRow> run_gradchecks(std::uint64_t seed, const GradCheckOptions& options = {});

}  // namespace botinject
