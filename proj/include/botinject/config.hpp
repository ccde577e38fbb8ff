#pragma once

// Experiment configuration read from `key = value` lines. Blank lines and
// lines starting with '#' are ignored; unknown keys are errors.

#include "botinject/detector.hpp"
#include "botinject/injector.hpp"
#include "botinject/recovery.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace botinject {

struct ExperimentConfig {
  // graph source: empty graph_file means a synthetic graph
  std::string graph_file;
  SynthOptions synth;

  Index dim = 128;
  DetectorKind substitute = DetectorKind::SubstituteRgcn;
  Index substitute_layers = 1;
  std::vector<DetectorKind> victims{DetectorKind::VictimGcn, DetectorKind::VictimBotRgcn};
  Index victim_layers = 2;

  DetectorTrainOptions substitute_training{.momentum = 0.9};
  DetectorTrainOptions victim_training{.momentum = 0.9};
  AttackTrainOptions attack{.patience = 10, .lr = 3e-2, .momentum = 0.9};
  InverterTrainOptions inverter{.momentum = 0.9};
  /// Attack model selection: "recovered" scores validation targets after
  /// attribute recovery, "embedding" on the raw generated embedding.
  std::string attack_validation = "recovered";
  /// "recovered" trains the attack through recovery_projection, "embedding"
  /// on the raw generated embedding.
  std::string attack_objective = "recovered";

  std::string profile = "cresci2015";
  InjectionMode mode = InjectionMode::Full;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  /// 0 means every bot in the test mask.
  Index max_targets = 0;

  Index transfer_subgraph_size = 250;
  Index transfer_source = 0;
  std::vector<Index> transfer_targets{1, 2, 3, 4};

  /// Canonical `key = value` rendering, one line per key in a fixed order.
  std::string to_text() const;
};

ExperimentConfig parse_config(std::istream& is);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Applies one `key = value` assignment. Throws std::invalid_argument for an
/// unknown key or a malformed value.
void apply_setting(ExperimentConfig& config, const std::string& key, const std::string& value);

}  // namespace botinject
