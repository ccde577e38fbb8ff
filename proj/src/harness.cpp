#include "botinject/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace botinject {

// --- metrics ------------------------------------------------------------------

Metrics evaluate(DetectorModel& victim, std::span<const PerturbedCase> cases) {
  if (cases.empty()) throw std::invalid_argument("evaluate: empty outcome list");
  Index fooled = 0;
  Index caught = 0;
  for (const PerturbedCase& c : cases) {
    const std::array<Index, 2> nodes{c.target, c.injected};
    const Matrix p = local_probabilities(victim, c.graph, nodes);
    if (label_from_probs(p(0, 0), p(0, 1)) == Label::Human) ++fooled;
    if (label_from_probs(p(1, 0), p(1, 1)) == Label::Bot) ++caught;
  }
  const auto n = static_cast<double>(cases.size());
  return Metrics{static_cast<double>(fooled) / n, static_cast<double>(caught) / n,
                 static_cast<Index>(cases.size())};
}

double clean_misclassification(DetectorModel& model, const SocialGraph& g, std::span<const Index> targets) {
  if (targets.empty()) throw std::invalid_argument("clean_misclassification: no targets");
  const Matrix p = local_probabilities(model, g, targets);
  Index human = 0;
  for (Index i = 0; i < p.rows(); ++i) {
    if (label_from_probs(p(i, 0), p(i, 1)) == Label::Human) ++human;
  }
  return static_cast<double>(human) / static_cast<double>(targets.size());
}

MeanStd mean_std(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("mean_std: no values");
  double sum = 0.0;
  for (double v : values) sum += v;
  const double mean = sum / static_cast<double>(values.size());
  if (values.size() == 1) return {mean, 0.0};
  double sq = 0.0;
  for (double v : values) sq += (v - mean) * (v - mean);
  return {mean, std::sqrt(sq / static_cast<double>(values.size() - 1))};
}

std::string format_fixed(double v) {
  if (v == 0.0) v = 0.0;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

// --- artifact store -------------------------------------------------------------

ArtifactStore::ArtifactStore(std::filesystem::path dir) : dir_(std::move(dir)) {}

void ArtifactStore::begin_stage(const std::string& stage) { audit_.push_back({stage, {}, {}}); }

ArtifactStore::StageAccess& ArtifactStore::current() {
  if (audit_.empty()) throw std::logic_error("artifact access outside a stage");
  return audit_.back();
}

void ArtifactStore::put(const std::string& name, Checkpoint ckpt) {
  current().writes.push_back(name);
  if (!dir_.empty()) {
    const std::filesystem::path path = dir_ / (name + ".ckpt");
    std::filesystem::create_directories(path.parent_path());
    save_checkpoint(path, ckpt);
  }
  items_.insert_or_assign(name, std::move(ckpt));
}

const Checkpoint& ArtifactStore::get(const std::string& name) {
  const auto it = items_.find(name);
  if (it == items_.end()) throw std::runtime_error("missing artifact '" + name + "'");
  current().reads.push_back(name);
  return it->second;
}

bool ArtifactStore::contains(const std::string& name) const { return items_.count(name) > 0; }

std::string ArtifactStore::digest(const std::string& name) const {
  const auto it = items_.find(name);
  if (it == items_.end()) throw std::runtime_error("missing artifact '" + name + "'");
  return checkpoint_digest(it->second);
}

std::vector<std::string> ArtifactStore::reads_with_prefix(const std::string& stage, const std::string& prefix) const {
  std::vector<std::string> out;
  for (const StageAccess& s : audit_) {
    if (s.stage != stage) continue;
    for (const std::string& r : s.reads) {
      if (r.rfind(prefix, 0) == 0) out.push_back(r);
    }
  }
  return out;
}

// --- report ---------------------------------------------------------------------

void Report::set(const std::string& key, const std::string& value) {
  const auto it = index_.find(key);
  if (it != index_.end()) {
    entries_[it->second].second = value;
    return;
  }
  index_.emplace(key, entries_.size());
  entries_.emplace_back(key, value);
}

void Report::set(const std::string& key, double value) { set(key, format_fixed(value)); }

void Report::set_count(const std::string& key, long long value) { set(key, std::to_string(value)); }

void Report::add_row(std::vector<std::string> cells) { table_.push_back(std::move(cells)); }

bool Report::has(const std::string& key) const { return index_.count(key) > 0; }

const std::string& Report::get(const std::string& key) const {
  const auto it = index_.find(key);
  if (it == index_.end()) throw std::out_of_range("report has no key '" + key + "'");
  return entries_[it->second].second;
}

double Report::number(const std::string& key) const { return std::stod(get(key)); }

std::string Report::text() const {
  std::ostringstream os;
  for (const auto& [k, v] : entries_) os << k << " = " << v << "\n";
  if (!table_.empty()) {
    std::vector<std::size_t> width;
    for (const auto& row : table_) {
      if (width.size() < row.size()) width.resize(row.size(), 0);
      for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
    }
    os << "\n";
    for (const auto& row : table_) {
      os << "#";
      for (std::size_t c = 0; c < row.size(); ++c) {
        os << " " << row[c] << std::string(width[c] - row[c].size(), ' ');
        if (c + 1 < row.size()) os << " |";
      }
      os << "\n";
    }
  }
  return os.str();
}

void Report::write(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write report " + path.string());
  os << text();
}

// --- pipeline -------------------------------------------------------------------

SocialGraph load_experiment_graph(const ExperimentConfig& config) {
  if (!config.graph_file.empty()) return load_graph(config.graph_file);
  return synth_graph(config.synth);
}

std::vector<Index> bot_targets(const SocialGraph& g, Split split, Index cap) {
  std::vector<Index> out;
  for (Index v : g.mask(split)) {
    if (g.label(v) == Label::Bot) out.push_back(v);
  }
  if (cap > 0 && static_cast<Index>(out.size()) > cap) out.resize(static_cast<std::size_t>(cap));
  return out;
}

namespace {

template <typename Fn>
void run_stage(ArtifactStore& store, const std::string& stage, std::uint64_t seed, std::ostream* log, Fn&& fn) {
  store.begin_stage(stage);
  if (log) *log << "[seed " << seed << "] " << stage << "\n" << std::flush;
  try {
    fn();
  } catch (const std::exception& e) {
    throw std::runtime_error("stage " + stage + " failed for seed " + std::to_string(seed) + ": " + e.what());
  }
}

std::vector<InjectionOutcome> inject_targets(const AttackContext& ctx, std::span<const Index> targets,
                                             AttackModel& attack, InjectionMode mode, std::uint64_t seed,
                                             double* pre_recovery_asr) {
  std::vector<InjectionOutcome> out;
  Index fooled = 0;
  for (Index t : targets) {
    out.push_back(inject(ctx, t, attack, mode, derive_seed(seed, "inject")));
    if (substitute_target_label(ctx, out.back()) == Label::Human) ++fooled;
  }
  if (pre_recovery_asr) {
    *pre_recovery_asr = targets.empty() ? 0.0 : static_cast<double>(fooled) / static_cast<double>(targets.size());
  }
  return out;
}

void recover_outcomes(ModeRun& run, std::span<const InjectionOutcome> outcomes, const SocialGraph& g,
                      const Inverters& inverters, const EncoderParams& encoder, const ConstraintProfile& profile) {
  double gap = 0.0;
  for (const InjectionOutcome& o : outcomes) {
    MaterializedNode m = materialize(o, g, inverters, encoder, profile);
    if (!single_injection_violation(g, m.perturbed).empty()) ++run.budget_violations;
    if (!profile.violation(m.attributes.numerical).empty()) ++run.constraint_violations;
    gap += m.embedding_gap;
    run.recovered.push_back(m.attributes.numerical);
    run.cases.push_back(PerturbedCase{o.target, m.node, std::move(m.perturbed)});
  }
  run.mean_embedding_gap = outcomes.empty() ? 0.0 : gap / static_cast<double>(outcomes.size());
}

std::string victim_name(DetectorKind kind) { return "victim/" + to_string(kind); }

Checkpoint train_victim(const ExperimentConfig& config, const SocialGraph& g, std::uint64_t seed, DetectorKind kind) {
  DetectorModel victim = create_detector(kind, g, {config.victim_layers, config.dim}, derive_seed(seed, "victim"));
  const DetectorTrainReport rep = train_detector(victim, g, config.victim_training);
  Checkpoint ckpt = victim.to_checkpoint();
  ckpt.set_meta("val_accuracy", format_fixed(rep.final_val_accuracy));
  return ckpt;
}

// Victims are trained (or fetched from the cache), written to the store, and
// evaluated on every mode's perturbed graphs.
void victims_and_evaluation(SeedRun& run, const ExperimentConfig& config, const SocialGraph& g,
                            std::span<const Index> targets, const PipelineOptions& options) {
  ArtifactStore& store = run.store;
  run_stage(store, "victims", run.seed, options.log, [&] {
    for (DetectorKind kind : config.victims) {
      const std::string key = std::to_string(run.seed) + "/" + to_string(kind) + "/" + options.graph_tag;
      Checkpoint ckpt;
      if (options.victim_cache && options.victim_cache->count(key)) {
        ckpt = options.victim_cache->at(key);
      } else {
        ckpt = train_victim(config, g, run.seed, kind);
        if (options.victim_cache) options.victim_cache->emplace(key, ckpt);
      }
      store.put(victim_name(kind), std::move(ckpt));
      run.victim_digest[kind] = store.digest(victim_name(kind));
    }
  });
  run_stage(store, "evaluate", run.seed, options.log, [&] {
    DetectorModel sub = DetectorModel::from_checkpoint(store.get("substitute"));
    for (ModeRun& m : run.modes) {
      if (!m.cases.empty()) m.substitute = evaluate(sub, m.cases);
    }
    for (DetectorKind kind : config.victims) {
      const Checkpoint& ckpt = store.get(victim_name(kind));
      run.victim_val_accuracy[kind] = std::stod(ckpt.require_meta("val_accuracy"));
      DetectorModel victim = DetectorModel::from_checkpoint(ckpt);
      run.baseline[kind] = targets.empty() ? 0.0 : clean_misclassification(victim, g, targets);
      for (ModeRun& m : run.modes) {
        if (!m.cases.empty()) m.victims[kind] = evaluate(victim, m.cases);
      }
    }
  });
}

}  // namespace

SeedRun run_pipeline(const ExperimentConfig& config, const SocialGraph& g, std::uint64_t seed,
                     const PipelineOptions& options) {
  if (options.modes.empty()) throw std::invalid_argument("run_pipeline: no injection modes");
  SeedRun run;
  run.seed = seed;
  if (!options.artifact_dir.empty()) run.store = ArtifactStore(options.artifact_dir / ("seed-" + std::to_string(seed)));
  ArtifactStore& store = run.store;
  std::ostream* log = options.log;

  run_stage(store, "substitute", seed, log, [&] {
    DetectorModel sub = create_detector(config.substitute, g, {config.substitute_layers, config.dim},
                                        derive_seed(seed, "substitute"));
    const DetectorTrainReport rep = train_detector(sub, g, config.substitute_training);
    run.substitute_val_accuracy = rep.final_val_accuracy;
    store.put("substitute", sub.to_checkpoint());
  });

  run_stage(store, "inverters", seed, log, [&] {
    DetectorModel sub = DetectorModel::from_checkpoint(store.get("substitute"));
    store.put("inverters", train_inverters(sub, g, config.inverter, derive_seed(seed, "inverters")).to_checkpoint());
  });

  run_stage(store, "attack", seed, log, [&] {
    DetectorModel sub = DetectorModel::from_checkpoint(store.get("substitute"));
    AttackContext ctx = AttackContext::build(sub, g);
    const std::vector<Index> train = bot_targets(g, Split::Train);
    const std::vector<Index> val = bot_targets(g, Split::Val);
    const ConstraintProfile profile = ConstraintProfile::named(config.profile);
    Inverters inv;
    if (config.attack_validation == "recovered" || config.attack_objective == "recovered") {
      inv = Inverters::from_checkpoint(store.get("inverters"));
    }
    if (config.attack_objective == "recovered") ctx.realize = recovery_projection(inv, sub.encoder, profile);
    AttackValidation validate;
    if (config.attack_validation == "recovered") {
      std::vector<TargetFrame> frames;
      for (Index t : val.empty() ? train : val) frames.push_back(make_frame(ctx, t));
      validate = [&ctx, inv, profile, frames = std::move(frames)](AttackModel& m) {
        return recovered_misclassification(ctx, m, frames, inv, profile);
      };
    }
    AttackTrainResult res = train_attack(ctx, train, val, config.attack, derive_seed(seed, "attack"), validate);
    run.attack = res.report;
    store.put("attack", res.model.to_checkpoint());
  });
  run.attack_digest = store.digest("attack");

  const std::vector<Index> targets = bot_targets(g, Split::Test, config.max_targets);
  const ConstraintProfile profile = ConstraintProfile::named(config.profile);
  for (InjectionMode mode : options.modes) {
    ModeRun m;
    m.mode = mode;
    std::vector<InjectionOutcome> outcomes;
    run_stage(store, "inject:" + to_string(mode), seed, log, [&] {
      DetectorModel sub = DetectorModel::from_checkpoint(store.get("substitute"));
      AttackModel attack = AttackModel::from_checkpoint(store.get("attack"));
      const AttackContext ctx = AttackContext::build(sub, g);
      outcomes = inject_targets(ctx, targets, attack, mode, seed, &m.substitute_pre_recovery_asr);
    });
    run_stage(store, "recover:" + to_string(mode), seed, log, [&] {
      const DetectorModel sub = DetectorModel::from_checkpoint(store.get("substitute"));
      const Inverters inv = Inverters::from_checkpoint(store.get("inverters"));
      recover_outcomes(m, outcomes, g, inv, sub.encoder, profile);
    });
    run.modes.push_back(std::move(m));
  }

  victims_and_evaluation(run, config, g, targets, options);
  return run;
}

// --- reporting ------------------------------------------------------------------

namespace {

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? "," : "") + items[i];
  return out;
}

std::string pm(const MeanStd& s) { return format_fixed(s.mean) + " +- " + format_fixed(s.std); }

void emit_config(Report& r, const ExperimentConfig& config) {
  std::istringstream is(config.to_text());
  std::string line;
  while (std::getline(is, line)) {
    const auto eq = line.find(" = ");
    r.set("config." + line.substr(0, eq), line.substr(eq + 3));
  }
}

long long victim_reads_during_attack(const SeedRun& run) {
  return static_cast<long long>(run.store.reads_with_prefix("attack", "victim/").size());
}

void emit_seed(Report& r, const std::string& prefix, const SeedRun& run, const ExperimentConfig& config) {
  const std::string p = prefix + "seed." + std::to_string(run.seed) + ".";
  r.set(p + "substitute.val_accuracy", run.substitute_val_accuracy);
  r.set(p + "attack.initial_train_loss", run.attack.initial_train_loss);
  r.set(p + "attack.final_train_loss", run.attack.final_train_loss);
  r.set(p + "attack.initial_val_rate", run.attack.initial_val_rate);
  r.set(p + "attack.best_val_rate", run.attack.best_val_rate);
  r.set_count(p + "attack.best_epoch", run.attack.best_epoch);
  r.set_count(p + "attack.epochs_run", run.attack.epochs_run);
  r.set(p + "attack.digest", run.attack_digest);
  for (const ArtifactStore::StageAccess& s : run.store.audit()) {
    r.set(p + "audit." + s.stage + ".reads", join(s.reads));
    r.set(p + "audit." + s.stage + ".writes", join(s.writes));
  }
  r.set_count(p + "audit.attack.victim_reads", victim_reads_during_attack(run));
  for (DetectorKind kind : config.victims) {
    const std::string k = p + to_string(kind) + ".";
    r.set(k + "val_accuracy", run.victim_val_accuracy.at(kind));
    r.set(k + "baseline", run.baseline.at(kind));
    r.set(k + "digest", run.victim_digest.at(kind));
  }
  for (const ModeRun& m : run.modes) {
    const std::string k = p + to_string(m.mode) + ".";
    r.set_count(k + "n_targets", static_cast<long long>(m.cases.size()));
    r.set_count(k + "budget_violations", m.budget_violations);
    r.set_count(k + "constraint_violations", m.constraint_violations);
    r.set(k + "mean_embedding_gap", m.mean_embedding_gap);
    r.set(k + "substitute.pre_recovery_asr", m.substitute_pre_recovery_asr);
    r.set(k + "substitute.asr", m.substitute.attack_success_rate);
    r.set(k + "substitute.bot_rate", m.substitute.new_node_bot_rate);
    for (int f = 0; f < kNumNumerical; ++f) {
      double sum = 0.0;
      for (const auto& rec : m.recovered) sum += rec[static_cast<std::size_t>(f)];
      const double mean = m.recovered.empty() ? 0.0 : sum / static_cast<double>(m.recovered.size());
      r.set(k + "recovered." + numerical_feature_name(f) + ".mean", mean);
    }
    for (DetectorKind kind : config.victims) {
      if (!m.victims.count(kind)) continue;
      r.set(k + to_string(kind) + ".asr", m.victims.at(kind).attack_success_rate);
      r.set(k + to_string(kind) + ".bot_rate", m.victims.at(kind).new_node_bot_rate);
    }
  }
}

struct Aggregate {
  MeanStd asr, bot_rate, baseline;
};

std::vector<double> collect(std::span<const SeedRun> runs, const std::function<double(const SeedRun&)>& f) {
  std::vector<double> out;
  for (const SeedRun& run : runs) out.push_back(f(run));
  return out;
}

const ModeRun& mode_of(const SeedRun& run, InjectionMode mode) {
  for (const ModeRun& m : run.modes) {
    if (m.mode == mode) return m;
  }
  throw std::logic_error("mode missing from run");
}

Aggregate aggregate(std::span<const SeedRun> runs, InjectionMode mode, DetectorKind kind) {
  const auto metric = [&](auto field) {
    return mean_std(collect(runs, [&](const SeedRun& r) { return field(mode_of(r, mode).victims.at(kind)); }));
  };
  return {metric([](const Metrics& m) { return m.attack_success_rate; }),
          metric([](const Metrics& m) { return m.new_node_bot_rate; }),
          mean_std(collect(runs, [&](const SeedRun& r) { return r.baseline.at(kind); }))};
}

bool has_cases(std::span<const SeedRun> runs, InjectionMode mode) {
  for (const SeedRun& r : runs) {
    if (mode_of(r, mode).cases.empty()) return false;
  }
  return !runs.empty();
}

void emit_aggregate(Report& r, const std::string& prefix, std::span<const SeedRun> runs,
                    const ExperimentConfig& config, const std::string& label) {
  const std::string p = prefix + "aggregate.";
  long long budget = 0;
  long long constraints = 0;
  long long victim_reads = 0;
  for (const SeedRun& run : runs) {
    for (const ModeRun& m : run.modes) {
      budget += m.budget_violations;
      constraints += m.constraint_violations;
    }
    victim_reads += victim_reads_during_attack(run);
  }
  r.set_count(p + "budget_violations", budget);
  r.set_count(p + "constraint_violations", constraints);
  r.set_count(p + "attack_victim_reads", victim_reads);
  r.set(p + "substitute.val_accuracy",
        mean_std(collect(runs, [](const SeedRun& s) { return s.substitute_val_accuracy; })).mean);
  for (const ModeRun& first : runs.front().modes) {
    const InjectionMode mode = first.mode;
    const std::string mp = p + to_string(mode) + ".";
    if (!has_cases(runs, mode)) {
      r.set_count(mp + "n_targets", 0);
      continue;
    }
    const MeanStd pre = mean_std(collect(runs, [&](const SeedRun& s) { return mode_of(s, mode).substitute_pre_recovery_asr; }));
    const MeanStd sub = mean_std(collect(runs, [&](const SeedRun& s) { return mode_of(s, mode).substitute.attack_success_rate; }));
    r.set(mp + "substitute.pre_recovery_asr.mean", pre.mean);
    r.set(mp + "substitute.asr.mean", sub.mean);
    for (DetectorKind kind : config.victims) {
      const Aggregate a = aggregate(runs, mode, kind);
      const std::string k = mp + to_string(kind) + ".";
      r.set(k + "asr.mean", a.asr.mean);
      r.set(k + "asr.std", a.asr.std);
      r.set(k + "bot_rate.mean", a.bot_rate.mean);
      r.set(k + "bot_rate.std", a.bot_rate.std);
      r.set(k + "baseline.mean", a.baseline.mean);
      r.set(k + "baseline.std", a.baseline.std);
      r.add_row({label, to_string(mode), to_string(kind), pm(a.asr), pm(a.bot_rate), pm(a.baseline)});
    }
  }
}

void table_header(Report& r, const std::string& first) {
  r.add_row({first, "mode", "victim", "asr", "new-node bot rate", "no-attack baseline"});
}

std::vector<SeedRun> run_seeds(const ExperimentConfig& config, const SocialGraph& g, PipelineOptions options) {
  std::vector<SeedRun> runs;
  for (std::uint64_t seed : config.seeds) {
    runs.push_back(run_pipeline(config, g, seed, options));
  }
  return runs;
}

void emit_runs(Report& r, const std::string& prefix, std::span<const SeedRun> runs, const ExperimentConfig& config,
               const std::string& label) {
  for (const SeedRun& run : runs) emit_seed(r, prefix, run, config);
  emit_aggregate(r, prefix, runs, config, label);
}

}  // namespace

Report run_experiment(const ExperimentConfig& config, std::ostream* log, const std::filesystem::path& artifact_dir) {
  const SocialGraph g = load_experiment_graph(config);
  PipelineOptions options;
  options.modes = {config.mode};
  options.log = log;
  options.artifact_dir = artifact_dir;
  const std::vector<SeedRun> runs = run_seeds(config, g, options);
  Report r;
  r.set("report.command", "experiment");
  emit_config(r, config);
  r.set_count("graph.nodes", g.size());
  r.set_count("graph.edges", static_cast<long long>(g.edges().size()));
  table_header(r, "run");
  emit_runs(r, "", runs, config, "experiment");
  return r;
}

Report run_ablation(const ExperimentConfig& config, const std::string& which, std::ostream* log) {
  InjectionMode ablated;
  if (which == "embedding") {
    ablated = InjectionMode::AssignEmbedding;
  } else if (which == "edge") {
    ablated = InjectionMode::RandomEdge;
  } else {
    throw std::invalid_argument("unknown ablation '" + which + "' (expected embedding or edge)");
  }
  const SocialGraph g = load_experiment_graph(config);
  PipelineOptions options;
  options.modes = {InjectionMode::Full, ablated};
  options.log = log;
  const std::vector<SeedRun> runs = run_seeds(config, g, options);
  Report r;
  r.set("report.command", "ablation");
  r.set("ablation", which);
  emit_config(r, config);
  table_header(r, "run");
  emit_runs(r, "", runs, config, "ablation-" + which);
  if (!has_cases(runs, InjectionMode::Full)) return r;
  for (DetectorKind kind : config.victims) {
    const std::string k = to_string(kind);
    std::vector<double> d_asr;
    std::vector<double> d_bot;
    for (const SeedRun& run : runs) {
      const Metrics& full = mode_of(run, InjectionMode::Full).victims.at(kind);
      const Metrics& abl = mode_of(run, ablated).victims.at(kind);
      const std::string p = "seed." + std::to_string(run.seed) + ".delta." + k + ".";
      d_asr.push_back(abl.attack_success_rate - full.attack_success_rate);
      d_bot.push_back(abl.new_node_bot_rate - full.new_node_bot_rate);
      r.set(p + "asr", d_asr.back());
      r.set(p + "bot_rate", d_bot.back());
    }
    const MeanStd a = mean_std(d_asr);
    const MeanStd b = mean_std(d_bot);
    r.set("aggregate.delta." + k + ".asr.mean", a.mean);
    r.set("aggregate.delta." + k + ".bot_rate.mean", b.mean);
    // full should not be worse on either metric; reported, never enforced
    r.set("direction." + k + ".full_asr_at_least_ablation", a.mean <= 0.0 ? "yes" : "no");
    r.set("direction." + k + ".full_bot_rate_at_most_ablation", b.mean >= 0.0 ? "yes" : "no");
  }
  return r;
}

Report run_param_study(const ExperimentConfig& config, const std::string& axis, std::ostream* log) {
  std::vector<std::pair<std::string, ExperimentConfig>> cells;
  if (axis == "substitute-kind") {
    for (DetectorKind kind : {DetectorKind::SubstituteRgcn, DetectorKind::SubstituteGcn}) {
      ExperimentConfig c = config;
      c.substitute = kind;
      cells.emplace_back(to_string(kind), c);
    }
  } else if (axis == "layer-count") {
    for (Index layers : {1, 2, 3}) {
      ExperimentConfig c = config;
      c.substitute_layers = layers;
      cells.emplace_back("L" + std::to_string(layers), c);
    }
  } else {
    throw std::invalid_argument("unknown parameter-study axis '" + axis + "' (expected substitute-kind or layer-count)");
  }
  const SocialGraph g = load_experiment_graph(config);
  VictimCache cache;
  Report r;
  r.set("report.command", "param-study");
  r.set("axis", axis);
  emit_config(r, config);
  table_header(r, "cell");
  std::vector<std::string> names;
  for (const auto& [name, cell_config] : cells) {
    PipelineOptions options;
    options.modes = {cell_config.mode};
    options.victim_cache = &cache;
    options.log = log;
    const std::vector<SeedRun> runs = run_seeds(cell_config, g, options);
    emit_runs(r, "cell." + name + ".", runs, cell_config, name);
    names.push_back(name);
  }
  r.set("cells", join(names));
  return r;
}

Report run_transfer(const ExperimentConfig& config, std::ostream* log) {
  for (Index t : config.transfer_targets) {
    if (t == config.transfer_source) {
      throw std::invalid_argument("transfer: source subgraph " + std::to_string(t) + " is also a target");
    }
  }
  if (config.transfer_targets.empty()) throw std::invalid_argument("transfer: no target subgraphs");
  const SocialGraph full = load_experiment_graph(config);
  const auto subgraph = [&](Index id) {
    return sample_subgraph(full, config.transfer_subgraph_size,
                           derive_seed(config.synth.seed, "transfer-subgraph:" + std::to_string(id)));
  };
  const ConstraintProfile profile = ConstraintProfile::named(config.profile);
  const SocialGraph source = subgraph(config.transfer_source);

  Report r;
  r.set("report.command", "transfer");
  emit_config(r, config);
  table_header(r, "subgraph");
  std::vector<SeedRun> same_runs;
  std::map<Index, std::vector<SeedRun>> other_runs;
  std::vector<std::string> digests;
  for (std::uint64_t seed : config.seeds) {
    PipelineOptions options;
    options.modes = {config.mode};
    options.log = log;
    options.graph_tag = "subgraph-" + std::to_string(config.transfer_source);
    SeedRun same = run_pipeline(config, source, seed, options);
    for (Index id : config.transfer_targets) {
      const SocialGraph tg = subgraph(id);
      SeedRun other;
      other.seed = seed;
      ArtifactStore& store = same.store;
      const std::vector<Index> targets = bot_targets(tg, Split::Test, config.max_targets);
      ModeRun m;
      m.mode = config.mode;
      run_stage(store, "transfer-inject:" + std::to_string(id), seed, log, [&] {
        DetectorModel sub = DetectorModel::from_checkpoint(store.get("substitute"));
        AttackModel attack = AttackModel::from_checkpoint(store.get("attack"));
        other.attack_digest = checkpoint_digest(attack.to_checkpoint());
        const AttackContext ctx = AttackContext::build(sub, tg);
        const std::vector<InjectionOutcome> outcomes =
            inject_targets(ctx, targets, attack, config.mode, seed, &m.substitute_pre_recovery_asr);
        const Inverters inv = Inverters::from_checkpoint(store.get("inverters"));
        recover_outcomes(m, outcomes, tg, inv, sub.encoder, profile);
      });
      other.substitute_val_accuracy = same.substitute_val_accuracy;
      other.attack = same.attack;
      other.modes.push_back(std::move(m));
      // victims for the target subgraph get a store of their own
      PipelineOptions vopts = options;
      vopts.graph_tag = "subgraph-" + std::to_string(id);
      other.store.begin_stage("substitute-copy");
      other.store.put("substitute", store.get("substitute"));
      victims_and_evaluation(other, config, tg, targets, vopts);
      const std::string p = "seed." + std::to_string(seed) + ".other." + std::to_string(id) + ".";
      r.set(p + "attack.digest", other.attack_digest);
      r.set(p + "attack.digest_matches_source", other.attack_digest == same.attack_digest ? "yes" : "no");
      digests.push_back(other.attack_digest);
      other_runs[id].push_back(std::move(other));
    }
    same_runs.push_back(std::move(same));
  }
  emit_runs(r, "same.", same_runs, config, "same-" + std::to_string(config.transfer_source));
  std::vector<SeedRun> pooled;
  for (auto& [id, runs] : other_runs) {
    for (const SeedRun& run : runs) {
      const std::string p = "other." + std::to_string(id) + ".seed." + std::to_string(run.seed) + ".";
      const ModeRun& m = run.modes.front();
      r.set_count(p + "n_targets", static_cast<long long>(m.cases.size()));
      r.set_count(p + "budget_violations", m.budget_violations);
      r.set_count(p + "constraint_violations", m.constraint_violations);
      for (DetectorKind kind : config.victims) {
        r.set(p + to_string(kind) + ".baseline", run.baseline.at(kind));
        if (!m.victims.count(kind)) continue;
        r.set(p + to_string(kind) + ".asr", m.victims.at(kind).attack_success_rate);
        r.set(p + to_string(kind) + ".bot_rate", m.victims.at(kind).new_node_bot_rate);
      }
    }
    emit_aggregate(r, "other." + std::to_string(id) + ".", runs, config, "other-" + std::to_string(id));
  }
  return r;
}

// --- gradient checks ------------------------------------------------------------

namespace {

Var detector_objective(Tape& tape, DetectorModel& model, const EncoderInputs& in,
                       const Aggregator& agg, std::span<const Index> nodes, std::span<const int> labels,
                       double lambda) {
  const BoundDetector d = BoundDetector::bind(tape, model, true);
  Var logits = class_logits(d, relational_forward(d, encode_nodes(tape, model, in, true), agg));
  Var loss = softmax_cross_entropy(gather_rows(logits, nodes), labels);
  for (Parameter* p : model.parameters()) loss = loss + scale(squared_norm(tape.param(*p)), lambda);
  return loss;
}

}  // namespace

std::vector<GradCheckRow> run_gradchecks(std::uint64_t seed, const GradCheckOptions& options) {
  constexpr Index kDim = 16;
  SynthOptions so;
  so.nodes = 30;
  so.avg_degree = 4.0;
  so.text_dim = 8;
  so.seed = seed;
  const SocialGraph g = synth_graph(so);
  const NormStats stats = fit_norm_stats(g);
  const EncoderInputs in = EncoderInputs::from_graph(g, stats);
  const Aggregator agg = graph_aggregator(g);
  std::vector<Index> nodes;
  std::vector<int> labels;
  for (Index v = 0; v < g.size(); ++v) {
    nodes.push_back(v);
    labels.push_back(class_index(g.label(v)));
  }
  Rng rng(derive_seed(seed, "gradcheck"));
  std::vector<GradCheckRow> rows;

  {
    EncoderParams enc(g.text_dim(), kDim, rng);
    enc.stats = stats;
    Matrix weights(g.size(), kDim);
    for (Index i = 0; i < weights.size(); ++i) weights.data()[i] = rng.uniform(-1.0, 1.0);
    std::vector<Parameter*> params;
    enc.collect(params);
    rows.push_back({"encoder", grad_check([&](Tape& tape) {
                      return sum(hadamard(user_embedding(tape, in, enc, true), tape.constant(weights)));
                    }, params, options)});
  }

  const auto detector_row = [&](const std::string& name, DetectorKind kind, Index layers) {
    DetectorModel model = create_detector(kind, g, {layers, kDim}, derive_seed(seed, name));
    std::vector<Parameter*> params = model.parameters();
    rows.push_back({name, grad_check([&](Tape& tape) {
                      return detector_objective(tape, model, in, agg, nodes, labels, 5e-4);
                    }, params, options)});
  };
  for (Index layers : {1, 2, 3}) {
    detector_row("substitute-rgcn-L" + std::to_string(layers), DetectorKind::SubstituteRgcn, layers);
  }
  detector_row("substitute-gcn-L1", DetectorKind::SubstituteGcn, 1);
  detector_row("victim-gcn-L2", DetectorKind::VictimGcn, 2);
  detector_row("victim-botrgcn-L2", DetectorKind::VictimBotRgcn, 2);

  {
    DetectorModel sub = create_detector(DetectorKind::SubstituteRgcn, g, {1, kDim}, derive_seed(seed, "attack-sub"));
    const AttackContext ctx = AttackContext::build(sub, g);
    AttackModel attack = create_attack_model(kDim, derive_seed(seed, "attack-net"));
    std::vector<TargetFrame> frames;
    for (Index t : bot_targets(g, Split::Train)) {
      if (frames.size() < 4) frames.push_back(make_frame(ctx, t));
    }
    for (Index t : bot_targets(g, Split::Val)) {
      if (frames.size() < 4) frames.push_back(make_frame(ctx, t));
    }
    std::vector<Parameter*> params = attack.parameters();
    rows.push_back({"attack", grad_check([&](Tape& tape) {
                      const BoundDetector d = BoundDetector::bind(tape, sub, false);
                      Var u = label_vector(tape, sub, attack, true);
                      Var total;
                      for (const TargetFrame& f : frames) {
                        Var x_n = tape.constant(f.x_n);
                        Var x_bt = tape.constant(f.x_bt);
                        Var x_inj = generate_embedding(tape, x_n, x_bt, u, attack, ctx.envelope, true);
                        Var s = edge_scores(tape, x_inj, x_bt, x_n, u, tape.constant(f.candidate_x), attack, true);
                        Var loss = attack_loss(frame_target_logits(d, f, x_inj, softmax_rows(s)));
                        total = total.valid() ? total + loss : loss;
                      }
                      return total;
                    }, params, options)});
  }

  {
    DetectorModel sub = create_detector(DetectorKind::SubstituteRgcn, g, {1, kDim}, derive_seed(seed, "inv-sub"));
    const Matrix emb = node_embeddings(sub, g);
    const Index q = sub.encoder.slice_width();
    const Matrix num = emb.middleCols(slice_offset(Slice::Numerical, kDim), q);
    const Matrix cat = emb.middleCols(slice_offset(Slice::Categorical, kDim), q);
    Mlp num_inv("inv.num", {q, kInverterHidden, kInverterHidden, kNumNumerical}, rng);
    Mlp cat_inv("inv.cat", {q, kInverterHidden, kInverterHidden, 2 * kNumCategorical}, rng);
    std::vector<Parameter*> num_params;
    num_inv.collect(num_params);
    std::vector<Parameter*> cat_params;
    cat_inv.collect(cat_params);
    rows.push_back({"inverter-numeric", grad_check([&](Tape& tape) {
                      return numeric_inverter_loss(tape, num_inv, num, in.numerical, sub.encoder.numerical, 0.01);
                    }, num_params, options)});
    rows.push_back({"inverter-categorical", grad_check([&](Tape& tape) {
                      return categorical_inverter_loss(tape, cat_inv, cat, in.categorical);
                    }, cat_params, options)});
  }
  return rows;
}

}  // namespace botinject
