#include "botinject/harness.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

using namespace botinject;

namespace {

struct GlobalFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string profile;
  std::string mode;
  std::string out = ".";
};

ExperimentConfig resolve_config(const GlobalFlags& flags) {
  ExperimentConfig c = flags.config.empty() ? ExperimentConfig{} : load_config(flags.config);
  if (flags.seed) c.seeds = {*flags.seed};
  if (!flags.profile.empty()) apply_setting(c, "profile", flags.profile);
  if (!flags.mode.empty()) apply_setting(c, "mode", flags.mode);
  return c;
}

std::filesystem::path out_path(const GlobalFlags& flags, const std::string& name) {
  std::filesystem::create_directories(flags.out);
  return std::filesystem::path(flags.out) / name;
}

SocialGraph graph_for(const ExperimentConfig& c, const std::string& graph_path) {
  return graph_path.empty() ? load_experiment_graph(c) : load_graph(graph_path);
}

void emit(const Report& r, const GlobalFlags& flags, const std::string& name) {
  const std::filesystem::path path = out_path(flags, name);
  r.write(path);
  std::cout << r.text();
  std::cerr << "report written to " << path.string() << "\n";
}

std::string row_text(const RowVector& x) {
  std::string out;
  for (Index i = 0; i < x.size(); ++i) out += (i ? " " : "") + format_double(x(i));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Targeted node-injection attacks on graph-based social bot detectors"};
  app.require_subcommand(1);
  app.fallthrough();
  GlobalFlags flags;
  std::uint64_t seed_value = 0;
  app.add_option("--config", flags.config, "key = value experiment configuration")->check(CLI::ExistingFile);
  auto* seed_opt = app.add_option("--seed", seed_value, "single seed replacing the configured list");
  app.add_option("--profile", flags.profile, "constraint profile")
      ->check(CLI::IsMember({"cresci2015", "twibot22", "twibot22-alt"}));
  app.add_option("--mode", flags.mode, "injection mode")
      ->check(CLI::IsMember({"full", "assign-embedding", "random-edge"}));
  app.add_option("--out", flags.out, "output directory");

  std::string graph_path;
  std::string kind_name = "substitute-rgcn";
  std::string substitute_path;
  std::string attack_path;
  std::string inverters_path;
  std::string victim_path;
  Index target = -1;
  std::string ablation = "embedding";
  std::string axis = "layer-count";

  auto* synth = app.add_subcommand("synth", "generate the synthetic social graph");

  auto* train_det = app.add_subcommand("train-detector", "train a substitute or victim detector");
  train_det->add_option("--graph", graph_path, "graph file (default: configured graph)");
  train_det->add_option("--kind", kind_name, "detector kind")
      ->check(CLI::IsMember({"substitute-rgcn", "substitute-gcn", "victim-gcn", "victim-botrgcn"}));

  auto* train_atk = app.add_subcommand("train-attack", "train the attack networks against a substitute");
  train_atk->add_option("--graph", graph_path, "graph file");
  train_atk->add_option("--substitute", substitute_path, "substitute checkpoint")->required();
  train_atk->add_option("--inverters", inverters_path, "inverter checkpoint for the recovered objective or validation (trained when absent)");

  auto* inject_cmd = app.add_subcommand("inject", "generate the injected embedding and edge for one target");
  inject_cmd->add_option("--graph", graph_path, "graph file");
  inject_cmd->add_option("--substitute", substitute_path, "substitute checkpoint")->required();
  inject_cmd->add_option("--attack", attack_path, "attack checkpoint")->required();
  inject_cmd->add_option("--target", target, "target bot id")->required();

  auto* recover_cmd = app.add_subcommand("recover", "recover raw attributes and write the perturbed graph");
  recover_cmd->add_option("--graph", graph_path, "graph file");
  recover_cmd->add_option("--substitute", substitute_path, "substitute checkpoint")->required();
  recover_cmd->add_option("--attack", attack_path, "attack checkpoint")->required();
  recover_cmd->add_option("--inverters", inverters_path, "inverter checkpoint (trained when absent)");
  recover_cmd->add_option("--target", target, "target bot id")->required();

  auto* eval_cmd = app.add_subcommand("evaluate", "evaluate a victim on every test-bot injection");
  eval_cmd->add_option("--graph", graph_path, "graph file");
  eval_cmd->add_option("--victim", victim_path, "victim checkpoint")->required();
  eval_cmd->add_option("--substitute", substitute_path, "substitute checkpoint")->required();
  eval_cmd->add_option("--attack", attack_path, "attack checkpoint")->required();
  eval_cmd->add_option("--inverters", inverters_path, "inverter checkpoint")->required();

  auto* experiment = app.add_subcommand("experiment", "end-to-end run over the configured seeds");
  auto* ablation_cmd = app.add_subcommand("ablation", "full mode against one ablated mode");
  ablation_cmd->add_option("--which", ablation, "ablation")->check(CLI::IsMember({"embedding", "edge"}));
  auto* transfer = app.add_subcommand("transfer", "train on one subgraph, attack the others");
  auto* param = app.add_subcommand("param-study", "sweep the substitute model");
  param->add_option("--axis", axis, "sweep axis")->check(CLI::IsMember({"substitute-kind", "layer-count"}));
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient checks");

  CLI11_PARSE(app, argc, argv);
  if (*seed_opt) flags.seed = seed_value;

  try {
    ExperimentConfig config = resolve_config(flags);
    const std::uint64_t seed = config.seeds.front();

    if (*synth) {
      if (flags.seed) config.synth.seed = *flags.seed;
      const SocialGraph g = synth_graph(config.synth);
      const auto path = out_path(flags, "graph.txt");
      save_graph(path, g);
      std::cout << "nodes = " << g.size() << "\nedges = " << g.edges().size() << "\n";
      std::cerr << "graph written to " << path.string() << "\n";
    } else if (*train_det) {
      const SocialGraph g = graph_for(config, graph_path);
      const DetectorKind kind = parse_detector_kind(kind_name);
      const bool victim = kind == DetectorKind::VictimGcn || kind == DetectorKind::VictimBotRgcn;
      const Index layers = victim ? config.victim_layers : config.substitute_layers;
      const std::uint64_t model_seed = derive_seed(seed, victim ? "victim" : "substitute");
      DetectorModel model = create_detector(kind, g, {layers, config.dim}, model_seed);
      const DetectorTrainReport rep =
          train_detector(model, g, victim ? config.victim_training : config.substitute_training);
      const auto path = out_path(flags, kind_name + ".ckpt");
      save_checkpoint(path, model.to_checkpoint());
      std::cout << "final_train_loss = " << format_fixed(rep.final_train_loss) << "\n"
                << "val_accuracy = " << format_fixed(rep.final_val_accuracy) << "\n";
      std::cerr << "checkpoint written to " << path.string() << "\n";
    } else if (*train_atk) {
      const SocialGraph g = graph_for(config, graph_path);
      DetectorModel sub = DetectorModel::from_checkpoint(load_checkpoint(substitute_path));
      AttackContext ctx = AttackContext::build(sub, g);
      const std::vector<Index> train = bot_targets(g, Split::Train);
      const std::vector<Index> val = bot_targets(g, Split::Val);
      Inverters inv;
      if (config.attack_validation == "recovered" || config.attack_objective == "recovered") {
        inv = inverters_path.empty() ? train_inverters(sub, g, config.inverter, derive_seed(seed, "inverters"))
                                     : Inverters::from_checkpoint(load_checkpoint(inverters_path));
      }
      if (config.attack_objective == "recovered") {
        ctx.realize = recovery_projection(inv, sub.encoder, ConstraintProfile::named(config.profile));
      }
      AttackValidation validate;
      if (config.attack_validation == "recovered") {
        std::vector<TargetFrame> frames;
        for (Index t : val.empty() ? train : val) frames.push_back(make_frame(ctx, t));
        validate = [&ctx, inv = std::move(inv), profile = ConstraintProfile::named(config.profile),
                    frames = std::move(frames)](AttackModel& m) {
          return recovered_misclassification(ctx, m, frames, inv, profile);
        };
      }
      AttackTrainResult res = train_attack(ctx, train, val, config.attack, derive_seed(seed, "attack"), validate);
      const auto path = out_path(flags, "attack.ckpt");
      save_checkpoint(path, res.model.to_checkpoint());
      std::cout << "initial_val_rate = " << format_fixed(res.report.initial_val_rate) << "\n"
                << "best_val_rate = " << format_fixed(res.report.best_val_rate) << "\n"
                << "best_epoch = " << res.report.best_epoch << "\n"
                << "epochs_run = " << res.report.epochs_run << "\n";
      std::cerr << "checkpoint written to " << path.string() << "\n";
    } else if (*inject_cmd || *recover_cmd) {
      const SocialGraph g = graph_for(config, graph_path);
      DetectorModel sub = DetectorModel::from_checkpoint(load_checkpoint(substitute_path));
      AttackModel attack = AttackModel::from_checkpoint(load_checkpoint(attack_path));
      const AttackContext ctx = AttackContext::build(sub, g);
      const InjectionOutcome o = inject(ctx, target, attack, config.mode, derive_seed(seed, "inject"));
      std::cout << "target = " << o.target << "\n"
                << "mode = " << to_string(config.mode) << "\n"
                << "attach_node = " << o.attach_node << "\n"
                << "candidates = " << o.candidates.size() << "\n"
                << "substitute_target_label = "
                << (substitute_target_label(ctx, o) == Label::Bot ? "bot" : "human") << "\n"
                << "x_inj = " << row_text(o.x_inj) << "\n";
      if (*recover_cmd) {
        Inverters inv;
        if (inverters_path.empty()) {
          inv = train_inverters(sub, g, config.inverter, derive_seed(seed, "inverters"));
          save_checkpoint(out_path(flags, "inverters.ckpt"), inv.to_checkpoint());
        } else {
          inv = Inverters::from_checkpoint(load_checkpoint(inverters_path));
        }
        const MaterializedNode m = materialize(o, g, inv, sub.encoder, ConstraintProfile::named(config.profile));
        for (int f = 0; f < kNumNumerical; ++f) {
          std::cout << numerical_feature_name(f) << " = "
                    << format_double(m.attributes.numerical[static_cast<std::size_t>(f)]) << "\n";
        }
        std::cout << "protected = " << m.attributes.categorical[kProtected] << "\n"
                  << "verified = " << m.attributes.categorical[kVerified] << "\n"
                  << "default_profile_image = " << m.attributes.categorical[kDefaultProfileImage] << "\n"
                  << "embedding_gap = " << format_fixed(m.embedding_gap) << "\n";
        const auto path = out_path(flags, "perturbed-" + std::to_string(target) + ".txt");
        save_graph(path, m.perturbed);
        std::cerr << "perturbed graph written to " << path.string() << "\n";
      }
    } else if (*eval_cmd) {
      const SocialGraph g = graph_for(config, graph_path);
      DetectorModel sub = DetectorModel::from_checkpoint(load_checkpoint(substitute_path));
      AttackModel attack = AttackModel::from_checkpoint(load_checkpoint(attack_path));
      const Inverters inv = Inverters::from_checkpoint(load_checkpoint(inverters_path));
      DetectorModel victim = DetectorModel::from_checkpoint(load_checkpoint(victim_path));
      const AttackContext ctx = AttackContext::build(sub, g);
      const ConstraintProfile profile = ConstraintProfile::named(config.profile);
      const std::vector<Index> targets = bot_targets(g, Split::Test, config.max_targets);
      std::vector<PerturbedCase> cases;
      for (Index t : targets) {
        MaterializedNode m =
            materialize(inject(ctx, t, attack, config.mode, derive_seed(seed, "inject")), g, inv, sub.encoder, profile);
        cases.push_back(PerturbedCase{t, m.node, std::move(m.perturbed)});
      }
      const Metrics metrics = evaluate(victim, cases);
      Report r;
      r.set("report.command", "evaluate");
      r.set("victim", to_string(victim.kind));
      r.set("mode", to_string(config.mode));
      r.set_count("n_targets", metrics.n_targets);
      r.set("asr", metrics.attack_success_rate);
      r.set("bot_rate", metrics.new_node_bot_rate);
      r.set("baseline", clean_misclassification(victim, g, targets));
      emit(r, flags, "evaluate.txt");
    } else if (*experiment) {
      emit(run_experiment(config, &std::cerr, flags.out.empty() ? "" : out_path(flags, "artifacts")),
           flags, "experiment.txt");
    } else if (*ablation_cmd) {
      emit(run_ablation(config, ablation, &std::cerr), flags, "ablation-" + ablation + ".txt");
    } else if (*transfer) {
      emit(run_transfer(config, &std::cerr), flags, "transfer.txt");
    } else if (*param) {
      emit(run_param_study(config, axis, &std::cerr), flags, "param-study-" + axis + ".txt");
    } else if (*gradcheck) {
      double worst = 0.0;
      for (const GradCheckRow& row : run_gradchecks(seed)) {
        std::printf("%-24s max_rel_error = %.3e  coords = %lld  kinks_skipped = %lld  worst = %s\n",
                    row.name.c_str(), row.result.max_error, static_cast<long long>(row.result.coords_checked),
                    static_cast<long long>(row.result.coords_skipped), row.result.worst_param.c_str());
        worst = std::max(worst, row.result.max_error);
      }
      std::printf("overall max_rel_error = %.3e\n", worst);
      return worst <= 1e-4 ? 0 : 1;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
