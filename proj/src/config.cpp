#include "botinject/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>

namespace botinject {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  std::size_t used = 0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size() || v.empty()) throw std::invalid_argument(key + ": '" + v + "' is not a number");
  return out;
}

long long to_int(const std::string& key, const std::string& v) {
  long long out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw std::invalid_argument(key + ": '" + v + "' is not an integer");
  }
  return out;
}

long long to_nonneg(const std::string& key, const std::string& v) {
  const long long x = to_int(key, v);
  if (x < 0) throw std::invalid_argument(key + " must be non-negative");
  return x;
}

using Setter = std::function<void(ExperimentConfig&, const std::string&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"graph_file", [](auto& c, auto&, auto& v) { c.graph_file = v; }},
      {"synth_nodes", [](auto& c, auto& k, auto& v) { c.synth.nodes = to_nonneg(k, v); }},
      {"synth_bot_fraction", [](auto& c, auto& k, auto& v) { c.synth.bot_fraction = to_double(k, v); }},
      {"synth_avg_degree", [](auto& c, auto& k, auto& v) { c.synth.avg_degree = to_double(k, v); }},
      {"synth_homophily", [](auto& c, auto& k, auto& v) { c.synth.homophily = to_double(k, v); }},
      {"synth_bot_activity", [](auto& c, auto& k, auto& v) { c.synth.bot_activity = to_double(k, v); }},
      {"synth_text_dim", [](auto& c, auto& k, auto& v) { c.synth.text_dim = to_nonneg(k, v); }},
      {"graph_seed", [](auto& c, auto& k, auto& v) { c.synth.seed = static_cast<std::uint64_t>(to_nonneg(k, v)); }},
      {"dim", [](auto& c, auto& k, auto& v) { c.dim = to_nonneg(k, v); }},
      {"substitute", [](auto& c, auto&, auto& v) {
         c.substitute = parse_detector_kind(v);
         if (c.substitute != DetectorKind::SubstituteRgcn && c.substitute != DetectorKind::SubstituteGcn) {
           throw std::invalid_argument("substitute must be substitute-rgcn or substitute-gcn");
         }
       }},
      {"substitute_layers", [](auto& c, auto& k, auto& v) { c.substitute_layers = to_nonneg(k, v); }},
      {"victims", [](auto& c, auto&, auto& v) {
         c.victims.clear();
         for (const std::string& name : split_list(v)) {
           const DetectorKind kind = parse_detector_kind(name);
           if (kind != DetectorKind::VictimGcn && kind != DetectorKind::VictimBotRgcn) {
             throw std::invalid_argument("victims accepts victim-gcn and victim-botrgcn");
           }
           c.victims.push_back(kind);
         }
         if (c.victims.empty()) throw std::invalid_argument("victims: at least one victim is needed");
       }},
      {"victim_layers", [](auto& c, auto& k, auto& v) { c.victim_layers = to_nonneg(k, v); }},
      {"substitute_epochs", [](auto& c, auto& k, auto& v) { c.substitute_training.epochs = static_cast<int>(to_nonneg(k, v)); }},
      {"substitute_lr", [](auto& c, auto& k, auto& v) { c.substitute_training.lr = to_double(k, v); }},
      {"substitute_lambda", [](auto& c, auto& k, auto& v) { c.substitute_training.lambda = to_double(k, v); }},
      {"substitute_momentum", [](auto& c, auto& k, auto& v) { c.substitute_training.momentum = to_double(k, v); }},
      {"victim_epochs", [](auto& c, auto& k, auto& v) { c.victim_training.epochs = static_cast<int>(to_nonneg(k, v)); }},
      {"victim_lr", [](auto& c, auto& k, auto& v) { c.victim_training.lr = to_double(k, v); }},
      {"victim_lambda", [](auto& c, auto& k, auto& v) { c.victim_training.lambda = to_double(k, v); }},
      {"victim_momentum", [](auto& c, auto& k, auto& v) { c.victim_training.momentum = to_double(k, v); }},
      {"attack_epochs", [](auto& c, auto& k, auto& v) { c.attack.max_epochs = static_cast<int>(to_nonneg(k, v)); }},
      {"attack_patience", [](auto& c, auto& k, auto& v) { c.attack.patience = static_cast<int>(to_nonneg(k, v)); }},
      {"attack_batch", [](auto& c, auto& k, auto& v) { c.attack.batch_size = static_cast<int>(to_nonneg(k, v)); }},
      {"attack_lr", [](auto& c, auto& k, auto& v) { c.attack.lr = to_double(k, v); }},
      {"attack_momentum", [](auto& c, auto& k, auto& v) { c.attack.momentum = to_double(k, v); }},
      {"attack_validation", [](auto& c, auto&, auto& v) {
         if (v != "recovered" && v != "embedding") {
           throw std::invalid_argument("attack_validation must be recovered or embedding");
         }
         c.attack_validation = v;
       }},
      {"attack_objective", [](auto& c, auto&, auto& v) {
         if (v != "recovered" && v != "embedding") {
           throw std::invalid_argument("attack_objective must be recovered or embedding");
         }
         c.attack_objective = v;
       }},
      {"inverter_epochs", [](auto& c, auto& k, auto& v) { c.inverter.epochs = static_cast<int>(to_nonneg(k, v)); }},
      {"inverter_batch", [](auto& c, auto& k, auto& v) { c.inverter.batch_size = static_cast<int>(to_nonneg(k, v)); }},
      {"inverter_lr_start", [](auto& c, auto& k, auto& v) { c.inverter.lr_start = to_double(k, v); }},
      {"inverter_lr_end", [](auto& c, auto& k, auto& v) { c.inverter.lr_end = to_double(k, v); }},
      {"alpha", [](auto& c, auto& k, auto& v) { c.inverter.alpha = to_double(k, v); }},
      {"inverter_momentum", [](auto& c, auto& k, auto& v) { c.inverter.momentum = to_double(k, v); }},
      {"profile", [](auto& c, auto&, auto& v) {
         ConstraintProfile::named(v);
         c.profile = v;
       }},
      {"mode", [](auto& c, auto&, auto& v) { c.mode = parse_injection_mode(v); }},
      {"seeds", [](auto& c, auto& k, auto& v) {
         c.seeds.clear();
         for (const std::string& s : split_list(v)) c.seeds.push_back(static_cast<std::uint64_t>(to_nonneg(k, s)));
         if (c.seeds.empty()) throw std::invalid_argument("seeds: at least one seed is needed");
       }},
      {"max_targets", [](auto& c, auto& k, auto& v) { c.max_targets = to_nonneg(k, v); }},
      {"transfer_subgraph_size", [](auto& c, auto& k, auto& v) { c.transfer_subgraph_size = to_nonneg(k, v); }},
      {"transfer_source", [](auto& c, auto& k, auto& v) { c.transfer_source = to_nonneg(k, v); }},
      {"transfer_targets", [](auto& c, auto& k, auto& v) {
         c.transfer_targets.clear();
         for (const std::string& s : split_list(v)) c.transfer_targets.push_back(to_nonneg(k, s));
       }},
  };
  return table;
}

std::string fmt(double v) { return format_double(v); }

template <typename T, typename F>
std::string join(const std::vector<T>& items, F f) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i > 0) out += ",";
    out += f(items[i]);
  }
  return out;
}

}  // namespace

void apply_setting(ExperimentConfig& config, const std::string& key, const std::string& value) {
  const auto& table = setters();
  const auto it = table.find(key);
  if (it == table.end()) throw std::invalid_argument("unknown config key '" + key + "'");
  it->second(config, key, value);
}

ExperimentConfig parse_config(std::istream& is) {
  ExperimentConfig c;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected 'key = value'");
    }
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    try {
      apply_setting(c, key, value);
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read config " + path.string());
  return parse_config(is);
}

std::string ExperimentConfig::to_text() const {
  std::ostringstream os;
  auto line = [&os](const char* key, const std::string& value) { os << key << " = " << value << "\n"; };
  line("graph_file", graph_file);
  line("synth_nodes", std::to_string(synth.nodes));
  line("synth_bot_fraction", fmt(synth.bot_fraction));
  line("synth_avg_degree", fmt(synth.avg_degree));
  line("synth_homophily", fmt(synth.homophily));
  line("synth_bot_activity", fmt(synth.bot_activity));
  line("synth_text_dim", std::to_string(synth.text_dim));
  line("graph_seed", std::to_string(synth.seed));
  line("dim", std::to_string(dim));
  line("substitute", to_string(substitute));
  line("substitute_layers", std::to_string(substitute_layers));
  line("victims", join(victims, [](DetectorKind k) { return to_string(k); }));
  line("victim_layers", std::to_string(victim_layers));
  line("substitute_epochs", std::to_string(substitute_training.epochs));
  line("substitute_lr", fmt(substitute_training.lr));
  line("substitute_lambda", fmt(substitute_training.lambda));
  line("substitute_momentum", fmt(substitute_training.momentum));
  line("victim_epochs", std::to_string(victim_training.epochs));
  line("victim_lr", fmt(victim_training.lr));
  line("victim_lambda", fmt(victim_training.lambda));
  line("victim_momentum", fmt(victim_training.momentum));
  line("attack_epochs", std::to_string(attack.max_epochs));
  line("attack_patience", std::to_string(attack.patience));
  line("attack_batch", std::to_string(attack.batch_size));
  line("attack_lr", fmt(attack.lr));
  line("attack_momentum", fmt(attack.momentum));
  line("attack_validation", attack_validation);
  line("attack_objective", attack_objective);
  line("inverter_epochs", std::to_string(inverter.epochs));
  line("inverter_batch", std::to_string(inverter.batch_size));
  line("inverter_lr_start", fmt(inverter.lr_start));
  line("inverter_lr_end", fmt(inverter.lr_end));
  line("alpha", fmt(inverter.alpha));
  line("inverter_momentum", fmt(inverter.momentum));
  line("profile", profile);
  line("mode", to_string(mode));
  line("seeds", join(seeds, [](std::uint64_t s) { return std::to_string(s); }));
  line("max_targets", std::to_string(max_targets));
  line("transfer_subgraph_size", std::to_string(transfer_subgraph_size));
  line("transfer_source", std::to_string(transfer_source));
  line("transfer_targets", join(transfer_targets, [](Index i) { return std::to_string(i); }));
  return os.str();
}

}  // namespace botinject
