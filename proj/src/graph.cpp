#include "botinject/graph.hpp"

#include "botinject/checkpoint.hpp"
#include "botinject/random.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <queue>
#include <set>
#include <sstream>
#include <stdexcept>
#include <tuple>

namespace botinject {

const char* numerical_feature_name(int feature) {
  static constexpr const char* kNames[kNumNumerical] = {"followers", "active_days",
                                                        "screen_name_length", "followings",
                                                        "status"};
  if (feature < 0 || feature >= kNumNumerical) return "?";
  return kNames[feature];
}

bool UserAttributes::identical_to(const UserAttributes& other) const {
  auto same_bits = [](const Vector& a, const Vector& b) {
    return a.size() == b.size() &&
           std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
  };
  return same_bits(desc, other.desc) && same_bits(tweet, other.tweet) &&
         std::memcmp(numerical.data(), other.numerical.data(), sizeof numerical) == 0 &&
         categorical == other.categorical;
}

// ---------------------------------------------------------------------------

SocialGraph::SocialGraph(Index text_dim, std::vector<UserAttributes> attrs,
                         std::vector<Label> labels, std::vector<Edge> edges,
                         std::vector<Split> splits)
    : text_dim_(text_dim),
      attrs_(std::move(attrs)),
      labels_(std::move(labels)),
      edges_(std::move(edges)),
      splits_(std::move(splits)) {
  if (attrs_.empty()) throw std::invalid_argument("empty graph");
  if (text_dim_ <= 0) throw std::invalid_argument("text dimension must be positive");
  if (labels_.size() != attrs_.size() || splits_.size() != attrs_.size()) {
    throw std::invalid_argument("attribute, label and split counts differ");
  }
  const Index k = size();
  for (Index v = 0; v < k; ++v) {
    const UserAttributes& a = attrs_[static_cast<std::size_t>(v)];
    if (a.desc.size() != text_dim_ || a.tweet.size() != text_dim_) {
      throw std::invalid_argument("node " + std::to_string(v) + ": text vector length differs from ds=" +
                                  std::to_string(text_dim_));
    }
    if (!a.desc.allFinite() || !a.tweet.allFinite()) {
      throw std::invalid_argument("node " + std::to_string(v) + ": non-finite text vector");
    }
    for (double x : a.numerical) {
      if (!std::isfinite(x) || x < 0.0) {
        throw std::invalid_argument("node " + std::to_string(v) +
                                    ": numerical values must be finite and >= 0");
      }
    }
  }
  std::set<std::tuple<Index, Index, int>> seen;
  for (auto& lists : adjacency_) lists.assign(static_cast<std::size_t>(k), {});
  for (const Edge& e : edges_) {
    if (e.src < 0 || e.src >= k || e.dst < 0 || e.dst >= k) {
      throw std::invalid_argument("dangling edge endpoint (" + std::to_string(e.src) + "," +
                                  std::to_string(e.dst) + ") for k=" + std::to_string(k));
    }
    if (e.src == e.dst) {
      throw std::invalid_argument("self-loop on node " + std::to_string(e.src));
    }
    if (!seen.emplace(e.src, e.dst, static_cast<int>(e.relation)).second) {
      throw std::invalid_argument("duplicate edge (" + std::to_string(e.src) + "," +
                                  std::to_string(e.dst) + ")");
    }
    auto& rel = adjacency_[static_cast<std::size_t>(e.relation)];
    auto& any = adjacency_[static_cast<std::size_t>(Neighborhood::Any)];
    rel[static_cast<std::size_t>(e.src)].push_back(e.dst);
    rel[static_cast<std::size_t>(e.dst)].push_back(e.src);
    any[static_cast<std::size_t>(e.src)].push_back(e.dst);
    any[static_cast<std::size_t>(e.dst)].push_back(e.src);
  }
  for (auto& lists : adjacency_) {
    for (auto& l : lists) {
      std::sort(l.begin(), l.end());
      l.erase(std::unique(l.begin(), l.end()), l.end());
    }
  }
}

void SocialGraph::check_node(Index v) const {
  if (v < 0 || v >= size()) throw std::out_of_range("unknown node id " + std::to_string(v));
}

const UserAttributes& SocialGraph::attributes(Index v) const {
  check_node(v);
  return attrs_[static_cast<std::size_t>(v)];
}

Label SocialGraph::label(Index v) const {
  check_node(v);
  return labels_[static_cast<std::size_t>(v)];
}

Split SocialGraph::split(Index v) const {
  check_node(v);
  return splits_[static_cast<std::size_t>(v)];
}

std::vector<Index> SocialGraph::mask(Split s) const {
  std::vector<Index> out;
  for (Index v = 0; v < size(); ++v) {
    if (splits_[static_cast<std::size_t>(v)] == s) out.push_back(v);
  }
  return out;
}

std::span<const Index> SocialGraph::neighbors(Index v, Neighborhood which) const {
  check_node(v);
  return adjacency_[static_cast<std::size_t>(which)][static_cast<std::size_t>(v)];
}

std::vector<Index> SocialGraph::first_order_neighbors(Index v) const {
  auto n = neighbors(v, Neighborhood::Any);
  return {n.begin(), n.end()};
}

SocialGraph SocialGraph::with_injected(UserAttributes attrs, Label label, Edge edge) const {
  auto a = attrs_;
  auto l = labels_;
  auto e = edges_;
  auto s = splits_;
  a.push_back(std::move(attrs));
  l.push_back(label);
  s.push_back(Split::None);
  e.push_back(edge);
  return SocialGraph(text_dim_, std::move(a), std::move(l), std::move(e), std::move(s));
}

SocialGraph SocialGraph::with_splits(std::vector<Split> splits) const {
  return SocialGraph(text_dim_, attrs_, labels_, edges_, std::move(splits));
}

std::shared_ptr<const SparseMatrix> mean_aggregation(const SocialGraph& g, Neighborhood which) {
  const Index k = g.size();
  std::vector<Eigen::Triplet<double>> trips;
  for (Index i = 0; i < k; ++i) {
    auto nb = g.neighbors(i, which);
    if (nb.empty()) continue;
    const double w = 1.0 / static_cast<double>(nb.size());
    for (Index j : nb) trips.emplace_back(i, j, w);
  }
  auto m = std::make_shared<SparseMatrix>(k, k);
  m->setFromTriplets(trips.begin(), trips.end());
  return m;
}

// --- file format ------------------------------------------------------------

namespace {

const char* split_name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
    case Split::None: break;
  }
  return "none";
}

[[noreturn]] void parse_error(int lineno, const std::string& what) {
  throw std::runtime_error("graph line " + std::to_string(lineno) + ": " + what);
}

double parse_number(const std::string& tok, int lineno) {
  char* end = nullptr;
  const double v = std::strtod(tok.c_str(), &end);
  if (tok.empty() || end == tok.c_str() || *end != '\0') {
    parse_error(lineno, "bad number '" + tok + "'");
  }
  return v;
}

Index parse_id(const std::string& tok, int lineno) {
  if (tok.empty() || tok.find_first_not_of("0123456789") != std::string::npos) {
    parse_error(lineno, "bad node id '" + tok + "'");
  }
  return std::stol(tok);
}

}  // namespace

std::string format_node_line(Index id, Label label, const UserAttributes& a) {
  std::ostringstream os;
  os << "N " << id << ' ' << (label == Label::Bot ? 'B' : 'H');
  for (double x : a.numerical) os << ' ' << format_double(x);
  for (bool b : a.categorical) os << ' ' << (b ? 1 : 0);
  for (Index i = 0; i < a.desc.size(); ++i) os << ' ' << format_double(a.desc(i));
  for (Index i = 0; i < a.tweet.size(); ++i) os << ' ' << format_double(a.tweet(i));
  return os.str();
}

std::string format_edge_line(const Edge& e) {
  std::ostringstream os;
  os << "E " << e.src << ' ' << e.dst << ' ' << (e.relation == Relation::Friend ? 'F' : 'O');
  return os.str();
}

void write_graph(std::ostream& os, const SocialGraph& g) {
  os << "k=" << g.size() << " ds=" << g.text_dim() << '\n';
  for (Index v = 0; v < g.size(); ++v) {
    os << format_node_line(v, g.label(v), g.attributes(v)) << '\n';
  }
  for (const Edge& e : g.edges()) os << format_edge_line(e) << '\n';
  for (Index v = 0; v < g.size(); ++v) {
    if (g.split(v) != Split::None) os << "M " << v << ' ' << split_name(g.split(v)) << '\n';
  }
}

SocialGraph read_graph(std::istream& is) {
  std::string line;
  int lineno = 0;
  Index k = -1;
  Index ds = -1;
  while (k < 0 && std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream hs(line);
    std::string a, b;
    if (!(hs >> a >> b) || a.rfind("k=", 0) != 0 || b.rfind("ds=", 0) != 0) {
      parse_error(lineno, "expected header 'k=<int> ds=<int>'");
    }
    k = parse_id(a.substr(2), lineno);
    ds = parse_id(b.substr(3), lineno);
  }
  if (k < 0) throw std::runtime_error("graph file: missing header");
  if (k == 0) throw std::runtime_error("empty graph");
  if (ds <= 0) parse_error(lineno, "ds must be positive");

  std::vector<UserAttributes> attrs(static_cast<std::size_t>(k));
  std::vector<Label> labels(static_cast<std::size_t>(k), Label::Human);
  std::vector<Split> splits(static_cast<std::size_t>(k), Split::None);
  std::vector<bool> have_node(static_cast<std::size_t>(k), false);
  std::vector<bool> have_mask(static_cast<std::size_t>(k), false);
  std::vector<Edge> edges;

  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::vector<std::string> tok;
    for (std::string t; ls >> t;) tok.push_back(std::move(t));
    if (tok.empty()) continue;
    const std::string& kind = tok[0];
    if (kind == "N") {
      const std::size_t want = 3 + kNumNumerical + kNumCategorical + 2 * static_cast<std::size_t>(ds);
      if (tok.size() != want) {
        parse_error(lineno, "node line has " + std::to_string(tok.size()) + " fields, expected " +
                                std::to_string(want) + " (wrong vector length?)");
      }
      const Index id = parse_id(tok[1], lineno);
      if (id >= k) parse_error(lineno, "node id " + tok[1] + " outside [0, k)");
      if (have_node[static_cast<std::size_t>(id)]) parse_error(lineno, "duplicate node id " + tok[1]);
      have_node[static_cast<std::size_t>(id)] = true;
      if (tok[2] != "H" && tok[2] != "B") parse_error(lineno, "label must be H or B");
      labels[static_cast<std::size_t>(id)] = tok[2] == "B" ? Label::Bot : Label::Human;
      UserAttributes& a = attrs[static_cast<std::size_t>(id)];
      std::size_t at = 3;
      for (auto& x : a.numerical) x = parse_number(tok[at++], lineno);
      for (auto&& c : a.categorical) {
        if (tok[at] != "0" && tok[at] != "1") parse_error(lineno, "boolean must be 0 or 1");
        c = tok[at++] == "1";
      }
      a.desc.resize(ds);
      a.tweet.resize(ds);
      for (Index i = 0; i < ds; ++i) a.desc(i) = parse_number(tok[at++], lineno);
      for (Index i = 0; i < ds; ++i) a.tweet(i) = parse_number(tok[at++], lineno);
    } else if (kind == "E") {
      if (tok.size() != 4) parse_error(lineno, "edge line needs 'E <src> <dst> <F|O>'");
      Edge e;
      e.src = parse_id(tok[1], lineno);
      e.dst = parse_id(tok[2], lineno);
      if (tok[3] == "F") {
        e.relation = Relation::Friend;
      } else if (tok[3] == "O") {
        e.relation = Relation::Follow;
      } else {
        parse_error(lineno, "relation must be F or O");
      }
      if (e.src >= k || e.dst >= k) {
        parse_error(lineno, "dangling edge endpoint (" + tok[1] + "," + tok[2] +
                                ") for k=" + std::to_string(k));
      }
      edges.push_back(e);
    } else if (kind == "M") {
      if (tok.size() != 3) parse_error(lineno, "mask line needs 'M <id> <train|val|test>'");
      const Index id = parse_id(tok[1], lineno);
      if (id >= k) parse_error(lineno, "mask id outside [0, k)");
      if (have_mask[static_cast<std::size_t>(id)]) parse_error(lineno, "node in two masks");
      have_mask[static_cast<std::size_t>(id)] = true;
      Split s = Split::None;
      if (tok[2] == "train") s = Split::Train;
      else if (tok[2] == "val") s = Split::Val;
      else if (tok[2] == "test") s = Split::Test;
      else parse_error(lineno, "unknown mask '" + tok[2] + "'");
      splits[static_cast<std::size_t>(id)] = s;
    } else {
      parse_error(lineno, "unknown record type '" + kind + "'");
    }
  }
  for (Index v = 0; v < k; ++v) {
    if (!have_node[static_cast<std::size_t>(v)]) {
      throw std::runtime_error("graph file: node " + std::to_string(v) + " missing");
    }
  }
  try {
    return SocialGraph(ds, std::move(attrs), std::move(labels), std::move(edges), std::move(splits));
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(std::string("graph file: ") + e.what());
  }
}

void save_graph(const std::filesystem::path& path, const SocialGraph& g) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  write_graph(os, g);
}

SocialGraph load_graph(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read " + path.string());
  return read_graph(is);
}

// --- generation and sampling -----------------------------------------------

std::vector<Split> stratified_split(std::span<const Label> labels, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "split"));
  std::vector<Split> out(labels.size(), Split::None);
  for (Label cls : {Label::Human, Label::Bot}) {
    std::vector<Index> members;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] == cls) members.push_back(static_cast<Index>(i));
    }
    rng.shuffle(members.begin(), members.end());
    const auto n = members.size();
    const auto n_train = static_cast<std::size_t>(std::llround(0.70 * static_cast<double>(n)));
    const auto n_val = static_cast<std::size_t>(std::llround(0.15 * static_cast<double>(n)));
    for (std::size_t i = 0; i < n; ++i) {
      Split s = i < n_train ? Split::Train : (i < n_train + n_val ? Split::Val : Split::Test);
      out[static_cast<std::size_t>(members[i])] = s;
    }
  }
  return out;
}

namespace {

// Class-conditional attribute distributions. Humans sit near the Cresci-2015
// population statistics; bots have fewer followers and lists, follow more
// accounts and more often keep the default avatar. Text vectors are shifted
// along a fixed class direction in opposite senses.
struct ClassModel {
  double log_followers_mean;
  double active_days_mean;
  double screen_name_mean;
  double followings_mean;
  double followings_std;
  double status_mean;
  double status_std;
  double p_protected;
  double p_verified;
  double p_default_image;
  double text_shift;
};

constexpr ClassModel kHumanModel{5.5, 3200.0, 11.0, 386.0, 300.0, 6.0, 5.0, 0.10, 0.30, 0.05, 0.0};
constexpr ClassModel kBotModel{3.0, 3200.0, 12.0, 386.0, 500.0, 1.0, 1.5, 0.05, 0.02, 0.35, 2.0};

Vector unit_direction(Index ds, Rng& rng) {
  Vector d(ds);
  for (Index i = 0; i < ds; ++i) d(i) = rng.normal();
  return d / d.norm();
}

UserAttributes draw_user(const ClassModel& m, const Vector& desc_dir, const Vector& tweet_dir,
                         Rng& rng) {
  const Index ds = desc_dir.size();
  UserAttributes a;
  a.desc.resize(ds);
  a.tweet.resize(ds);
  for (Index i = 0; i < ds; ++i) a.desc(i) = rng.normal() + m.text_shift * desc_dir(i);
  for (Index i = 0; i < ds; ++i) a.tweet(i) = rng.normal() + m.text_shift * tweet_dir(i);

  a.numerical[kFollowers] = std::round(std::exp(rng.normal(m.log_followers_mean, 1.2)));
  a.numerical[kActiveDays] = std::max(1.0, std::round(rng.normal(m.active_days_mean, 450.0)));
  a.numerical[kScreenNameLength] =
      std::clamp(std::round(rng.normal(m.screen_name_mean, 3.0)), 1.0, 15.0);
  a.numerical[kFollowings] = std::max(0.0, std::round(rng.normal(m.followings_mean, m.followings_std)));
  a.numerical[kStatus] = std::round(std::abs(rng.normal(m.status_mean, m.status_std)));

  a.categorical[kProtected] = rng.bernoulli(m.p_protected);
  a.categorical[kVerified] = rng.bernoulli(m.p_verified);
  a.categorical[kDefaultProfileImage] = rng.bernoulli(m.p_default_image);
  return a;
}

}  // namespace

SocialGraph synth_graph(const SynthOptions& o) {
  if (o.nodes < 10) throw std::invalid_argument("synth_graph: need at least 10 nodes");
  if (!(o.bot_fraction > 0.0 && o.bot_fraction < 1.0)) {
    throw std::invalid_argument("synth_graph: bot_fraction must lie in (0, 1)");
  }
  if (!(o.avg_degree >= 0.0) || o.avg_degree > static_cast<double>(o.nodes - 1)) {
    throw std::invalid_argument("synth_graph: avg_degree must lie in [0, n-1]");
  }
  if (!(o.homophily >= 0.0 && o.homophily <= 1.0)) {
    throw std::invalid_argument("synth_graph: homophily must lie in [0, 1]");
  }
  if (o.text_dim <= 0) throw std::invalid_argument("synth_graph: text_dim must be positive");
  if (!(o.bot_activity > 0.0 && o.bot_activity <= 1.0)) {
    throw std::invalid_argument("synth_graph: bot_activity must lie in (0, 1]");
  }

  Rng rng(derive_seed(o.seed, "synth"));
  const auto n = static_cast<std::size_t>(o.nodes);
  const auto n_bots = static_cast<std::size_t>(std::llround(o.bot_fraction * static_cast<double>(n)));

  std::vector<Label> labels(n, Label::Human);
  std::fill(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(n_bots), Label::Bot);
  rng.shuffle(labels.begin(), labels.end());

  const Vector desc_dir = unit_direction(o.text_dim, rng);
  const Vector tweet_dir = unit_direction(o.text_dim, rng);
  std::vector<UserAttributes> attrs;
  attrs.reserve(n);
  for (Label l : labels) {
    attrs.push_back(draw_user(l == Label::Bot ? kBotModel : kHumanModel, desc_dir, tweet_dir, rng));
  }

  std::array<std::vector<Index>, 2> by_class;
  for (std::size_t i = 0; i < n; ++i) by_class[static_cast<std::size_t>(labels[i])].push_back(static_cast<Index>(i));

  const auto n_edges = static_cast<std::size_t>(std::llround(o.avg_degree * static_cast<double>(n) / 2.0));
  std::set<std::pair<Index, Index>> used;
  std::vector<Edge> edges;
  edges.reserve(n_edges);
  const double bots = static_cast<double>(by_class[1].size());
  const double humans = static_cast<double>(by_class[0].size());
  const double p_bot_source = o.bot_activity * bots / (o.bot_activity * bots + humans);
  std::size_t attempts = 0;
  while (edges.size() < n_edges && attempts < 100 * n_edges + 100) {
    ++attempts;
    const std::size_t cu = rng.bernoulli(p_bot_source) ? 1 : 0;
    if (by_class[cu].empty()) continue;
    const Index u = by_class[cu][rng.below(by_class[cu].size())];
    const std::size_t cv = rng.bernoulli(o.homophily) ? cu : 1 - cu;
    if (cv == 1 && cu == 0 && !rng.bernoulli(o.bot_activity)) continue;
    const auto& pool = by_class[cv];
    if (pool.empty()) continue;
    const Index v = pool[rng.below(pool.size())];
    if (u == v) continue;
    if (!used.emplace(std::min(u, v), std::max(u, v)).second) continue;
    const Relation r = rng.bernoulli(0.5) ? Relation::Friend : Relation::Follow;
    if (rng.bernoulli(0.5)) {
      edges.push_back({u, v, r});
    } else {
      edges.push_back({v, u, r});
    }
  }

  auto splits = stratified_split(labels, o.seed);
  return SocialGraph(o.text_dim, std::move(attrs), std::move(labels), std::move(edges),
                     std::move(splits));
}

SocialGraph induced_subgraph(const SocialGraph& g, std::span<const Index> keep) {
  std::vector<Index> remap(static_cast<std::size_t>(g.size()), -1);
  std::vector<UserAttributes> attrs;
  std::vector<Label> labels;
  std::vector<Split> splits;
  for (std::size_t i = 0; i < keep.size(); ++i) {
    const Index v = keep[i];
    if (i > 0 && keep[i - 1] >= v) throw std::invalid_argument("induced_subgraph: ids must be sorted");
    remap[static_cast<std::size_t>(v)] = static_cast<Index>(i);
    attrs.push_back(g.attributes(v));
    labels.push_back(g.label(v));
    splits.push_back(g.split(v));
  }
  std::vector<Edge> edges;
  for (const Edge& e : g.edges()) {
    const Index s = remap[static_cast<std::size_t>(e.src)];
    const Index d = remap[static_cast<std::size_t>(e.dst)];
    if (s >= 0 && d >= 0) edges.push_back({s, d, e.relation});
  }
  return SocialGraph(g.text_dim(), std::move(attrs), std::move(labels), std::move(edges),
                     std::move(splits));
}

SocialGraph sample_subgraph(const SocialGraph& g, Index target_size, std::uint64_t seed) {
  if (target_size < 10) throw std::invalid_argument("sample_subgraph: target_size must be >= 10");
  if (target_size > g.size()) {
    throw std::invalid_argument("sample_subgraph: target_size exceeds the graph");
  }
  Rng rng(derive_seed(seed, "subgraph"));
  std::vector<bool> taken(static_cast<std::size_t>(g.size()), false);
  std::vector<Index> chosen;
  chosen.reserve(static_cast<std::size_t>(target_size));
  std::queue<Index> frontier;
  while (static_cast<Index>(chosen.size()) < target_size) {
    if (frontier.empty()) {
      std::vector<Index> free;
      for (Index v = 0; v < g.size(); ++v) {
        if (!taken[static_cast<std::size_t>(v)]) free.push_back(v);
      }
      const Index start = free[rng.below(free.size())];
      taken[static_cast<std::size_t>(start)] = true;
      chosen.push_back(start);
      frontier.push(start);
      continue;
    }
    const Index u = frontier.front();
    frontier.pop();
    for (Index w : g.neighbors(u, Neighborhood::Any)) {
      if (static_cast<Index>(chosen.size()) >= target_size) break;
      if (taken[static_cast<std::size_t>(w)]) continue;
      taken[static_cast<std::size_t>(w)] = true;
      chosen.push_back(w);
      frontier.push(w);
    }
  }
  std::sort(chosen.begin(), chosen.end());
  SocialGraph sub = induced_subgraph(g, chosen);
  std::vector<Label> labels(sub.labels().begin(), sub.labels().end());
  return sub.with_splits(stratified_split(labels, seed));
}

std::vector<Index> k_hop_ball(const SocialGraph& g, std::span<const Index> seeds, int hops) {
  std::vector<int> dist(static_cast<std::size_t>(g.size()), -1);
  std::queue<Index> q;
  for (Index s : seeds) {
    if (s < 0 || s >= g.size()) throw std::out_of_range("k_hop_ball: unknown node");
    if (dist[static_cast<std::size_t>(s)] < 0) {
      dist[static_cast<std::size_t>(s)] = 0;
      q.push(s);
    }
  }
  while (!q.empty()) {
    const Index u = q.front();
    q.pop();
    const int du = dist[static_cast<std::size_t>(u)];
    if (du >= hops) continue;
    for (Index w : g.neighbors(u, Neighborhood::Any)) {
      if (dist[static_cast<std::size_t>(w)] < 0) {
        dist[static_cast<std::size_t>(w)] = du + 1;
        q.push(w);
      }
    }
  }
  std::vector<Index> out;
  for (Index v = 0; v < g.size(); ++v) {
    if (dist[static_cast<std::size_t>(v)] >= 0) out.push_back(v);
  }
  return out;
}

std::string single_injection_violation(const SocialGraph& before, const SocialGraph& after) {
  const Index k = before.size();
  if (after.size() != k + 1) {
    return "node count " + std::to_string(after.size()) + " != " + std::to_string(k + 1);
  }
  if (after.edges().size() != before.edges().size() + 1) {
    return "edge count " + std::to_string(after.edges().size()) + " != " +
           std::to_string(before.edges().size() + 1);
  }
  if (after.text_dim() != before.text_dim()) return "text dimension changed";
  for (Index v = 0; v < k; ++v) {
    if (!after.attributes(v).identical_to(before.attributes(v))) {
      return "attributes of node " + std::to_string(v) + " changed";
    }
    if (after.label(v) != before.label(v)) return "label of node " + std::to_string(v) + " changed";
    if (after.split(v) != before.split(v)) return "split of node " + std::to_string(v) + " changed";
  }
  for (std::size_t i = 0; i < before.edges().size(); ++i) {
    if (!(after.edges()[i] == before.edges()[i])) return "edge " + std::to_string(i) + " changed";
  }
  const Edge& e = after.edges().back();
  if (e.src != k && e.dst != k) return "new edge does not touch the injected node";
  return {};
}

}  // namespace botinject
