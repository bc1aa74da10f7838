#include "motifrep/synthetic.hpp"

#include "motifrep/error.hpp"
#include "motifrep/motif_space.hpp"
#include "motifrep/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <unordered_set>

namespace motifrep {

namespace {

using EdgeList = std::vector<std::pair<NodeId, NodeId>>;

FeatureMatrix normal_features(std::size_t n, int p, Rng& rng) {
  FeatureMatrix x(static_cast<Eigen::Index>(n), p);
  std::normal_distribution<double> normal;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < p; ++j) x(i, j) = normal(rng);
  }
  return x;
}

void gnp_edges(std::size_t n, double p, Rng& rng, EdgeList& edges) {
  for (NodeId u = 0; u < n; ++u) {
    for (NodeId v = u + 1; v < n; ++v) {
      if (uniform_unit(rng) < p) edges.emplace_back(u, v);
    }
  }
}

void add_clique(std::span<const NodeId> members, EdgeList& edges) {
  for (std::size_t i = 0; i < members.size(); ++i) {
    for (std::size_t j = i + 1; j < members.size(); ++j) edges.emplace_back(members[i], members[j]);
  }
}

// k distinct nodes, uniformly
std::vector<NodeId> draw_distinct(std::size_t n, int k, Rng& rng) {
  std::vector<NodeId> out;
  while (out.size() < static_cast<std::size_t>(k)) {
    const auto v = static_cast<NodeId>(uniform_index(rng, n));
    if (std::find(out.begin(), out.end(), v) == out.end()) out.push_back(v);
  }
  return out;
}

}  // namespace

Graph erdos_renyi(std::size_t n, double edge_prob, std::uint64_t seed, int feature_dim) {
  if (edge_prob < 0.0 || edge_prob > 1.0) throw ValidationError("edge probability must lie in [0, 1]");
  if (feature_dim < 0) throw ValidationError("feature_dim must be non-negative");
  Rng rng = make_rng(seed, 0);
  EdgeList edges;
  gnp_edges(n, edge_prob, rng, edges);
  FeatureMatrix x = feature_dim > 0 ? normal_features(n, feature_dim, rng) : FeatureMatrix{};
  return Graph(n, edges, std::move(x));
}

Graph path_graph(std::size_t n) {
  EdgeList edges;
  for (NodeId v = 1; v < n; ++v) edges.emplace_back(v - 1, v);
  return Graph(n, edges);
}

Graph cycle_graph(std::size_t n) {
  if (n < 3) throw ValidationError("a cycle needs at least 3 nodes");
  EdgeList edges;
  for (NodeId v = 0; v < n; ++v) edges.emplace_back(v, static_cast<NodeId>((v + 1) % n));
  return Graph(n, edges);
}

Graph star_graph(std::size_t leaves) {
  EdgeList edges;
  for (NodeId v = 1; v <= leaves; ++v) edges.emplace_back(0, v);
  return Graph(leaves + 1, edges);
}

Graph complete_graph(std::size_t n) {
  EdgeList edges;
  for (NodeId u = 0; u < n; ++u) {
    for (NodeId v = u + 1; v < n; ++v) edges.emplace_back(u, v);
  }
  return Graph(n, edges);
}

void PlantedTaskConfig::validate() const {
  if (k < 2 || k > kMaxK) throw ValidationError("planted task: k must lie in [2, " + std::to_string(kMaxK) + "]");
  if (num_planted < 2) throw ValidationError("planted task: num_planted must be at least 2");
  if (static_cast<std::size_t>(num_planted) * static_cast<std::size_t>(k) > num_nodes) {
    throw ValidationError("planted task: num_planted * k exceeds num_nodes");
  }
  if (background_degree < 0.0 || background_degree >= static_cast<double>(num_nodes)) {
    throw ValidationError("planted task: background_degree out of range");
  }
  if (background_cliques < 0) throw ValidationError("planted task: background_cliques must be non-negative");
  if (feature_dim < 1) throw ValidationError("planted task: feature_dim must be positive");
  if (!(feature_noise >= 0.0)) throw ValidationError("planted task: feature_noise must be non-negative");
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ValidationError("planted task: test_fraction must lie in (0, 1)");
}

nlohmann::json PlantedTaskConfig::to_json() const {
  return {{"num_nodes", num_nodes},
          {"k", k},
          {"num_planted", num_planted},
          {"background_degree", background_degree},
          {"background_cliques", background_cliques},
          {"feature_dim", feature_dim},
          {"feature_noise", feature_noise},
          {"test_fraction", test_fraction},
          {"seed", seed}};
}

PlantedTask make_planted_task(const PlantedTaskConfig& cfg) {
  cfg.validate();
  const std::size_t n = cfg.num_nodes;
  Rng rng = make_rng(cfg.seed, 0, 0x7a5c);

  EdgeList edges;
  gnp_edges(n, cfg.background_degree / static_cast<double>(n - 1), rng, edges);
  for (int c = 0; c < cfg.background_cliques; ++c) add_clique(draw_distinct(n, cfg.k, rng), edges);

  FeatureMatrix x = normal_features(n, cfg.feature_dim, rng);

  // planted cliques on disjoint members
  std::vector<NodeId> perm(n);
  for (NodeId v = 0; v < n; ++v) perm[v] = v;
  for (std::size_t i = n - 1; i > 0; --i) std::swap(perm[i], perm[uniform_index(rng, i + 1)]);
  std::vector<KSet> planted;
  const double scale = 1.0 / std::sqrt(1.0 + cfg.feature_noise * cfg.feature_noise);
  const FeatureMatrix centers = normal_features(static_cast<std::size_t>(cfg.num_planted), cfg.feature_dim, rng);
  for (int c = 0; c < cfg.num_planted; ++c) {
    std::span<const NodeId> members(perm.data() + static_cast<std::size_t>(c) * static_cast<std::size_t>(cfg.k),
                                    static_cast<std::size_t>(cfg.k));
    add_clique(members, edges);
    for (NodeId v : members) x.row(v) = scale * (centers.row(c) + cfg.feature_noise * x.row(v));
    planted.emplace_back(members);
  }

  PlantedTask out;
  out.graph = Graph(n, edges, std::move(x));

  std::unordered_set<KSet, KSetHash> planted_set(planted.begin(), planted.end());
  std::vector<KSet> pool;
  for_each_cis(out.graph, cfg.k, [&](const KSet& s) {
    if (!planted_set.count(s)) pool.push_back(s);
  });
  if (pool.size() < planted.size()) throw ConstructionError("planted task: too few connected k-sets for negatives");
  // partial Fisher-Yates: first num_planted entries are a uniform sample
  for (std::size_t i = 0; i < planted.size(); ++i) std::swap(pool[i], pool[i + uniform_index(rng, pool.size() - i)]);

  auto split = [&](void) { return uniform_unit(rng) < cfg.test_fraction ? Split::test : Split::train; };
  out.task.k = cfg.k;
  for (const auto& s : planted) out.task.examples.push_back({s, 1, split()});
  for (std::size_t i = 0; i < planted.size(); ++i) out.task.examples.push_back({pool[i], 0, split()});
  std::sort(out.task.examples.begin(), out.task.examples.end(),
            [](const LabeledKSet& a, const LabeledKSet& b) { return a.nodes < b.nodes; });
  validate_task(out.task, out.graph);
  return out;
}

}  // namespace motifrep
