#pragma once

#include "motifrep/eval_harness.hpp"
#include "motifrep/graph.hpp"

#include <json.hpp>

#include <cstdint>

namespace motifrep {

/// G(n, p) with optional standard-normal node features of width `feature_dim`.
Graph erdos_renyi(std::size_t n, double edge_prob, std::uint64_t seed, int feature_dim = 0);

Graph path_graph(std::size_t n);
Graph cycle_graph(std::size_t n);
Graph star_graph(std::size_t leaves);
Graph complete_graph(std::size_t n);

struct PlantedTaskConfig {
  std::size_t num_nodes = 2000;
  int k = 3;
  int num_planted = 600;           // disjoint planted k-cliques
  double background_degree = 1.0;  // mean degree of the G(n, p) background
  int background_cliques = 1000;   // unplanted k-cliques with independent features
  int feature_dim = 8;
  double feature_noise = 0.3;      // spread of a planted member around its clique center
  double test_fraction = 0.5;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
};

struct PlantedTask {
  Graph graph;
  KSetTask task;  // label 1: planted clique; label 0: other connected k-set
};

/// Background G(n, p) plus extra k-cliques, then `num_planted` disjoint
/// k-cliques whose members share a random center feature vector (member
/// features are rescaled so every node is marginally standard normal).
/// Negatives are drawn uniformly without replacement from the enumerated
/// connected k-sets that are not planted, one per positive. Each label is
/// split train/test independently.
PlantedTask make_planted_task(const PlantedTaskConfig& cfg);

}  // namespace motifrep
