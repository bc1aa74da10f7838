#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <compare>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace motifrep {

using NodeId = std::uint32_t;
using FeatureMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Largest motif size supported by the fixed-capacity node set.
inline constexpr int kMaxK = 16;

/// Sorted set of at most kMaxK node ids, stored inline. Ordering is
/// lexicographic on the sorted tuple, which is the canonical identity of a
/// k-node set everywhere in the library.
class KSet {
 public:
  KSet() = default;
  KSet(std::initializer_list<NodeId> nodes);
  explicit KSet(std::span<const NodeId> nodes);

  int size() const noexcept { return size_; }
  bool empty() const noexcept { return size_ == 0; }
  NodeId operator[](int i) const noexcept { return nodes_[static_cast<std::size_t>(i)]; }
  const NodeId* begin() const noexcept { return nodes_.data(); }
  const NodeId* end() const noexcept { return nodes_.data() + size_; }
  std::span<const NodeId> view() const noexcept { return {nodes_.data(), static_cast<std::size_t>(size_)}; }

  bool contains(NodeId v) const noexcept { return std::binary_search(begin(), end(), v); }

  /// Returns a copy with member at position `pos` replaced by `w` (re-sorted).
  KSet replaced(int pos, NodeId w) const;

  friend bool operator==(const KSet& a, const KSet& b) noexcept {
    return a.size_ == b.size_ && std::equal(a.begin(), a.end(), b.begin());
  }
  friend std::strong_ordering operator<=>(const KSet& a, const KSet& b) noexcept {
    return std::lexicographical_compare_three_way(a.begin(), a.end(), b.begin(), b.end());
  }

  std::string to_string() const;

 private:
  std::array<NodeId, kMaxK> nodes_{};
  int size_ = 0;
};

struct KSetHash {
  std::size_t operator()(const KSet& s) const noexcept;
};

/// Undirected simple graph with dense node features. Immutable after
/// construction; safe for concurrent reads.
class Graph {
 public:
  Graph() = default;

  /// Builds from an edge list over nodes 0..n-1. Self-loops and duplicate
  /// edges are dropped. `features` must have n rows (or zero rows and zero
  /// columns for a featureless graph).
  Graph(std::size_t n, std::span<const std::pair<NodeId, NodeId>> edges, FeatureMatrix features = {},
        std::vector<std::string> node_ids = {});

  std::size_t num_nodes() const noexcept { return adjacency_.size(); }
  std::size_t num_edges() const noexcept { return num_edges_; }
  int feature_dim() const noexcept { return static_cast<int>(features_.cols()); }

  std::span<const NodeId> neighbors(NodeId v) const noexcept { return adjacency_[v]; }
  std::size_t degree(NodeId v) const noexcept { return adjacency_[v].size(); }
  std::size_t max_degree() const noexcept;
  bool has_edge(NodeId u, NodeId v) const noexcept;

  const FeatureMatrix& features() const noexcept { return features_; }
  const std::vector<std::string>& node_ids() const noexcept { return node_ids_; }
  /// External label of node v ("v" when the graph carries no id table).
  std::string node_label(NodeId v) const;

  std::vector<std::pair<NodeId, NodeId>> edge_list() const;

 private:
  std::vector<std::vector<NodeId>> adjacency_;
  FeatureMatrix features_;
  std::vector<std::string> node_ids_;
  std::size_t num_edges_ = 0;
};

/// Induced subgraph on a sorted node set: adjacency as per-row bitmasks and
/// the member feature rows.
struct Motif {
  KSet nodes;
  std::array<std::uint32_t, kMaxK> adj_rows{};
  FeatureMatrix features;

  int size() const noexcept { return nodes.size(); }
  bool adjacent(int i, int j) const noexcept { return (adj_rows[static_cast<std::size_t>(i)] >> j) & 1U; }
  int num_edges() const noexcept;

  /// Motif from explicit parts, independent of any host graph. `adjacency`
  /// is a k*k row-major 0/1 matrix.
  static Motif from_parts(std::span<const std::uint8_t> adjacency, FeatureMatrix features);
};

struct LoadOptions {
  /// Collect warnings (dropped self-loops, symmetrized directed input).
  std::function<void(const std::string&)> warn;
};

/// Reads an edge list ("u v" per line, '#' comments) and an optional feature
/// CSV (node id, then p values). External ids are remapped to 0..n-1: in
/// numeric order when every id is a non-negative integer, otherwise in order
/// of first appearance in the edge list, then the feature file.
Graph load_graph(const std::string& edge_list_path, const std::optional<std::string>& feature_path = std::nullopt,
                 const LoadOptions& options = {});

/// Writes an edge list ("u v" per line, external ids) and, when the graph has
/// features and `feature_path` is set, a feature CSV with a header row.
void save_graph(const Graph& g, const std::string& edge_list_path,
                const std::optional<std::string>& feature_path = std::nullopt);

/// Motif of a node set; `nodes` may be given in any order.
Motif induced_subgraph(const Graph& g, std::span<const NodeId> nodes);
Motif induced_subgraph(const Graph& g, const KSet& nodes);

bool is_connected(const Motif& m);
/// Connectivity of the subgraph induced by `s` without building a Motif.
bool is_connected(const Graph& g, const KSet& s);

/// Bitmask traversal on up to kMaxK nodes.
bool mask_connected(std::span<const std::uint32_t> adj_rows, int k);

/// Connected component id per node.
std::vector<int> connected_components(const Graph& g, int* count = nullptr);

}  // namespace motifrep
