#include "motifrep/motif_space.hpp"

#include "motifrep/error.hpp"

#include <cmath>
#include <sstream>

namespace motifrep {

namespace {

void check_k(const Graph& g, int k) {
  if (k < 1 || k > kMaxK) throw ValidationError("k must be in [1, " + std::to_string(kMaxK) + "], got " + std::to_string(k));
  if (static_cast<std::size_t>(k) > g.num_nodes()) {
    throw ValidationError("k=" + std::to_string(k) + " exceeds node count " + std::to_string(g.num_nodes()));
  }
}

double binomial(double n, int k) {
  if (k < 0 || n < k) return 0.0;
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

std::string cap_message(double bound, double cap) {
  std::ostringstream out;
  out << "exact enumeration refused: connected k-set count may reach " << bound << ", above the cap of " << cap;
  return out.str();
}

// ESU growth: extension candidates are restricted to ids above the root and
// to the exclusive neighborhood of each newly added node, so every connected
// set is produced once.
class EsuEnumerator {
 public:
  EsuEnumerator(const Graph& g, int k, std::vector<KSet>& out) : g_(g), k_(k), out_(out) {}

  void run_root(NodeId root) {
    root_ = root;
    sub_.assign(1, root);
    std::vector<NodeId> ext;
    for (NodeId u : g_.neighbors(root)) {
      if (u > root) ext.push_back(u);
    }
    extend(ext);
  }

 private:
  bool in_closed_neighborhood(NodeId u) const {
    for (NodeId s : sub_) {
      if (s == u || g_.has_edge(s, u)) return true;
    }
    return false;
  }

  void extend(std::vector<NodeId> ext) {
    if (static_cast<int>(sub_.size()) == k_) {
      out_.emplace_back(std::span<const NodeId>(sub_));
      return;
    }
    while (!ext.empty()) {
      const NodeId w = ext.back();
      ext.pop_back();
      std::vector<NodeId> next = ext;
      for (NodeId u : g_.neighbors(w)) {
        if (u > root_ && !in_closed_neighborhood(u) &&
            std::find(next.begin(), next.end(), u) == next.end()) {
          next.push_back(u);
        }
      }
      sub_.push_back(w);
      extend(std::move(next));
      sub_.pop_back();
    }
  }

  const Graph& g_;
  int k_;
  std::vector<KSet>& out_;
  NodeId root_ = 0;
  std::vector<NodeId> sub_;
};

}  // namespace

double cis_count_upper_bound(const Graph& g, int k) {
  const double n = static_cast<double>(g.num_nodes());
  const double all = binomial(n, k);
  if (k == 1) return n;
  const double d = static_cast<double>(g.max_degree());
  if (d == 0) return 0.0;
  if (d == 1) return k == 2 ? static_cast<double>(g.num_edges()) : 0.0;
  const double growth = n * std::pow(std::exp(1.0) * (d - 1.0), k - 1);
  return std::min(all, growth);
}

void for_each_cis(const Graph& g, int k, const std::function<void(const KSet&)>& visit,
                  const EnumerationOptions& options) {
  check_k(g, k);
  const double bound = cis_count_upper_bound(g, k);
  if (bound > options.cap) throw CapExceededError(cap_message(bound, options.cap), options.cap);

  std::vector<KSet> group;
  EsuEnumerator esu(g, k, group);
  double emitted = 0;
  for (NodeId root = 0; root < g.num_nodes(); ++root) {
    group.clear();
    if (k == 1) {
      group.push_back(KSet{root});
    } else {
      esu.run_root(root);
    }
    // every set in this group has `root` as its minimum
    std::sort(group.begin(), group.end());
    emitted += static_cast<double>(group.size());
    if (emitted > options.cap) throw CapExceededError(cap_message(emitted, options.cap), options.cap);
    for (const auto& s : group) visit(s);
  }
}

std::vector<KSet> enumerate_cises(const Graph& g, int k, const EnumerationOptions& options) {
  std::vector<KSet> out;
  for_each_cis(g, k, [&](const KSet& s) { out.push_back(s); }, options);
  return out;
}

void append_hon_neighbors(const Graph& g, const KSet& center, std::vector<KSet>& out) {
  const int k = center.size();
  if (k == 1) {
    for (NodeId w = 0; w < g.num_nodes(); ++w) {
      if (w != center[0]) out.push_back(KSet{w});
    }
    return;
  }
  std::array<std::uint32_t, kMaxK> rows{};
  for (int i = 0; i < k; ++i) {
    for (int j = i + 1; j < k; ++j) {
      if (g.has_edge(center[i], center[j])) {
        rows[static_cast<std::size_t>(i)] |= 1U << j;
        rows[static_cast<std::size_t>(j)] |= 1U << i;
      }
    }
  }
  std::vector<NodeId> candidates;
  for (int drop = 0; drop < k; ++drop) {
    candidates.clear();
    for (int j = 0; j < k; ++j) {
      if (j == drop) continue;
      for (NodeId w : g.neighbors(center[j])) {
        if (!center.contains(w)) candidates.push_back(w);
      }
    }
    std::sort(candidates.begin(), candidates.end());
    candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

    const std::uint32_t keep = ~(1U << drop);
    for (NodeId w : candidates) {
      // w takes slot `drop`; connectivity does not depend on slot order
      std::array<std::uint32_t, kMaxK> trial{};
      std::uint32_t w_row = 0;
      for (int j = 0; j < k; ++j) {
        if (j == drop) continue;
        std::uint32_t r = rows[static_cast<std::size_t>(j)] & keep;
        if (g.has_edge(center[j], w)) {
          r |= 1U << drop;
          w_row |= 1U << j;
        }
        trial[static_cast<std::size_t>(j)] = r;
      }
      trial[static_cast<std::size_t>(drop)] = w_row;
      if (mask_connected(trial, k)) out.push_back(center.replaced(drop, w));
    }
  }
}

KHonNeighborhood hon_neighbors(const Graph& g, const KSet& center) {
  if (center.empty()) throw InvalidSetError("empty node set");
  for (NodeId v : center) {
    if (v >= g.num_nodes()) throw InvalidSetError("node " + std::to_string(v) + " is out of range");
  }
  for (int i = 1; i < center.size(); ++i) {
    if (center[i] == center[i - 1]) throw InvalidSetError("duplicate node in " + center.to_string());
  }
  if (!is_connected(g, center)) throw InvalidSetError(center.to_string() + " does not induce a connected subgraph");
  KHonNeighborhood out{center, {}};
  append_hon_neighbors(g, center, out.neighbors);
  std::sort(out.neighbors.begin(), out.neighbors.end());
  return out;
}

double exact_energy_sum(const Graph& g, int k, const MotifFunction& phi, const EnumerationOptions& options) {
  double total = 0.0;
  for_each_cis(
      g, k,
      [&](const KSet& s) {
        const double e = phi(induced_subgraph(g, s));
        if (!std::isfinite(e)) throw NumericError("non-finite motif energy at " + s.to_string());
        total += e;
      },
      options);
  return total;
}

}  // namespace motifrep
