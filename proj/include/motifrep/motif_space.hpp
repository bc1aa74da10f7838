#pragma once

#include "motifrep/graph.hpp"

#include <cstdint>
#include <functional>
#include <vector>

namespace motifrep {

/// Neighborhood of a connected k-set in the higher-order network whose nodes
/// are connected k-sets and whose edges join sets sharing k-1 nodes.
struct KHonNeighborhood {
  KSet center;
  std::vector<KSet> neighbors;  // sorted lexicographically, duplicate-free

  std::size_t degree() const noexcept { return neighbors.size(); }
};

inline constexpr double kDefaultEnumerationCap = 1e7;

struct EnumerationOptions {
  double cap = kDefaultEnumerationCap;
};

/// Upper bound on the number of connected k-sets: min(C(n,k), n * (e(D-1))^(k-1))
/// with D the maximum degree.
double cis_count_upper_bound(const Graph& g, int k);

/// Calls `visit` on every connected k-set exactly once, in lexicographic order.
/// Throws CapExceededError when the upper bound (or the running count) exceeds
/// options.cap.
void for_each_cis(const Graph& g, int k, const std::function<void(const KSet&)>& visit,
                  const EnumerationOptions& options = {});

std::vector<KSet> enumerate_cises(const Graph& g, int k, const EnumerationOptions& options = {});

/// Lazy neighborhood of `center`; never materializes the higher-order network.
/// Throws InvalidSetError if `center` does not induce a connected subgraph.
KHonNeighborhood hon_neighbors(const Graph& g, const KSet& center);

/// Appends the neighbors of a connected `center` to `out` (unsorted, no
/// validation). Hot path for the random walk.
void append_hon_neighbors(const Graph& g, const KSet& center, std::vector<KSet>& out);

using MotifFunction = std::function<double(const Motif&)>;

/// Exact total energy: sum of `phi` over all connected k-sets, accumulated in
/// lexicographic order.
double exact_energy_sum(const Graph& g, int k, const MotifFunction& phi, const EnumerationOptions& options = {});

}  // namespace motifrep
