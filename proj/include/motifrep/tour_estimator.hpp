#pragma once

#include "motifrep/energy_model.hpp"
#include "motifrep/error.hpp"
#include "motifrep/graph.hpp"
#include "motifrep/motif_space.hpp"
#include "motifrep/parallel.hpp"

#include <json.hpp>

#include <cstdint>
#include <memory>
#include <optional>
#include <unordered_set>
#include <vector>

namespace motifrep {

/// A set I of connected k-sets collapsed into one node of the higher-order
/// network. Tours start and end here.
struct Supernode {
  int k = 0;
  std::vector<KSet> members;  // sorted lexicographically
  /// (index into members, outside neighbor) with multiplicity: a k-set
  /// adjacent to m members appears m times.
  std::vector<std::pair<std::uint32_t, KSet>> boundary_edges;

  std::size_t boundary_degree() const noexcept { return boundary_edges.size(); }
  /// No edge leaves I: the walk has nowhere to go and I is the whole
  /// reachable space.
  bool covers_space() const noexcept { return boundary_edges.empty(); }
  bool contains(const KSet& s) const { return index_.count(s) > 0; }

  /// Builds membership index and boundary multiset from `members`.
  static Supernode from_members(const Graph& g, int k, std::vector<KSet> members);

 private:
  std::unordered_set<KSet, KSetHash> index_;
};

struct SupernodeOptions {
  int budget = 100;
  std::uint64_t seed = 0;
  /// BFS start; when unset it is derived from a seed-chosen edge.
  std::optional<KSet> start;
};

/// Budgeted BFS over the higher-order network (FIFO, lexicographic
/// tie-breaking). Throws ConstructionError if the graph has no connected
/// k-set.
Supernode build_supernode(const Graph& g, int k, const SupernodeOptions& options);

/// Start set used by build_supernode when none is given: a seed-chosen edge
/// greedily completed with the smallest-id adjacent nodes.
KSet default_start_set(const Graph& g, int k, std::uint64_t seed);

struct ComponentCheck {
  int component = 0;
  std::size_t nodes = 0;
  bool has_member = false;               // I holds a k-set of this component
  bool has_free_branch_vertex = false;   // a vertex outside all members with degree > 2
};

struct SupernodeReport {
  bool valid = false;
  std::vector<ComponentCheck> components;  // components that contain a connected k-set
  std::vector<std::string> reasons;

  nlohmann::json to_json() const;
};

/// Checks the sufficient conditions under which tour statistics have the
/// stationary distribution used by the estimator.
SupernodeReport validate_supernode(const Graph& g, const Supernode& s);

/// States visited strictly between leaving and re-entering the supernode.
struct TourTrace {
  std::vector<KSet> states;
  std::vector<std::uint32_t> degrees;  // higher-order degree of each state

  /// Return time: steps from the supernode back to it.
  std::size_t length() const noexcept { return states.size() + 1; }
};

inline constexpr std::uint64_t kDefaultMaxTourSteps = 10'000'000;

class TruncationError : public SamplingError {
 public:
  TruncationError(const std::string& what, TourTrace partial) : SamplingError(what), partial_(std::move(partial)) {}
  const TourTrace& partial() const noexcept { return partial_; }

 private:
  TourTrace partial_;
};

/// One random walk tour on the collapsed network. Throws TruncationError
/// (carrying the partial trace) after `max_steps` states.
TourTrace run_tour(const Graph& g, const Supernode& s, Rng& rng, std::uint64_t max_steps = kDefaultMaxTourSteps);

struct EnergyEstimate;
struct EstimateOptions;

/// Neighbor lists of the higher-order network kept between estimate calls.
/// Valid for any graph; it is rebuilt whenever the edge set changes. One
/// cache must not be shared by concurrent calls.
class TourCache {
 public:
  TourCache();
  ~TourCache();
  TourCache(TourCache&&) noexcept;
  TourCache& operator=(TourCache&&) noexcept;

 private:
  friend EnergyEstimate estimate_energy(const Graph&, const Supernode&, int, const MotifFunction&, std::uint64_t,
                                        const EstimateOptions&);
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

struct EstimateOptions {
  unsigned threads = 1;
  std::uint64_t max_steps = kDefaultMaxTourSteps;
  /// Batches with a truncated tour are discarded and re-drawn with a fresh
  /// seed this many times before giving up.
  int max_attempts = 3;
  bool collect_visits = false;
  /// Optional; speeds up repeated estimates on the same graph.
  TourCache* cache = nullptr;
};

/// Visit count of one k-set over all tours of an estimate.
struct VisitCount {
  KSet set;
  std::uint64_t visits = 0;
  std::uint32_t degree = 0;
};

struct EnergyEstimate {
  double value = 0.0;
  double supernode_term = 0.0;
  double tour_term = 0.0;
  int q = 0;
  /// Per-tour unbiased estimates: supernode_term + boundary_degree * (tour sum).
  std::vector<double> per_tour_values;
  std::vector<std::size_t> tour_lengths;
  double mean_tour_length = 0.0;
  double std_error = 0.0;
  std::size_t boundary_degree = 0;
  bool covers_space = false;
  int attempts = 1;
  /// Filled when EstimateOptions::collect_visits is set; sorted by set.
  std::vector<VisitCount> visits;

  nlohmann::json to_json() const;
};

/// Tour-based unbiased estimate of the sum of `phi` over all connected
/// k-sets. Deterministic given `seed`, for any thread count.
EnergyEstimate estimate_energy(const Graph& g, const Supernode& s, int q, const MotifFunction& phi, std::uint64_t seed,
                               const EstimateOptions& options = {});

/// Re-evaluates the estimator for a different phi with the tours frozen
/// (uses est.visits).
double evaluate_frozen(const Graph& g, const Supernode& s, const EnergyEstimate& est, const MotifFunction& phi);

struct EstimateWithGrad {
  EnergyEstimate estimate;
  ModelParams gradient;  // d(estimate.value) / d(weights)
};

/// Energy estimate under `model` plus its exact parameter gradient for the
/// sampled tours: weight 1 per supernode member, boundary_degree/(q*degree)
/// per tour visit.
EstimateWithGrad estimate_energy_with_grad(const Graph& g, const Supernode& s, int q, const EnergyModel& model,
                                           std::uint64_t seed, const EstimateOptions& options = {});

/// Adds upstream * d(frozen estimate)/d(weights) into `grad`.
void accumulate_estimate_gradient(const Graph& g, const Supernode& s, const EnergyEstimate& est, const EnergyModel& model,
                                  double upstream, ModelParams& grad, unsigned threads = 1);

/// Motif function evaluating `model`.
MotifFunction model_energy_function(const EnergyModel& model);

}  // namespace motifrep
