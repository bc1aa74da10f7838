#include "motifrep/tour_estimator.hpp"

#include <cmath>
#include <deque>
#include <map>
#include <memory>
#include <unordered_map>

namespace motifrep {

Supernode Supernode::from_members(const Graph& g, int k, std::vector<KSet> members) {
  if (members.empty()) throw ConstructionError("supernode needs at least one member");
  std::sort(members.begin(), members.end());
  members.erase(std::unique(members.begin(), members.end()), members.end());
  Supernode s;
  s.k = k;
  for (const auto& m : members) {
    if (m.size() != k) throw InvalidSetError("supernode member " + m.to_string() + " does not have k nodes");
    if (!is_connected(g, m)) throw InvalidSetError("supernode member " + m.to_string() + " is not connected");
  }
  s.members = std::move(members);
  s.index_.insert(s.members.begin(), s.members.end());
  std::vector<KSet> nbrs;
  for (std::uint32_t i = 0; i < s.members.size(); ++i) {
    nbrs.clear();
    append_hon_neighbors(g, s.members[i], nbrs);
    std::sort(nbrs.begin(), nbrs.end());
    for (const auto& c : nbrs) {
      if (!s.contains(c)) s.boundary_edges.emplace_back(i, c);
    }
  }
  return s;
}

KSet default_start_set(const Graph& g, int k, std::uint64_t seed) {
  if (k < 1 || static_cast<std::size_t>(k) > g.num_nodes()) throw ConstructionError("no connected k-set: k out of range");
  Rng rng = make_rng(seed, 0, 0x51a27);
  if (k == 1) return KSet{static_cast<NodeId>(uniform_index(rng, g.num_nodes()))};
  const auto edges = g.edge_list();
  if (edges.empty()) throw ConstructionError("graph has no edges, so no connected k-set exists for k >= 2");
  const std::size_t first = uniform_index(rng, edges.size());
  for (std::size_t t = 0; t < edges.size(); ++t) {
    const auto [u, v] = edges[(first + t) % edges.size()];
    std::vector<NodeId> members{u, v};
    while (static_cast<int>(members.size()) < k) {
      NodeId best = static_cast<NodeId>(g.num_nodes());
      for (NodeId m : members) {
        for (NodeId w : g.neighbors(m)) {
          if (w < best && std::find(members.begin(), members.end(), w) == members.end()) best = w;
        }
      }
      if (best == g.num_nodes()) break;
      members.push_back(best);
    }
    if (static_cast<int>(members.size()) == k) return KSet(members);
  }
  throw ConstructionError("no connected component has " + std::to_string(k) + " nodes");
}

Supernode build_supernode(const Graph& g, int k, const SupernodeOptions& options) {
  if (options.budget < 1) throw ValidationError("supernode budget must be at least 1");
  KSet start = options.start ? *options.start : default_start_set(g, k, options.seed);
  if (start.size() != k) throw InvalidSetError("start set " + start.to_string() + " does not have k nodes");
  if (!is_connected(g, start)) throw InvalidSetError("start set " + start.to_string() + " is not connected");

  std::vector<KSet> members;
  std::unordered_set<KSet, KSetHash> seen{start};
  std::deque<KSet> queue{start};
  std::vector<KSet> nbrs;
  while (!queue.empty() && static_cast<int>(members.size()) < options.budget) {
    KSet c = queue.front();
    queue.pop_front();
    members.push_back(c);
    nbrs.clear();
    append_hon_neighbors(g, c, nbrs);
    std::sort(nbrs.begin(), nbrs.end());
    for (const auto& n : nbrs) {
      if (seen.insert(n).second) queue.push_back(n);
    }
  }
  return Supernode::from_members(g, k, std::move(members));
}

nlohmann::json SupernodeReport::to_json() const {
  nlohmann::json comps = nlohmann::json::array();
  for (const auto& c : components) {
    comps.push_back({{"component", c.component},
                     {"nodes", c.nodes},
                     {"has_member", c.has_member},
                     {"has_free_branch_vertex", c.has_free_branch_vertex}});
  }
  return {{"valid", valid}, {"components", comps}, {"reasons", reasons}};
}

SupernodeReport validate_supernode(const Graph& g, const Supernode& s) {
  int count = 0;
  const auto comp = connected_components(g, &count);
  std::vector<std::size_t> sizes(static_cast<std::size_t>(count), 0);
  for (int c : comp) ++sizes[static_cast<std::size_t>(c)];

  std::vector<bool> covered(g.num_nodes(), false);
  std::vector<bool> has_member(static_cast<std::size_t>(count), false);
  for (const auto& m : s.members) {
    for (NodeId v : m) covered[v] = true;
    has_member[static_cast<std::size_t>(comp[m[0]])] = true;
  }
  std::vector<bool> free_branch(static_cast<std::size_t>(count), false);
  for (NodeId v = 0; v < g.num_nodes(); ++v) {
    if (!covered[v] && g.degree(v) > 2) free_branch[static_cast<std::size_t>(comp[v])] = true;
  }

  SupernodeReport report;
  report.valid = true;
  for (int c = 0; c < count; ++c) {
    const auto ci = static_cast<std::size_t>(c);
    if (sizes[ci] < static_cast<std::size_t>(s.k)) continue;  // holds no connected k-set
    report.components.push_back({c, sizes[ci], has_member[ci], free_branch[ci]});
    if (!has_member[ci]) {
      report.valid = false;
      report.reasons.push_back("component " + std::to_string(c) + " (" + std::to_string(sizes[ci]) +
                               " nodes) has no k-set in the supernode");
    }
    if (!free_branch[ci]) {
      report.valid = false;
      report.reasons.push_back("component " + std::to_string(c) +
                               " has no vertex outside the supernode with more than 2 edges");
    }
  }
  return report;
}

TourTrace run_tour(const Graph& g, const Supernode& s, Rng& rng, std::uint64_t max_steps) {
  if (s.covers_space()) throw SamplingError("supernode has no boundary edges; tours are undefined");
  TourTrace trace;
  KSet current = s.boundary_edges[uniform_index(rng, s.boundary_degree())].second;
  std::vector<KSet> nbrs;
  while (true) {
    nbrs.clear();
    append_hon_neighbors(g, current, nbrs);
    // canonical order so draws do not depend on generation order
    std::sort(nbrs.begin(), nbrs.end());
    trace.states.push_back(current);
    trace.degrees.push_back(static_cast<std::uint32_t>(nbrs.size()));
    const KSet& next = nbrs[uniform_index(rng, nbrs.size())];
    if (s.contains(next)) return trace;
    if (trace.states.size() >= max_steps) {
      throw TruncationError("tour exceeded " + std::to_string(max_steps) + " steps", std::move(trace));
    }
    current = next;
  }
}

namespace {

// Lazily interned view of the collapsed network for one worker. Neighbor
// lists are expanded on first visit and kept in canonical (sorted) order, so
// walks match run_tour draw for draw. Neighbor lists depend only on the edge
// set, so they survive rebinding to another supernode or energy function.
class WalkCache {
 public:
  void bind(const Graph& g, const Supernode& s, const MotifFunction* phi) {
    g_ = &g;
    s_ = &s;
    phi_ = phi;
    for (std::uint32_t id = 0; id < sets_.size(); ++id) {
      in_supernode_[id] = s.contains(sets_[id]);
      phi_done_[id] = false;
      visits_[id] = 0;
    }
  }

  std::uint32_t intern(const KSet& set) {
    auto [it, inserted] = ids_.try_emplace(set, static_cast<std::uint32_t>(sets_.size()));
    if (inserted) {
      sets_.push_back(set);
      in_supernode_.push_back(s_->contains(set));
      neighbors_.emplace_back();
      expanded_.push_back(false);
      phi_value_.push_back(0.0);
      phi_done_.push_back(false);
      visits_.push_back(0);
    }
    return it->second;
  }

  const std::vector<std::uint32_t>& neighbors(std::uint32_t id) {
    if (!expanded_[id]) {
      scratch_.clear();
      append_hon_neighbors(*g_, sets_[id], scratch_);
      std::sort(scratch_.begin(), scratch_.end());
      std::vector<std::uint32_t> ids;
      ids.reserve(scratch_.size());
      for (const auto& n : scratch_) ids.push_back(intern(n));
      neighbors_[id] = std::move(ids);
      expanded_[id] = true;
    }
    return neighbors_[id];
  }

  bool in_supernode(std::uint32_t id) const { return in_supernode_[id]; }

  double phi(std::uint32_t id) {
    if (!phi_done_[id]) {
      const double e = (*phi_)(induced_subgraph(*g_, sets_[id]));
      if (!std::isfinite(e)) throw NumericError("non-finite motif energy at " + sets_[id].to_string());
      phi_value_[id] = e;
      phi_done_[id] = true;
    }
    return phi_value_[id];
  }

  void count_visit(std::uint32_t id) { ++visits_[id]; }

  void drain_visits(std::map<KSet, VisitCount>& out) {
    for (std::uint32_t id = 0; id < sets_.size(); ++id) {
      if (!visits_[id]) continue;
      auto& v = out[sets_[id]];
      v.set = sets_[id];
      v.visits += visits_[id];
      v.degree = static_cast<std::uint32_t>(neighbors(id).size());
      visits_[id] = 0;
    }
  }

 private:
  const Graph* g_ = nullptr;
  const Supernode* s_ = nullptr;
  const MotifFunction* phi_ = nullptr;
  std::unordered_map<KSet, std::uint32_t, KSetHash> ids_;
  std::vector<KSet> sets_;
  std::vector<bool> in_supernode_;
  std::vector<std::vector<std::uint32_t>> neighbors_;
  std::vector<bool> expanded_;
  std::vector<double> phi_value_;
  std::vector<bool> phi_done_;
  std::vector<std::uint64_t> visits_;
  std::vector<KSet> scratch_;
};

std::uint64_t edge_fingerprint(const Graph& g) {
  std::uint64_t h = mix_seed(g.num_nodes());
  for (const auto& [u, v] : g.edge_list()) h = mix_seed(h ^ ((static_cast<std::uint64_t>(u) << 32) | v));
  return h;
}

struct TourResult {
  double weighted_sum = 0.0;  // sum over states of phi / degree, in walk order
  std::size_t length = 0;
  bool truncated = false;
};

TourResult walk(WalkCache& cache, const Supernode& s, Rng rng, std::uint64_t max_steps, bool count_visits) {
  TourResult r;
  std::uint32_t current = cache.intern(s.boundary_edges[uniform_index(rng, s.boundary_degree())].second);
  std::size_t states = 0;
  while (true) {
    const auto& nbrs = cache.neighbors(current);
    const auto degree = static_cast<double>(nbrs.size());
    r.weighted_sum += cache.phi(current) / degree;
    if (count_visits) cache.count_visit(current);
    ++states;
    const std::uint32_t next = nbrs[uniform_index(rng, nbrs.size())];
    if (cache.in_supernode(next)) break;
    if (states >= max_steps) {
      r.truncated = true;
      break;
    }
    current = next;
  }
  r.length = states + 1;
  return r;
}

void check_q(int q) {
  if (q < 1) throw ValidationError("number of tours q must be at least 1");
}

double supernode_sum(const Graph& g, const Supernode& s, const MotifFunction& phi) {
  double total = 0.0;
  for (const auto& m : s.members) {
    const double e = phi(induced_subgraph(g, m));
    if (!std::isfinite(e)) throw NumericError("non-finite motif energy at " + m.to_string());
    total += e;
  }
  return total;
}

}  // namespace

struct TourCache::Impl {
  std::uint64_t fingerprint = 0;
  std::vector<std::unique_ptr<WalkCache>> workers;
};

TourCache::TourCache() : impl_(std::make_unique<Impl>()) {}
TourCache::~TourCache() = default;
TourCache::TourCache(TourCache&&) noexcept = default;
TourCache& TourCache::operator=(TourCache&&) noexcept = default;

nlohmann::json EnergyEstimate::to_json() const {
  return {{"value", value},
          {"supernode_term", supernode_term},
          {"tour_term", tour_term},
          {"q", q},
          {"mean_tour_length", mean_tour_length},
          {"std_error", std_error},
          {"boundary_degree", boundary_degree},
          {"covers_space", covers_space}};
}

EnergyEstimate estimate_energy(const Graph& g, const Supernode& s, int q, const MotifFunction& phi, std::uint64_t seed,
                               const EstimateOptions& options) {
  check_q(q);
  EnergyEstimate est;
  est.q = q;
  est.boundary_degree = s.boundary_degree();
  est.covers_space = s.covers_space();
  est.supernode_term = supernode_sum(g, s, phi);
  if (s.covers_space()) {
    est.value = est.supernode_term;
    est.per_tour_values.assign(static_cast<std::size_t>(q), est.supernode_term);
    est.tour_lengths.assign(static_cast<std::size_t>(q), 0);
    return est;
  }

  const unsigned workers = std::min<unsigned>(resolve_threads(options.threads), static_cast<unsigned>(q));
  std::vector<std::unique_ptr<WalkCache>> local;
  std::vector<std::unique_ptr<WalkCache>>& caches = options.cache ? options.cache->impl_->workers : local;
  if (options.cache) {
    const std::uint64_t fp = edge_fingerprint(g);
    if (fp != options.cache->impl_->fingerprint) caches.clear();
    options.cache->impl_->fingerprint = fp;
  }
  while (caches.size() < workers) caches.push_back(std::make_unique<WalkCache>());
  for (auto& c : caches) c->bind(g, s, &phi);

  std::vector<TourResult> tours(static_cast<std::size_t>(q));
  for (int attempt = 0;; ++attempt) {
    if (attempt >= options.max_attempts) {
      // reproduce one truncated tour for the error report
      Rng rng = make_rng(seed, 0, static_cast<std::uint64_t>(attempt - 1));
      TourTrace partial;
      try {
        partial = run_tour(g, s, rng, options.max_steps);
      } catch (const TruncationError& e) {
        partial = e.partial();
      }
      throw TruncationError("tours kept exceeding " + std::to_string(options.max_steps) + " steps after " +
                                std::to_string(options.max_attempts) +
                                " attempts; increase the supernode budget to shorten return times",
                            std::move(partial));
    }
    parallel_for(tours.size(), workers, [&](std::size_t r, unsigned worker) {
      tours[r] = walk(*caches[worker], s, make_rng(seed, r, static_cast<std::uint64_t>(attempt)), options.max_steps,
                      options.collect_visits);
    });
    const bool truncated = std::any_of(tours.begin(), tours.end(), [](const TourResult& t) { return t.truncated; });
    if (!truncated) {
      est.attempts = attempt + 1;
      break;
    }
    if (options.collect_visits) {
      std::map<KSet, VisitCount> discard;
      for (auto& c : caches) c->drain_visits(discard);
    }
  }

  const double b = static_cast<double>(s.boundary_degree());
  double tour_sum = 0.0;
  double length_sum = 0.0;
  est.per_tour_values.reserve(tours.size());
  for (const auto& t : tours) {
    tour_sum += t.weighted_sum;
    length_sum += static_cast<double>(t.length);
    est.per_tour_values.push_back(est.supernode_term + b * t.weighted_sum);
    est.tour_lengths.push_back(t.length);
  }
  est.tour_term = (b / q) * tour_sum;
  est.value = est.supernode_term + est.tour_term;
  est.mean_tour_length = length_sum / q;
  if (q > 1) {
    double mean = 0.0;
    for (double v : est.per_tour_values) mean += v;
    mean /= q;
    double ss = 0.0;
    for (double v : est.per_tour_values) ss += (v - mean) * (v - mean);
    est.std_error = std::sqrt(ss / (q - 1) / q);
  }
  if (options.collect_visits) {
    std::map<KSet, VisitCount> merged;
    for (auto& c : caches) c->drain_visits(merged);
    est.visits.reserve(merged.size());
    for (auto& [set, v] : merged) est.visits.push_back(v);
  }
  return est;
}

double evaluate_frozen(const Graph& g, const Supernode& s, const EnergyEstimate& est, const MotifFunction& phi) {
  double total = supernode_sum(g, s, phi);
  if (s.covers_space()) return total;
  double tour_sum = 0.0;
  for (const auto& v : est.visits) {
    tour_sum += static_cast<double>(v.visits) * phi(induced_subgraph(g, v.set)) / v.degree;
  }
  return total + static_cast<double>(s.boundary_degree()) / est.q * tour_sum;
}

void accumulate_estimate_gradient(const Graph& g, const Supernode& s, const EnergyEstimate& est, const EnergyModel& model,
                                  double upstream, ModelParams& grad, unsigned threads) {
  struct Term {
    const KSet* set;
    double weight;
  };
  std::vector<Term> terms;
  terms.reserve(s.members.size() + est.visits.size());
  for (const auto& m : s.members) terms.push_back({&m, upstream});
  const double scale = static_cast<double>(s.boundary_degree()) / est.q;
  for (const auto& v : est.visits) terms.push_back({&v.set, upstream * scale * static_cast<double>(v.visits) / v.degree});

  // fixed-size blocks reduced in block order: identical sums for any thread count
  constexpr std::size_t kBlock = 256;
  const std::size_t blocks = (terms.size() + kBlock - 1) / kBlock;
  std::vector<ModelParams> partial(blocks);
  parallel_for(blocks, threads, [&](std::size_t b, unsigned) {
    ModelParams local = model.zeros_like();
    const std::size_t end = std::min(terms.size(), (b + 1) * kBlock);
    for (std::size_t i = b * kBlock; i < end; ++i) {
      motif_energy_backward(induced_subgraph(g, *terms[i].set), model, terms[i].weight, local);
    }
    partial[b] = std::move(local);
  });
  for (auto& p : partial) grad += p;
}

MotifFunction model_energy_function(const EnergyModel& model) {
  return [&model](const Motif& m) { return motif_energy(m, model); };
}

EstimateWithGrad estimate_energy_with_grad(const Graph& g, const Supernode& s, int q, const EnergyModel& model,
                                           std::uint64_t seed, const EstimateOptions& options) {
  EstimateOptions opts = options;
  opts.collect_visits = true;
  EstimateWithGrad out{estimate_energy(g, s, q, model_energy_function(model), seed, opts), model.zeros_like()};
  accumulate_estimate_gradient(g, s, out.estimate, model, 1.0, out.gradient, options.threads);
  return out;
}

}  // namespace motifrep
