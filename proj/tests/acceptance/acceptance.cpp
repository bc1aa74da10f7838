// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits nonzero if any fails.

#include "../../tools/cli.hpp"
#include "../common/gradcheck.hpp"
#include "motifrep/energy_model.hpp"
#include "motifrep/eval_harness.hpp"
#include "motifrep/motif_space.hpp"
#include "motifrep/nce_trainer.hpp"
#include "motifrep/synthetic.hpp"
#include "motifrep/tour_estimator.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <unordered_map>

using namespace motifrep;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;

void report(int id, bool pass, const std::string& detail) {
  std::printf("%s criterion %d: %s\n", pass ? "PASS" : "FAIL", id, detail.c_str());
  std::fflush(stdout);
  failures += pass ? 0 : 1;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Moments {
  double mean = 0.0;
  double var = 0.0;  // sample variance
  double se() const { return std::sqrt(var / static_cast<double>(n)); }
  std::size_t n = 0;
};

Moments moments(const std::vector<double>& v) {
  Moments m;
  m.n = v.size();
  m.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - m.mean) * (x - m.mean);
  m.var = ss / static_cast<double>(v.size() - 1);
  return m;
}

/// First `count` seeds (from `from`) whose G(n, p) sample is connected.
std::vector<Graph> connected_er_graphs(int count, std::size_t n, double p, int feature_dim, std::uint64_t from) {
  std::vector<Graph> out;
  for (std::uint64_t seed = from; static_cast<int>(out.size()) < count; ++seed) {
    Graph g = erdos_renyi(n, p, seed, feature_dim);
    int components = 0;
    connected_components(g, &components);
    if (components == 1) out.push_back(std::move(g));
  }
  return out;
}

/// Motif energies memoized over the whole connected k-set space.
struct EnergyTable {
  std::unordered_map<KSet, double, KSetHash> values;
  double total = 0.0;

  EnergyTable(const Graph& g, int k, const EnergyModel& model) {
    for (const auto& s : enumerate_cises(g, k)) {
      const double e = motif_energy(induced_subgraph(g, s), model);
      values.emplace(s, e);
      total += e;
    }
  }
  MotifFunction function() const {
    return [this](const Motif& m) { return values.at(m.nodes); };
  }
};

Motif random_motif(int k, int feature_dim, Rng& rng) {
  std::vector<std::uint8_t> adj(static_cast<std::size_t>(k * k));
  Motif m;
  do {
    std::fill(adj.begin(), adj.end(), 0);
    for (int i = 0; i < k; ++i)
      for (int j = i + 1; j < k; ++j)
        if (uniform_unit(rng) < 0.5) adj[static_cast<std::size_t>(i * k + j)] = adj[static_cast<std::size_t>(j * k + i)] = 1;
    FeatureMatrix x(k, feature_dim);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = 4.0 * uniform_unit(rng) - 2.0;
    m = Motif::from_parts(adj, x);
  } while (!is_connected(m));
  return m;
}

Motif permuted(const Motif& m, const std::vector<int>& perm) {
  const int k = m.size();
  std::vector<std::uint8_t> adj(static_cast<std::size_t>(k * k));
  FeatureMatrix x(k, m.features.cols());
  for (int i = 0; i < k; ++i) {
    x.row(i) = m.features.row(perm[static_cast<std::size_t>(i)]);
    for (int j = 0; j < k; ++j) adj[static_cast<std::size_t>(i * k + j)] = m.adjacent(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
  }
  return Motif::from_parts(adj, x);
}

// ---------------------------------------------------------------------------

void unbiasedness() {
  const auto t0 = Clock::now();
  const auto graphs = connected_er_graphs(10, 20, 0.3, 3, 100);
  const auto model = init_model({3, 16, 16, 16, 8, 1}, 0.01, 7);
  int within = 0, cases = 0;
  double worst_z = 0.0, worst_rel = 0.0;
  for (std::size_t gi = 0; gi < graphs.size(); ++gi) {
    const Graph& g = graphs[gi];
    for (int k : {3, 4}) {
      const EnergyTable table(g, k, model);
      const auto phi = table.function();
      const auto s = build_supernode(g, k, {20, gi, std::nullopt});
      TourCache cache;
      EstimateOptions opts;
      opts.cache = &cache;
      std::vector<double> small;
      for (std::uint64_t r = 0; r < 200; ++r) small.push_back(estimate_energy(g, s, 50, phi, 1000 * gi + r, opts).value);
      const auto m = moments(small);
      const double z = std::abs(m.mean - table.total) / m.se();
      worst_z = std::max(worst_z, z);
      within += z <= 3.0;
      double big = 0.0;
      for (std::uint64_t r = 0; r < 200; ++r) big += estimate_energy(g, s, 2000, phi, 500000 + 1000 * gi + r, opts).value / 200.0;
      worst_rel = std::max(worst_rel, std::abs(big - table.total) / std::abs(table.total));
      ++cases;
    }
  }
  const double elapsed = seconds_since(t0);
  report(1, within == cases && worst_rel < 0.01 && elapsed < 120.0,
         fmt("%d/%d cases within 3 SE (max |z| %.2f); max relative error of the mean at q=2000 %.4f; %.1f s", within, cases, worst_z,
             worst_rel, elapsed));
}

void kac_return_time() {
  const auto graphs = connected_er_graphs(5, 15, 0.3, 0, 200);
  double worst = 0.0;
  bool valid = true;
  for (std::size_t gi = 0; gi < graphs.size(); ++gi) {
    const Graph& g = graphs[gi];
    const auto s = build_supernode(g, 3, {10, gi, std::nullopt});
    valid = valid && validate_supernode(g, s).valid;
    std::size_t outside_degree = 0;
    for (const auto& c : enumerate_cises(g, 3))
      if (!s.contains(c)) outside_degree += hon_neighbors(g, c).degree();
    const double expected =
        static_cast<double>(outside_degree + s.boundary_degree()) / static_cast<double>(s.boundary_degree());
    Rng rng = make_rng(gi, 0, 0x4ac);
    double total = 0.0;
    for (int t = 0; t < 10000; ++t) total += static_cast<double>(run_tour(g, s, rng).length());
    worst = std::max(worst, std::abs(total / 10000.0 - expected) / expected);
  }
  report(2, valid && worst < 0.05, fmt("max relative deviation of mean tour length from Kac %.4f", worst));
}

void gradients() {
  Rng rng(31);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int k = 3 + trial % 3;
    const int p = 1 + static_cast<int>(uniform_index(rng, 4));
    const ModelDims dims{p, 2 + static_cast<int>(uniform_index(rng, 5)), 2 + static_cast<int>(uniform_index(rng, 5)),
                         2 + static_cast<int>(uniform_index(rng, 5)), 2 + static_cast<int>(uniform_index(rng, 4)),
                         1 + trial % 2};
    auto model = init_model(dims, 0.1, static_cast<std::uint64_t>(trial), trial % 4 == 0);
    const Motif m = random_motif(k, p, rng);
    const auto analytic = motif_energy_gradient(m, model, 1.0).flatten();
    auto flat = model.params.flatten();
    worst = std::max(worst, testing::max_gradient_error(flat, analytic, [&](std::span<const double> w) {
      model.params.assign(w);
      return motif_energy(m, model);
    }));
  }

  double worst_frozen = 0.0;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const Graph g = erdos_renyi(14, 0.35, 40 + seed, 2);
    auto model = init_model({2, 5, 6, 4, 3, 1}, 0.05, seed);
    const auto s = build_supernode(g, 3, {6, seed, std::nullopt});
    const auto r = estimate_energy_with_grad(g, s, 10, model, seed);
    const auto analytic = r.gradient.flatten();
    auto flat = model.params.flatten();
    worst_frozen = std::max(worst_frozen, testing::max_gradient_error(flat, analytic, [&](std::span<const double> w) {
      model.params.assign(w);
      return evaluate_frozen(g, s, r.estimate, model_energy_function(model));
    }));
  }
  report(3, worst < 1e-5 && worst_frozen < 1e-5,
         fmt("max relative error %.2e over 100 motifs, %.2e for frozen-trace estimates", worst, worst_frozen));
}

void permutation_invariance() {
  Rng rng(41);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const int k = 1 + trial % 5;
    const auto model = init_model({3, 8, 8, 6, 4, 2}, 0.01, static_cast<std::uint64_t>(trial));
    const Motif m = random_motif(k, 3, rng);
    const double phi = motif_energy(m, model);
    const auto rep = motif_representation(m, model).vector;
    std::vector<int> perm(static_cast<std::size_t>(k));
    std::iota(perm.begin(), perm.end(), 0);
    do {
      const Motif pm = permuted(m, perm);
      worst = std::max(worst, std::abs(motif_energy(pm, model) - phi));
      worst = std::max(worst, (motif_representation(pm, model).vector - rep).cwiseAbs().maxCoeff());
    } while (std::next_permutation(perm.begin(), perm.end()));
  }
  report(4, worst <= 1e-9, fmt("max deviation over all relabelings %.2e", worst));
}

void jensen_bound() {
  const auto graphs = connected_er_graphs(5, 15, 0.3, 3, 300);
  int holds = 0;
  double min_gap = INFINITY;
  for (std::size_t mi = 0; mi < 5; ++mi) {
    const Graph& pos = graphs[mi];
    Rng noise_rng = make_rng(mi, 0, 0x1e5);
    const Graph neg = make_noise(pos, NoiseMode::shuffle_features, noise_rng);
    const auto model = init_model({3, 8, 8, 8, 4, 1}, 0.01, 50 + mi);
    const double offset = 0.0;
    const EnergyTable tp(pos, 3, model), tn(neg, 3, model);
    const double exact =
        nce_example_loss(tp.total, offset, true) + nce_example_loss(tn.total, offset, false);
    std::vector<double> estimates;
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
      const auto sp = build_supernode(pos, 3, {5, seed, std::nullopt});
      const auto sn = build_supernode(neg, 3, {5, seed, std::nullopt});
      const double a = estimate_energy(pos, sp, 2, tp.function(), seed).value;
      const double b = estimate_energy(neg, sn, 2, tn.function(), seed + 1000).value;
      estimates.push_back(nce_example_loss(a, offset, true) + nce_example_loss(b, offset, false));
    }
    const auto m = moments(estimates);
    holds += m.mean >= exact - 3.0 * m.se();
    min_gap = std::min(min_gap, (m.mean - exact) / m.se());
  }
  report(5, holds == 5, fmt("%d/5 models with mean estimated loss >= exact - 3 SE (min gap %.2f SE)", holds, min_gap));
}

void variance_control() {
  const Graph g = connected_er_graphs(1, 30, 0.2, 3, 400).front();
  const auto model = init_model({3, 16, 16, 16, 8, 1}, 0.01, 3);
  const EnergyTable table(g, 3, model);
  const auto s = build_supernode(g, 3, {10, 0, std::nullopt});
  std::vector<double> vars;
  for (int q : {1, 10, 100}) {
    std::vector<double> v;
    for (std::uint64_t r = 0; r < 500; ++r) v.push_back(estimate_energy(g, s, q, table.function(), 5000 * q + r).value);
    vars.push_back(moments(v).var);
  }
  // One-sided 95% critical ratio of two sample variances with 499 degrees of
  // freedom each (normal approximation on the log scale).
  const double slack = std::exp(1.6448536269514722 * std::sqrt(2.0 / 499.0 + 2.0 / 499.0));
  const bool ok = vars[1] <= vars[0] * slack && vars[2] <= vars[1] * slack;
  report(6, ok, fmt("variance %.4g (q=1), %.4g (q=10), %.4g (q=100); allowed ratio %.3f", vars[0], vars[1], vars[2], slack));
}

void learning_signal() {
  const auto t0 = Clock::now();
  const PlantedTaskConfig pc;  // 2000 nodes, k=3
  const auto planted = make_planted_task(pc);
  TrainConfig cfg;
  cfg.k = pc.k;
  cfg.dims.p = pc.feature_dim;
  cfg.num_samples = 64;
  cfg.sample_size = 60;
  cfg.q = 20;
  cfg.supernode_budget = 30;
  cfg.minibatch = 8;
  cfg.lr = 2e-3;
  cfg.epochs = 40;
  cfg.log_mpn_mode = LogMpnMode::learned_offset;
  std::string per_seed;
  double gap = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    cfg.seed = seed;
    const auto result = train(sample_positives(planted.graph, cfg), cfg);
    const auto random = init_model(cfg.dims, cfg.leaky_slope, seed);
    const double trained = evaluate_table(embed_ksets(result.model, planted.graph, planted.task), planted.task, 1e-3, seed);
    const double baseline = evaluate_table(embed_ksets(random, planted.graph, planted.task), planted.task, 1e-3, seed);
    gap += (trained - baseline) / 5.0;
    per_seed += fmt(" %.3f/%.3f", trained, baseline);
  }
  const double elapsed = seconds_since(t0);
  report(7, gap >= 0.05 && elapsed < 1800.0,
         fmt("trained minus random balanced accuracy %.4f (trained/random:%s); %.0f s", gap, per_seed.c_str(), elapsed));
}

void degenerate_exactness() {
  bool bitwise = true, edges = true;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Graph g = erdos_renyi(12, 0.35, 500 + seed, 2);
    const auto model = init_model({2, 8, 8, 8, 4, 1}, 0.01, seed);
    const auto phi = model_energy_function(model);
    for (int k : {2, 3, 4}) {
      const auto s = build_supernode(g, k, {1 << 20, seed, std::nullopt});
      if (!s.covers_space()) continue;  // disconnected sample: the BFS sees one component
      bitwise = bitwise && estimate_energy(g, s, 3, phi, seed).value == exact_energy_sum(g, k, phi);
    }
    double direct = 0.0;
    for (const auto& [u, v] : g.edge_list()) {
      const std::vector<NodeId> e{u, v};
      direct += phi(induced_subgraph(g, e));
    }
    edges = edges && direct == exact_energy_sum(g, 2, phi);
  }
  const Graph karate = load_graph(std::string(MOTIFREP_DATA) + "/karate.edgelist");
  const MotifFunction count = [](const Motif&) { return 1.0; };
  const auto all = build_supernode(karate, 3, {1 << 20, 0, std::nullopt});
  bitwise = bitwise && all.covers_space() && estimate_energy(karate, all, 2, count, 0).value == exact_energy_sum(karate, 3, count);
  report(8, bitwise && edges,
         fmt("covering supernode %s exact sum; k=2 sum %s edge iteration", bitwise ? "equals" : "differs from",
             edges ? "equals" : "differs from"));
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void determinism() {
  const fs::path root = fs::temp_directory_path() / "motifrep_acceptance_replay";
  fs::remove_all(root);
  fs::create_directories(root);
  auto dir = [&](const std::string& name) { return (root / name).string(); };
  const std::string karate = std::string(MOTIFREP_DATA) + "/karate.edgelist";

  const std::vector<std::vector<std::string>> commands{
      {"synth-task", "--out-dir", dir("synth"), "--nodes", "150", "--planted", "25", "--background-cliques", "25",
       "--feature-dim", "4", "--seed", "3"},
      {"train", "--out-dir", dir("train"), "--graph", dir("synth") + "/graph.edgelist", "--features",
       dir("synth") + "/features.csv", "--epochs", "2", "--num-samples", "4", "--sample-size", "15", "--q", "4",
       "--budget", "6", "--d-gnn", "6", "--d-hidden", "6", "--d-rep", "6", "--energy-hidden", "4", "--log-mpn",
       "learned-offset", "--seed", "9"},
      {"estimate", "--out-dir", dir("estimate"), "--graph", dir("synth") + "/graph.edgelist", "--features",
       dir("synth") + "/features.csv", "--checkpoint", dir("train") + "/checkpoint.json", "--q", "40", "--budget", "20",
       "--seed", "4"},
      {"oracle", "--out-dir", dir("oracle"), "--graph", karate, "--count", "--k", "3"},
      {"embed", "--out-dir", dir("embed"), "--graph", dir("synth") + "/graph.edgelist", "--features",
       dir("synth") + "/features.csv", "--task", dir("synth") + "/task.txt", "--checkpoint", dir("train") + "/checkpoint.json"},
      {"eval", "--out-dir", dir("eval"), "--graph", dir("synth") + "/graph.edgelist", "--features",
       dir("synth") + "/features.csv", "--task", dir("synth") + "/task.txt", "--checkpoint", dir("train") + "/checkpoint.json"},
  };

  int bytes_ok = 0, numeric_ok = 0;
  std::string failed;
  for (const auto& args : commands) {
    const std::string name = args[0];
    const std::string first = args[2];  // --out-dir value
    bool ran = cli::run(args) == 0;
    ran = ran && cli::run({"replay", first + "/manifest.json", "--out-dir", first + "_t1", "--threads", "1"}) == 0;
    ran = ran && cli::run({"replay", first + "/manifest.json", "--out-dir", first + "_t8", "--threads", "8"}) == 0;
    if (!ran) {
      failed += " " + name + "(run)";
      continue;
    }
    const auto manifest = nlohmann::json::parse(slurp(first + "/manifest.json"));
    bool same = true;
    for (const auto& [file, hash] : manifest["outputs"].items()) same = same && slurp(first + "/" + file) == slurp(first + "_t1/" + file);
    bytes_ok += same;
    const auto m8 = nlohmann::json::parse(slurp(first + "_t8/manifest.json"));
    const bool same8 = m8["outputs"] == manifest["outputs"];
    numeric_ok += same8;
    if (!same || !same8) failed += " " + name;
  }
  const int n = static_cast<int>(commands.size());
  report(9, bytes_ok == n && numeric_ok == n,
         fmt("%d/%d commands byte-identical on replay at 1 thread, %d/%d identical at 8 threads%s", bytes_ok, n,
             numeric_ok, n, failed.empty() ? "" : ("; failed:" + failed).c_str()));
}

}  // namespace

int main() {
  const auto t0 = Clock::now();
  unbiasedness();
  kac_return_time();
  gradients();
  permutation_invariance();
  jensen_bound();
  variance_control();
  learning_signal();
  degenerate_exactness();
  determinism();
  std::printf("%d criteria failed; %.0f s total\n", failures, seconds_since(t0));
  return failures == 0 ? 0 : 1;
}
