#include "cli.hpp"

#include "motifrep/energy_model.hpp"
#include "motifrep/error.hpp"
#include "motifrep/eval_harness.hpp"
#include "motifrep/motif_space.hpp"
#include "motifrep/nce_trainer.hpp"
#include "motifrep/synthetic.hpp"
#include "motifrep/tour_estimator.hpp"

#include <CLI11.hpp>
#include <json.hpp>
#include <openssl/evp.h>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

namespace motifrep::cli {

namespace fs = std::filesystem;
using nlohmann::json;

std::string sha256_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot read '" + path + "' for hashing");
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  char buf[1 << 16];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(in.gcount()));
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, digest, &len);
  EVP_MD_CTX_free(ctx);
  std::string hex;
  char byte[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(byte, sizeof byte, "%02x", digest[i]);
    hex += byte;
  }
  return hex;
}

namespace {

// Everything a command records in its manifest.
struct Run {
  std::string command;
  std::vector<std::string> argv;
  fs::path out_dir;
  unsigned threads = 1;
  json config = json::object();
  json seeds = json::object();
  json inputs = json::object();
  json outputs = json::object();
  std::string status = "ok";

  void input(const std::string& role, const std::string& path) {
    inputs[role] = {{"path", path}, {"sha256", sha256_file(path)}};
  }
  std::string output_path(const std::string& name) const { return (out_dir / name).string(); }
  void output(const std::string& name) { outputs[name] = sha256_file(output_path(name)); }
};

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write '" + path + "'");
  out << text;
}

void write_json(const std::string& path, const json& doc) { write_text(path, doc.dump(2) + "\n"); }

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
}

void write_manifest(const Run& run, double wall_seconds) {
  json m = {{"tool", "motifrep"},
            {"version", kToolVersion},
            {"command", run.command},
            {"argv", run.argv},
            {"threads", run.threads},
            {"config", run.config},
            {"seeds", run.seeds},
            {"inputs", run.inputs},
            {"outputs", run.outputs},
            {"status", run.status},
            {"wall_time_s", wall_seconds}};
  write_json(run.output_path("manifest.json"), m);
}

void warn(const std::string& msg) { std::cerr << "warning: " << msg << "\n"; }

struct GraphArgs {
  std::string graph;
  std::optional<std::string> features;

  void add(CLI::App* app) {
    app->add_option("--graph", graph, "Edge list file")->required();
    app->add_option("--features", features, "Node feature CSV");
  }
  Graph load(Run& run) const {
    run.input("graph", graph);
    if (features) run.input("features", *features);
    LoadOptions opts;
    opts.warn = warn;
    return load_graph(graph, features, opts);
  }
};

struct DimsArgs {
  ModelDims dims;
  double leaky_slope = 0.01;
  bool rho_activation = false;

  void add(CLI::App* app) {
    app->add_option("--d-gnn", dims.d_gnn, "GNN output width")->capture_default_str();
    app->add_option("--d-hidden", dims.d_hidden, "Readout hidden width")->capture_default_str();
    app->add_option("--d-rep", dims.d_rep, "Motif representation width")->capture_default_str();
    app->add_option("--energy-hidden", dims.H, "Energy head width")->capture_default_str();
    app->add_option("--gnn-layers", dims.gnn_layers, "Number of GNN layers")->capture_default_str();
    app->add_option("--leaky-slope", leaky_slope, "LeakyReLU negative slope")->capture_default_str();
    app->add_flag("--rho-activation", rho_activation, "Apply LeakyReLU to the energy head output");
  }
};

// Energy function source shared by estimate and oracle.
struct EnergyArgs {
  std::optional<std::string> checkpoint;
  bool count = false;

  void add(CLI::App* app) {
    auto* ck = app->add_option("--checkpoint", checkpoint, "Model checkpoint JSON");
    auto* cn = app->add_flag("--count", count, "Use unit motif energy (counts connected k-sets)");
    ck->excludes(cn);
  }
};

MotifFunction energy_function(const EnergyArgs& args, const Graph& g, Run& run, std::optional<int>& checkpoint_k,
                              std::optional<EnergyModel>& holder) {
  if (args.count == args.checkpoint.has_value()) throw ValidationError("give exactly one of --checkpoint or --count");
  if (args.count) return [](const Motif&) { return 1.0; };
  run.input("checkpoint", *args.checkpoint);
  json extra;
  holder = load_model(*args.checkpoint, &extra);
  if (extra.contains("k")) checkpoint_k = extra["k"].get<int>();
  if (holder->dims.p != g.feature_dim()) {
    throw ValidationError("checkpoint expects " + std::to_string(holder->dims.p) + " features, graph has " +
                          std::to_string(g.feature_dim()));
  }
  return model_energy_function(*holder);
}

std::string node_list(const Graph& g, const KSet& s) {
  std::string out;
  for (NodeId v : s) out += (out.empty() ? "" : " ") + g.node_label(v);
  return out;
}

std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

KSet parse_start(const Graph& g, const std::string& text) {
  std::unordered_map<std::string, NodeId> index;
  for (NodeId v = 0; v < g.num_nodes(); ++v) index.emplace(g.node_label(v), v);
  std::vector<NodeId> nodes;
  std::stringstream in(text);
  for (std::string tok; std::getline(in, tok, ',');) {
    auto it = index.find(tok);
    if (it == index.end()) throw InvalidSetError("start node '" + tok + "' is not in the graph");
    nodes.push_back(it->second);
  }
  if (nodes.empty() || nodes.size() > static_cast<std::size_t>(kMaxK)) throw InvalidSetError("bad --start set");
  return KSet(nodes);
}

// ---- train ----

struct TrainArgs {
  GraphArgs graph;
  std::optional<std::string> config_path;
  std::optional<int> k, q, budget, minibatch, epochs, M, num_samples, sample_size, d_gnn, d_hidden, d_rep, energy_hidden,
      gnn_layers;
  std::optional<double> lr, forward_prob, leaky_slope;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> log_mpn, noise;
  bool rho_activation = false;
  bool log_timing = false;

  void add(CLI::App* app) {
    graph.add(app);
    app->add_option("--config", config_path, "TrainConfig JSON; flags override its fields");
    app->add_option("--k", k, "Motif size");
    app->add_option("--q", q, "Tours per estimate");
    app->add_option("--budget", budget, "Supernode size");
    app->add_option("--minibatch", minibatch, "Positives per optimizer step");
    app->add_option("--lr", lr, "Adam learning rate");
    app->add_option("--epochs", epochs, "Training epochs");
    app->add_option("--noise-per-positive", M, "Noise graphs per positive");
    app->add_option("--num-samples", num_samples, "Forest Fire positives");
    app->add_option("--sample-size", sample_size, "Nodes per Forest Fire sample");
    app->add_option("--forward-prob", forward_prob, "Forest Fire burn probability");
    app->add_option("--seed", seed, "Random seed");
    app->add_option("--log-mpn", log_mpn, "zero | learned-offset")->check(CLI::IsMember({"zero", "learned-offset"}));
    app->add_option("--noise", noise, "shuffle-features | add-edges")->check(CLI::IsMember({"shuffle-features", "add-edges"}));
    app->add_option("--d-gnn", d_gnn, "GNN output width");
    app->add_option("--d-hidden", d_hidden, "Readout hidden width");
    app->add_option("--d-rep", d_rep, "Motif representation width");
    app->add_option("--energy-hidden", energy_hidden, "Energy head width");
    app->add_option("--gnn-layers", gnn_layers, "Number of GNN layers");
    app->add_option("--leaky-slope", leaky_slope, "LeakyReLU negative slope");
    app->add_flag("--rho-activation", rho_activation, "Apply LeakyReLU to the energy head output");
    app->add_flag("--log-timing", log_timing, "Add wall-clock column to the training log");
  }

  TrainConfig resolve(Run& run, unsigned threads) const {
    TrainConfig cfg;
    if (config_path) {
      run.input("config", *config_path);
      cfg.update_from_json(read_json(*config_path));
    }
    auto set = [](auto& field, const auto& opt) {
      if (opt) field = *opt;
    };
    set(cfg.k, k);
    set(cfg.q, q);
    set(cfg.supernode_budget, budget);
    set(cfg.minibatch, minibatch);
    set(cfg.lr, lr);
    set(cfg.epochs, epochs);
    set(cfg.M, M);
    set(cfg.num_samples, num_samples);
    set(cfg.sample_size, sample_size);
    set(cfg.forward_prob, forward_prob);
    set(cfg.seed, seed);
    set(cfg.dims.d_gnn, d_gnn);
    set(cfg.dims.d_hidden, d_hidden);
    set(cfg.dims.d_rep, d_rep);
    set(cfg.dims.H, energy_hidden);
    set(cfg.dims.gnn_layers, gnn_layers);
    set(cfg.leaky_slope, leaky_slope);
    if (rho_activation) cfg.rho_output_activation = true;
    if (log_mpn) cfg.log_mpn_mode = *log_mpn == "zero" ? LogMpnMode::zero : LogMpnMode::learned_offset;
    if (noise) cfg.noise_mode = *noise == "add-edges" ? NoiseMode::add_edges : NoiseMode::shuffle_features;
    cfg.threads = threads;
    return cfg;
  }
};

json checkpoint_extra(const TrainConfig& cfg, double log_offset, int epoch) {
  json c = cfg.to_json();
  c.erase("threads");
  return {{"k", cfg.k}, {"log_offset", log_offset}, {"epoch", epoch}, {"train_config", c}};
}

void cmd_train(const TrainArgs& a, Run& run) {
  const Graph g = a.graph.load(run);
  TrainConfig cfg = a.resolve(run, run.threads);
  cfg.dims.p = g.feature_dim();
  cfg.validate();
  run.config = cfg.to_json();
  run.config.erase("threads");
  run.seeds = {{"train", cfg.seed}};

  const auto positives = sample_positives(g, cfg);
  try {
    const TrainResult r = train(positives, cfg, warn);
    save_model(r.model, run.output_path("checkpoint.json"), checkpoint_extra(cfg, r.log_offset, cfg.epochs));
    run.output("checkpoint.json");
    if (r.best_epoch >= 0) {
      save_model(r.best_model, run.output_path("best_checkpoint.json"),
                 checkpoint_extra(cfg, r.best_log_offset, r.best_epoch));
      run.output("best_checkpoint.json");
    }
    write_text(run.output_path("train_log.csv"), training_log_csv(r.log, a.log_timing));
    run.output("train_log.csv");
  } catch (const TrainingAborted& e) {
    save_model(e.last_good(), run.output_path("checkpoint.json"), checkpoint_extra(cfg, 0.0, -1));
    run.output("checkpoint.json");
    run.status = "aborted";
    throw;
  }
}

// ---- estimate ----

struct EstimateArgs {
  GraphArgs graph;
  EnergyArgs energy;
  std::optional<int> k;
  int q = 80;
  int budget = 100;
  std::uint64_t seed = 0;
  std::optional<std::string> start;
  std::uint64_t max_steps = kDefaultMaxTourSteps;

  void add(CLI::App* app) {
    graph.add(app);
    energy.add(app);
    app->add_option("--k", k, "Motif size (defaults to the checkpoint's)");
    app->add_option("--q", q, "Number of tours")->capture_default_str();
    app->add_option("--budget", budget, "Supernode size")->capture_default_str();
    app->add_option("--seed", seed, "Random seed")->capture_default_str();
    app->add_option("--start", start, "Comma-separated node ids of the BFS start set");
    app->add_option("--max-steps", max_steps, "Tour length cap")->capture_default_str();
  }
};

int resolve_k(const std::optional<int>& flag, const std::optional<int>& checkpoint_k) {
  if (flag && checkpoint_k && *flag != *checkpoint_k) {
    throw ValidationError("--k " + std::to_string(*flag) + " does not match checkpoint k=" + std::to_string(*checkpoint_k));
  }
  if (flag) return *flag;
  if (checkpoint_k) return *checkpoint_k;
  throw ValidationError("--k is required");
}

void check_k(int k, const Graph& g) {
  if (k < 1 || k > kMaxK) throw ValidationError("k=" + std::to_string(k) + " is out of range");
  if (static_cast<std::size_t>(k) > g.num_nodes()) {
    throw ValidationError("k=" + std::to_string(k) + " exceeds the number of nodes (" + std::to_string(g.num_nodes()) + ")");
  }
}

void cmd_estimate(const EstimateArgs& a, Run& run) {
  const Graph g = a.graph.load(run);
  std::optional<int> ck;
  std::optional<EnergyModel> model;
  const auto phi = energy_function(a.energy, g, run, ck, model);
  const int k = resolve_k(a.k, ck);
  check_k(k, g);
  run.config = {{"k", k}, {"q", a.q}, {"budget", a.budget}, {"max_steps", a.max_steps}, {"mode", a.energy.count ? "count" : "model"}};
  if (a.start) run.config["start"] = *a.start;
  run.seeds = {{"estimate", a.seed}};

  SupernodeOptions sopts;
  sopts.budget = a.budget;
  sopts.seed = a.seed;
  if (a.start) sopts.start = parse_start(g, *a.start);
  const Supernode s = build_supernode(g, k, sopts);
  const SupernodeReport report = validate_supernode(g, s);
  for (const auto& r : report.reasons) warn(r);

  EstimateOptions eopts;
  eopts.threads = run.threads;
  eopts.max_steps = a.max_steps;
  const EnergyEstimate est = estimate_energy(g, s, a.q, phi, a.seed, eopts);
  json out = est.to_json();
  out["k"] = k;
  out["supernode_size"] = s.members.size();
  out["supernode"] = report.to_json();
  write_json(run.output_path("estimate.json"), out);
  run.output("estimate.json");
}

// ---- oracle ----

struct OracleArgs {
  GraphArgs graph;
  EnergyArgs energy;
  std::optional<int> k;
  double cap = kDefaultEnumerationCap;

  void add(CLI::App* app) {
    graph.add(app);
    energy.add(app);
    app->add_option("--k", k, "Motif size (defaults to the checkpoint's)");
    app->add_option("--cap", cap, "Refuse enumerations larger than this")->capture_default_str();
  }
};

void cmd_oracle(const OracleArgs& a, Run& run) {
  const Graph g = a.graph.load(run);
  std::optional<int> ck;
  std::optional<EnergyModel> model;
  const auto phi = energy_function(a.energy, g, run, ck, model);
  const int k = resolve_k(a.k, ck);
  check_k(k, g);
  run.config = {{"k", k}, {"cap", a.cap}, {"mode", a.energy.count ? "count" : "model"}};

  EnumerationOptions opts;
  opts.cap = a.cap;
  const auto sets = enumerate_cises(g, k, opts);
  std::ostringstream csv;
  csv << "nodes,energy\n";
  double total = 0.0;
  for (const auto& s : sets) {
    const double e = phi(induced_subgraph(g, s));
    if (!std::isfinite(e)) throw NumericError("non-finite energy on k-set " + node_list(g, s));
    total += e;
    csv << node_list(g, s) << ',' << format_double(e) << "\n";
  }
  write_json(run.output_path("oracle.json"), {{"k", k}, {"cis_count", sets.size()}, {"energy_sum", total}});
  run.output("oracle.json");
  write_text(run.output_path("cises.csv"), csv.str());
  run.output("cises.csv");
}

// ---- embed / eval ----

struct RepresentationArgs {
  GraphArgs graph;
  std::string task;
  std::optional<std::string> checkpoint;
  bool random_init = false;
  std::uint64_t init_seed = 0;
  DimsArgs dims;

  void add(CLI::App* app) {
    graph.add(app);
    app->add_option("--task", task, "Task file")->required();
    auto* ck = app->add_option("--checkpoint", checkpoint, "Trained model checkpoint");
    auto* rnd = app->add_flag("--random-init", random_init, "Use a freshly initialized model");
    ck->excludes(rnd);
    app->add_option("--init-seed", init_seed, "Seed of the random-init model")->capture_default_str();
    dims.add(app);
  }

  bool has_model() const { return checkpoint.has_value() || random_init; }

  EmbeddingTable embed(const Graph& g, const KSetTask& task, Run& run) const {
    EnergyModel model;
    if (checkpoint) {
      run.input("checkpoint", *checkpoint);
      json extra;
      model = load_model(*checkpoint, &extra);
      if (extra.contains("k") && extra["k"].get<int>() != task.k) {
        throw ValidationError("task k=" + std::to_string(task.k) + " does not match checkpoint k=" +
                              std::to_string(extra["k"].get<int>()));
      }
      run.config["representation"] = "checkpoint";
    } else {
      ModelDims d = dims.dims;
      d.p = g.feature_dim();
      model = init_model(d, dims.leaky_slope, init_seed, dims.rho_activation);
      run.config["representation"] = "random-init";
      run.config["dims"] = {{"d_gnn", d.d_gnn}, {"d_hidden", d.d_hidden}, {"d_rep", d.d_rep}, {"H", d.H}, {"gnn_layers", d.gnn_layers}};
      run.config["leaky_slope"] = dims.leaky_slope;
      run.config["rho_output_activation"] = dims.rho_activation;
      run.seeds["init"] = init_seed;
    }
    EmbeddingTable table = embed_ksets(model, g, task, run.threads);
    if (table.degenerate_rows > 0) warn(std::to_string(table.degenerate_rows) + " k-sets have a zero representation");
    return table;
  }
};

void cmd_embed(const RepresentationArgs& a, Run& run) {
  if (!a.has_model()) throw ValidationError("give one of --checkpoint or --random-init");
  const Graph g = a.graph.load(run);
  run.input("task", a.task);
  const KSetTask task = load_task(a.task, g);
  const EmbeddingTable table = a.embed(g, task, run);
  save_embedding_table(table, run.output_path("embeddings.csv"));
  run.output("embeddings.csv");
}

struct EvalArgs {
  RepresentationArgs rep;
  std::optional<std::string> embeddings;
  std::optional<std::string> node_embeddings;
  std::string pool = "sum";
  bool raw_features = false;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  double reg_lambda = 1e-3;

  void add(CLI::App* app) {
    rep.add(app);
    app->add_option("--embeddings", embeddings, "Precomputed k-set embedding CSV");
    app->add_option("--node-embeddings", node_embeddings, "Per-node embedding CSV, pooled per k-set");
    app->add_option("--pool", pool, "sum | mean")->check(CLI::IsMember({"sum", "mean"}))->capture_default_str();
    app->add_flag("--raw-features", raw_features, "Pool the graph's own node features");
    app->add_option("--seeds", seeds, "Classifier seeds")->delimiter(',');
    app->add_option("--reg-lambda", reg_lambda, "L2 penalty on classifier weights")->capture_default_str();
  }
};

void cmd_eval(const EvalArgs& a, Run& run) {
  const int sources = int(a.rep.has_model()) + int(a.embeddings.has_value()) + int(a.node_embeddings.has_value()) +
                      int(a.raw_features);
  if (sources != 1) {
    throw ValidationError("give exactly one of --checkpoint, --random-init, --embeddings, --node-embeddings, --raw-features");
  }
  const Graph g = a.rep.graph.load(run);
  run.input("task", a.rep.task);
  const KSetTask task = load_task(a.rep.task, g);

  EmbeddingTable table;
  if (a.rep.has_model()) {
    table = a.rep.embed(g, task, run);
  } else if (a.embeddings) {
    run.input("embeddings", *a.embeddings);
    table = load_embedding_table(*a.embeddings);
    run.config["representation"] = "embeddings";
  } else if (a.node_embeddings) {
    run.input("node_embeddings", *a.node_embeddings);
    table = pool_external(load_node_embeddings(*a.node_embeddings), g, task, a.pool == "mean" ? PoolMode::mean : PoolMode::sum);
    run.config["representation"] = "node-embeddings";
    run.config["pool"] = a.pool;
  } else {
    table = pool_external({}, g, task, PoolMode::raw_features);
    run.config["representation"] = "raw-features";
  }
  EvalConfig cfg;
  cfg.seeds = a.seeds;
  cfg.reg_lambda = a.reg_lambda;
  run.config["reg_lambda"] = cfg.reg_lambda;
  run.seeds["classifier"] = cfg.seeds;
  const EvalReport report = run_eval(table, task, cfg);
  write_json(run.output_path("report.json"), report.to_json());
  run.output("report.json");
}

// ---- synth-task ----

struct SynthArgs {
  PlantedTaskConfig cfg;

  void add(CLI::App* app) {
    app->add_option("--nodes", cfg.num_nodes, "Graph size")->capture_default_str();
    app->add_option("--k", cfg.k, "Planted clique size")->capture_default_str();
    app->add_option("--planted", cfg.num_planted, "Number of planted cliques")->capture_default_str();
    app->add_option("--background-degree", cfg.background_degree, "Mean degree of the random background")->capture_default_str();
    app->add_option("--background-cliques", cfg.background_cliques, "Unplanted cliques")->capture_default_str();
    app->add_option("--feature-dim", cfg.feature_dim, "Node feature width")->capture_default_str();
    app->add_option("--feature-noise", cfg.feature_noise, "Planted member spread")->capture_default_str();
    app->add_option("--test-fraction", cfg.test_fraction, "Share of examples in the test split")->capture_default_str();
    app->add_option("--seed", cfg.seed, "Random seed")->capture_default_str();
  }
};

void cmd_synth(const SynthArgs& a, Run& run) {
  run.config = a.cfg.to_json();
  run.seeds = {{"generator", a.cfg.seed}};
  const PlantedTask t = make_planted_task(a.cfg);
  save_graph(t.graph, run.output_path("graph.edgelist"), run.output_path("features.csv"));
  save_task(t.task, t.graph, run.output_path("task.txt"));
  for (const char* name : {"graph.edgelist", "features.csv", "task.txt"}) run.output(name);
}

// ---- replay ----

std::vector<std::string> replay_args(const std::string& manifest_path, const std::string& out_dir,
                                     std::optional<unsigned> threads) {
  const json m = read_json(manifest_path);
  if (!m.contains("argv") || !m.contains("inputs")) throw ValidationError("'" + manifest_path + "' is not a run manifest");
  for (const auto& [role, entry] : m["inputs"].items()) {
    const auto path = entry["path"].get<std::string>();
    if (sha256_file(path) != entry["sha256"].get<std::string>()) {
      throw ValidationError("input '" + path + "' (" + role + ") changed since the recorded run");
    }
  }
  std::vector<std::string> args;
  const auto argv = m["argv"].get<std::vector<std::string>>();
  for (std::size_t i = 0; i < argv.size(); ++i) {
    const auto& a = argv[i];
    if (a == "--out-dir" || a == "--threads") {
      ++i;
      continue;
    }
    if (a.rfind("--out-dir=", 0) == 0 || a.rfind("--threads=", 0) == 0) continue;
    args.push_back(a);
  }
  args.push_back("--out-dir");
  args.push_back(out_dir);
  args.push_back("--threads");
  args.push_back(std::to_string(threads ? *threads : m.value("threads", 1U)));
  return args;
}

int exit_code_for(const std::exception& e) { return dynamic_cast<const ValidationError*>(&e) ? 2 : 3; }

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"Motif representation learning on graphs", "motifrep"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  Run r;
  r.argv = args;
  std::string out_dir;
  unsigned threads = 1;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--out-dir", out_dir, "Directory for outputs and manifest.json")->required();
    sub->add_option("--threads", threads, "Worker threads")->capture_default_str();
  };

  TrainArgs train_args;
  auto* train = app.add_subcommand("train", "Train an energy model with noise-contrastive estimation");
  common(train);
  train_args.add(train);

  EstimateArgs estimate_args;
  auto* estimate = app.add_subcommand("estimate", "Estimate the total motif energy of a graph with random walk tours");
  common(estimate);
  estimate_args.add(estimate);

  OracleArgs oracle_args;
  auto* oracle = app.add_subcommand("oracle", "Enumerate connected k-sets and sum their energies exactly");
  common(oracle);
  oracle_args.add(oracle);

  RepresentationArgs embed_args;
  auto* embed = app.add_subcommand("embed", "Export motif representations for a task's k-sets");
  common(embed);
  embed_args.add(embed);

  EvalArgs eval_args;
  auto* eval = app.add_subcommand("eval", "Logistic-regression balanced accuracy of a representation");
  common(eval);
  eval_args.add(eval);

  SynthArgs synth_args;
  auto* synth = app.add_subcommand("synth-task", "Generate a planted-clique graph and labeled k-set task");
  common(synth);
  synth_args.add(synth);

  std::string manifest;
  std::optional<unsigned> replay_threads;
  std::string replay_out;
  auto* replay = app.add_subcommand("replay", "Re-run a command from its manifest");
  replay->add_option("manifest", manifest, "manifest.json of the run to repeat")->required();
  replay->add_option("--out-dir", replay_out, "Directory for the new outputs")->required();
  replay->add_option("--threads", replay_threads, "Override the recorded thread count");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  const auto start = std::chrono::steady_clock::now();
  try {
    if (replay->parsed()) return run(replay_args(manifest, replay_out, replay_threads));

    if (threads == 0) throw ValidationError("--threads must be positive");
    r.out_dir = out_dir;
    r.threads = threads;
    fs::create_directories(r.out_dir);
    try {
      if (train->parsed()) {
        r.command = "train";
        cmd_train(train_args, r);
      } else if (estimate->parsed()) {
        r.command = "estimate";
        cmd_estimate(estimate_args, r);
      } else if (oracle->parsed()) {
        r.command = "oracle";
        cmd_oracle(oracle_args, r);
      } else if (embed->parsed()) {
        r.command = "embed";
        cmd_embed(embed_args, r);
      } else if (eval->parsed()) {
        r.command = "eval";
        cmd_eval(eval_args, r);
      } else if (synth->parsed()) {
        r.command = "synth-task";
        cmd_synth(synth_args, r);
      }
    } catch (const std::exception&) {
      if (r.status == "aborted") {
        write_manifest(r, std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
      }
      throw;
    }
    write_manifest(r, std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  }
}

int run(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args);
}

}  // namespace motifrep::cli
