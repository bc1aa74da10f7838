#include "motifrep/nce_trainer.hpp"

#include "motifrep/error.hpp"
#include "motifrep/tour_estimator.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <deque>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

namespace motifrep {

Graph forest_fire_sample(const Graph& g, std::size_t target_size, double forward_prob, Rng& rng) {
  const std::size_t n = g.num_nodes();
  if (target_size > n) {
    throw ValidationError("Forest Fire target size " + std::to_string(target_size) + " exceeds node count " + std::to_string(n));
  }
  if (!(forward_prob >= 0.0 && forward_prob <= 1.0)) throw ValidationError("forward_prob must be in [0, 1]");

  std::vector<bool> burned(n, false);
  std::vector<NodeId> unburned(n);
  std::iota(unburned.begin(), unburned.end(), NodeId{0});
  std::size_t count = 0;
  std::deque<NodeId> fire;
  auto burn = [&](NodeId v) {
    burned[v] = true;
    ++count;
    fire.push_back(v);
  };
  while (count < target_size) {
    // ignition: uniform over unburned nodes (compact the pool lazily)
    std::erase_if(unburned, [&](NodeId v) { return burned[v]; });
    burn(unburned[uniform_index(rng, unburned.size())]);
    while (!fire.empty() && count < target_size) {
      const NodeId x = fire.front();
      fire.pop_front();
      for (NodeId y : g.neighbors(x)) {
        if (count >= target_size) break;
        if (!burned[y] && uniform_unit(rng) < forward_prob) burn(y);
      }
    }
    fire.clear();
  }

  std::vector<NodeId> kept;
  kept.reserve(count);
  std::vector<NodeId> remap(n, 0);
  for (NodeId v = 0; v < n; ++v) {
    if (burned[v]) {
      remap[v] = static_cast<NodeId>(kept.size());
      kept.push_back(v);
    }
  }
  std::vector<std::pair<NodeId, NodeId>> edges;
  for (NodeId v : kept) {
    for (NodeId w : g.neighbors(v)) {
      if (v < w && burned[w]) edges.emplace_back(remap[v], remap[w]);
    }
  }
  FeatureMatrix features(static_cast<Eigen::Index>(kept.size()), g.feature_dim());
  std::vector<std::string> labels;
  labels.reserve(kept.size());
  for (std::size_t i = 0; i < kept.size(); ++i) {
    features.row(static_cast<Eigen::Index>(i)) = g.features().row(kept[i]);
    labels.push_back(g.node_label(kept[i]));
  }
  return Graph(kept.size(), edges, std::move(features), std::move(labels));
}

Graph make_noise(const Graph& positive, NoiseMode mode, Rng& rng) {
  const std::size_t n = positive.num_nodes();
  if (mode == NoiseMode::shuffle_features) {
    if (positive.feature_dim() < 1) throw ValidationError("feature-shuffle noise needs a graph with node features");
    std::vector<NodeId> perm(n);
    std::iota(perm.begin(), perm.end(), NodeId{0});
    for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[uniform_index(rng, i)]);
    FeatureMatrix shuffled(positive.features().rows(), positive.features().cols());
    for (std::size_t v = 0; v < n; ++v) {
      shuffled.row(static_cast<Eigen::Index>(v)) = positive.features().row(perm[v]);
    }
    const auto edges = positive.edge_list();
    return Graph(n, edges, std::move(shuffled), positive.node_ids());
  }

  const std::size_t pairs = n * (n - 1) / 2;
  if (positive.num_edges() + n > pairs) {
    throw ValidationError("edge-addition noise needs " + std::to_string(n) + " free node pairs, graph has " +
                          std::to_string(pairs - positive.num_edges()));
  }
  auto edges = positive.edge_list();
  std::set<std::pair<NodeId, NodeId>> added;
  const std::size_t free_pairs = pairs - positive.num_edges();
  if (free_pairs < 4 * n) {
    // dense: partial Fisher-Yates over the explicit non-edge list
    std::vector<std::pair<NodeId, NodeId>> candidates;
    for (NodeId u = 0; u < n; ++u) {
      for (NodeId v = u + 1; v < n; ++v) {
        if (!positive.has_edge(u, v)) candidates.emplace_back(u, v);
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      std::swap(candidates[i], candidates[i + uniform_index(rng, candidates.size() - i)]);
      added.insert(candidates[i]);
    }
  } else {
    while (added.size() < n) {
      auto u = static_cast<NodeId>(uniform_index(rng, n));
      auto v = static_cast<NodeId>(uniform_index(rng, n));
      if (u == v || positive.has_edge(u, v)) continue;
      if (u > v) std::swap(u, v);
      added.emplace(u, v);
    }
  }
  edges.insert(edges.end(), added.begin(), added.end());
  return Graph(n, edges, positive.features(), positive.node_ids());
}

namespace {

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// log(1 + exp(x)) without overflow
double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

constexpr double kClamp = 1e-12;

}  // namespace

double nce_response(double phi_hat, double log_mpn) { return sigmoid(-(phi_hat + log_mpn)); }

double nce_loss(std::span<const double> responses_pos, std::span<const double> responses_neg) {
  if (responses_pos.empty() || responses_neg.empty()) throw ValidationError("NCE loss needs positive and noise responses");
  double loss = 0.0;
  for (double y : responses_pos) loss -= std::log(std::clamp(y, kClamp, 1.0 - kClamp));
  for (double y : responses_neg) loss -= std::log(std::clamp(1.0 - y, kClamp, 1.0 - kClamp));
  return loss;
}

double nce_example_loss(double phi_hat, double log_mpn, bool positive) {
  const double z = -(phi_hat + log_mpn);
  return positive ? softplus(-z) : softplus(z);
}

double nce_energy_gradient(double phi_hat, double log_mpn, bool positive) {
  const double y = nce_response(phi_hat, log_mpn);
  return positive ? 1.0 - y : -y;
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw ValidationError("invalid config field '" + field + "': " + why);
  };
  if (k < 1 || k > kMaxK) fail("k", "must be in [1, " + std::to_string(kMaxK) + "]");
  if (q < 1) fail("q", "must be >= 1");
  if (supernode_budget < 1) fail("supernode_budget", "must be >= 1");
  if (minibatch < 1) fail("minibatch", "must be >= 1");
  if (!(lr > 0.0)) fail("lr", "must be > 0");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0)) fail("adam_beta1", "must be in [0, 1)");
  if (!(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) fail("adam_beta2", "must be in [0, 1)");
  if (!(adam_eps > 0.0)) fail("adam_eps", "must be > 0");
  if (epochs < 0) fail("epochs", "must be >= 0");
  if (M < 1) fail("M", "must be >= 1");
  if (num_samples < 1) fail("num_samples", "must be >= 1");
  if (sample_size < k) fail("sample_size", "must be >= k");
  if (!(forward_prob >= 0.0 && forward_prob <= 1.0)) fail("forward_prob", "must be in [0, 1]");
  if (dims.d_gnn < 1 || dims.d_hidden < 1 || dims.d_rep < 1 || dims.H < 1 || dims.gnn_layers < 1) {
    fail("dims", "all widths must be >= 1");
  }
  if (!(leaky_slope >= 0.0 && leaky_slope < 1.0)) fail("leaky_slope", "must be in [0, 1)");
}

nlohmann::json TrainConfig::to_json() const {
  return {
      {"k", k},
      {"q", q},
      {"supernode_budget", supernode_budget},
      {"minibatch", minibatch},
      {"lr", lr},
      {"adam_betas", {adam_beta1, adam_beta2}},
      {"adam_eps", adam_eps},
      {"epochs", epochs},
      {"M", M},
      {"num_samples", num_samples},
      {"sample_size", sample_size},
      {"forward_prob", forward_prob},
      {"log_mpn_mode", log_mpn_mode == LogMpnMode::zero ? "zero" : "learned-offset"},
      {"noise_mode", noise_mode == NoiseMode::shuffle_features ? "shuffle-features" : "add-edges"},
      {"seed", seed},
      {"dims", {{"d_gnn", dims.d_gnn}, {"d_hidden", dims.d_hidden}, {"d_rep", dims.d_rep}, {"H", dims.H}, {"gnn_layers", dims.gnn_layers}}},
      {"leaky_slope", leaky_slope},
      {"rho_output_activation", rho_output_activation},
      {"threads", threads},
  };
}

void TrainConfig::update_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ValidationError("config must be a JSON object");
  try {
    for (auto it = doc.begin(); it != doc.end(); ++it) {
      const std::string& key = it.key();
      const auto& v = it.value();
      if (key == "k") k = v.get<int>();
      else if (key == "q") q = v.get<int>();
      else if (key == "supernode_budget") supernode_budget = v.get<int>();
      else if (key == "minibatch") minibatch = v.get<int>();
      else if (key == "lr") lr = v.get<double>();
      else if (key == "adam_betas") {
        const auto betas = v.get<std::vector<double>>();
        if (betas.size() != 2) throw ValidationError("invalid config field 'adam_betas': expected two values");
        adam_beta1 = betas[0];
        adam_beta2 = betas[1];
      } else if (key == "adam_eps") adam_eps = v.get<double>();
      else if (key == "epochs") epochs = v.get<int>();
      else if (key == "M") M = v.get<int>();
      else if (key == "num_samples") num_samples = v.get<int>();
      else if (key == "sample_size") sample_size = v.get<int>();
      else if (key == "forward_prob") forward_prob = v.get<double>();
      else if (key == "log_mpn_mode") {
        const auto s = v.get<std::string>();
        if (s == "zero") log_mpn_mode = LogMpnMode::zero;
        else if (s == "learned-offset") log_mpn_mode = LogMpnMode::learned_offset;
        else throw ValidationError("invalid config field 'log_mpn_mode': '" + s + "'");
      } else if (key == "noise_mode") {
        const auto s = v.get<std::string>();
        if (s == "shuffle-features") noise_mode = NoiseMode::shuffle_features;
        else if (s == "add-edges") noise_mode = NoiseMode::add_edges;
        else throw ValidationError("invalid config field 'noise_mode': '" + s + "'");
      } else if (key == "seed") seed = v.get<std::uint64_t>();
      else if (key == "dims") {
        dims.d_gnn = v.value("d_gnn", dims.d_gnn);
        dims.d_hidden = v.value("d_hidden", dims.d_hidden);
        dims.d_rep = v.value("d_rep", dims.d_rep);
        dims.H = v.value("H", dims.H);
        dims.gnn_layers = v.value("gnn_layers", dims.gnn_layers);
      } else if (key == "leaky_slope") leaky_slope = v.get<double>();
      else if (key == "rho_output_activation") rho_output_activation = v.get<bool>();
      else if (key == "threads") threads = v.get<unsigned>();
      else throw ValidationError("invalid config field '" + key + "': unknown key");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("invalid config: ") + e.what());
  }
}

Adam::Adam(std::size_t size, double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), m_(size, 0.0), v_(size, 0.0) {}

void Adam::step(std::span<double> params, std::span<const double> grad) {
  if (params.size() != m_.size() || grad.size() != m_.size()) throw ValidationError("Adam: size mismatch");
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grad[i];
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grad[i] * grad[i];
    const double m_hat = m_[i] / c1;
    const double v_hat = v_[i] / c2;
    params[i] -= lr_ * m_hat / (std::sqrt(v_hat) + eps_);
  }
}

std::vector<Graph> sample_positives(const Graph& g, const TrainConfig& cfg) {
  cfg.validate();
  const auto size = std::min<std::size_t>(static_cast<std::size_t>(cfg.sample_size), g.num_nodes());
  std::vector<Graph> out;
  out.reserve(static_cast<std::size_t>(cfg.num_samples));
  for (int i = 0; i < cfg.num_samples; ++i) {
    Rng rng = make_rng(cfg.seed, static_cast<std::uint64_t>(i), 0xF1AE);
    out.push_back(forest_fire_sample(g, size, cfg.forward_prob, rng));
  }
  return out;
}

namespace {

struct ExampleResult {
  bool used = false;
  bool positive = true;
  double phi_hat = 0.0;
  double yhat = 0.0;
  double loss = 0.0;
  double d_phi = 0.0;
  double tour_length = 0.0;
  ModelParams grad;
  std::string warning;
};

}  // namespace

TrainResult train(const std::vector<Graph>& data, const TrainConfig& cfg, const WarningSink& warn) {
  cfg.validate();
  ModelDims dims = cfg.dims;
  dims.p = data.empty() ? cfg.dims.p : data.front().feature_dim();
  for (const auto& g : data) {
    if (g.feature_dim() != dims.p) throw ValidationError("training graphs have differing feature dimensions");
  }
  if (cfg.noise_mode == NoiseMode::shuffle_features && dims.p == 0 && !data.empty()) {
    throw ValidationError("feature-shuffle noise needs node features; use noise_mode add-edges for featureless graphs");
  }

  TrainResult result;
  result.model = init_model(dims, cfg.leaky_slope, cfg.seed, cfg.rho_output_activation);
  result.best_model = result.model;
  if (cfg.epochs == 0 || data.empty()) return result;

  const bool learn_offset = cfg.log_mpn_mode == LogMpnMode::learned_offset;
  std::vector<double> flat = result.model.params.flatten();
  if (learn_offset) flat.push_back(0.0);
  Adam adam(flat.size(), cfg.lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
  double best = std::numeric_limits<double>::infinity();

  const int per_positive = 1 + cfg.M;
  std::uint64_t example_counter = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    Rng epoch_rng = make_rng(cfg.seed, static_cast<std::uint64_t>(epoch), 0xE90C);
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[uniform_index(epoch_rng, i)]);

    EpochLog entry;
    entry.epoch = epoch;
    double sum_pos = 0.0, sum_neg = 0.0, sum_len = 0.0;
    int n_pos = 0, n_neg = 0, n_len = 0;

    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.minibatch)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.minibatch));
      const std::size_t batch_examples = (stop - start) * static_cast<std::size_t>(per_positive);
      const double offset = learn_offset ? flat.back() : 0.0;
      const EnergyModel& model = result.model;
      std::vector<ExampleResult> results(batch_examples);
      const std::uint64_t base = example_counter;
      example_counter += batch_examples;

      parallel_for(batch_examples, cfg.threads, [&](std::size_t e, unsigned) {
        const std::size_t pos_index = order[start + e / static_cast<std::size_t>(per_positive)];
        const int slot = static_cast<int>(e % static_cast<std::size_t>(per_positive));
        const std::uint64_t uid = base + e;
        ExampleResult& r = results[e];
        r.positive = slot == 0;
        Graph noise;
        if (!r.positive) {
          Rng noise_rng = make_rng(cfg.seed, uid, 0x401E);
          noise = make_noise(data[pos_index], cfg.noise_mode, noise_rng);
        }
        const Graph& g = r.positive ? data[pos_index] : noise;
        Supernode s;
        try {
          s = build_supernode(g, cfg.k, {cfg.supernode_budget, substream_seed(cfg.seed, uid, 0x5A9E), std::nullopt});
        } catch (const Error& err) {
          r.warning = "skipping example (graph " + std::to_string(pos_index) + (r.positive ? ", positive" : ", noise") +
                      "): " + err.what();
          return;
        }
        EstimateOptions opts;
        opts.collect_visits = true;
        const auto est = estimate_energy(g, s, cfg.q, model_energy_function(model), substream_seed(cfg.seed, uid, 0x7042), opts);
        r.used = true;
        r.phi_hat = est.value;
        r.yhat = nce_response(est.value, offset);
        r.loss = nce_example_loss(est.value, offset, r.positive);
        r.d_phi = nce_energy_gradient(est.value, offset, r.positive);
        r.tour_length = est.mean_tour_length;
        r.grad = model.zeros_like();
        accumulate_estimate_gradient(g, s, est, model, r.d_phi, r.grad);
      });

      ModelParams grad = result.model.zeros_like();
      double batch_loss = 0.0;
      double d_offset = 0.0;
      for (auto& r : results) {
        if (!r.warning.empty()) {
          ++entry.skipped;
          if (warn) warn(r.warning);
        }
        if (!r.used) continue;
        grad += r.grad;
        batch_loss += r.loss;
        d_offset += r.d_phi;
        if (r.positive) {
          sum_pos += r.yhat;
          ++n_pos;
        } else {
          sum_neg += r.yhat;
          ++n_neg;
        }
        if (r.tour_length > 0.0) {
          sum_len += r.tour_length;
          ++n_len;
        }
      }
      if (!std::isfinite(batch_loss) || !grad.all_finite()) {
        throw TrainingAborted("non-finite loss at epoch " + std::to_string(epoch) + "; weights before this batch are attached",
                              result.model);
      }
      entry.loss += batch_loss;

      std::vector<double> flat_grad = grad.flatten();
      if (learn_offset) flat_grad.push_back(d_offset);
      adam.step(flat, flat_grad);
      if (learn_offset) {
        result.model.params.assign(std::span<const double>(flat.data(), flat.size() - 1));
        result.log_offset = flat.back();
      } else {
        result.model.params.assign(flat);
      }
    }

    entry.mean_yhat_pos = n_pos ? sum_pos / n_pos : 0.0;
    entry.mean_yhat_neg = n_neg ? sum_neg / n_neg : 0.0;
    entry.mean_tour_length = n_len ? sum_len / n_len : 0.0;
    entry.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
    result.log.push_back(entry);
    if (entry.loss < best) {
      best = entry.loss;
      result.best_loss = entry.loss;
      result.best_epoch = epoch;
      result.best_model = result.model;
      result.best_log_offset = result.log_offset;
    }
  }
  return result;
}

std::string training_log_csv(const std::vector<EpochLog>& log, bool include_timing) {
  std::ostringstream out;
  out << "epoch,loss,mean_yhat_pos,mean_yhat_neg,mean_tour_len,wall_ms\n";
  char buf[256];
  for (const auto& e : log) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g,%.3f\n", e.epoch, e.loss, e.mean_yhat_pos, e.mean_yhat_neg,
                  e.mean_tour_length, include_timing ? e.wall_ms : 0.0);
    out << buf;
  }
  return out.str();
}

}  // namespace motifrep
