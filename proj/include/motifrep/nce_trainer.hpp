#pragma once

#include "motifrep/energy_model.hpp"
#include "motifrep/error.hpp"
#include "motifrep/graph.hpp"
#include "motifrep/parallel.hpp"

#include <json.hpp>

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace motifrep {

/// Forest Fire subsample: ignite a random node, burn each unburned neighbor
/// of a burning node independently with `forward_prob`, re-ignite when the
/// fire dies. Stops once `target_size` nodes are burned and returns the
/// induced subgraph (node labels and features carried over, original order).
Graph forest_fire_sample(const Graph& g, std::size_t target_size, double forward_prob, Rng& rng);

enum class NoiseMode { shuffle_features, add_edges };

/// shuffle_features: uniform permutation of feature rows, adjacency kept.
/// add_edges: n distinct non-edges added uniformly without replacement.
Graph make_noise(const Graph& positive, NoiseMode mode, Rng& rng);

/// sigma(-(phi_hat + log_mpn)), computed without overflow.
double nce_response(double phi_hat, double log_mpn);

/// -sum log(y_pos) - sum log(1 - y_neg), responses clamped to [1e-12, 1 - 1e-12].
double nce_loss(std::span<const double> responses_pos, std::span<const double> responses_neg);

/// Per-example loss computed from the logit directly (no clamping).
double nce_example_loss(double phi_hat, double log_mpn, bool positive);
/// d(example loss)/d(phi_hat): 1 - y for positives, -y for noise.
double nce_energy_gradient(double phi_hat, double log_mpn, bool positive);

enum class LogMpnMode { zero, learned_offset };

struct TrainConfig {
  int k = 3;
  int q = 80;
  int supernode_budget = 100;
  int minibatch = 8;
  double lr = 0.001;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  int epochs = 10;
  int M = 1;
  int num_samples = 32;  // Forest Fire positives drawn from the training graph
  int sample_size = 100;
  double forward_prob = 0.7;
  LogMpnMode log_mpn_mode = LogMpnMode::zero;
  NoiseMode noise_mode = NoiseMode::shuffle_features;
  std::uint64_t seed = 0;
  ModelDims dims;
  double leaky_slope = 0.01;
  bool rho_output_activation = false;
  unsigned threads = 1;

  /// Throws ValidationError naming the first invalid field.
  void validate() const;
  nlohmann::json to_json() const;
  /// Overlays the fields present in `doc`; unknown keys are an error.
  void update_from_json(const nlohmann::json& doc);
};

/// Adam over a flat parameter vector.
class Adam {
 public:
  Adam(std::size_t size, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void step(std::span<double> params, std::span<const double> grad);
  long steps() const noexcept { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::vector<double> m_, v_;
  long t_ = 0;
};

struct EpochLog {
  int epoch = 0;
  double loss = 0.0;
  double mean_yhat_pos = 0.0;
  double mean_yhat_neg = 0.0;
  double mean_tour_length = 0.0;
  double wall_ms = 0.0;
  int skipped = 0;
};

struct TrainResult {
  EnergyModel model;
  double log_offset = 0.0;  // learned log(M * P_n) stand-in (0 in zero mode)
  EnergyModel best_model;
  double best_log_offset = 0.0;
  double best_loss = 0.0;
  int best_epoch = -1;
  std::vector<EpochLog> log;
};

/// Raised when the loss becomes non-finite; carries the last good weights.
class TrainingAborted : public NumericError {
 public:
  TrainingAborted(const std::string& what, EnergyModel last_good) : NumericError(what), last_good_(std::move(last_good)) {}
  const EnergyModel& last_good() const noexcept { return last_good_; }

 private:
  EnergyModel last_good_;
};

using WarningSink = std::function<void(const std::string&)>;

/// Positive training set: cfg.num_samples Forest Fire samples of `g`.
std::vector<Graph> sample_positives(const Graph& g, const TrainConfig& cfg);

/// Noise-contrastive training with tour-estimated energies and Adam.
TrainResult train(const std::vector<Graph>& data, const TrainConfig& cfg, const WarningSink& warn = {});

/// Training log as CSV (epoch,loss,mean_yhat_pos,mean_yhat_neg,mean_tour_len,wall_ms).
/// wall_ms is written as 0 unless `include_timing`, so untimed logs are reproducible.
std::string training_log_csv(const std::vector<EpochLog>& log, bool include_timing = true);

}  // namespace motifrep
