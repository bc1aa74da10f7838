#pragma once

#include "motifrep/energy_model.hpp"
#include "motifrep/graph.hpp"

#include <Eigen/Core>
#include <json.hpp>

#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace motifrep {

enum class Split { train, test };

struct LabeledKSet {
  KSet nodes;  // internal node indices of the task graph
  int label = 0;
  Split split = Split::train;
};

/// Labeled k-node sets over one graph. File format: a "k=<int>" header, then
/// "v1 ... vk label split" per line with external node ids.
struct KSetTask {
  int k = 0;
  std::string graph_ref;
  std::vector<LabeledKSet> examples;

  std::vector<int> labels() const;
  std::vector<std::size_t> indices(Split split) const;
};

/// Validates ids against `g` (external labels) and the task invariants.
KSetTask load_task(const std::string& path, const Graph& g);
void save_task(const KSetTask& task, const Graph& g, const std::string& path);
void validate_task(const KSetTask& task, const Graph& g);

enum class EmbeddingSource { mhm_motif, pooled_external, raw_features };

struct EmbeddingTable {
  Eigen::MatrixXd rows;  // one row per task example
  EmbeddingSource source = EmbeddingSource::mhm_motif;
  int degenerate_rows = 0;  // zero-vector representations (readout output was zero)

  Eigen::Index dim() const noexcept { return rows.cols(); }
};

/// Frozen motif representations of every task k-set.
EmbeddingTable embed_ksets(const EnergyModel& model, const Graph& g, const KSetTask& task, unsigned threads = 1);

enum class PoolMode { sum, mean, raw_features };

/// Per-node vectors keyed by external node id.
struct NodeEmbeddings {
  std::unordered_map<std::string, Eigen::VectorXd> rows;
  Eigen::Index dim = 0;
};

NodeEmbeddings load_node_embeddings(const std::string& path);

/// k-set rows pooled from per-node vectors (sum or mean), or from the graph's
/// own features in raw_features mode (`nodes` is ignored then).
EmbeddingTable pool_external(const NodeEmbeddings& nodes, const Graph& g, const KSetTask& task, PoolMode mode);

void save_embedding_table(const EmbeddingTable& table, const std::string& path);
EmbeddingTable load_embedding_table(const std::string& path);

struct LogisticOptions {
  double reg_lambda = 1e-3;
  double tolerance = 1e-6;  // on the gradient norm
  int max_iterations = 5000;
  std::uint64_t seed = 0;
};

/// Multinomial logistic regression, one row of weights per class.
struct LogisticModel {
  std::vector<int> classes;  // sorted distinct training labels
  Eigen::MatrixXd weight;    // classes x d
  Eigen::VectorXd bias;      // classes, centered to sum zero
  int iterations = 0;
  double gradient_norm = 0.0;

  std::vector<int> predict(const Eigen::MatrixXd& x) const;
};

/// Full-batch gradient descent with backtracking on
/// mean cross-entropy + reg_lambda/2 * |W|^2 (bias unpenalized).
LogisticModel logistic_fit(const Eigen::MatrixXd& x, std::span<const int> labels, const LogisticOptions& options = {});
/// Fits on the task's train split.
LogisticModel logistic_fit(const EmbeddingTable& table, const KSetTask& task, const LogisticOptions& options = {});

/// Mean per-class recall over the classes present in `labels`.
double balanced_accuracy(std::span<const int> predictions, std::span<const int> labels);

struct EvalConfig {
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  double reg_lambda = 1e-3;
};

struct EvalReport {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation over seeds (0 for one seed)
  std::vector<double> per_seed;

  nlohmann::json to_json() const;
};

/// Test-split balanced accuracy of a classifier fit on the train split; one
/// fit per seed. Example order in the task does not affect the result.
double evaluate_table(const EmbeddingTable& table, const KSetTask& task, double reg_lambda, std::uint64_t seed);
EvalReport run_eval(const EmbeddingTable& table, const KSetTask& task, const EvalConfig& cfg);
/// One table per seed (e.g. one trained model per seed).
EvalReport summarize(std::vector<double> per_seed);

}  // namespace motifrep
