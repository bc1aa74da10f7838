#pragma once

#include "motifrep/graph.hpp"

#include <Eigen/Core>
#include <json.hpp>

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace motifrep {

/// Layer widths of the motif energy network.
struct ModelDims {
  int p = 0;         // node feature dimension of the data (0: featureless)
  int d_gnn = 64;    // GraphSAGE-mean output width
  int d_hidden = 128;
  int d_rep = 128;   // exported motif representation width
  int H = 64;        // rho output width
  int gnn_layers = 1;

  /// Width of the GNN input. Featureless graphs use one constant input.
  int input_dim() const noexcept { return p > 0 ? p : 1; }
  friend bool operator==(const ModelDims&, const ModelDims&) = default;
};

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;    // out
};

/// All learnable weights. Also used as the gradient container.
struct ModelParams {
  std::vector<DenseLayer> gnn;  // layer l maps [self; neighbor mean] (2*in) -> d_gnn
  DenseLayer readout_hidden;    // d_gnn -> d_hidden
  DenseLayer readout_out;       // d_hidden -> d_rep
  DenseLayer rho_hidden;        // d_rep -> d_hidden
  DenseLayer rho_out;           // d_hidden -> H
  Eigen::VectorXd energy;       // H

  std::size_t size() const;
  void set_zero();
  ModelParams& operator+=(const ModelParams& other);
  ModelParams& operator*=(double s);
  /// this += s * other
  void add_scaled(const ModelParams& other, double s);
  bool all_finite() const;
  double max_abs() const;

  /// Visits every tensor in a fixed order with its checkpoint name.
  void for_each_tensor(const std::function<void(const std::string&, Eigen::Map<Eigen::MatrixXd>)>& fn);
  void for_each_tensor(const std::function<void(const std::string&, Eigen::Map<const Eigen::MatrixXd>)>& fn) const;

  std::vector<double> flatten() const;
  void assign(std::span<const double> flat);
};

struct EnergyModel {
  ModelDims dims;
  double leaky_slope = 0.01;
  /// Apply LeakyReLU to the final rho layer as well (default: linear output).
  bool rho_output_activation = false;
  ModelParams params;

  /// Zero-valued parameter set with this model's shapes.
  ModelParams zeros_like() const;
};

/// Glorot-uniform weights, zero biases; deterministic per seed.
EnergyModel init_model(const ModelDims& dims, double leaky_slope, std::uint64_t seed, bool rho_output_activation = false);

/// Checks shape consistency and finiteness; throws ValidationError.
void validate_model(const EnergyModel& model);

/// k x d_gnn node embeddings from GraphSAGE-mean layers restricted to the
/// motif's induced edges.
Eigen::MatrixXd gnn_forward(const Motif& m, const EnergyModel& model);

struct MotifRepresentation {
  Eigen::VectorXd vector;  // d_rep, unit norm unless `degenerate`
  KSet source;
  /// Pre-normalization output was exactly zero; `vector` is the zero vector.
  bool degenerate = false;
};

MotifRepresentation readout(const Eigen::MatrixXd& node_embeddings, const EnergyModel& model);

/// Representation of a motif under the model (GNN followed by readout).
MotifRepresentation motif_representation(const Motif& m, const EnergyModel& model);

double motif_energy(const Motif& m, const EnergyModel& model);

/// Adds the gradient of upstream * phi(m) with respect to every weight into
/// `grad` (which must have the model's shapes). Returns phi(m).
double motif_energy_backward(const Motif& m, const EnergyModel& model, double upstream, ModelParams& grad);

/// Convenience form returning a fresh gradient.
ModelParams motif_energy_gradient(const Motif& m, const EnergyModel& model, double upstream);

inline constexpr int kCheckpointVersion = 1;

/// Checkpoint document: {format, version, dims, leaky_slope,
/// rho_output_activation, weights: {name: {shape, data (row-major)}}}.
nlohmann::json serialize_model(const EnergyModel& model);
EnergyModel deserialize_model(const nlohmann::json& doc);

void save_model(const EnergyModel& model, const std::string& path, const nlohmann::json& extra);
/// Loads a checkpoint file; `extra` (if non-null) receives non-model fields.
EnergyModel load_model(const std::string& path, nlohmann::json* extra = nullptr);

}  // namespace motifrep
