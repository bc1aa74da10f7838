#include "motifrep/energy_model.hpp"

#include "motifrep/error.hpp"
#include "motifrep/parallel.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace motifrep {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using TensorMap = Eigen::Map<MatrixXd>;
using ConstTensorMap = Eigen::Map<const MatrixXd>;

TensorMap as_map(MatrixXd& m) { return TensorMap(m.data(), m.rows(), m.cols()); }
TensorMap as_map(VectorXd& v) { return TensorMap(v.data(), v.size(), 1); }
ConstTensorMap as_map(const MatrixXd& m) { return ConstTensorMap(m.data(), m.rows(), m.cols()); }
ConstTensorMap as_map(const VectorXd& v) { return ConstTensorMap(v.data(), v.size(), 1); }

// Applies fn to corresponding tensors of two parameter sets.
template <typename A, typename B, typename Fn>
void zip_tensors(A& a, B& b, Fn&& fn) {
  if (a.gnn.size() != b.gnn.size()) throw ValidationError("parameter sets have different GNN depth");
  for (std::size_t l = 0; l < a.gnn.size(); ++l) {
    fn(a.gnn[l].weight, b.gnn[l].weight);
    fn(a.gnn[l].bias, b.gnn[l].bias);
  }
  fn(a.readout_hidden.weight, b.readout_hidden.weight);
  fn(a.readout_hidden.bias, b.readout_hidden.bias);
  fn(a.readout_out.weight, b.readout_out.weight);
  fn(a.readout_out.bias, b.readout_out.bias);
  fn(a.rho_hidden.weight, b.rho_hidden.weight);
  fn(a.rho_hidden.bias, b.rho_hidden.bias);
  fn(a.rho_out.weight, b.rho_out.weight);
  fn(a.rho_out.bias, b.rho_out.bias);
  fn(a.energy, b.energy);
}

template <typename P, typename Fn>
void each_named(P& p, Fn&& fn) {
  for (std::size_t l = 0; l < p.gnn.size(); ++l) {
    fn("gnn." + std::to_string(l) + ".weight", p.gnn[l].weight);
    fn("gnn." + std::to_string(l) + ".bias", p.gnn[l].bias);
  }
  fn(std::string("readout.hidden.weight"), p.readout_hidden.weight);
  fn(std::string("readout.hidden.bias"), p.readout_hidden.bias);
  fn(std::string("readout.out.weight"), p.readout_out.weight);
  fn(std::string("readout.out.bias"), p.readout_out.bias);
  fn(std::string("rho.hidden.weight"), p.rho_hidden.weight);
  fn(std::string("rho.hidden.bias"), p.rho_hidden.bias);
  fn(std::string("rho.out.weight"), p.rho_out.weight);
  fn(std::string("rho.out.bias"), p.rho_out.bias);
  fn(std::string("energy"), p.energy);
}

template <typename Derived>
auto leaky(const Eigen::MatrixBase<Derived>& x, double slope) {
  return x.unaryExpr([slope](double v) { return v < 0.0 ? slope * v : v; });
}

template <typename Derived>
auto leaky_grad(const Eigen::MatrixBase<Derived>& pre, double slope) {
  return pre.unaryExpr([slope](double v) { return v < 0.0 ? slope : 1.0; });
}

void require_finite(const MatrixXd& m, const char* stage, const Motif& motif) {
  if (!m.allFinite()) throw NumericError(std::string("non-finite value in ") + stage + " for motif " + motif.nodes.to_string());
}

DenseLayer glorot(int out, int in, Rng& rng) {
  DenseLayer layer{MatrixXd(out, in), VectorXd::Zero(out)};
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  // row-major draw order so the stream does not depend on storage order
  for (int i = 0; i < out; ++i) {
    for (int j = 0; j < in; ++j) layer.weight(i, j) = (2.0 * uniform_unit(rng) - 1.0) * limit;
  }
  return layer;
}

DenseLayer zero_layer(int out, int in) { return DenseLayer{MatrixXd::Zero(out, in), VectorXd::Zero(out)}; }

// Row-normalized motif adjacency: mean over in-motif neighbors, zero rows for
// isolated nodes.
MatrixXd mean_operator(const Motif& m) {
  const int k = m.size();
  MatrixXd a = MatrixXd::Zero(k, k);
  for (int i = 0; i < k; ++i) {
    const int deg = std::popcount(m.adj_rows[static_cast<std::size_t>(i)]);
    if (deg == 0) continue;
    for (int j = 0; j < k; ++j) {
      if (m.adjacent(i, j)) a(i, j) = 1.0 / deg;
    }
  }
  return a;
}

MatrixXd motif_input(const Motif& m, const ModelDims& dims) {
  if (dims.p == 0) {
    if (m.features.cols() != 0) {
      throw ValidationError("featureless model applied to motif with " + std::to_string(m.features.cols()) + " features");
    }
    return MatrixXd::Ones(m.size(), 1);
  }
  if (m.features.cols() != dims.p) {
    throw ValidationError("motif has " + std::to_string(m.features.cols()) + " feature columns, model expects " +
                          std::to_string(dims.p));
  }
  return MatrixXd(m.features);
}

struct ForwardCache {
  MatrixXd mean_op;
  std::vector<MatrixXd> layer_in;   // concat [H | mean H] per layer
  std::vector<MatrixXd> layer_pre;  // pre-activations per layer
  MatrixXd node_embeddings;
  VectorXd pooled;
  VectorXd readout_pre;
  VectorXd readout_act;
  VectorXd rep_raw;
  double rep_norm = 0.0;
  VectorXd rep;
  VectorXd rho_pre;
  VectorXd rho_act;
  VectorXd rho_out_pre;
  VectorXd rho_out;
  double phi = 0.0;
};

void forward_gnn(const Motif& m, const EnergyModel& model, ForwardCache& c) {
  c.mean_op = mean_operator(m);
  MatrixXd h = motif_input(m, model.dims);
  c.layer_in.clear();
  c.layer_pre.clear();
  for (const auto& layer : model.params.gnn) {
    MatrixXd in(h.rows(), 2 * h.cols());
    in << h, c.mean_op * h;
    MatrixXd pre = (in * layer.weight.transpose()).rowwise() + layer.bias.transpose();
    h = leaky(pre, model.leaky_slope);
    c.layer_in.push_back(std::move(in));
    c.layer_pre.push_back(std::move(pre));
  }
  c.node_embeddings = std::move(h);
  require_finite(c.node_embeddings, "gnn", m);
}

void forward_readout(const EnergyModel& model, ForwardCache& c) {
  const auto& p = model.params;
  c.pooled = c.node_embeddings.colwise().sum().transpose();
  c.readout_pre = p.readout_hidden.weight * c.pooled + p.readout_hidden.bias;
  c.readout_act = leaky(c.readout_pre, model.leaky_slope);
  c.rep_raw = p.readout_out.weight * c.readout_act + p.readout_out.bias;
  c.rep_norm = c.rep_raw.norm();
  c.rep = c.rep_norm > 0.0 ? VectorXd(c.rep_raw / c.rep_norm) : VectorXd::Zero(c.rep_raw.size());
}

void forward_all(const Motif& m, const EnergyModel& model, ForwardCache& c) {
  forward_gnn(m, model, c);
  forward_readout(model, c);
  require_finite(c.rep, "readout", m);
  const auto& p = model.params;
  c.rho_pre = p.rho_hidden.weight * c.rep + p.rho_hidden.bias;
  c.rho_act = leaky(c.rho_pre, model.leaky_slope);
  c.rho_out_pre = p.rho_out.weight * c.rho_act + p.rho_out.bias;
  c.rho_out = model.rho_output_activation ? VectorXd(leaky(c.rho_out_pre, model.leaky_slope)) : c.rho_out_pre;
  require_finite(c.rho_out, "rho", m);
  c.phi = p.energy.dot(c.rho_out);
  if (!std::isfinite(c.phi)) throw NumericError("non-finite energy for motif " + m.nodes.to_string());
}

}  // namespace

std::size_t ModelParams::size() const {
  std::size_t n = 0;
  each_named(*this, [&](const std::string&, const auto& t) { n += static_cast<std::size_t>(t.size()); });
  return n;
}

void ModelParams::set_zero() {
  each_named(*this, [](const std::string&, auto& t) { t.setZero(); });
}

ModelParams& ModelParams::operator+=(const ModelParams& other) {
  zip_tensors(*this, other, [](auto& a, const auto& b) { a += b; });
  return *this;
}

ModelParams& ModelParams::operator*=(double s) {
  each_named(*this, [s](const std::string&, auto& t) { t *= s; });
  return *this;
}

void ModelParams::add_scaled(const ModelParams& other, double s) {
  zip_tensors(*this, other, [s](auto& a, const auto& b) { a += s * b; });
}

bool ModelParams::all_finite() const {
  bool ok = true;
  each_named(*this, [&](const std::string&, const auto& t) { ok = ok && t.allFinite(); });
  return ok;
}

double ModelParams::max_abs() const {
  double m = 0.0;
  each_named(*this, [&](const std::string&, const auto& t) {
    if (t.size()) m = std::max(m, t.cwiseAbs().maxCoeff());
  });
  return m;
}

void ModelParams::for_each_tensor(const std::function<void(const std::string&, Eigen::Map<MatrixXd>)>& fn) {
  each_named(*this, [&](const std::string& name, auto& t) { fn(name, as_map(t)); });
}

void ModelParams::for_each_tensor(const std::function<void(const std::string&, Eigen::Map<const MatrixXd>)>& fn) const {
  each_named(*this, [&](const std::string& name, const auto& t) { fn(name, as_map(t)); });
}

std::vector<double> ModelParams::flatten() const {
  std::vector<double> flat;
  flat.reserve(size());
  each_named(*this, [&](const std::string&, const auto& t) { flat.insert(flat.end(), t.data(), t.data() + t.size()); });
  return flat;
}

void ModelParams::assign(std::span<const double> flat) {
  if (flat.size() != size()) throw ValidationError("flat parameter vector has wrong length");
  std::size_t offset = 0;
  each_named(*this, [&](const std::string&, auto& t) {
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(offset), t.size(), t.data());
    offset += static_cast<std::size_t>(t.size());
  });
}

ModelParams EnergyModel::zeros_like() const {
  ModelParams z = params;
  z.set_zero();
  return z;
}

EnergyModel init_model(const ModelDims& dims, double leaky_slope, std::uint64_t seed, bool rho_output_activation) {
  if (dims.p < 0 || dims.d_gnn < 1 || dims.d_hidden < 1 || dims.d_rep < 1 || dims.H < 1 || dims.gnn_layers < 1) {
    throw ValidationError("model dimensions must be positive (p may be 0)");
  }
  Rng rng(mix_seed(seed));
  EnergyModel model;
  model.dims = dims;
  model.leaky_slope = leaky_slope;
  model.rho_output_activation = rho_output_activation;
  auto& p = model.params;
  int in = dims.input_dim();
  for (int l = 0; l < dims.gnn_layers; ++l) {
    p.gnn.push_back(glorot(dims.d_gnn, 2 * in, rng));
    in = dims.d_gnn;
  }
  p.readout_hidden = glorot(dims.d_hidden, dims.d_gnn, rng);
  p.readout_out = glorot(dims.d_rep, dims.d_hidden, rng);
  p.rho_hidden = glorot(dims.d_hidden, dims.d_rep, rng);
  p.rho_out = glorot(dims.H, dims.d_hidden, rng);
  const double limit = std::sqrt(6.0 / (dims.H + 1.0));
  p.energy.resize(dims.H);
  for (int i = 0; i < dims.H; ++i) p.energy(i) = (2.0 * uniform_unit(rng) - 1.0) * limit;
  return model;
}

void validate_model(const EnergyModel& model) {
  const auto& d = model.dims;
  const auto& p = model.params;
  auto check = [](const DenseLayer& layer, int out, int in, const std::string& name) {
    if (layer.weight.rows() != out || layer.weight.cols() != in || layer.bias.size() != out) {
      throw ValidationError("tensor '" + name + "' has shape inconsistent with model dims");
    }
  };
  if (static_cast<int>(p.gnn.size()) != d.gnn_layers) throw ValidationError("GNN depth does not match dims");
  int in = d.input_dim();
  for (std::size_t l = 0; l < p.gnn.size(); ++l) {
    check(p.gnn[l], d.d_gnn, 2 * in, "gnn." + std::to_string(l));
    in = d.d_gnn;
  }
  check(p.readout_hidden, d.d_hidden, d.d_gnn, "readout.hidden");
  check(p.readout_out, d.d_rep, d.d_hidden, "readout.out");
  check(p.rho_hidden, d.d_hidden, d.d_rep, "rho.hidden");
  check(p.rho_out, d.H, d.d_hidden, "rho.out");
  if (p.energy.size() != d.H) throw ValidationError("tensor 'energy' has shape inconsistent with model dims");
  if (!p.all_finite()) throw ValidationError("model contains non-finite weights");
}

Eigen::MatrixXd gnn_forward(const Motif& m, const EnergyModel& model) {
  ForwardCache c;
  forward_gnn(m, model, c);
  return c.node_embeddings;
}

MotifRepresentation readout(const Eigen::MatrixXd& node_embeddings, const EnergyModel& model) {
  if (node_embeddings.rows() == 0) throw ValidationError("readout needs at least one node embedding");
  ForwardCache c;
  c.node_embeddings = node_embeddings;
  forward_readout(model, c);
  return MotifRepresentation{c.rep, {}, c.rep_norm == 0.0};
}

MotifRepresentation motif_representation(const Motif& m, const EnergyModel& model) {
  ForwardCache c;
  forward_gnn(m, model, c);
  forward_readout(model, c);
  require_finite(c.rep, "readout", m);
  return MotifRepresentation{c.rep, m.nodes, c.rep_norm == 0.0};
}

double motif_energy(const Motif& m, const EnergyModel& model) {
  ForwardCache c;
  forward_all(m, model, c);
  return c.phi;
}

double motif_energy_backward(const Motif& m, const EnergyModel& model, double upstream, ModelParams& grad) {
  ForwardCache c;
  forward_all(m, model, c);
  if (upstream == 0.0) return c.phi;
  const auto& p = model.params;
  const double slope = model.leaky_slope;

  grad.energy += upstream * c.rho_out;
  VectorXd d_out = upstream * p.energy;
  if (model.rho_output_activation) d_out = d_out.cwiseProduct(leaky_grad(c.rho_out_pre, slope));
  grad.rho_out.weight += d_out * c.rho_act.transpose();
  grad.rho_out.bias += d_out;
  const VectorXd d_rho_pre = (p.rho_out.weight.transpose() * d_out).cwiseProduct(leaky_grad(c.rho_pre, slope));
  grad.rho_hidden.weight += d_rho_pre * c.rep.transpose();
  grad.rho_hidden.bias += d_rho_pre;
  const VectorXd d_rep = p.rho_hidden.weight.transpose() * d_rho_pre;

  // Jacobian of x / |x| is (I - h h^T) / |x|; the zero vector is a constant
  if (c.rep_norm == 0.0) return c.phi;
  const VectorXd d_raw = (d_rep - c.rep * c.rep.dot(d_rep)) / c.rep_norm;
  grad.readout_out.weight += d_raw * c.readout_act.transpose();
  grad.readout_out.bias += d_raw;
  const VectorXd d_readout_pre =
      (p.readout_out.weight.transpose() * d_raw).cwiseProduct(leaky_grad(c.readout_pre, slope));
  grad.readout_hidden.weight += d_readout_pre * c.pooled.transpose();
  grad.readout_hidden.bias += d_readout_pre;
  const VectorXd d_pooled = p.readout_hidden.weight.transpose() * d_readout_pre;

  MatrixXd d_h = d_pooled.transpose().replicate(m.size(), 1);
  for (std::size_t l = p.gnn.size(); l-- > 0;) {
    const MatrixXd d_pre = d_h.cwiseProduct(leaky_grad(c.layer_pre[l], slope));
    grad.gnn[l].weight += d_pre.transpose() * c.layer_in[l];
    grad.gnn[l].bias += d_pre.colwise().sum().transpose();
    if (l == 0) break;
    const MatrixXd d_in = d_pre * p.gnn[l].weight;
    const auto width = d_in.cols() / 2;
    d_h = d_in.leftCols(width) + c.mean_op.transpose() * d_in.rightCols(width);
  }
  return c.phi;
}

ModelParams motif_energy_gradient(const Motif& m, const EnergyModel& model, double upstream) {
  ModelParams grad = model.zeros_like();
  motif_energy_backward(m, model, upstream, grad);
  return grad;
}

nlohmann::json serialize_model(const EnergyModel& model) {
  nlohmann::json weights = nlohmann::json::object();
  model.params.for_each_tensor([&](const std::string& name, Eigen::Map<const MatrixXd> t) {
    std::vector<double> data;
    data.reserve(static_cast<std::size_t>(t.size()));
    for (Eigen::Index i = 0; i < t.rows(); ++i) {
      for (Eigen::Index j = 0; j < t.cols(); ++j) data.push_back(t(i, j));
    }
    weights[name] = {{"shape", {t.rows(), t.cols()}}, {"data", std::move(data)}};
  });
  const auto& d = model.dims;
  return {
      {"format", "motifrep-energy-model"},
      {"version", kCheckpointVersion},
      {"dims", {{"p", d.p}, {"d_gnn", d.d_gnn}, {"d_hidden", d.d_hidden}, {"d_rep", d.d_rep}, {"H", d.H}, {"gnn_layers", d.gnn_layers}}},
      {"leaky_slope", model.leaky_slope},
      {"rho_output_activation", model.rho_output_activation},
      {"weights", std::move(weights)},
  };
}

EnergyModel deserialize_model(const nlohmann::json& doc) {
  try {
    if (!doc.is_object()) throw ParseError("checkpoint is not a JSON object");
    const int version = doc.at("version").get<int>();
    if (version != kCheckpointVersion) {
      throw ValidationError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                            std::to_string(kCheckpointVersion) + ")");
    }
    const auto& jd = doc.at("dims");
    ModelDims dims;
    dims.p = jd.at("p").get<int>();
    dims.d_gnn = jd.at("d_gnn").get<int>();
    dims.d_hidden = jd.at("d_hidden").get<int>();
    dims.d_rep = jd.at("d_rep").get<int>();
    dims.H = jd.at("H").get<int>();
    dims.gnn_layers = jd.value("gnn_layers", 1);
    EnergyModel model = init_model(dims, doc.at("leaky_slope").get<double>(), 0, doc.value("rho_output_activation", false));
    const auto& weights = doc.at("weights");
    std::size_t used = 0;
    model.params.for_each_tensor([&](const std::string& name, Eigen::Map<MatrixXd> t) {
      if (!weights.contains(name)) throw ValidationError("checkpoint is missing tensor '" + name + "'");
      const auto& jt = weights.at(name);
      const auto shape = jt.at("shape").get<std::vector<Eigen::Index>>();
      if (shape.size() != 2 || shape[0] != t.rows() || shape[1] != t.cols()) {
        throw ValidationError("tensor '" + name + "' shape mismatch");
      }
      const auto& data = jt.at("data");
      if (data.size() != static_cast<std::size_t>(t.size())) throw ValidationError("tensor '" + name + "' has wrong element count");
      std::size_t idx = 0;
      for (Eigen::Index i = 0; i < t.rows(); ++i) {
        for (Eigen::Index j = 0; j < t.cols(); ++j) t(i, j) = data[idx++].get<double>();
      }
      ++used;
    });
    if (used != weights.size()) throw ValidationError("checkpoint has unexpected extra tensors");
    validate_model(model);
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed checkpoint: ") + e.what());
  }
}

void save_model(const EnergyModel& model, const std::string& path, const nlohmann::json& extra) {
  nlohmann::json doc = serialize_model(model);
  if (extra.is_object()) {
    for (auto it = extra.begin(); it != extra.end(); ++it) doc[it.key()] = it.value();
  }
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write checkpoint '" + path + "'");
  out << doc.dump(1) << "\n";
}

EnergyModel load_model(const std::string& path, nlohmann::json* extra) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open checkpoint '" + path + "'");
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  EnergyModel model = deserialize_model(doc);
  if (extra) {
    *extra = nlohmann::json::object();
    for (auto it = doc.begin(); it != doc.end(); ++it) {
      static const char* model_keys[] = {"format", "version", "dims", "leaky_slope", "rho_output_activation", "weights"};
      if (std::find(std::begin(model_keys), std::end(model_keys), it.key()) == std::end(model_keys)) (*extra)[it.key()] = it.value();
    }
  }
  return model;
}

}  // namespace motifrep
