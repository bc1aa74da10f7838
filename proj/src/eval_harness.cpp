#include "motifrep/eval_harness.hpp"

#include "motifrep/error.hpp"
#include "motifrep/parallel.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

namespace motifrep {

std::vector<int> KSetTask::labels() const {
  std::vector<int> out;
  out.reserve(examples.size());
  for (const auto& e : examples) out.push_back(e.label);
  return out;
}

std::vector<std::size_t> KSetTask::indices(Split split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    if (examples[i].split == split) out.push_back(i);
  }
  return out;
}

void validate_task(const KSetTask& task, const Graph& g) {
  if (task.k < 1 || task.k > kMaxK) throw ValidationError("task k=" + std::to_string(task.k) + " is out of range");
  std::set<int> train_labels;
  for (const auto& e : task.examples) {
    if (e.nodes.size() != task.k) throw ValidationError("task example " + e.nodes.to_string() + " does not have k nodes");
    for (int i = 0; i < e.nodes.size(); ++i) {
      if (e.nodes[i] >= g.num_nodes()) throw InvalidSetError("task node index out of range");
      if (i && e.nodes[i] == e.nodes[i - 1]) throw InvalidSetError("task example " + e.nodes.to_string() + " repeats a node");
    }
    if (e.split == Split::train) train_labels.insert(e.label);
  }
  if (train_labels.size() < 2) throw ValidationError("task train split needs at least two distinct labels");
}

KSetTask load_task(const std::string& path, const Graph& g) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open task file '" + path + "'");
  std::unordered_map<std::string, NodeId> index;
  for (NodeId v = 0; v < g.num_nodes(); ++v) index.emplace(g.node_label(v), v);

  KSetTask task;
  task.graph_ref = path;
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::istringstream fields(line);
    std::vector<std::string> toks;
    for (std::string t; fields >> t;) toks.push_back(t);
    if (toks.empty()) continue;
    if (!have_header) {
      if (toks.size() != 1 || toks[0].rfind("k=", 0) != 0) throw ParseError(path, lineno, "expected header 'k=<int>'");
      try {
        task.k = std::stoi(toks[0].substr(2));
      } catch (const std::exception&) {
        throw ParseError(path, lineno, "bad k in header");
      }
      if (task.k < 1 || task.k > kMaxK) throw ParseError(path, lineno, "k out of range");
      have_header = true;
      continue;
    }
    if (toks.size() != static_cast<std::size_t>(task.k) + 2) {
      throw ParseError(path, lineno, "expected " + std::to_string(task.k) + " node ids, a label and a split");
    }
    std::vector<NodeId> nodes;
    for (int i = 0; i < task.k; ++i) {
      auto it = index.find(toks[static_cast<std::size_t>(i)]);
      if (it == index.end()) throw InvalidSetError(path + ":" + std::to_string(lineno) + ": node '" + toks[static_cast<std::size_t>(i)] + "' is not in the graph");
      nodes.push_back(it->second);
    }
    LabeledKSet ex;
    ex.nodes = KSet(nodes);
    try {
      std::size_t used = 0;
      ex.label = std::stoi(toks[static_cast<std::size_t>(task.k)], &used);
      if (used != toks[static_cast<std::size_t>(task.k)].size()) throw std::invalid_argument("label");
    } catch (const std::exception&) {
      throw ParseError(path, lineno, "label must be an integer");
    }
    const auto& split = toks.back();
    if (split == "train") ex.split = Split::train;
    else if (split == "test") ex.split = Split::test;
    else throw ParseError(path, lineno, "split must be 'train' or 'test'");
    task.examples.push_back(ex);
  }
  if (!have_header) throw ParseError(path, lineno, "missing 'k=<int>' header");
  validate_task(task, g);
  return task;
}

void save_task(const KSetTask& task, const Graph& g, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write task file '" + path + "'");
  out << "k=" << task.k << "\n";
  for (const auto& e : task.examples) {
    for (NodeId v : e.nodes) out << g.node_label(v) << ' ';
    out << e.label << ' ' << (e.split == Split::train ? "train" : "test") << "\n";
  }
}

EmbeddingTable embed_ksets(const EnergyModel& model, const Graph& g, const KSetTask& task, unsigned threads) {
  if (model.dims.p != g.feature_dim()) {
    throw ValidationError("model expects " + std::to_string(model.dims.p) + " features, graph has " +
                          std::to_string(g.feature_dim()));
  }
  EmbeddingTable table;
  table.source = EmbeddingSource::mhm_motif;
  table.rows.resize(static_cast<Eigen::Index>(task.examples.size()), model.dims.d_rep);
  std::vector<char> degenerate(task.examples.size(), 0);
  parallel_for(task.examples.size(), threads, [&](std::size_t i, unsigned) {
    for (NodeId v : task.examples[i].nodes) {
      if (v >= g.num_nodes()) throw InvalidSetError("task node index out of range");
    }
    const auto rep = motif_representation(induced_subgraph(g, task.examples[i].nodes), model);
    table.rows.row(static_cast<Eigen::Index>(i)) = rep.vector.transpose();
    degenerate[i] = rep.degenerate;
  });
  table.degenerate_rows = static_cast<int>(std::count(degenerate.begin(), degenerate.end(), 1));
  return table;
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) {
    const auto b = field.find_first_not_of(" \t\r");
    const auto e = field.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? std::string{} : field.substr(b, e - b + 1));
  }
  return out;
}

bool to_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size() && std::isfinite(out);
}

}  // namespace

NodeEmbeddings load_node_embeddings(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open node embedding file '" + path + "'");
  NodeEmbeddings out;
  std::string line;
  std::size_t lineno = 0;
  bool first = true;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto fields = split_csv(line);
    Eigen::VectorXd row(static_cast<Eigen::Index>(fields.size()) - 1);
    bool ok = fields.size() >= 2;
    for (std::size_t i = 1; ok && i < fields.size(); ++i) ok = to_double(fields[i], row(static_cast<Eigen::Index>(i) - 1));
    if (!ok) {
      if (first) {
        first = false;
        continue;  // header
      }
      throw ParseError(path, lineno, "expected node id followed by finite values");
    }
    first = false;
    if (out.dim == 0) out.dim = row.size();
    if (row.size() != out.dim) throw ParseError(path, lineno, "inconsistent embedding width");
    out.rows[fields[0]] = std::move(row);
  }
  return out;
}

EmbeddingTable pool_external(const NodeEmbeddings& nodes, const Graph& g, const KSetTask& task, PoolMode mode) {
  EmbeddingTable table;
  const auto n = static_cast<Eigen::Index>(task.examples.size());
  if (mode == PoolMode::raw_features) {
    table.source = EmbeddingSource::raw_features;
    table.rows = Eigen::MatrixXd::Zero(n, g.feature_dim());
    for (Eigen::Index i = 0; i < n; ++i) {
      for (NodeId v : task.examples[static_cast<std::size_t>(i)].nodes) table.rows.row(i) += g.features().row(v);
    }
    return table;
  }
  table.source = EmbeddingSource::pooled_external;
  table.rows = Eigen::MatrixXd::Zero(n, nodes.dim);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& ex = task.examples[static_cast<std::size_t>(i)];
    for (NodeId v : ex.nodes) {
      const auto it = nodes.rows.find(g.node_label(v));
      if (it == nodes.rows.end()) throw ValidationError("no embedding row for node '" + g.node_label(v) + "'");
      table.rows.row(i) += it->second.transpose();
    }
    if (mode == PoolMode::mean) table.rows.row(i) /= static_cast<double>(ex.nodes.size());
  }
  return table;
}

void save_embedding_table(const EmbeddingTable& table, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write embedding table '" + path + "'");
  for (Eigen::Index j = 0; j < table.dim(); ++j) out << (j ? "," : "") << "dim_" << j;
  out << "\n";
  char buf[32];
  for (Eigen::Index i = 0; i < table.rows.rows(); ++i) {
    for (Eigen::Index j = 0; j < table.dim(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", table.rows(i, j));
      out << (j ? "," : "") << buf;
    }
    out << "\n";
  }
}

EmbeddingTable load_embedding_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open embedding table '" + path + "'");
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto fields = split_csv(line);
    std::vector<double> row(fields.size());
    bool ok = true;
    for (std::size_t j = 0; ok && j < fields.size(); ++j) ok = to_double(fields[j], row[j]);
    if (!ok) {
      if (lineno == 1) continue;  // header
      throw ParseError(path, lineno, "non-numeric or non-finite embedding value");
    }
    if (!rows.empty() && row.size() != rows.front().size()) throw ParseError(path, lineno, "inconsistent row width");
    rows.push_back(std::move(row));
  }
  EmbeddingTable table;
  table.source = EmbeddingSource::pooled_external;
  const auto d = rows.empty() ? 0 : static_cast<Eigen::Index>(rows.front().size());
  table.rows.resize(static_cast<Eigen::Index>(rows.size()), d);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (Eigen::Index j = 0; j < d; ++j) table.rows(static_cast<Eigen::Index>(i), j) = rows[i][static_cast<std::size_t>(j)];
  }
  return table;
}

std::vector<int> LogisticModel::predict(const Eigen::MatrixXd& x) const {
  const Eigen::MatrixXd scores = (x * weight.transpose()).rowwise() + bias.transpose();
  std::vector<int> out(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    Eigen::Index best = 0;
    scores.row(i).maxCoeff(&best);
    out[static_cast<std::size_t>(i)] = classes[static_cast<std::size_t>(best)];
  }
  return out;
}

namespace {

struct Objective {
  const Eigen::MatrixXd& x;
  const Eigen::MatrixXd& y;  // one-hot, n x C
  double lambda;

  // value; fills gradients when requested
  double operator()(const Eigen::MatrixXd& w, const Eigen::VectorXd& b, Eigen::MatrixXd* gw, Eigen::VectorXd* gb) const {
    const double n = static_cast<double>(x.rows());
    Eigen::MatrixXd z = (x * w.transpose()).rowwise() + b.transpose();
    const Eigen::VectorXd zmax = z.rowwise().maxCoeff();
    z.colwise() -= zmax;
    Eigen::MatrixXd p = z.array().exp().matrix();
    const Eigen::VectorXd norm = p.rowwise().sum();
    const Eigen::VectorXd lse = norm.array().log().matrix();
    // cross entropy = lse - z_y (shifted logits)
    const double ce = (lse.sum() - (z.cwiseProduct(y)).sum()) / n;
    const double value = ce + 0.5 * lambda * w.squaredNorm();
    if (gw) {
      p.array().colwise() /= norm.array();
      const Eigen::MatrixXd diff = p - y;
      *gw = diff.transpose() * x / n + lambda * w;
      *gb = diff.colwise().sum().transpose() / n;
    }
    return value;
  }
};

}  // namespace

LogisticModel logistic_fit(const Eigen::MatrixXd& x, std::span<const int> labels, const LogisticOptions& options) {
  if (static_cast<std::size_t>(x.rows()) != labels.size()) throw ValidationError("feature rows and labels differ in length");
  if (labels.empty()) throw ValidationError("cannot fit a classifier on an empty training split");
  if (!x.allFinite()) throw NumericError("training features contain non-finite values");
  LogisticModel model;
  model.classes.assign(labels.begin(), labels.end());
  std::sort(model.classes.begin(), model.classes.end());
  model.classes.erase(std::unique(model.classes.begin(), model.classes.end()), model.classes.end());
  if (model.classes.size() < 2) throw ValidationError("training split has a single class");

  const auto c = static_cast<Eigen::Index>(model.classes.size());
  Eigen::MatrixXd y = Eigen::MatrixXd::Zero(x.rows(), c);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto k = std::lower_bound(model.classes.begin(), model.classes.end(), labels[i]) - model.classes.begin();
    y(static_cast<Eigen::Index>(i), k) = 1.0;
  }

  Rng rng(mix_seed(options.seed));
  Eigen::MatrixXd w(c, x.cols());
  for (Eigen::Index i = 0; i < c; ++i) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) w(i, j) = 0.01 * (2.0 * uniform_unit(rng) - 1.0);
  }
  Eigen::VectorXd b = Eigen::VectorXd::Zero(c);

  const Objective f{x, y, options.reg_lambda};
  Eigen::MatrixXd gw;
  Eigen::VectorXd gb;
  double value = f(w, b, &gw, &gb);
  double step = 1.0;
  int it = 0;
  double gnorm = std::sqrt(gw.squaredNorm() + gb.squaredNorm());
  for (; it < options.max_iterations && gnorm >= options.tolerance; ++it) {
    const double g2 = gnorm * gnorm;
    step = std::min(step * 2.0, 1e6);
    while (true) {
      const Eigen::MatrixXd w_new = w - step * gw;
      const Eigen::VectorXd b_new = b - step * gb;
      const double v_new = f(w_new, b_new, nullptr, nullptr);
      if (v_new <= value - 0.5 * step * g2 || step < 1e-12) {
        w = w_new;
        b = b_new;
        break;
      }
      step *= 0.5;
    }
    value = f(w, b, &gw, &gb);
    gnorm = std::sqrt(gw.squaredNorm() + gb.squaredNorm());
  }
  b.array() -= b.mean();
  model.weight = std::move(w);
  model.bias = std::move(b);
  model.iterations = it;
  model.gradient_norm = gnorm;
  return model;
}

namespace {

// train rows in canonical (k-set, label) order
std::vector<std::size_t> canonical_order(const KSetTask& task, Split split) {
  auto idx = task.indices(split);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    const auto& ea = task.examples[a];
    const auto& eb = task.examples[b];
    if (ea.nodes != eb.nodes) return ea.nodes < eb.nodes;
    return ea.label < eb.label;
  });
  return idx;
}

Eigen::MatrixXd gather(const Eigen::MatrixXd& rows, const std::vector<std::size_t>& idx) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()), rows.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = rows.row(static_cast<Eigen::Index>(idx[i]));
  return out;
}

void check_table(const EmbeddingTable& table, const KSetTask& task) {
  if (static_cast<std::size_t>(table.rows.rows()) != task.examples.size()) {
    throw ValidationError("embedding table has " + std::to_string(table.rows.rows()) + " rows for " +
                          std::to_string(task.examples.size()) + " task examples");
  }
  if (!table.rows.allFinite()) throw NumericError("embedding table contains non-finite values");
}

}  // namespace

LogisticModel logistic_fit(const EmbeddingTable& table, const KSetTask& task, const LogisticOptions& options) {
  check_table(table, task);
  const auto idx = canonical_order(task, Split::train);
  std::vector<int> y;
  for (std::size_t i : idx) y.push_back(task.examples[i].label);
  return logistic_fit(gather(table.rows, idx), y, options);
}

double balanced_accuracy(std::span<const int> predictions, std::span<const int> labels) {
  if (labels.empty()) throw ValidationError("balanced accuracy of an empty set is undefined");
  if (predictions.size() != labels.size()) throw ValidationError("predictions and labels differ in length");
  std::map<int, std::pair<std::size_t, std::size_t>> per_class;  // label -> (correct, total)
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto& c = per_class[labels[i]];
    ++c.second;
    if (predictions[i] == labels[i]) ++c.first;
  }
  double sum = 0.0;
  for (const auto& [label, c] : per_class) sum += static_cast<double>(c.first) / static_cast<double>(c.second);
  return sum / static_cast<double>(per_class.size());
}

double evaluate_table(const EmbeddingTable& table, const KSetTask& task, double reg_lambda, std::uint64_t seed) {
  LogisticOptions opts;
  opts.reg_lambda = reg_lambda;
  opts.seed = seed;
  const LogisticModel clf = logistic_fit(table, task, opts);
  const auto test = canonical_order(task, Split::test);
  std::vector<int> truth;
  for (std::size_t i : test) truth.push_back(task.examples[i].label);
  for (int c : clf.classes) {
    if (std::find(truth.begin(), truth.end(), c) == truth.end()) {
      throw ValidationError("class " + std::to_string(c) + " has no test examples");
    }
  }
  const auto predictions = clf.predict(gather(table.rows, test));
  return balanced_accuracy(predictions, truth);
}

EvalReport summarize(std::vector<double> per_seed) {
  EvalReport r;
  r.per_seed = std::move(per_seed);
  if (r.per_seed.empty()) return r;
  const double n = static_cast<double>(r.per_seed.size());
  r.mean = std::accumulate(r.per_seed.begin(), r.per_seed.end(), 0.0) / n;
  if (r.per_seed.size() > 1) {
    double ss = 0.0;
    for (double v : r.per_seed) ss += (v - r.mean) * (v - r.mean);
    r.std = std::sqrt(ss / (n - 1.0));
  }
  return r;
}

EvalReport run_eval(const EmbeddingTable& table, const KSetTask& task, const EvalConfig& cfg) {
  if (cfg.seeds.empty()) throw ValidationError("evaluation needs at least one seed");
  std::vector<double> scores;
  for (auto seed : cfg.seeds) scores.push_back(evaluate_table(table, task, cfg.reg_lambda, seed));
  return summarize(std::move(scores));
}

nlohmann::json EvalReport::to_json() const { return {{"mean", mean}, {"std", std}, {"per_seed", per_seed}}; }

}  // namespace motifrep
