#include "motifrep/graph.hpp"

#include "motifrep/error.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <unordered_map>

namespace motifrep {

KSet::KSet(std::initializer_list<NodeId> nodes) : KSet(std::span<const NodeId>(nodes.begin(), nodes.size())) {}

KSet::KSet(std::span<const NodeId> nodes) {
  if (nodes.size() > static_cast<std::size_t>(kMaxK)) {
    throw InvalidSetError("node set of size " + std::to_string(nodes.size()) + " exceeds the supported maximum " +
                          std::to_string(kMaxK));
  }
  std::copy(nodes.begin(), nodes.end(), nodes_.begin());
  size_ = static_cast<int>(nodes.size());
  std::sort(nodes_.begin(), nodes_.begin() + size_);
}

KSet KSet::replaced(int pos, NodeId w) const {
  KSet out = *this;
  auto* first = out.nodes_.data();
  first[pos] = w;
  // single out-of-place element: bubble it into position
  int i = pos;
  while (i > 0 && first[i - 1] > first[i]) {
    std::swap(first[i - 1], first[i]);
    --i;
  }
  while (i + 1 < size_ && first[i + 1] < first[i]) {
    std::swap(first[i + 1], first[i]);
    ++i;
  }
  return out;
}

std::string KSet::to_string() const {
  std::string s = "{";
  for (int i = 0; i < size_; ++i) {
    if (i) s += ",";
    s += std::to_string(nodes_[static_cast<std::size_t>(i)]);
  }
  return s + "}";
}

std::size_t KSetHash::operator()(const KSet& s) const noexcept {
  std::uint64_t h = 0x9E3779B97F4A7C15ULL ^ static_cast<std::uint64_t>(s.size());
  for (NodeId v : s) {
    h ^= v + 0x9E3779B97F4A7C15ULL + (h << 6) + (h >> 2);
    h *= 0xBF58476D1CE4E5B9ULL;
  }
  return static_cast<std::size_t>(h ^ (h >> 31));
}

Graph::Graph(std::size_t n, std::span<const std::pair<NodeId, NodeId>> edges, FeatureMatrix features,
             std::vector<std::string> node_ids)
    : adjacency_(n), features_(std::move(features)), node_ids_(std::move(node_ids)) {
  if (features_.size() == 0) {
    features_.resize(static_cast<Eigen::Index>(n), 0);
  }
  if (static_cast<std::size_t>(features_.rows()) != n) {
    throw ValidationError("feature matrix has " + std::to_string(features_.rows()) + " rows for " +
                          std::to_string(n) + " nodes");
  }
  if (!features_.allFinite()) throw ValidationError("feature matrix contains non-finite values");
  if (!node_ids_.empty() && node_ids_.size() != n) throw ValidationError("node id table does not match node count");
  for (auto [u, v] : edges) {
    if (u >= n || v >= n) throw ValidationError("edge endpoint out of range");
    if (u == v) continue;
    adjacency_[u].push_back(v);
    adjacency_[v].push_back(u);
  }
  for (auto& nbrs : adjacency_) {
    std::sort(nbrs.begin(), nbrs.end());
    nbrs.erase(std::unique(nbrs.begin(), nbrs.end()), nbrs.end());
    num_edges_ += nbrs.size();
  }
  num_edges_ /= 2;
}

std::size_t Graph::max_degree() const noexcept {
  std::size_t d = 0;
  for (const auto& nbrs : adjacency_) d = std::max(d, nbrs.size());
  return d;
}

bool Graph::has_edge(NodeId u, NodeId v) const noexcept {
  const auto& a = adjacency_[u];
  const auto& b = adjacency_[v];
  return a.size() <= b.size() ? std::binary_search(a.begin(), a.end(), v) : std::binary_search(b.begin(), b.end(), u);
}

std::string Graph::node_label(NodeId v) const { return node_ids_.empty() ? std::to_string(v) : node_ids_[v]; }

std::vector<std::pair<NodeId, NodeId>> Graph::edge_list() const {
  std::vector<std::pair<NodeId, NodeId>> out;
  out.reserve(num_edges_);
  for (NodeId u = 0; u < adjacency_.size(); ++u) {
    for (NodeId v : adjacency_[u]) {
      if (u < v) out.emplace_back(u, v);
    }
  }
  return out;
}

int Motif::num_edges() const noexcept {
  int e = 0;
  for (int i = 0; i < size(); ++i) e += std::popcount(adj_rows[static_cast<std::size_t>(i)]);
  return e / 2;
}

Motif Motif::from_parts(std::span<const std::uint8_t> adjacency, FeatureMatrix features) {
  const auto k = static_cast<int>(features.rows());
  if (k < 1 || k > kMaxK) throw InvalidSetError("motif size out of range");
  if (adjacency.size() != static_cast<std::size_t>(k * k)) throw InvalidSetError("adjacency must be k*k");
  Motif m;
  std::vector<NodeId> ids(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) ids[static_cast<std::size_t>(i)] = static_cast<NodeId>(i);
  m.nodes = KSet(ids);
  for (int i = 0; i < k; ++i) {
    for (int j = 0; j < k; ++j) {
      const bool a = adjacency[static_cast<std::size_t>(i * k + j)] != 0;
      const bool b = adjacency[static_cast<std::size_t>(j * k + i)] != 0;
      if (a != b) throw InvalidSetError("motif adjacency must be symmetric");
      if (a && i != j) m.adj_rows[static_cast<std::size_t>(i)] |= 1U << j;
    }
  }
  m.features = std::move(features);
  return m;
}

namespace {

std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream in(line);
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

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

std::string strip_comment(const std::string& line) {
  const auto pos = line.find('#');
  return pos == std::string::npos ? line : line.substr(0, pos);
}

bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size();
}

bool parse_index(const std::string& s, std::uint64_t& out) {
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && ptr == s.data() + s.size();
}

}  // namespace

Graph load_graph(const std::string& edge_list_path, const std::optional<std::string>& feature_path,
                 const LoadOptions& options) {
  std::ifstream in(edge_list_path);
  if (!in) throw ValidationError("cannot open edge list '" + edge_list_path + "'");

  std::vector<std::pair<std::string, std::string>> raw_edges;
  std::vector<std::string> order;  // first-appearance order of external ids
  std::unordered_map<std::string, int> seen;
  auto note = [&](const std::string& id) {
    if (seen.emplace(id, 0).second) order.push_back(id);
  };

  std::string line;
  std::size_t lineno = 0;
  std::size_t self_loops = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto toks = split_ws(strip_comment(line));
    if (toks.empty()) continue;
    if (toks.size() != 2) throw ParseError(edge_list_path, lineno, "expected 'u v', got " + std::to_string(toks.size()) + " fields");
    note(toks[0]);
    note(toks[1]);
    if (toks[0] == toks[1]) {
      ++self_loops;
      continue;
    }
    raw_edges.emplace_back(toks[0], toks[1]);
  }

  struct FeatureRow {
    std::string id;
    std::vector<double> values;
  };
  std::vector<FeatureRow> feature_rows;
  if (feature_path) {
    std::ifstream fin(*feature_path);
    if (!fin) throw ValidationError("cannot open feature file '" + *feature_path + "'");
    lineno = 0;
    std::size_t width = 0;
    bool first_data = true;
    while (std::getline(fin, line)) {
      ++lineno;
      if (line.find_first_not_of(" \t\r") == std::string::npos || line[line.find_first_not_of(" \t\r")] == '#') continue;
      const auto fields = split_csv(line);
      FeatureRow row{fields[0], {}};
      bool numeric = true;
      for (std::size_t i = 1; i < fields.size(); ++i) {
        double x = 0;
        if (!parse_double(fields[i], x)) {
          numeric = false;
          break;
        }
        row.values.push_back(x);
      }
      if (!numeric) {
        if (first_data) {  // header line
          first_data = false;
          continue;
        }
        throw ParseError(*feature_path, lineno, "non-numeric feature value");
      }
      first_data = false;
      if (row.id.empty()) throw ParseError(*feature_path, lineno, "missing node id");
      if (width == 0 && feature_rows.empty()) width = row.values.size();
      if (row.values.size() != width) throw ParseError(*feature_path, lineno, "expected " + std::to_string(width) + " feature columns");
      for (double x : row.values) {
        if (!std::isfinite(x)) throw ParseError(*feature_path, lineno, "non-finite feature value");
      }
      note(row.id);
      feature_rows.push_back(std::move(row));
    }
  }

  // numeric ids keep their numeric order; otherwise first appearance
  bool all_numeric = !order.empty();
  std::vector<std::pair<std::uint64_t, std::string>> numeric_ids;
  for (const auto& id : order) {
    std::uint64_t x = 0;
    if (!parse_index(id, x)) {
      all_numeric = false;
      break;
    }
    numeric_ids.emplace_back(x, id);
  }
  if (all_numeric) {
    std::sort(numeric_ids.begin(), numeric_ids.end());
    order.clear();
    for (auto& [x, id] : numeric_ids) order.push_back(id);
  }
  std::unordered_map<std::string, NodeId> index;
  for (std::size_t i = 0; i < order.size(); ++i) index.emplace(order[i], static_cast<NodeId>(i));
  const std::size_t n = order.size();

  std::vector<std::pair<NodeId, NodeId>> edges;
  edges.reserve(raw_edges.size());
  std::size_t reversed_duplicates = 0;
  {
    std::unordered_map<std::uint64_t, bool> oriented;
    for (auto& [a, b] : raw_edges) {
      const NodeId u = index.at(a);
      const NodeId v = index.at(b);
      oriented[(static_cast<std::uint64_t>(u) << 32) | v] = true;
      edges.emplace_back(u, v);
    }
    for (auto& [u, v] : edges) {
      if (u < v && oriented.count((static_cast<std::uint64_t>(v) << 32) | u)) ++reversed_duplicates;
    }
  }

  FeatureMatrix features;
  if (feature_path) {
    const auto p = feature_rows.empty() ? 0 : static_cast<Eigen::Index>(feature_rows.front().values.size());
    features.resize(static_cast<Eigen::Index>(n), p);
    std::vector<bool> covered(n, false);
    for (const auto& row : feature_rows) {
      const NodeId v = index.at(row.id);
      for (Eigen::Index j = 0; j < p; ++j) features(v, j) = row.values[static_cast<std::size_t>(j)];
      covered[v] = true;
    }
    for (std::size_t v = 0; v < n; ++v) {
      if (!covered[v]) throw ValidationError("node '" + order[v] + "' has no row in feature file '" + *feature_path + "'");
    }
  }

  if (options.warn) {
    if (self_loops) options.warn("dropped " + std::to_string(self_loops) + " self-loop line(s)");
    if (reversed_duplicates) {
      options.warn("input lists " + std::to_string(reversed_duplicates) +
                   " edge(s) in both directions; treating graph as undirected");
    }
  }
  return Graph(n, edges, std::move(features), std::move(order));
}

void save_graph(const Graph& g, const std::string& edge_list_path, const std::optional<std::string>& feature_path) {
  std::ofstream out(edge_list_path);
  if (!out) throw ValidationError("cannot write edge list '" + edge_list_path + "'");
  out << "# nodes " << g.num_nodes() << " edges " << g.num_edges() << "\n";
  for (const auto& [u, v] : g.edge_list()) out << g.node_label(u) << ' ' << g.node_label(v) << "\n";
  if (!feature_path || g.feature_dim() == 0) return;
  std::ofstream fout(*feature_path);
  if (!fout) throw ValidationError("cannot write feature file '" + *feature_path + "'");
  fout << "node";
  for (int j = 0; j < g.feature_dim(); ++j) fout << ",x" << j;
  fout << "\n";
  char buf[32];
  for (NodeId v = 0; v < g.num_nodes(); ++v) {
    fout << g.node_label(v);
    for (int j = 0; j < g.feature_dim(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", g.features()(v, j));
      fout << ',' << buf;
    }
    fout << "\n";
  }
}

Motif induced_subgraph(const Graph& g, std::span<const NodeId> nodes) {
  if (nodes.empty()) throw InvalidSetError("node set is empty");
  for (NodeId v : nodes) {
    if (v >= g.num_nodes()) throw InvalidSetError("node " + std::to_string(v) + " is out of range");
  }
  const KSet s(nodes);
  for (int i = 1; i < s.size(); ++i) {
    if (s[i] == s[i - 1]) throw InvalidSetError("duplicate node " + std::to_string(s[i]) + " in set");
  }
  return induced_subgraph(g, s);
}

Motif induced_subgraph(const Graph& g, const KSet& s) {
  Motif m;
  m.nodes = s;
  const int k = s.size();
  for (int i = 0; i < k; ++i) {
    for (int j = i + 1; j < k; ++j) {
      if (g.has_edge(s[i], s[j])) {
        m.adj_rows[static_cast<std::size_t>(i)] |= 1U << j;
        m.adj_rows[static_cast<std::size_t>(j)] |= 1U << i;
      }
    }
  }
  m.features.resize(k, g.feature_dim());
  for (int i = 0; i < k; ++i) m.features.row(i) = g.features().row(s[i]);
  return m;
}

bool mask_connected(std::span<const std::uint32_t> adj_rows, int k) {
  if (k <= 1) return k == 1;
  const std::uint32_t all = (k == 32) ? ~0U : ((1U << k) - 1U);
  std::uint32_t visited = 1U;
  std::uint32_t frontier = 1U;
  while (frontier) {
    std::uint32_t next = 0;
    for (std::uint32_t f = frontier; f; f &= f - 1) next |= adj_rows[static_cast<std::size_t>(std::countr_zero(f))];
    frontier = next & ~visited;
    visited |= frontier;
  }
  return (visited & all) == all;
}

bool is_connected(const Motif& m) { return mask_connected(m.adj_rows, m.size()); }

bool is_connected(const Graph& g, const KSet& s) {
  std::array<std::uint32_t, kMaxK> rows{};
  const int k = s.size();
  for (int i = 0; i < k; ++i) {
    for (int j = i + 1; j < k; ++j) {
      if (g.has_edge(s[i], s[j])) {
        rows[static_cast<std::size_t>(i)] |= 1U << j;
        rows[static_cast<std::size_t>(j)] |= 1U << i;
      }
    }
  }
  return mask_connected(rows, k);
}

std::vector<int> connected_components(const Graph& g, int* count) {
  std::vector<int> comp(g.num_nodes(), -1);
  int c = 0;
  std::vector<NodeId> stack;
  for (NodeId s = 0; s < g.num_nodes(); ++s) {
    if (comp[s] >= 0) continue;
    comp[s] = c;
    stack.push_back(s);
    while (!stack.empty()) {
      const NodeId u = stack.back();
      stack.pop_back();
      for (NodeId v : g.neighbors(u)) {
        if (comp[v] < 0) {
          comp[v] = c;
          stack.push_back(v);
        }
      }
    }
    ++c;
  }
  if (count) *count = c;
  return comp;
}

}  // namespace motifrep
