#include "delta/graph.hpp"

#include <algorithm>
#include <deque>
#include <fstream>
#include <sstream>

#include <Eigen/SVD>

#include "delta/errors.hpp"
#include "delta/rng.hpp"

namespace delta {

bool GraphTopology::has_edge(int from, int to) const {
  return std::binary_search(edges.begin(), edges.end(), std::make_pair(from, to));
}

bool GraphTopology::undirected() const {
  for (const auto& [j, i] : edges)
    if (!has_edge(i, j)) return false;
  return true;
}

std::vector<std::vector<int>> GraphTopology::in_neighbors() const {
  std::vector<std::vector<int>> nbrs(n_agents);
  for (const auto& [j, i] : edges) nbrs[i].push_back(j);
  return nbrs;
}

namespace {

// Breadth-first reachability from node 0 along the given adjacency.
bool all_reachable(int n, const std::vector<std::vector<int>>& adj) {
  std::vector<char> seen(n, 0);
  std::deque<int> queue{0};
  seen[0] = 1;
  int count = 1;
  while (!queue.empty()) {
    int u = queue.front();
    queue.pop_front();
    for (int v : adj[u]) {
      if (!seen[v]) {
        seen[v] = 1;
        ++count;
        queue.push_back(v);
      }
    }
  }
  return count == n;
}

}  // namespace

bool strongly_connected(int n_agents, const std::vector<std::pair<int, int>>& edges) {
  if (n_agents <= 0) return false;
  std::vector<std::vector<int>> fwd(n_agents), rev(n_agents);
  for (const auto& [j, i] : edges) {
    fwd[j].push_back(i);
    rev[i].push_back(j);
  }
  return all_reachable(n_agents, fwd) && all_reachable(n_agents, rev);
}

GraphTopology make_topology(int n_agents, std::vector<std::pair<int, int>> edges) {
  if (n_agents < 1) throw ConfigError("topology needs at least one agent");
  for (const auto& [j, i] : edges) {
    if (j < 0 || j >= n_agents || i < 0 || i >= n_agents)
      throw ConfigError("edge index out of range");
  }
  for (int i = 0; i < n_agents; ++i) edges.emplace_back(i, i);
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  if (!strongly_connected(n_agents, edges))
    throw GenerationError("topology is not strongly connected");
  return GraphTopology{n_agents, std::move(edges)};
}

GraphTopology generate_erdos_renyi(int n, double p, std::uint64_t seed) {
  if (n < 2) throw ConfigError("Erdos-Renyi generation needs n >= 2");
  if (!(p > 0.0 && p <= 1.0)) throw ConfigError("edge probability must be in (0, 1]");

  for (int attempt = 0; attempt < kErdosRenyiRetryBudget; ++attempt) {
    RngStream rng(seed + static_cast<std::uint64_t>(attempt));
    std::vector<std::pair<int, int>> edges;
    for (int i = 0; i < n; ++i) {
      edges.emplace_back(i, i);
      for (int j = i + 1; j < n; ++j) {
        if (rng.uniform01() < p) {
          edges.emplace_back(i, j);
          edges.emplace_back(j, i);
        }
      }
    }
    if (strongly_connected(n, edges)) {
      std::sort(edges.begin(), edges.end());
      return GraphTopology{n, std::move(edges)};
    }
  }
  throw GenerationError("no connected Erdos-Renyi graph after " +
                        std::to_string(kErdosRenyiRetryBudget) +
                        " attempts; p too small for n");
}

GraphWeights metropolis_weights(const GraphTopology& topo) {
  if (!topo.undirected()) throw ConfigError("Metropolis weights need a symmetric edge set");

  const int n = topo.n_agents;
  std::vector<int> degree(n, 0);  // neighbors excluding self
  for (const auto& [j, i] : topo.edges)
    if (j != i) ++degree[i];

  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
  for (const auto& [j, i] : topo.edges) {
    if (j != i) a(i, j) = 1.0 / (1.0 + std::max(degree[i], degree[j]));
  }
  for (int i = 0; i < n; ++i) a(i, i) = 1.0 - a.row(i).sum();

  GraphWeights w{n, std::move(a)};
  validate_weights(topo, w);
  return w;
}

double consensus_contraction_factor(const GraphWeights& w) {
  const int n = w.n_agents;
  // Removing the averaging component leaves exactly the action on the
  // subspace orthogonal to the all-ones vector.
  Eigen::MatrixXd rest =
      w.weights - Eigen::MatrixXd::Constant(n, n, 1.0 / static_cast<double>(n));
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(rest);
  return svd.singularValues()(0);
}

void validate_weights(const GraphTopology& topo, const GraphWeights& w) {
  const int n = w.n_agents;
  if (n != topo.n_agents) throw ConfigError("weights/topology size mismatch");
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const bool edge = topo.has_edge(j, i);
      if (edge && !(w.weights(i, j) > 0.0))
        throw GenerationError("weight must be positive on edge (" +
                              std::to_string(j) + "," + std::to_string(i) + ")");
      if (!edge && w.weights(i, j) != 0.0)
        throw GenerationError("nonzero weight off the edge set");
    }
    if (std::abs(w.weights.row(i).sum() - 1.0) > kStochasticityTol)
      throw GenerationError("row " + std::to_string(i) + " does not sum to 1");
    if (std::abs(w.weights.col(i).sum() - 1.0) > kStochasticityTol)
      throw GenerationError("column " + std::to_string(i) + " does not sum to 1");
  }
  if (!(consensus_contraction_factor(w) < 1.0))
    throw GenerationError("weight matrix does not contract disagreement");
}

std::string to_edge_list(const GraphTopology& topo) {
  std::ostringstream out;
  for (const auto& [j, i] : topo.edges) out << j << ' ' << i << '\n';
  return out.str();
}

GraphTopology parse_edge_list(const std::string& text) {
  std::istringstream in(text);
  std::vector<std::pair<int, int>> edges;
  int n = 0;
  int j, i;
  while (in >> j >> i) {
    edges.emplace_back(j, i);
    n = std::max({n, j + 1, i + 1});
  }
  if (edges.empty()) throw IoError("empty edge list");
  return make_topology(n, std::move(edges));
}

void save_edge_list(const GraphTopology& topo, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << to_edge_list(topo);
  if (!out) throw IoError("write failed: " + path);
}

GraphTopology load_edge_list(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open for reading: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_edge_list(buf.str());
}

}  // namespace delta
