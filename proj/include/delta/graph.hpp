#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace delta {

// Communication digraph. An edge (j, i) means j -> i, i.e. agent i receives
// from agent j. Instances are immutable after construction: every topology
// holds all self-loops and is strongly connected.
struct GraphTopology {
  int n_agents = 0;
  std::vector<std::pair<int, int>> edges;  // sorted, unique, self-loops included

  bool has_edge(int from, int to) const;
  bool undirected() const;  // edge set symmetric
  // In-neighbors of each agent (including itself), ascending.
  std::vector<std::vector<int>> in_neighbors() const;
};

// Validates indices, inserts self-loops, sorts/dedups and checks strong
// connectivity (forward and reverse breadth-first reachability).
GraphTopology make_topology(int n_agents, std::vector<std::pair<int, int>> edges);

bool strongly_connected(int n_agents, const std::vector<std::pair<int, int>>& edges);

// Undirected G(n, p) with self-loops. Retries with incremented seed until the
// result is strongly connected; deterministic in (n, p, seed).
GraphTopology generate_erdos_renyi(int n, double p, std::uint64_t seed);
inline constexpr int kErdosRenyiRetryBudget = 1000;

// Doubly stochastic weights a_ij matching a topology: a_ij > 0 iff (j, i) is
// an edge, rows and columns sum to one.
struct GraphWeights {
  int n_agents = 0;
  Eigen::MatrixXd weights;
};

inline constexpr double kStochasticityTol = 1e-12;

// Metropolis-Hastings rule on an undirected topology:
//   a_ij = 1 / (1 + max(deg_i, deg_j)) for adjacent i != j (degrees without
//   self-loops), a_ii = 1 - sum_{j != i} a_ij.
GraphWeights metropolis_weights(const GraphTopology& topo);

// Largest singular value of the weight matrix restricted to the subspace
// orthogonal to the all-ones vector; per-step bound on consensus-error decay.
double consensus_contraction_factor(const GraphWeights& w);

// Checks the GraphWeights invariants against a topology (support pattern,
// double stochasticity within kStochasticityTol, contraction factor < 1).
void validate_weights(const GraphTopology& topo, const GraphWeights& w);

// Edge-list text format, one "i j" pair per line, 0-indexed.
std::string to_edge_list(const GraphTopology& topo);
GraphTopology parse_edge_list(const std::string& text);
void save_edge_list(const GraphTopology& topo, const std::string& path);
GraphTopology load_edge_list(const std::string& path);

}  // namespace delta
