#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "delta/dither.hpp"
#include "delta/estimator.hpp"
#include "delta/graph.hpp"
#include "delta/problem.hpp"

namespace delta {

// One agent's state at the start of a round. Trackers must start at exactly
// zero: that pins the invariant sums over the network to zero for all time.
struct AgentState {
  Eigen::VectorXd theta;  // empty for algorithms without a learning stage
  double x = 0.0;
  double s_tracker = 0.0;
  double y_tracker = 0.0;
};

struct NetworkState {
  std::vector<AgentState> agents;
  std::int64_t iteration = 0;
};

struct StepConfig {
  double gamma = 1e-4;
  DitherSchedule dither;
  LossConfig loss;
};

// x drawn from a standard Gaussian, trackers zero, parameters Xavier with a
// per-agent substream of theta_seed (pass mlp == nullptr for no estimator).
NetworkState initial_network_state(const AggProblem& problem, const Mlp* mlp,
                                   std::uint64_t x0_seed, std::uint64_t theta_seed);

inline constexpr double kDivergenceNormCap = 1e12;

// Throws DivergenceError if any agent state is non-finite or exceeds the cap.
void check_finite(const NetworkState& net, std::int64_t iteration);

// One synchronous round of the data-driven scheme: per agent, a learning
// step at the dithered sample point, a surrogate-gradient descent step, and
// the perturbed-consensus tracking updates. Every agent reads only round-k
// state of itself and its in-neighbors; the result does not depend on the
// order in which agents are processed.
NetworkState delta_step(const NetworkState& net, FeedbackOracle& oracle,
                        const GraphWeights& weights, const Mlp& mlp,
                        const StepConfig& cfg);
NetworkState delta_step(const NetworkState& net, FeedbackOracle& oracle,
                        const GraphWeights& weights, const Mlp& mlp,
                        const StepConfig& cfg, std::span<const int> order);

// Exact-gradient baseline: same optimization and tracking skeleton with the
// true partial derivatives and no learning state.
NetworkState dagt_step(const NetworkState& net, const AggProblem& problem,
                       const GraphWeights& weights, double gamma);
NetworkState dagt_step(const NetworkState& net, const AggProblem& problem,
                       const GraphWeights& weights, double gamma,
                       std::span<const int> order);

// Uniform direction on the unit circle for agent i at iteration k, drawn
// from a counter-based stream so concurrency cannot perturb determinism.
Eigen::Vector2d zo_direction(std::uint64_t seed, int agent, std::int64_t k);

// Single-point zeroth-order estimate from one observed value:
//   g = (dims / delta_smooth) * y_obs * u.
inline Eigen::Vector2d zo_estimate_from_obs(const Eigen::Vector2d& u, int dims,
                                            double delta_smooth, double y_obs) {
  return (static_cast<double>(dims) / delta_smooth) * y_obs * u;
}

// Zeroth-order baseline: one sphere sample per agent per iteration around
// (x_i, sigma_hat_i), estimate blocks used as the gradient surrogates in the
// exact-gradient skeleton.
NetworkState zo_step(const NetworkState& net, FeedbackOracle& oracle,
                     const GraphWeights& weights, double gamma,
                     double delta_smooth, std::uint64_t seed);
NetworkState zo_step(const NetworkState& net, FeedbackOracle& oracle,
                     const GraphWeights& weights, double gamma,
                     double delta_smooth, std::uint64_t seed,
                     std::span<const int> order);

// (|sum_i s_i|, |sum_i y_i|): both stay at zero (to accumulation rounding)
// under doubly stochastic mixing and zero initialization.
std::pair<double, double> audit_conservation(const NetworkState& net);

// Freezes (theta, x), iterates only the tracking recursions and returns the
// consensus error e_k = |sigma_hat^k - 1 sigma(x)| for k = 0..n_steps. Each
// step contracts by at most the weight matrix' contraction factor.
std::vector<double> frozen_consensus_decay(const NetworkState& net,
                                           const AggProblem& problem,
                                           const GraphWeights& weights,
                                           int n_steps);

}  // namespace delta
