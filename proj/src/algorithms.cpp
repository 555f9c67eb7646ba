#include "delta/algorithms.hpp"

#include <cmath>
#include <numeric>

#include "delta/errors.hpp"
#include "delta/rng.hpp"

namespace delta {

namespace {

Eigen::VectorXd scalar_vec(double v) {
  Eigen::VectorXd out(1);
  out(0) = v;
  return out;
}

void require_permutation(int n, std::span<const int> order) {
  if (static_cast<int>(order.size()) != n)
    throw ConfigError("agent evaluation order must list every agent once");
  std::vector<char> seen(n, 0);
  for (int i : order) {
    if (i < 0 || i >= n || seen[i])
      throw ConfigError("agent evaluation order is not a permutation");
    seen[i] = 1;
  }
}

void require_shapes(const NetworkState& net, const GraphWeights& w,
                    const AggProblem& p) {
  const int n = static_cast<int>(net.agents.size());
  if (n == 0 || n != w.n_agents || n != p.n_agents)
    throw ConfigError("network/weights/problem sizes disagree");
}

bool finite_and_bounded(double v) {
  return std::isfinite(v) && std::abs(v) <= kDivergenceNormCap;
}

// Round-k quantities shared by all three algorithms.
struct RoundView {
  Eigen::VectorXd phi;      // phi_i(x_i)
  Eigen::VectorXd sig_hat;  // s_i + phi_i(x_i)
};

RoundView round_view(const NetworkState& net, const AggProblem& p) {
  const int n = static_cast<int>(net.agents.size());
  RoundView r{Eigen::VectorXd(n), Eigen::VectorXd(n)};
  for (int j = 0; j < n; ++j) {
    r.phi(j) = p.phi(j, net.agents[j].x);
    r.sig_hat(j) = net.agents[j].s_tracker + r.phi(j);
  }
  return r;
}

// Perturbed-consensus mixing for agent i. Skips zero weights so only
// in-neighbor state is ever read.
std::pair<double, double> track_agent(int i, const NetworkState& net,
                                      const GraphWeights& w, const RoundView& r,
                                      const Eigen::VectorXd& g2) {
  const int n = static_cast<int>(net.agents.size());
  double s_mix = 0.0, y_mix = 0.0;
  for (int j = 0; j < n; ++j) {
    const double a = w.weights(i, j);
    if (a == 0.0) continue;
    s_mix += a * (net.agents[j].s_tracker + r.phi(j));
    y_mix += a * (net.agents[j].y_tracker + g2(j));
  }
  return {s_mix - r.phi(i), y_mix - g2(i)};
}

std::vector<int> identity_order(int n) {
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  return order;
}

}  // namespace

NetworkState initial_network_state(const AggProblem& problem, const Mlp* mlp,
                                   std::uint64_t x0_seed, std::uint64_t theta_seed) {
  RngStream x_rng(x0_seed);
  NetworkState net;
  net.agents.resize(problem.n_agents);
  for (int i = 0; i < problem.n_agents; ++i) {
    AgentState& a = net.agents[i];
    a.x = x_rng.gaussian();
    a.s_tracker = 0.0;
    a.y_tracker = 0.0;
    if (mlp != nullptr)
      a.theta = xavier_init(mlp->arch(), mix_seed(theta_seed, static_cast<std::uint64_t>(i)));
  }
  return net;
}

void check_finite(const NetworkState& net, std::int64_t iteration) {
  for (size_t i = 0; i < net.agents.size(); ++i) {
    const AgentState& a = net.agents[i];
    if (!finite_and_bounded(a.x) || !finite_and_bounded(a.s_tracker) ||
        !finite_and_bounded(a.y_tracker))
      throw DivergenceError(iteration, "agent " + std::to_string(i) +
                                           " left the bounded region");
    if (a.theta.size() > 0 &&
        (!a.theta.allFinite() || a.theta.cwiseAbs().maxCoeff() > kDivergenceNormCap))
      throw DivergenceError(iteration, "agent " + std::to_string(i) +
                                           " has divergent parameters");
  }
}

NetworkState delta_step(const NetworkState& net, FeedbackOracle& oracle,
                        const GraphWeights& weights, const Mlp& mlp,
                        const StepConfig& cfg) {
  const auto order = identity_order(static_cast<int>(net.agents.size()));
  return delta_step(net, oracle, weights, mlp, cfg, order);
}

NetworkState delta_step(const NetworkState& net, FeedbackOracle& oracle,
                        const GraphWeights& weights, const Mlp& mlp,
                        const StepConfig& cfg, std::span<const int> order) {
  const AggProblem& p = oracle.problem();
  require_shapes(net, weights, p);
  const int n = static_cast<int>(net.agents.size());
  require_permutation(n, order);
  cfg.dither.validate(n);
  if (!(cfg.gamma > 0.0)) throw ConfigError("step size must be positive");

  oracle.begin_iteration(net.iteration);
  const RoundView r = round_view(net, p);

  // Surrogate partials at (x_i, sigma_hat_i) feed both the descent direction
  // and the y-tracker injection.
  Eigen::VectorXd g1(n), g2(n);
  for (int j = 0; j < n; ++j) {
    const AgentState& a = net.agents[j];
    auto ig = mlp.input_grads(a.theta, scalar_vec(a.x), scalar_vec(r.sig_hat(j)));
    g1(j) = ig.wrt_x(0);
    g2(j) = ig.wrt_s(0);
  }

  NetworkState out;
  out.iteration = net.iteration + 1;
  out.agents.resize(n);
  for (int i : order) {
    const AgentState& a = net.agents[i];
    AgentState& next = out.agents[i];

    const auto [d_x, d_s] = cfg.dither.at(i, net.iteration);
    const double u_x = a.x + d_x;
    const double u_s = r.sig_hat(i) + d_s;
    const double y_obs = oracle.sample(i, u_x, u_s);
    auto lr = mlp.loss_grad(a.theta, cfg.loss, scalar_vec(u_x), scalar_vec(u_s), y_obs);
    next.theta = a.theta - cfg.gamma * lr.grad;

    next.x = a.x - cfg.gamma * (g1(i) + p.phi_grad(i) * (a.y_tracker + g2(i)));

    std::tie(next.s_tracker, next.y_tracker) = track_agent(i, net, weights, r, g2);
  }
  check_finite(out, net.iteration);
  return out;
}

NetworkState dagt_step(const NetworkState& net, const AggProblem& problem,
                       const GraphWeights& weights, double gamma) {
  const auto order = identity_order(static_cast<int>(net.agents.size()));
  return dagt_step(net, problem, weights, gamma, order);
}

NetworkState dagt_step(const NetworkState& net, const AggProblem& problem,
                       const GraphWeights& weights, double gamma,
                       std::span<const int> order) {
  require_shapes(net, weights, problem);
  const int n = static_cast<int>(net.agents.size());
  require_permutation(n, order);
  if (!(gamma > 0.0)) throw ConfigError("step size must be positive");

  const RoundView r = round_view(net, problem);
  Eigen::VectorXd g1(n), g2(n);
  for (int j = 0; j < n; ++j)
    std::tie(g1(j), g2(j)) = problem.exact_grads(j, net.agents[j].x, r.sig_hat(j));

  NetworkState out;
  out.iteration = net.iteration + 1;
  out.agents.resize(n);
  for (int i : order) {
    const AgentState& a = net.agents[i];
    AgentState& next = out.agents[i];
    next.theta = a.theta;
    next.x = a.x - gamma * (g1(i) + problem.phi_grad(i) * (a.y_tracker + g2(i)));
    std::tie(next.s_tracker, next.y_tracker) = track_agent(i, net, weights, r, g2);
  }
  check_finite(out, net.iteration);
  return out;
}

Eigen::Vector2d zo_direction(std::uint64_t seed, int agent, std::int64_t k) {
  RngStream rng(mix_seed(seed, static_cast<std::uint64_t>(agent),
                         static_cast<std::uint64_t>(k)));
  while (true) {
    Eigen::Vector2d u(rng.gaussian(), rng.gaussian());
    const double norm = u.norm();
    if (norm > 1e-12) return u / norm;
  }
}

NetworkState zo_step(const NetworkState& net, FeedbackOracle& oracle,
                     const GraphWeights& weights, double gamma,
                     double delta_smooth, std::uint64_t seed) {
  const auto order = identity_order(static_cast<int>(net.agents.size()));
  return zo_step(net, oracle, weights, gamma, delta_smooth, seed, order);
}

NetworkState zo_step(const NetworkState& net, FeedbackOracle& oracle,
                     const GraphWeights& weights, double gamma,
                     double delta_smooth, std::uint64_t seed,
                     std::span<const int> order) {
  const AggProblem& p = oracle.problem();
  require_shapes(net, weights, p);
  const int n = static_cast<int>(net.agents.size());
  require_permutation(n, order);
  if (!(gamma > 0.0)) throw ConfigError("step size must be positive");
  if (!(delta_smooth > 0.0)) throw ConfigError("smoothing radius must be positive");

  oracle.begin_iteration(net.iteration);
  const RoundView r = round_view(net, p);
  const int dims = p.dim_local + p.dim_agg;

  Eigen::VectorXd g1(n), g2(n);
  for (int j = 0; j < n; ++j) {
    const Eigen::Vector2d u = zo_direction(seed, j, net.iteration);
    const double y_obs = oracle.sample(j, net.agents[j].x + delta_smooth * u(0),
                                       r.sig_hat(j) + delta_smooth * u(1));
    const Eigen::Vector2d est = zo_estimate_from_obs(u, dims, delta_smooth, y_obs);
    g1(j) = est(0);
    g2(j) = est(1);
  }

  NetworkState out;
  out.iteration = net.iteration + 1;
  out.agents.resize(n);
  for (int i : order) {
    const AgentState& a = net.agents[i];
    AgentState& next = out.agents[i];
    next.theta = a.theta;
    next.x = a.x - gamma * (g1(i) + p.phi_grad(i) * (a.y_tracker + g2(i)));
    std::tie(next.s_tracker, next.y_tracker) = track_agent(i, net, weights, r, g2);
  }
  check_finite(out, net.iteration);
  return out;
}

std::pair<double, double> audit_conservation(const NetworkState& net) {
  double s_sum = 0.0, y_sum = 0.0;
  for (const AgentState& a : net.agents) {
    s_sum += a.s_tracker;
    y_sum += a.y_tracker;
  }
  return {std::abs(s_sum), std::abs(y_sum)};
}

std::vector<double> frozen_consensus_decay(const NetworkState& net,
                                           const AggProblem& problem,
                                           const GraphWeights& weights,
                                           int n_steps) {
  require_shapes(net, weights, problem);
  const int n = static_cast<int>(net.agents.size());

  Eigen::VectorXd x(n), phi(n), s(n), y(n);
  for (int j = 0; j < n; ++j) {
    x(j) = net.agents[j].x;
    phi(j) = problem.phi(j, x(j));
    s(j) = net.agents[j].s_tracker;
    y(j) = net.agents[j].y_tracker;
  }
  const double sigma = problem.aggregate(x);

  auto error = [&](const Eigen::VectorXd& s_now) {
    return ((s_now + phi).array() - sigma).matrix().norm();
  };

  std::vector<double> errors;
  errors.reserve(static_cast<size_t>(n_steps) + 1);
  errors.push_back(error(s));
  for (int step = 0; step < n_steps; ++step) {
    Eigen::VectorXd g2(n);
    for (int j = 0; j < n; ++j)
      g2(j) = problem.exact_grads(j, x(j), s(j) + phi(j)).second;
    Eigen::VectorXd s_next = weights.weights * (s + phi) - phi;
    Eigen::VectorXd y_next = weights.weights * (y + g2) - g2;
    s.swap(s_next);
    y.swap(y_next);
    errors.push_back(error(s));
  }
  return errors;
}

}  // namespace delta
