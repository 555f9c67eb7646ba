#include "delta/problem.hpp"

#include <atomic>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

#include <Eigen/Eigenvalues>
#include <nlohmann/json.hpp>

#include "delta/errors.hpp"
#include "delta/rng.hpp"

namespace delta {

namespace {

// exp(709) is the last finite double; saturate below it so dither excursions
// produce large finite costs instead of inf.
constexpr double kExpArgCap = 700.0;

double capped_exp_arg(double z) {
  if (z > kExpArgCap) {
    static std::atomic<bool> warned{false};
    if (!warned.exchange(true))
      std::cerr << "warning: exponential cost term saturated (argument > "
                << kExpArgCap << ")\n";
    return kExpArgCap;
  }
  return z;
}

}  // namespace

double AggProblem::aggregate(const Eigen::VectorXd& x) const {
  if (x.size() != n_agents) throw ConfigError("aggregate: dimension mismatch");
  double acc = 0.0;
  for (int i = 0; i < n_agents; ++i) acc += phi(i, x(i));
  return acc / static_cast<double>(n_agents);
}

double AggProblem::eval_cost(int i, double x_i, double s) const {
  const LocalCost& c = costs[i];
  Eigen::Vector2d v(x_i, s);
  double e = c.exp_scale * std::exp(capped_exp_arg(c.exp_rate * (x_i + s)));
  return 0.5 * v.dot(c.quad * v) + c.lin.dot(v) + e + c.offset;
}

std::pair<double, double> AggProblem::exact_grads(int i, double x_i, double s) const {
  const LocalCost& c = costs[i];
  Eigen::Vector2d v(x_i, s);
  Eigen::Vector2d qv = c.quad * v;
  double e = c.exp_scale * std::exp(capped_exp_arg(c.exp_rate * (x_i + s)));
  double de = c.exp_rate * e;
  return {qv(0) + c.lin(0) + de, qv(1) + c.lin(1) + de};
}

double AggProblem::global_cost(const Eigen::VectorXd& x) const {
  const double s = aggregate(x);
  double acc = 0.0;
  for (int i = 0; i < n_agents; ++i) acc += eval_cost(i, x(i), s);
  return acc;
}

Eigen::VectorXd AggProblem::global_grad(const Eigen::VectorXd& x) const {
  const double s = aggregate(x);
  const double inv_n = 1.0 / static_cast<double>(n_agents);
  double sum_g2 = 0.0;
  Eigen::VectorXd g(n_agents);
  for (int i = 0; i < n_agents; ++i) {
    auto [g1, g2] = exact_grads(i, x(i), s);
    g(i) = g1;
    sum_g2 += g2;
  }
  // d sigma / d x_i = pi_i / N.
  for (int i = 0; i < n_agents; ++i) g(i) += phi_grad(i) * inv_n * sum_g2;
  return g;
}

Eigen::MatrixXd AggProblem::global_hessian(const Eigen::VectorXd& x) const {
  const double s = aggregate(x);
  const double inv_n = 1.0 / static_cast<double>(n_agents);
  const int n = n_agents;
  Eigen::VectorXd d11(n), d12(n), d22(n);
  for (int i = 0; i < n; ++i) {
    const LocalCost& c = costs[i];
    double e = c.exp_scale * std::exp(capped_exp_arg(c.exp_rate * (x(i) + s)));
    double dd = c.exp_rate * c.exp_rate * e;
    d11(i) = c.quad(0, 0) + dd;
    d12(i) = c.quad(0, 1) + dd;
    d22(i) = c.quad(1, 1) + dd;
  }
  const double sum_d22 = d22.sum();
  Eigen::MatrixXd h(n, n);
  for (int k = 0; k < n; ++k) {
    const double pk = phi_grad(k) * inv_n;
    for (int l = 0; l < n; ++l) {
      const double pl = phi_grad(l) * inv_n;
      double v = pl * d12(k) + pk * d12(l) + pk * pl * sum_d22;
      if (k == l) v += d11(k);
      h(k, l) = v;
    }
  }
  return h;
}

namespace {

bool hessian_positive_definite(const AggProblem& p, const Eigen::VectorXd& x) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(p.global_hessian(x));
  return es.eigenvalues().minCoeff() > 1e-10;
}

bool certify_strong_convexity(const AggProblem& p, RngStream& rng) {
  Eigen::VectorXd x(p.n_agents);
  for (int trial = 0; trial < 50; ++trial) {
    for (int i = 0; i < p.n_agents; ++i) x(i) = 3.0 * rng.gaussian();
    if (!hessian_positive_definite(p, x)) return false;
  }
  return true;
}

}  // namespace

AggProblem generate_problem(int n, std::uint64_t seed) {
  if (n < 1) throw ConfigError("generate_problem: n must be >= 1");

  for (int attempt = 0; attempt < kGenerationRetryBudget; ++attempt) {
    RngStream rng(seed + static_cast<std::uint64_t>(attempt));
    AggProblem p;
    p.n_agents = n;
    p.seed = seed;
    p.costs.resize(n);
    for (LocalCost& c : p.costs) {
      c.contribution_weight = rng.uniform01();
      c.exp_scale = rng.uniform01();
      c.exp_rate = rng.uniform01();
      c.exp_aux = rng.uniform01();
      Eigen::Matrix2d m;
      m << rng.uniform01(), rng.uniform01(), rng.uniform01(), rng.uniform01();
      c.quad = m * m.transpose() + Eigen::Matrix2d::Identity();
      c.lin << rng.uniform(0.0, 20.0), rng.uniform(0.0, 20.0);
      c.offset = rng.uniform(0.0, 20.0);
    }
    if (certify_strong_convexity(p, rng)) return p;
  }
  throw GenerationError("no strongly convex instance after " +
                        std::to_string(kGenerationRetryBudget) + " attempts");
}

AggProblem apply_perturbation(const AggProblem& problem, const Perturbation& pert) {
  if (!(pert.magnitude_lo >= 0.0 && pert.magnitude_hi < 1.0 &&
        pert.magnitude_lo <= pert.magnitude_hi))
    throw ConfigError("perturbation magnitude range must sit inside [0, 1)");

  RngStream rng(pert.seed);
  AggProblem out = problem;
  for (LocalCost& c : out.costs) {
    auto draw = [&] { return rng.uniform(pert.magnitude_lo, pert.magnitude_hi); };
    c.quad(0, 0) -= draw();
    const double off_diag = draw();  // keep quad symmetric
    c.quad(0, 1) -= off_diag;
    c.quad(1, 0) -= off_diag;
    c.quad(1, 1) -= draw();
    c.lin(0) -= draw();
    c.lin(1) -= draw();
    c.exp_scale -= draw();
    c.exp_rate -= draw();
    c.exp_aux -= draw();
    c.contribution_weight -= draw();
    c.offset -= draw();

    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(c.quad);
    const double min_eig = es.eigenvalues().minCoeff();
    if (min_eig < 1e-3) c.quad += (1e-3 - min_eig) * Eigen::Matrix2d::Identity();
  }
  return out;
}

OptimumResult solve_optimum(const AggProblem& problem, double tol,
                            std::optional<Eigen::VectorXd> start) {
  Eigen::VectorXd x =
      start ? std::move(*start) : Eigen::VectorXd::Zero(problem.n_agents);
  if (x.size() != problem.n_agents) throw ConfigError("solve_optimum: bad start point");

  double f = problem.global_cost(x);
  double step = 1.0;
  std::int64_t iters = 0;
  while (true) {
    Eigen::VectorXd g = problem.global_grad(x);
    const double gnorm = g.norm();
    if (gnorm <= tol) return {std::move(x), f, iters};
    if (iters >= kOptimumIterationCap)
      throw NonConvergenceError("optimum solve exceeded iteration cap");

    const double g2 = gnorm * gnorm;
    const double value_floor = 1e-15 * (std::abs(f) + 1.0);
    const double value_resolution = 1e-13 * (std::abs(f) + 1.0);
    double trial = std::min(step * 2.0, 1e3);
    Eigen::VectorXd xt;
    double ft;
    while (true) {
      xt = x - trial * g;
      ft = problem.global_cost(xt);
      // Armijo with a measurable-decrease floor so sub-ulp "progress" cannot
      // inflate the remembered step size.
      if (ft <= f - std::max(1e-4 * trial * g2, value_floor)) {
        step = trial;
        break;
      }
      // Near the value floor the decrease is no longer measurable; keep
      // stepping at half the last measurable size, where the gradient map
      // still contracts, and leave the remembered size untouched.
      if (trial <= 0.5 * step && trial * g2 <= value_resolution) break;
      trial *= 0.5;
      if (trial < 1e-300)
        throw NonConvergenceError("line search collapsed before reaching tol");
    }
    x.swap(xt);
    f = ft;
    ++iters;
  }
}

void FeedbackOracle::begin_iteration(std::int64_t k) {
  if (k < iteration_) throw ProtocolViolation("iteration counter went backwards");
  if (k != iteration_) {
    iteration_ = k;
    std::fill(in_iteration_.begin(), in_iteration_.end(), 0);
  }
}

double FeedbackOracle::sample(int i, double u_x, double u_s) {
  if (i < 0 || i >= problem_->n_agents) throw ConfigError("sample: bad agent index");
  if (++in_iteration_[i] > 1)
    throw ProtocolViolation("agent " + std::to_string(i) +
                            " sampled its cost twice in iteration " +
                            std::to_string(iteration_));
  ++totals_[i];
  return problem_->eval_cost(i, u_x, u_s);
}

namespace {

nlohmann::json cost_to_json(const LocalCost& c) {
  return {{"quad", {c.quad(0, 0), c.quad(0, 1), c.quad(1, 0), c.quad(1, 1)}},
          {"lin", {c.lin(0), c.lin(1)}},
          {"exp_scale", c.exp_scale},
          {"exp_rate", c.exp_rate},
          {"exp_aux", c.exp_aux},
          {"contribution_weight", c.contribution_weight},
          {"offset", c.offset}};
}

LocalCost cost_from_json(const nlohmann::json& j) {
  LocalCost c;
  const auto& q = j.at("quad");
  c.quad << q.at(0).get<double>(), q.at(1).get<double>(), q.at(2).get<double>(),
      q.at(3).get<double>();
  c.lin << j.at("lin").at(0).get<double>(), j.at("lin").at(1).get<double>();
  c.exp_scale = j.at("exp_scale").get<double>();
  c.exp_rate = j.at("exp_rate").get<double>();
  c.exp_aux = j.at("exp_aux").get<double>();
  c.contribution_weight = j.at("contribution_weight").get<double>();
  c.offset = j.at("offset").get<double>();
  return c;
}

}  // namespace

std::string to_json_string(const AggProblem& problem) {
  nlohmann::json j;
  j["n_agents"] = problem.n_agents;
  j["dim_local"] = problem.dim_local;
  j["dim_agg"] = problem.dim_agg;
  j["seed"] = problem.seed;
  j["costs"] = nlohmann::json::array();
  for (const LocalCost& c : problem.costs) j["costs"].push_back(cost_to_json(c));
  return j.dump(2);
}

AggProblem problem_from_json_string(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  AggProblem p;
  p.n_agents = j.at("n_agents").get<int>();
  p.dim_local = j.at("dim_local").get<int>();
  p.dim_agg = j.at("dim_agg").get<int>();
  p.seed = j.at("seed").get<std::uint64_t>();
  for (const auto& cj : j.at("costs")) p.costs.push_back(cost_from_json(cj));
  if (static_cast<int>(p.costs.size()) != p.n_agents)
    throw IoError("problem file: cost count does not match n_agents");
  return p;
}

void save_problem(const AggProblem& problem, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << to_json_string(problem);
  if (!out) throw IoError("write failed: " + path);
}

AggProblem load_problem(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open for reading: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return problem_from_json_string(buf.str());
}

}  // namespace delta
