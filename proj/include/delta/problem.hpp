#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace delta {

// One agent's cost over v = (x_i, s):
//   f_i(v) = 1/2 v' quad v + lin' v + exp_scale * exp(exp_rate * (v_1 + v_2)) + offset.
// exp_aux is drawn with the rest of the coefficient family and swept by
// perturbations but does not enter this exponential form.
struct LocalCost {
  Eigen::Matrix2d quad = Eigen::Matrix2d::Identity();
  Eigen::Vector2d lin = Eigen::Vector2d::Zero();
  double exp_scale = 0.0;           // a_i
  double exp_rate = 0.0;            // b_i
  double exp_aux = 0.0;             // c_i
  double contribution_weight = 1.0; // pi_i
  double offset = 0.0;
};

// Aggregative problem with scalar decisions: sigma(x) = (1/N) sum_i pi_i x_i
// and global cost F(x) = sum_i f_i(x_i, sigma(x)). Immutable after
// generation; perturbation returns a new instance.
struct AggProblem {
  int n_agents = 0;
  std::vector<LocalCost> costs;
  int dim_local = 1;
  int dim_agg = 1;
  std::uint64_t seed = 0;  // generation metadata

  double phi(int i, double x_i) const { return costs[i].contribution_weight * x_i; }
  double phi_grad(int i) const { return costs[i].contribution_weight; }

  double aggregate(const Eigen::VectorXd& x) const;
  double eval_cost(int i, double x_i, double s) const;
  // Partial derivatives of f_i with respect to x_i and s.
  std::pair<double, double> exact_grads(int i, double x_i, double s) const;
  double global_cost(const Eigen::VectorXd& x) const;
  Eigen::VectorXd global_grad(const Eigen::VectorXd& x) const;
  Eigen::MatrixXd global_hessian(const Eigen::VectorXd& x) const;
};

// Coefficients pi, exp_scale, exp_rate, exp_aux uniform on (0,1); quad built
// positive definite as M M' + I with M entries uniform on (0,1); lin entries
// and offset uniform on (0,20). Strong convexity of F is certified by
// positive definiteness of the global Hessian at 50 sampled points; failing
// instances are regenerated with a shifted seed.
AggProblem generate_problem(int n, std::uint64_t seed);
inline constexpr int kGenerationRetryBudget = 100;

struct Perturbation {
  std::int64_t trigger_iteration = 0;
  double magnitude_lo = 0.0;
  double magnitude_hi = 0.0;  // range must sit inside [0, 1)
  std::uint64_t seed = 0;
};

// Decrements every scalar coefficient of every LocalCost by an independent
// uniform draw from [magnitude_lo, magnitude_hi); quad stays symmetric and is
// re-projected to minimum eigenvalue 1e-3 if the sweep pushed it lower.
AggProblem apply_perturbation(const AggProblem& problem, const Perturbation& pert);

struct OptimumResult {
  Eigen::VectorXd x;
  double value = 0.0;
  std::int64_t iterations = 0;
};

// Gradient descent with backtracking line search until |grad F| <= tol.
// Near the floating-point floor of F the last measurable step is reused
// without requiring further measurable decrease.
OptimumResult solve_optimum(const AggProblem& problem, double tol,
                            std::optional<Eigen::VectorXd> start = std::nullopt);
inline constexpr std::int64_t kOptimumIterationCap = 10'000'000;

// Single-point feedback gate. Agents may observe their own cost exactly once
// per iteration; totals feed the sample-budget audits.
class FeedbackOracle {
 public:
  explicit FeedbackOracle(const AggProblem& problem)
      : problem_(&problem),
        totals_(problem.n_agents, 0),
        in_iteration_(problem.n_agents, 0) {}

  // Opens iteration k (monotone); resets the per-iteration budget.
  void begin_iteration(std::int64_t k);
  double sample(int i, double u_x, double u_s);

  std::int64_t total_samples(int i) const { return totals_[i]; }
  const std::vector<std::int64_t>& totals() const { return totals_; }
  const AggProblem& problem() const { return *problem_; }
  // Swap the underlying costs (robustness trigger) without touching counters.
  void rebind(const AggProblem& problem) { problem_ = &problem; }

 private:
  const AggProblem* problem_;
  std::vector<std::int64_t> totals_;
  std::vector<std::int64_t> in_iteration_;
  std::int64_t iteration_ = -1;
};

std::string to_json_string(const AggProblem& problem);
AggProblem problem_from_json_string(const std::string& text);
void save_problem(const AggProblem& problem, const std::string& path);
AggProblem load_problem(const std::string& path);

}  // namespace delta
