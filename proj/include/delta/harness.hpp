#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "delta/algorithms.hpp"

namespace delta {

enum class Algorithm { kDelta, kDagt, kZo };

std::string algorithm_name(Algorithm alg);
Algorithm algorithm_from_name(const std::string& name);

struct GraphSpec {
  std::string kind = "erdos_renyi";
  double p = 0.5;
  std::uint64_t seed = 1;
};

struct DitherSpec {
  double amplitude = 5.0;
  int period = 4;
  std::vector<double> phases;

  DitherSchedule schedule() const { return DitherSchedule{period, amplitude, phases}; }
};

struct EstimatorSpec {
  int hidden_width = 32;
  std::uint64_t init_seed = 3;
  double regularizer_weight = 1e-3;
};

struct ZoSpec {
  double delta_smooth = 0.1;
  std::uint64_t seed = 11;
};

// One fully seeded experiment. Every random choice is pinned here; identical
// configs produce byte-identical traces.
struct RunConfig {
  Algorithm algorithm = Algorithm::kDelta;
  int n_agents = 20;
  GraphSpec graph;
  std::uint64_t problem_seed = 42;
  std::uint64_t x0_seed = 7;
  double gamma = 1e-4;
  std::int64_t iterations = 100000;
  std::int64_t stride = 100;
  DitherSpec dither;
  EstimatorSpec estimator;
  ZoSpec zo;
  std::optional<Perturbation> perturbation;
  std::string output_path;

  void validate() const;
  // Re-derives every seed from one master value (CLI --seed override).
  void apply_master_seed(std::uint64_t seed);
};

struct MetricRecord {
  std::int64_t k = 0;
  double rel_cost_error = 0.0;  // (F(x^k) - F(x*)) / |F(x*)|
  double descent_error = 0.0;   // |u_hat(x, s, theta) - grad F(x)|
  double s_track_error = 0.0;   // max_i |sigma_hat_i - sigma(x)|
  double y_track_error = 0.0;   // max_i |g_hat_i - mean_j g2_j|
  double s_residual = 0.0;      // |sum_i s_i| / (1 + sum_i |s_i|)
  double y_residual = 0.0;      // |sum_i y_i| / (1 + sum_i |y_i|)
};

struct RunTrace {
  RunConfig config;
  std::vector<MetricRecord> records;
  std::vector<std::int64_t> samples_per_agent;
};

// Called at every recorded stride with the live state; lets callers assert
// state-level invariants without rerunning the experiment.
using RecordObserver =
    std::function<void(const NetworkState&, const AggProblem&, const MetricRecord&)>;

inline constexpr double kOptimumTol = 1e-10;

// Full pipeline: graph, problem, initial states, optimum oracle, T rounds of
// the configured algorithm with records every stride (plus one final record
// at k = T). A configured perturbation swaps the costs at its trigger and
// re-solves the optimum while the agent states continue untouched.
RunTrace run_experiment(const RunConfig& cfg, const RecordObserver& observer = {});

// run_experiment with a mandatory perturbation strictly before the horizon.
RunTrace robustness_experiment(const RunConfig& cfg, const RecordObserver& observer = {});

// Per-agent estimated descent direction u_hat_i = g1_i + phi'_i (g2_i + y_i)
// given per-agent gradient surrogates evaluated at (x_i, sigma_hat_i).
Eigen::VectorXd descent_direction(const NetworkState& net, const AggProblem& problem,
                                  const Eigen::VectorXd& g1, const Eigen::VectorXd& g2);

// Fills the per-agent gradient surrogates the given algorithm would use at
// this state: estimator input-gradients, exact partials, or the round's
// zeroth-order estimates (regenerated from the counter-based stream).
void surrogate_grads(Algorithm alg, const NetworkState& net, const AggProblem& problem,
                     const Mlp* mlp, const ZoSpec& zo, Eigen::VectorXd& g1,
                     Eigen::VectorXd& g2);

std::string trace_to_csv(const RunTrace& trace);
std::vector<MetricRecord> parse_trace_csv(const std::string& text);
std::vector<MetricRecord> read_trace_csv(const std::string& path);
// CSV (17 significant digits per float) plus a <path>.json sidecar embedding
// the config and resolved seeds.
void write_trace(const RunTrace& trace, const std::string& path);

// Median relative cost error over the last 5% of records.
double plateau_error(std::span<const MetricRecord> records);

struct CompareEntry {
  Algorithm algorithm = Algorithm::kDagt;
  double final_error = 0.0;
  double plateau = 0.0;
};
struct CompareSummary {
  std::vector<CompareEntry> entries;
  std::vector<RunTrace> traces;
};

// Runs each config on the shared instance (equal problem/graph seeds, step
// size, horizon, initial conditions are enforced) and merges the cost-error
// columns into one CSV when a path is given.
CompareSummary compare_runs(const std::vector<RunConfig>& cfgs,
                            const std::string& merged_csv_path = {});

std::string run_config_to_json(const RunConfig& cfg);
RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::string& path);

struct CompareConfig {
  std::vector<Algorithm> algorithms;
  RunConfig base;
};
CompareConfig parse_compare_config(const std::string& json_text);
CompareConfig load_compare_config(const std::string& path);

// Fast end-to-end invariant battery; returns the number of failed checks.
int selftest(std::ostream& out);

}  // namespace delta
