// Command-line front end: run one experiment, compare algorithms on a shared
// instance, run the robustness protocol, or execute the invariant selftest.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "delta/errors.hpp"
#include "delta/harness.hpp"

namespace {

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::int64_t> iters;
  std::optional<double> gamma;
  std::optional<std::string> out;

  void apply(delta::RunConfig& cfg) const {
    if (seed) cfg.apply_master_seed(*seed);
    if (iters) cfg.iterations = *iters;
    if (gamma) cfg.gamma = *gamma;
    if (out) cfg.output_path = *out;
  }
};

void add_override_flags(CLI::App* cmd, std::string& config_path, Overrides& ov) {
  cmd->add_option("config", config_path, "JSON run configuration")->required();
  cmd->add_option("--seed", ov.seed, "master seed; re-derives every config seed");
  cmd->add_option("--iters", ov.iters, "override iteration count");
  cmd->add_option("--gamma", ov.gamma, "override step size");
  cmd->add_option("--out", ov.out, "override output path");
}

void print_trace_summary(const delta::RunTrace& trace) {
  const auto& rec = trace.records.back();
  std::cout << "algorithm:       " << delta::algorithm_name(trace.config.algorithm) << '\n'
            << "iterations:      " << trace.config.iterations << '\n'
            << "records:         " << trace.records.size() << '\n'
            << "final rel error: " << rec.rel_cost_error << '\n'
            << "plateau error:   " << delta::plateau_error(trace.records) << '\n';
  if (!trace.samples_per_agent.empty()) {
    std::int64_t lo = trace.samples_per_agent.front(), hi = lo;
    for (std::int64_t c : trace.samples_per_agent) {
      lo = std::min(lo, c);
      hi = std::max(hi, c);
    }
    std::cout << "samples/agent:   [" << lo << ", " << hi << "]\n";
  }
}

void emit(const delta::RunTrace& trace) {
  std::string path = trace.config.output_path.empty() ? "trace.csv"
                                                      : trace.config.output_path;
  delta::write_trace(trace, path);
  std::cout << "trace:           " << path << " (+ .json sidecar)\n";
}

int run_single(const std::string& config_path, const Overrides& ov, bool robustness) {
  delta::RunConfig cfg = delta::load_run_config(config_path);
  ov.apply(cfg);
  delta::RunTrace trace =
      robustness ? delta::robustness_experiment(cfg) : delta::run_experiment(cfg);
  print_trace_summary(trace);
  emit(trace);
  return 0;
}

int run_compare(const std::string& config_path, const Overrides& ov) {
  delta::CompareConfig cc = delta::load_compare_config(config_path);
  ov.apply(cc.base);
  std::vector<delta::RunConfig> cfgs;
  for (delta::Algorithm alg : cc.algorithms) {
    delta::RunConfig c = cc.base;
    c.algorithm = alg;
    c.output_path.clear();  // individual traces stay in memory
    cfgs.push_back(std::move(c));
  }
  const std::string merged =
      cc.base.output_path.empty() ? "compare.csv" : cc.base.output_path;
  const delta::CompareSummary summary = delta::compare_runs(cfgs, merged);

  std::cout << "algorithm  final_error      plateau\n";
  for (const auto& e : summary.entries) {
    std::printf("%-9s  %-15.6g  %-15.6g\n", delta::algorithm_name(e.algorithm).c_str(),
                e.final_error, e.plateau);
  }
  std::cout << "merged CSV: " << merged << " (+ .json sidecar)\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"deltasim: data-driven distributed aggregative optimization simulator"};
  app.require_subcommand(1);

  std::string run_cfg, cmp_cfg, rob_cfg;
  Overrides run_ov, cmp_ov, rob_ov;

  CLI::App* run = app.add_subcommand("run", "run one algorithm and write its trace");
  add_override_flags(run, run_cfg, run_ov);
  CLI::App* cmp =
      app.add_subcommand("compare", "run the configured algorithms on a shared instance");
  add_override_flags(cmp, cmp_cfg, cmp_ov);
  CLI::App* rob = app.add_subcommand(
      "robustness", "run with a mid-horizon cost perturbation and re-solved optimum");
  add_override_flags(rob, rob_cfg, rob_ov);
  app.add_subcommand("selftest", "execute the built-in invariant suites");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return run_single(run_cfg, run_ov, false);
    if (cmp->parsed()) return run_compare(cmp_cfg, cmp_ov);
    if (rob->parsed()) return run_single(rob_cfg, rob_ov, true);
    return delta::selftest(std::cout) == 0 ? 0 : 1;
  } catch (const delta::ConfigError& e) {
    std::cerr << "error: config: " << e.what() << '\n';
    return 2;
  } catch (const delta::DivergenceError& e) {
    std::cerr << "error: divergence: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
