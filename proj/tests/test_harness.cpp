#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "delta/errors.hpp"
#include "delta/harness.hpp"
#include "delta/rng.hpp"
#include "test_util.hpp"

using namespace delta;

namespace {

RunConfig small_config(Algorithm alg) {
  RunConfig cfg;
  cfg.algorithm = alg;
  cfg.n_agents = 5;
  cfg.graph = {"erdos_renyi", 0.7, 2};
  cfg.problem_seed = 3;
  cfg.x0_seed = 4;
  cfg.gamma = alg == Algorithm::kZo ? 1e-5 : 1e-3;
  cfg.iterations = 400;
  cfg.stride = 40;
  cfg.estimator.hidden_width = 8;
  return cfg;
}

}  // namespace

TEST_CASE("trace CSV") {
  RunTrace trace;
  SUBCASE("empty trace emits the header only") {
    const std::string csv = trace_to_csv(trace);
    CHECK(csv ==
          "k,rel_cost_error,descent_error,s_track_error,y_track_error,s_residual,y_residual\n");
  }
  SUBCASE("three records emit four lines and round-trip bit-exactly") {
    trace.records = {{0, 1.25, 0.5, 1e-300, 0.1, 0.0, 0.0},
                     {100, 0.3333333333333333, 17.0, 2.0, 3.0, 1e-12, 2e-12},
                     {200, 1.0 / 3.0, std::exp(1.0), 0.0, -0.0, 5e-10, 0.0}};
    const std::string csv = trace_to_csv(trace);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);

    const auto parsed = parse_trace_csv(csv);
    REQUIRE(parsed.size() == 3);
    for (size_t i = 0; i < 3; ++i) {
      CHECK(parsed[i].k == trace.records[i].k);
      CHECK(parsed[i].rel_cost_error == trace.records[i].rel_cost_error);
      CHECK(parsed[i].descent_error == trace.records[i].descent_error);
      CHECK(parsed[i].s_track_error == trace.records[i].s_track_error);
      CHECK(parsed[i].y_track_error == trace.records[i].y_track_error);
      CHECK(parsed[i].s_residual == trace.records[i].s_residual);
      CHECK(parsed[i].y_residual == trace.records[i].y_residual);
    }
  }
  SUBCASE("writer produces the CSV file plus the config sidecar") {
    trace.config = small_config(Algorithm::kDagt);
    trace.records = {{0, 1.0, 2.0, 3.0, 4.0, 0.0, 0.0}};
    const auto dir = std::filesystem::temp_directory_path();
    const auto path = (dir / "deltasim_trace_test.csv").string();
    write_trace(trace, path);
    CHECK(read_trace_csv(path).size() == 1);
    CHECK(std::filesystem::exists(path + ".json"));
    std::filesystem::remove(path);
    std::filesystem::remove(path + ".json");
  }
  SUBCASE("malformed input is rejected") {
    CHECK_THROWS_AS(parse_trace_csv("nonsense\n"), IoError);
    CHECK_THROWS_AS(parse_trace_csv("k,rel_cost_error,descent_error,s_track_error,"
                                    "y_track_error,s_residual,y_residual\n1;2\n"),
                    IoError);
  }
}

TEST_CASE("record layout: stride records plus one final record") {
  RunConfig cfg = small_config(Algorithm::kDagt);
  cfg.iterations = 100;
  cfg.stride = 10;
  const RunTrace trace = run_experiment(cfg);
  REQUIRE(trace.records.size() == 11);
  CHECK(trace.records.front().k == 0);
  CHECK(trace.records[1].k == 10);
  CHECK(trace.records.back().k == 100);
  for (const auto& r : trace.records) CHECK(r.rel_cost_error >= -1e-9);
}

TEST_CASE("full pipeline determinism: config in, bytes out") {
  for (Algorithm alg : {Algorithm::kDelta, Algorithm::kDagt, Algorithm::kZo}) {
    const RunConfig cfg = small_config(alg);
    const std::string a = trace_to_csv(run_experiment(cfg));
    const std::string b = trace_to_csv(run_experiment(cfg));
    CHECK(a == b);
  }
}

TEST_CASE("sample budget bookkeeping in traces") {
  const RunTrace trace = run_experiment(small_config(Algorithm::kDelta));
  REQUIRE(trace.samples_per_agent.size() == 5);
  for (auto c : trace.samples_per_agent) CHECK(c == 400);
  const RunTrace exact = run_experiment(small_config(Algorithm::kDagt));
  for (auto c : exact.samples_per_agent) CHECK(c == 0);
}

TEST_CASE("descent direction with exact surrogates at the tracker fixed point") {
  const AggProblem problem = generate_problem(6, 7);
  RngStream rng(8);
  Eigen::VectorXd x(6);
  for (int i = 0; i < 6; ++i) x(i) = rng.gaussian();
  const double sigma = problem.aggregate(x);

  Eigen::VectorXd g1(6), g2(6);
  for (int i = 0; i < 6; ++i) std::tie(g1(i), g2(i)) = problem.exact_grads(i, x(i), sigma);

  NetworkState net;
  net.agents.resize(6);
  for (int i = 0; i < 6; ++i) {
    net.agents[i].x = x(i);
    net.agents[i].s_tracker = sigma - problem.phi(i, x(i));
    net.agents[i].y_tracker = g2.mean() - g2(i);
  }
  const Eigen::VectorXd u = descent_direction(net, problem, g1, g2);
  CHECK((u - problem.global_grad(x)).norm() <= 1e-9);
}

TEST_CASE("single-agent descent direction reduces to the local chain rule") {
  const AggProblem problem = generate_problem(1, 17);
  NetworkState net;
  net.agents.resize(1);
  net.agents[0].x = -0.4;
  Eigen::VectorXd g1(1), g2(1);
  surrogate_grads(Algorithm::kDagt, net, problem, nullptr, ZoSpec{}, g1, g2);
  const Eigen::VectorXd u = descent_direction(net, problem, g1, g2);
  const auto [e1, e2] = problem.exact_grads(0, -0.4, problem.phi(0, -0.4));
  CHECK(u(0) == e1 + problem.phi_grad(0) * e2);
}

TEST_CASE("exact-gradient runs converge and their descent estimate sharpens") {
  RunConfig cfg = small_config(Algorithm::kDagt);
  cfg.n_agents = 10;
  cfg.graph.p = 0.5;
  cfg.gamma = 1e-3;
  cfg.iterations = 30000;
  cfg.stride = 100;
  const RunTrace trace = run_experiment(cfg);
  CHECK(trace.records.back().rel_cost_error <= 1e-6);
  CHECK(trace.records.back().descent_error <= 1e-6);
  CHECK(trace.records.back().s_track_error <= 1e-6);
}

TEST_CASE("dagt cost error trend is nonincreasing after burn-in") {
  RunConfig cfg = small_config(Algorithm::kDagt);
  cfg.n_agents = 8;
  cfg.gamma = 5e-4;
  cfg.iterations = 20000;
  cfg.stride = 10;
  const RunTrace trace = run_experiment(cfg);

  // Window-average over 100 strides, burn-in of 1000 iterations.
  std::vector<double> windows;
  double acc = 0.0;
  int count = 0;
  for (const auto& r : trace.records) {
    if (r.k < 1000) continue;
    acc += r.rel_cost_error;
    if (++count == 100) {
      windows.push_back(acc / 100.0);
      acc = 0.0;
      count = 0;
    }
  }
  REQUIRE(windows.size() >= 5);
  for (size_t i = 0; i + 1 < windows.size(); ++i)
    CHECK(windows[i + 1] <= windows[i] * (1.0 + 1e-9));
}

TEST_CASE("run configuration JSON") {
  RunConfig cfg = small_config(Algorithm::kDelta);
  cfg.perturbation = Perturbation{200, 0.0, 0.1, 9};
  cfg.output_path = "somewhere.csv";
  const RunConfig parsed = parse_run_config(run_config_to_json(cfg));
  CHECK(parsed.algorithm == cfg.algorithm);
  CHECK(parsed.n_agents == cfg.n_agents);
  CHECK(parsed.graph.p == cfg.graph.p);
  CHECK(parsed.graph.seed == cfg.graph.seed);
  CHECK(parsed.problem_seed == cfg.problem_seed);
  CHECK(parsed.x0_seed == cfg.x0_seed);
  CHECK(parsed.gamma == cfg.gamma);
  CHECK(parsed.iterations == cfg.iterations);
  CHECK(parsed.stride == cfg.stride);
  CHECK(parsed.dither.amplitude == cfg.dither.amplitude);
  CHECK(parsed.estimator.hidden_width == cfg.estimator.hidden_width);
  CHECK(parsed.zo.delta_smooth == cfg.zo.delta_smooth);
  REQUIRE(parsed.perturbation.has_value());
  CHECK(parsed.perturbation->trigger_iteration == 200);
  CHECK(parsed.output_path == "somewhere.csv");

  SUBCASE("defaults fill missing fields") {
    const RunConfig sparse = parse_run_config(R"({"algorithm": "zo"})");
    CHECK(sparse.algorithm == Algorithm::kZo);
    CHECK(sparse.n_agents == 20);
    CHECK(sparse.dither.period == 4);
  }
  SUBCASE("unknown algorithm is rejected") {
    CHECK_THROWS_AS(parse_run_config(R"({"algorithm": "sgd"})"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("{not json"), ConfigError);
  }
  SUBCASE("master seed re-derives every stream") {
    RunConfig seeded = cfg;
    seeded.apply_master_seed(1000);
    CHECK(seeded.problem_seed == 1000);
    CHECK(seeded.graph.seed == 1001);
    CHECK(seeded.x0_seed == 1002);
    CHECK(seeded.estimator.init_seed == 1003);
    CHECK(seeded.zo.seed == 1004);
    CHECK(seeded.perturbation->seed == 1005);
  }
  SUBCASE("validation rejects out-of-range fields") {
    RunConfig bad = cfg;
    bad.n_agents = 1;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = cfg;
    bad.gamma = 0.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = cfg;
    bad.stride = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = cfg;
    bad.graph.kind = "ring";
    CHECK_THROWS_AS(bad.validate(), ConfigError);
  }
}

TEST_CASE("compare runs") {
  SUBCASE("a single algorithm summarizes its own trace") {
    const RunConfig cfg = small_config(Algorithm::kDagt);
    const CompareSummary summary = compare_runs({cfg});
    REQUIRE(summary.entries.size() == 1);
    CHECK(summary.entries[0].final_error ==
          summary.traces[0].records.back().rel_cost_error);
    CHECK(summary.entries[0].plateau == plateau_error(summary.traces[0].records));
  }
  SUBCASE("mismatched shared fields are rejected") {
    RunConfig a = small_config(Algorithm::kDagt);
    RunConfig b = small_config(Algorithm::kDelta);
    b.problem_seed = a.problem_seed + 1;
    CHECK_THROWS_AS(compare_runs({a, b}), ConfigError);
    b = small_config(Algorithm::kDelta);
    b.gamma = a.gamma * 2.0;
    CHECK_THROWS_AS(compare_runs({a, b}), ConfigError);
  }
  SUBCASE("an algorithm listed twice is rejected") {
    const RunConfig a = small_config(Algorithm::kDagt);
    CHECK_THROWS_AS(compare_runs({a, a}), ConfigError);
  }
  SUBCASE("compare config JSON requires the algorithms array") {
    CHECK_THROWS_AS(parse_compare_config(R"({"n_agents": 5})"), ConfigError);
    const CompareConfig cc =
        parse_compare_config(R"({"algorithms": ["dagt", "zo"], "n_agents": 5})");
    CHECK(cc.algorithms.size() == 2);
    CHECK(cc.base.n_agents == 5);
  }
}

TEST_CASE("robustness scheduling") {
  RunConfig cfg = small_config(Algorithm::kDagt);
  cfg.iterations = 300;
  cfg.stride = 30;

  SUBCASE("a zero-magnitude perturbation leaves the trace untouched") {
    RunConfig perturbed = cfg;
    perturbed.perturbation = Perturbation{150, 0.0, 0.0, 5};
    const std::string with = trace_to_csv(robustness_experiment(perturbed));
    const std::string without = trace_to_csv(run_experiment(cfg));
    CHECK(with == without);
  }
  SUBCASE("a real perturbation changes the post-trigger records") {
    RunConfig perturbed = cfg;
    perturbed.perturbation = Perturbation{150, 1e-3, 0.1, 5};
    const RunTrace with = robustness_experiment(perturbed);
    const RunTrace without = run_experiment(cfg);
    bool differs = false;
    for (size_t i = 0; i < with.records.size(); ++i) {
      if (with.records[i].k < 150)
        CHECK(with.records[i].rel_cost_error == without.records[i].rel_cost_error);
      else if (with.records[i].rel_cost_error != without.records[i].rel_cost_error)
        differs = true;
    }
    CHECK(differs);
  }
  SUBCASE("missing or late trigger is rejected") {
    CHECK_THROWS_AS(robustness_experiment(cfg), ConfigError);
    RunConfig late = cfg;
    late.perturbation = Perturbation{300, 0.0, 0.1, 5};
    CHECK_THROWS_AS(robustness_experiment(late), ConfigError);
  }
}

TEST_CASE("wider estimators settle into a smaller cost-error neighborhood") {
  RunConfig cfg;
  cfg.algorithm = Algorithm::kDelta;
  cfg.n_agents = 10;
  cfg.graph = {"erdos_renyi", 0.5, 2};
  cfg.problem_seed = 5;
  cfg.x0_seed = 7;
  cfg.gamma = 3e-4;
  cfg.iterations = 30000;
  cfg.stride = 100;

  cfg.estimator.hidden_width = 8;
  const double narrow = plateau_error(run_experiment(cfg).records);
  cfg.estimator.hidden_width = 32;
  const double wide = plateau_error(run_experiment(cfg).records);
  CHECK(wide < narrow);
}

TEST_CASE("selftest battery passes") {
  std::ostringstream sink;
  CHECK(selftest(sink) == 0);
}
