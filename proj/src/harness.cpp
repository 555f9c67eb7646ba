#include "delta/harness.hpp"

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "delta/errors.hpp"

namespace delta {

std::string algorithm_name(Algorithm alg) {
  switch (alg) {
    case Algorithm::kDelta: return "delta";
    case Algorithm::kDagt: return "dagt";
    case Algorithm::kZo: return "zo";
  }
  throw ConfigError("unknown algorithm enum value");
}

Algorithm algorithm_from_name(const std::string& name) {
  if (name == "delta") return Algorithm::kDelta;
  if (name == "dagt") return Algorithm::kDagt;
  if (name == "zo") return Algorithm::kZo;
  throw ConfigError("unknown algorithm \"" + name + "\" (expected delta|dagt|zo)");
}

void RunConfig::validate() const {
  if (n_agents < 2) throw ConfigError("n_agents must be >= 2");
  if (graph.kind != "erdos_renyi")
    throw ConfigError("unknown graph kind \"" + graph.kind + "\"");
  if (!(graph.p > 0.0 && graph.p <= 1.0))
    throw ConfigError("graph.p must be in (0, 1]");
  if (!(gamma > 0.0)) throw ConfigError("gamma must be positive");
  if (iterations < 1) throw ConfigError("iterations must be >= 1");
  if (stride < 1) throw ConfigError("stride must be >= 1");
  if (estimator.hidden_width < 1) throw ConfigError("hidden_width must be >= 1");
  if (estimator.regularizer_weight < 0.0)
    throw ConfigError("regularizer_weight must be nonnegative");
  if (!(zo.delta_smooth > 0.0)) throw ConfigError("zo.delta_smooth must be positive");
  dither.schedule().validate(n_agents);
  if (perturbation) {
    if (perturbation->trigger_iteration < 0)
      throw ConfigError("perturbation trigger must be nonnegative");
    if (!(perturbation->magnitude_lo >= 0.0 && perturbation->magnitude_hi < 1.0 &&
          perturbation->magnitude_lo <= perturbation->magnitude_hi))
      throw ConfigError("perturbation magnitude range must sit inside [0, 1)");
  }
}

void RunConfig::apply_master_seed(std::uint64_t seed) {
  problem_seed = seed;
  graph.seed = seed + 1;
  x0_seed = seed + 2;
  estimator.init_seed = seed + 3;
  zo.seed = seed + 4;
  if (perturbation) perturbation->seed = seed + 5;
}

Eigen::VectorXd descent_direction(const NetworkState& net, const AggProblem& problem,
                                  const Eigen::VectorXd& g1, const Eigen::VectorXd& g2) {
  const int n = static_cast<int>(net.agents.size());
  Eigen::VectorXd u(n);
  for (int i = 0; i < n; ++i)
    u(i) = g1(i) + problem.phi_grad(i) * (g2(i) + net.agents[i].y_tracker);
  return u;
}

void surrogate_grads(Algorithm alg, const NetworkState& net, const AggProblem& problem,
                     const Mlp* mlp, const ZoSpec& zo, Eigen::VectorXd& g1,
                     Eigen::VectorXd& g2) {
  const int n = static_cast<int>(net.agents.size());
  g1.resize(n);
  g2.resize(n);
  for (int i = 0; i < n; ++i) {
    const AgentState& a = net.agents[i];
    const double sig_hat = a.s_tracker + problem.phi(i, a.x);
    switch (alg) {
      case Algorithm::kDelta: {
        if (mlp == nullptr) throw ConfigError("surrogate_grads: missing estimator");
        Eigen::VectorXd xv(1), sv(1);
        xv(0) = a.x;
        sv(0) = sig_hat;
        auto ig = mlp->input_grads(a.theta, xv, sv);
        g1(i) = ig.wrt_x(0);
        g2(i) = ig.wrt_s(0);
        break;
      }
      case Algorithm::kDagt:
        std::tie(g1(i), g2(i)) = problem.exact_grads(i, a.x, sig_hat);
        break;
      case Algorithm::kZo: {
        // Same counter-based draw the step consumes at this iteration; the
        // cost evaluation here is observer-side and bypasses the budget.
        const Eigen::Vector2d u = zo_direction(zo.seed, i, net.iteration);
        const double y_obs = problem.eval_cost(i, a.x + zo.delta_smooth * u(0),
                                               sig_hat + zo.delta_smooth * u(1));
        const Eigen::Vector2d est = zo_estimate_from_obs(
            u, problem.dim_local + problem.dim_agg, zo.delta_smooth, y_obs);
        g1(i) = est(0);
        g2(i) = est(1);
        break;
      }
    }
  }
}

namespace {

MetricRecord make_record(const NetworkState& net, const AggProblem& problem,
                         const OptimumResult& opt, const RunConfig& cfg,
                         const Mlp* mlp) {
  const int n = static_cast<int>(net.agents.size());
  Eigen::VectorXd x(n);
  for (int i = 0; i < n; ++i) x(i) = net.agents[i].x;

  MetricRecord rec;
  rec.k = net.iteration;

  const double cost = problem.global_cost(x);
  rec.rel_cost_error = (cost - opt.value) / std::abs(opt.value);
  if (rec.rel_cost_error < -1e-9)
    throw std::runtime_error(
        "metric invariant violated: cost fell below the optimum oracle at k=" +
        std::to_string(rec.k));

  Eigen::VectorXd g1, g2;
  surrogate_grads(cfg.algorithm, net, problem, mlp, cfg.zo, g1, g2);
  rec.descent_error =
      (descent_direction(net, problem, g1, g2) - problem.global_grad(x)).norm();

  const double sigma = problem.aggregate(x);
  const double g2_mean = g2.mean();
  double s_mass = 0.0, y_mass = 0.0;
  for (int i = 0; i < n; ++i) {
    const AgentState& a = net.agents[i];
    rec.s_track_error =
        std::max(rec.s_track_error, std::abs(a.s_tracker + problem.phi(i, a.x) - sigma));
    rec.y_track_error =
        std::max(rec.y_track_error, std::abs(a.y_tracker + g2(i) - g2_mean));
    s_mass += std::abs(a.s_tracker);
    y_mass += std::abs(a.y_tracker);
  }
  const auto [s_sum, y_sum] = audit_conservation(net);
  rec.s_residual = s_sum / (1.0 + s_mass);
  rec.y_residual = y_sum / (1.0 + y_mass);
  return rec;
}

}  // namespace

RunTrace run_experiment(const RunConfig& cfg, const RecordObserver& observer) {
  cfg.validate();

  const GraphTopology topo = generate_erdos_renyi(cfg.n_agents, cfg.graph.p, cfg.graph.seed);
  const GraphWeights weights = metropolis_weights(topo);
  AggProblem problem = generate_problem(cfg.n_agents, cfg.problem_seed);

  std::optional<Mlp> mlp;
  if (cfg.algorithm == Algorithm::kDelta)
    mlp.emplace(MlpArch{problem.dim_local + problem.dim_agg, cfg.estimator.hidden_width});

  NetworkState net = initial_network_state(problem, mlp ? &*mlp : nullptr,
                                           cfg.x0_seed, cfg.estimator.init_seed);
  FeedbackOracle oracle(problem);
  OptimumResult opt = solve_optimum(problem, kOptimumTol);
  const StepConfig step{cfg.gamma, cfg.dither.schedule(),
                        LossConfig{cfg.estimator.regularizer_weight}};

  RunTrace trace;
  trace.config = cfg;
  auto record = [&] {
    MetricRecord rec = make_record(net, problem, opt, cfg, mlp ? &*mlp : nullptr);
    trace.records.push_back(rec);
    if (observer) observer(net, problem, rec);
  };

  for (std::int64_t k = 0; k < cfg.iterations; ++k) {
    if (cfg.perturbation && k == cfg.perturbation->trigger_iteration) {
      problem = apply_perturbation(problem, *cfg.perturbation);
      oracle.rebind(problem);
      opt = solve_optimum(problem, kOptimumTol);
    }
    if (k % cfg.stride == 0) record();
    switch (cfg.algorithm) {
      case Algorithm::kDelta:
        net = delta_step(net, oracle, weights, *mlp, step);
        break;
      case Algorithm::kDagt:
        net = dagt_step(net, problem, weights, cfg.gamma);
        break;
      case Algorithm::kZo:
        net = zo_step(net, oracle, weights, cfg.gamma, cfg.zo.delta_smooth, cfg.zo.seed);
        break;
    }
  }
  record();  // final state at k = iterations
  trace.samples_per_agent = oracle.totals();
  return trace;
}

RunTrace robustness_experiment(const RunConfig& cfg, const RecordObserver& observer) {
  if (!cfg.perturbation)
    throw ConfigError("robustness experiment needs a perturbation block");
  if (cfg.perturbation->trigger_iteration >= cfg.iterations)
    throw ConfigError("perturbation trigger must fall before the horizon");
  return run_experiment(cfg, observer);
}

namespace {

void append_float(std::string& out, double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  out += buf;
}

}  // namespace

std::string trace_to_csv(const RunTrace& trace) {
  std::string out =
      "k,rel_cost_error,descent_error,s_track_error,y_track_error,s_residual,y_residual\n";
  for (const MetricRecord& r : trace.records) {
    out += std::to_string(r.k);
    for (double v : {r.rel_cost_error, r.descent_error, r.s_track_error,
                     r.y_track_error, r.s_residual, r.y_residual}) {
      out += ',';
      append_float(out, v);
    }
    out += '\n';
  }
  return out;
}

std::vector<MetricRecord> parse_trace_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line.rfind("k,rel_cost_error", 0) != 0)
    throw IoError("trace CSV: missing header");
  std::vector<MetricRecord> records;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    MetricRecord r;
    double* fields[] = {&r.rel_cost_error, &r.descent_error, &r.s_track_error,
                        &r.y_track_error, &r.s_residual, &r.y_residual};
    const char* p = line.c_str();
    char* end = nullptr;
    r.k = std::strtoll(p, &end, 10);
    p = end;
    for (double* f : fields) {
      if (*p != ',') throw IoError("trace CSV: malformed row \"" + line + "\"");
      *f = std::strtod(p + 1, &end);
      p = end;
    }
    records.push_back(r);
  }
  return records;
}

std::vector<MetricRecord> read_trace_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open for reading: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_trace_csv(buf.str());
}

namespace {

nlohmann::json config_to_json_obj(const RunConfig& cfg) {
  nlohmann::json j;
  j["algorithm"] = algorithm_name(cfg.algorithm);
  j["n_agents"] = cfg.n_agents;
  j["graph"] = {{"kind", cfg.graph.kind}, {"p", cfg.graph.p}, {"seed", cfg.graph.seed}};
  j["problem_seed"] = cfg.problem_seed;
  j["x0_seed"] = cfg.x0_seed;
  j["gamma"] = cfg.gamma;
  j["iterations"] = cfg.iterations;
  j["stride"] = cfg.stride;
  j["dither"] = {{"amplitude", cfg.dither.amplitude},
                 {"period", cfg.dither.period},
                 {"phases", cfg.dither.phases}};
  j["estimator"] = {{"hidden_width", cfg.estimator.hidden_width},
                    {"init_seed", cfg.estimator.init_seed},
                    {"regularizer_weight", cfg.estimator.regularizer_weight}};
  j["zo"] = {{"delta_smooth", cfg.zo.delta_smooth}, {"seed", cfg.zo.seed}};
  if (cfg.perturbation) {
    j["perturbation"] = {{"trigger_iteration", cfg.perturbation->trigger_iteration},
                         {"magnitude_lo", cfg.perturbation->magnitude_lo},
                         {"magnitude_hi", cfg.perturbation->magnitude_hi},
                         {"seed", cfg.perturbation->seed}};
  } else {
    j["perturbation"] = nullptr;
  }
  j["output_path"] = cfg.output_path;
  return j;
}

nlohmann::json resolved_seeds(const RunConfig& cfg) {
  nlohmann::json j = {{"graph", cfg.graph.seed},
                      {"problem", cfg.problem_seed},
                      {"x0", cfg.x0_seed},
                      {"estimator_init", cfg.estimator.init_seed},
                      {"zo", cfg.zo.seed}};
  if (cfg.perturbation) j["perturbation"] = cfg.perturbation->seed;
  return j;
}

RunConfig config_from_json_obj(const nlohmann::json& j) {
  RunConfig cfg;
  if (j.contains("algorithm")) cfg.algorithm = algorithm_from_name(j.at("algorithm"));
  if (j.contains("n_agents")) cfg.n_agents = j.at("n_agents").get<int>();
  if (j.contains("graph")) {
    const auto& g = j.at("graph");
    if (g.contains("kind")) cfg.graph.kind = g.at("kind").get<std::string>();
    if (g.contains("p")) cfg.graph.p = g.at("p").get<double>();
    if (g.contains("seed")) cfg.graph.seed = g.at("seed").get<std::uint64_t>();
  }
  if (j.contains("problem_seed")) cfg.problem_seed = j.at("problem_seed").get<std::uint64_t>();
  if (j.contains("x0_seed")) cfg.x0_seed = j.at("x0_seed").get<std::uint64_t>();
  if (j.contains("gamma")) cfg.gamma = j.at("gamma").get<double>();
  if (j.contains("iterations")) cfg.iterations = j.at("iterations").get<std::int64_t>();
  if (j.contains("stride")) cfg.stride = j.at("stride").get<std::int64_t>();
  if (j.contains("dither")) {
    const auto& d = j.at("dither");
    if (d.contains("amplitude")) cfg.dither.amplitude = d.at("amplitude").get<double>();
    if (d.contains("period")) cfg.dither.period = d.at("period").get<int>();
    if (d.contains("phases")) cfg.dither.phases = d.at("phases").get<std::vector<double>>();
  }
  if (j.contains("estimator")) {
    const auto& e = j.at("estimator");
    if (e.contains("hidden_width")) cfg.estimator.hidden_width = e.at("hidden_width").get<int>();
    if (e.contains("init_seed")) cfg.estimator.init_seed = e.at("init_seed").get<std::uint64_t>();
    if (e.contains("regularizer_weight"))
      cfg.estimator.regularizer_weight = e.at("regularizer_weight").get<double>();
  }
  if (j.contains("zo")) {
    const auto& z = j.at("zo");
    if (z.contains("delta_smooth")) cfg.zo.delta_smooth = z.at("delta_smooth").get<double>();
    if (z.contains("seed")) cfg.zo.seed = z.at("seed").get<std::uint64_t>();
  }
  if (j.contains("perturbation") && !j.at("perturbation").is_null()) {
    const auto& p = j.at("perturbation");
    Perturbation pert;
    pert.trigger_iteration = p.at("trigger_iteration").get<std::int64_t>();
    pert.magnitude_lo = p.at("magnitude_lo").get<double>();
    pert.magnitude_hi = p.at("magnitude_hi").get<double>();
    pert.seed = p.at("seed").get<std::uint64_t>();
    cfg.perturbation = pert;
  }
  if (j.contains("output_path")) cfg.output_path = j.at("output_path").get<std::string>();
  return cfg;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << text;
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace

void write_trace(const RunTrace& trace, const std::string& path) {
  write_text(path, trace_to_csv(trace));
  nlohmann::json sidecar = {{"config", config_to_json_obj(trace.config)},
                            {"resolved_seeds", resolved_seeds(trace.config)},
                            {"samples_per_agent", trace.samples_per_agent}};
  write_text(path + ".json", sidecar.dump(2) + "\n");
}

double plateau_error(std::span<const MetricRecord> records) {
  if (records.empty()) throw ConfigError("plateau of an empty trace");
  const size_t tail = std::max<size_t>(1, (records.size() + 19) / 20);  // last 5%
  std::vector<double> values;
  values.reserve(tail);
  for (size_t i = records.size() - tail; i < records.size(); ++i)
    values.push_back(records[i].rel_cost_error);
  std::sort(values.begin(), values.end());
  const size_t mid = values.size() / 2;
  return values.size() % 2 == 1 ? values[mid] : 0.5 * (values[mid - 1] + values[mid]);
}

CompareSummary compare_runs(const std::vector<RunConfig>& cfgs,
                            const std::string& merged_csv_path) {
  if (cfgs.empty()) throw ConfigError("compare needs at least one config");
  const RunConfig& base = cfgs.front();
  for (const RunConfig& c : cfgs) {
    if (c.problem_seed != base.problem_seed || c.graph.seed != base.graph.seed ||
        c.graph.kind != base.graph.kind || c.graph.p != base.graph.p ||
        c.gamma != base.gamma || c.iterations != base.iterations ||
        c.n_agents != base.n_agents || c.x0_seed != base.x0_seed ||
        c.stride != base.stride)
      throw ConfigError(
          "compare configs must share instance seeds, step size and horizon");
  }
  for (size_t i = 0; i < cfgs.size(); ++i)
    for (size_t j = i + 1; j < cfgs.size(); ++j)
      if (cfgs[i].algorithm == cfgs[j].algorithm)
        throw ConfigError("compare configs list an algorithm twice");

  CompareSummary summary;
  for (const RunConfig& c : cfgs) {
    RunTrace trace = run_experiment(c);
    summary.entries.push_back({c.algorithm, trace.records.back().rel_cost_error,
                               plateau_error(trace.records)});
    summary.traces.push_back(std::move(trace));
  }

  if (!merged_csv_path.empty()) {
    std::string csv = "k";
    for (const RunTrace& t : summary.traces)
      csv += ",rel_cost_error_" + algorithm_name(t.config.algorithm);
    csv += '\n';
    const size_t rows = summary.traces.front().records.size();
    for (const RunTrace& t : summary.traces)
      if (t.records.size() != rows)
        throw std::runtime_error("compare traces disagree on record count");
    for (size_t r = 0; r < rows; ++r) {
      csv += std::to_string(summary.traces.front().records[r].k);
      for (const RunTrace& t : summary.traces) {
        csv += ',';
        append_float(csv, t.records[r].rel_cost_error);
      }
      csv += '\n';
    }
    write_text(merged_csv_path, csv);

    nlohmann::json sidecar;
    sidecar["configs"] = nlohmann::json::array();
    for (const RunTrace& t : summary.traces)
      sidecar["configs"].push_back(config_to_json_obj(t.config));
    sidecar["summary"] = nlohmann::json::array();
    for (const CompareEntry& e : summary.entries)
      sidecar["summary"].push_back({{"algorithm", algorithm_name(e.algorithm)},
                                    {"final_error", e.final_error},
                                    {"plateau", e.plateau}});
    write_text(merged_csv_path + ".json", sidecar.dump(2) + "\n");
  }
  return summary;
}

std::string run_config_to_json(const RunConfig& cfg) {
  return config_to_json_obj(cfg).dump(2) + "\n";
}

RunConfig parse_run_config(const std::string& json_text) {
  try {
    return config_from_json_obj(nlohmann::json::parse(json_text));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config parse: ") + e.what());
  }
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open for reading: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_run_config(buf.str());
}

CompareConfig parse_compare_config(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config parse: ") + e.what());
  }
  CompareConfig cc;
  cc.base = parse_run_config(json_text);
  if (!j.contains("algorithms") || !j.at("algorithms").is_array() ||
      j.at("algorithms").empty())
    throw ConfigError("compare config needs a nonempty \"algorithms\" array");
  for (const auto& name : j.at("algorithms"))
    cc.algorithms.push_back(algorithm_from_name(name.get<std::string>()));
  return cc;
}

CompareConfig load_compare_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open for reading: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_compare_config(buf.str());
}

}  // namespace delta
