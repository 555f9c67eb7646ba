#include <cmath>
#include <functional>
#include <ostream>

#include "delta/harness.hpp"
#include "delta/rng.hpp"

namespace delta {

namespace {

// Central finite difference of a scalar function.
double central_diff(const std::function<double(double)>& f, double at, double step) {
  return (f(at + step) - f(at - step)) / (2.0 * step);
}

bool close_rel(double got, double want, double tol) {
  return std::abs(got - want) <= tol * (1.0 + std::max(std::abs(got), std::abs(want)));
}

}  // namespace

int selftest(std::ostream& out) {
  int failures = 0;
  auto check = [&](const char* name, bool ok) {
    out << (ok ? "[ok]   " : "[FAIL] ") << name << '\n';
    if (!ok) ++failures;
  };

  // Doubly stochastic weights and contraction on random graphs.
  {
    bool ok = true;
    for (std::uint64_t seed = 0; seed < 5 && ok; ++seed) {
      const auto topo = generate_erdos_renyi(12, 0.4, seed);
      const auto w = metropolis_weights(topo);  // validates stochasticity
      const double rho = consensus_contraction_factor(w);
      ok = ok && rho < 1.0;
      RngStream rng(seed + 99);
      for (int t = 0; t < 20 && ok; ++t) {
        Eigen::VectorXd v(12);
        for (int i = 0; i < 12; ++i) v(i) = rng.gaussian();
        v.array() -= v.mean();
        ok = (w.weights * v).norm() <= rho * v.norm() + 1e-12;
      }
    }
    check("graph: doubly stochastic weights contract disagreement", ok);
  }

  // Deterministic generation.
  {
    const auto a = generate_erdos_renyi(15, 0.3, 7);
    const auto b = generate_erdos_renyi(15, 0.3, 7);
    check("graph: generation deterministic in seed", a.edges == b.edges);
  }

  // Analytic problem gradients against finite differences.
  {
    const auto p = generate_problem(6, 1);
    RngStream rng(5);
    bool ok = true;
    for (int t = 0; t < 10 && ok; ++t) {
      const int i = static_cast<int>(rng.next_u64() % 6);
      const double x = 4.0 * rng.gaussian(), s = 4.0 * rng.gaussian();
      const auto [g1, g2] = p.exact_grads(i, x, s);
      ok = close_rel(g1, central_diff([&](double v) { return p.eval_cost(i, v, s); }, x, 1e-5), 1e-6) &&
           close_rel(g2, central_diff([&](double v) { return p.eval_cost(i, x, v); }, s, 1e-5), 1e-6);
    }
    Eigen::VectorXd x(6);
    for (int i = 0; i < 6; ++i) x(i) = rng.gaussian();
    const Eigen::VectorXd g = p.global_grad(x);
    for (int i = 0; i < 6 && ok; ++i) {
      auto f = [&](double v) {
        Eigen::VectorXd xx = x;
        xx(i) = v;
        return p.global_cost(xx);
      };
      ok = close_rel(g(i), central_diff(f, x(i), 1e-5), 1e-6);
    }
    check("problem: analytic gradients match finite differences", ok);

    const auto opt = solve_optimum(p, 1e-10);
    check("problem: optimum oracle reaches first-order stationarity",
          p.global_grad(opt.x).norm() <= 1e-8);
  }

  // Estimator reverse-mode passes against finite differences.
  {
    const MlpArch arch{2, 8};
    const Mlp mlp(arch);
    RngStream rng(11);
    bool ok = true;
    for (int t = 0; t < 5 && ok; ++t) {
      Eigen::VectorXd theta = xavier_init(arch, 100 + t);
      Eigen::VectorXd xv(1), sv(1);
      xv(0) = rng.gaussian();
      sv(0) = rng.gaussian();
      const auto ig = mlp.input_grads(theta, xv, sv);
      auto fx = [&](double v) {
        Eigen::VectorXd q(1);
        q(0) = v;
        return mlp.forward(theta, q, sv);
      };
      ok = close_rel(ig.wrt_x(0), central_diff(fx, xv(0), 1e-5), 1e-6);

      const LossConfig cfg{1e-3};
      const double y_obs = 0.7;
      const auto lg = mlp.loss_grad(theta, cfg, xv, sv, y_obs);
      const int coord = static_cast<int>(rng.next_u64() % theta.size());
      auto fl = [&](double v) {
        Eigen::VectorXd th = theta;
        th(coord) = v;
        return mlp.loss_grad(th, cfg, xv, sv, y_obs).loss;
      };
      ok = ok && close_rel(lg.grad(coord), central_diff(fl, theta(coord), 1e-5), 1e-5);
    }
    check("estimator: reverse-mode gradients match finite differences", ok);
  }

  // Dither waveform and exact periodicity.
  {
    const DitherSchedule d{4, 5.0, {}};
    const auto [dx0, ds0] = d.at(0, 0);
    const auto far = d.at(0, 4000000007LL);
    const auto near = d.at(0, 4000000007LL % 4);
    check("dither: waveform at k=0 and bit-exact periodicity",
          dx0 == 5.0 && ds0 == 0.0 && far == near);
  }

  // Conservation, mean tracking and the sample budget on a short run.
  {
    RunConfig cfg;
    cfg.algorithm = Algorithm::kDelta;
    cfg.n_agents = 5;
    cfg.iterations = 300;
    cfg.stride = 25;
    cfg.estimator.hidden_width = 8;
    cfg.gamma = 1e-4;
    bool ok = true;
    const RunTrace trace = run_experiment(cfg, [&](const NetworkState& net,
                                                   const AggProblem& prob,
                                                   const MetricRecord& rec) {
      ok = ok && rec.s_residual <= 1e-9 && rec.y_residual <= 1e-9;
      Eigen::VectorXd x(cfg.n_agents);
      double mean_sig_hat = 0.0;
      for (int i = 0; i < cfg.n_agents; ++i) {
        x(i) = net.agents[i].x;
        mean_sig_hat += net.agents[i].s_tracker + prob.phi(i, net.agents[i].x);
      }
      mean_sig_hat /= cfg.n_agents;
      const double sigma = prob.aggregate(x);
      ok = ok && std::abs(mean_sig_hat - sigma) <= 1e-9 * (1.0 + std::abs(sigma));
    });
    for (std::int64_t c : trace.samples_per_agent) ok = ok && c == cfg.iterations;
    check("algorithms: conservation, mean tracking and sample budget", ok);
  }

  // Byte-identical traces for identical configs.
  {
    RunConfig cfg;
    cfg.algorithm = Algorithm::kZo;
    cfg.n_agents = 6;
    cfg.iterations = 200;
    cfg.stride = 20;
    cfg.gamma = 1e-5;
    const std::string a = trace_to_csv(run_experiment(cfg));
    const std::string b = trace_to_csv(run_experiment(cfg));
    check("harness: identical configs produce byte-identical traces", a == b);
  }

  out << (failures == 0 ? "selftest passed\n" : "selftest FAILED\n");
  return failures;
}

}  // namespace delta
