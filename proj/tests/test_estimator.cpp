#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "delta/errors.hpp"
#include "delta/estimator.hpp"
#include "delta/rng.hpp"
#include "test_util.hpp"

using namespace delta;

namespace {

const MlpArch kArch{2, 8};

Eigen::VectorXd vec1(double v) {
  Eigen::VectorXd out(1);
  out(0) = v;
  return out;
}

}  // namespace

TEST_CASE("parameter count matches the layer layout") {
  CHECK(kArch.param_count() == 8 * 2 + 8 + 8 * 8 + 8 + 8 + 1);
  CHECK(MlpArch{2, 300}.param_count() == 300 * 2 + 300 + 300 * 300 + 300 + 300 + 1);
}

TEST_CASE("xavier initialization") {
  const Eigen::VectorXd theta = xavier_init(kArch, 42);
  const int h = kArch.hidden_width, in = kArch.input_dim;

  // Biases stay zero in all three slots.
  CHECK(theta.segment(h * in, h).isZero(0.0));
  CHECK(theta.segment(h * in + h + h * h, h).isZero(0.0));
  CHECK(theta(theta.size() - 1) == 0.0);

  const double bound1 = std::sqrt(6.0 / (in + h));
  for (int i = 0; i < h * in; ++i) CHECK(std::abs(theta(i)) <= bound1);
  const double bound3 = std::sqrt(6.0 / (h + 1));
  for (int i = 0; i < h; ++i)
    CHECK(std::abs(theta(h * in + h + h * h + h + i)) <= bound3);

  CHECK(theta == xavier_init(kArch, 42));
  CHECK(theta != xavier_init(kArch, 43));
}

TEST_CASE("softplus activation") {
  CHECK(softplus(0.0) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(std::abs(softplus(50.0) - 50.0) <= 1e-12);
  CHECK(softplus(-800.0) == 0.0);  // underflows cleanly
  CHECK(logistic(0.0) == 0.5);
}

TEST_CASE("forward pass") {
  const Mlp mlp(kArch);
  SUBCASE("zero parameters yield zero output and zero input gradients") {
    const Eigen::VectorXd theta = Eigen::VectorXd::Zero(kArch.param_count());
    CHECK(mlp.forward(theta, vec1(1.3), vec1(-2.1)) == 0.0);
    const auto ig = mlp.input_grads(theta, vec1(1.3), vec1(-2.1));
    CHECK(ig.wrt_x(0) == 0.0);
    CHECK(ig.wrt_s(0) == 0.0);
  }
  SUBCASE("non-finite parameters are rejected") {
    Eigen::VectorXd theta = xavier_init(kArch, 1);
    theta(3) = std::nan("");
    CHECK_THROWS_AS(mlp.forward(theta, vec1(0.0), vec1(0.0)), EvaluationError);
  }
  SUBCASE("dimension mismatches are rejected") {
    const Eigen::VectorXd theta = xavier_init(kArch, 1);
    CHECK_THROWS_AS(mlp.forward(theta.head(10), vec1(0.0), vec1(0.0)), EvaluationError);
    Eigen::VectorXd too_wide(2);
    too_wide << 0.0, 0.0;
    CHECK_THROWS_AS(mlp.forward(theta, too_wide, vec1(0.0)), EvaluationError);
  }
}

TEST_CASE("input gradients match central finite differences") {
  const Mlp mlp(kArch);
  RngStream rng(7);
  for (int t = 0; t < 50; ++t) {
    const Eigen::VectorXd theta = xavier_init(kArch, 1000 + t);
    const double x = 2.0 * rng.gaussian(), s = 2.0 * rng.gaussian();
    const auto ig = mlp.input_grads(theta, vec1(x), vec1(s));
    auto fx = [&](double v) { return mlp.forward(theta, vec1(v), vec1(s)); };
    auto fs = [&](double v) { return mlp.forward(theta, vec1(x), vec1(v)); };
    CHECK(close_rel(ig.wrt_x(0), central_diff(fx, x, 1e-5), 1e-6));
    CHECK(close_rel(ig.wrt_s(0), central_diff(fs, s, 1e-5), 1e-6));
  }
}

TEST_CASE("input gradients are continuous at fine scales") {
  const Mlp mlp(kArch);
  RngStream rng(21);
  for (int t = 0; t < 20; ++t) {
    const Eigen::VectorXd theta = xavier_init(kArch, 300 + t);
    const double x = rng.gaussian(), s = rng.gaussian();
    const auto a = mlp.input_grads(theta, vec1(x), vec1(s));
    const auto b = mlp.input_grads(theta, vec1(x + 1e-9), vec1(s - 1e-9));
    CHECK(std::abs(a.wrt_x(0) - b.wrt_x(0)) <= 1e-6);
    CHECK(std::abs(a.wrt_s(0) - b.wrt_s(0)) <= 1e-6);
  }
}

TEST_CASE("gradients have bounded differences on a sampled box") {
  const Mlp mlp(kArch);
  const Eigen::VectorXd theta = xavier_init(kArch, 5);
  RngStream rng(9);
  for (int t = 0; t < 30; ++t) {
    const double x = rng.uniform(-3.0, 3.0), s = rng.uniform(-3.0, 3.0);
    const double dx = rng.uniform(-0.1, 0.1), ds = rng.uniform(-0.1, 0.1);
    const auto a = mlp.input_grads(theta, vec1(x), vec1(s));
    const auto b = mlp.input_grads(theta, vec1(x + dx), vec1(s + ds));
    const double dist = std::hypot(dx, ds);
    const double diff =
        std::hypot(a.wrt_x(0) - b.wrt_x(0), a.wrt_s(0) - b.wrt_s(0));
    CHECK(diff <= 100.0 * dist);
  }
}

TEST_CASE("loss gradient") {
  const Mlp mlp(kArch);
  const Eigen::VectorXd theta = xavier_init(kArch, 77);
  const Eigen::VectorXd ux = vec1(0.4), us = vec1(-1.1);

  SUBCASE("perfect fit without regularizer gives zero loss and gradient") {
    const double fit = mlp.forward(theta, ux, us);
    const auto r = mlp.loss_grad(theta, LossConfig{0.0}, ux, us, fit);
    CHECK(r.loss == 0.0);
    CHECK(r.grad.isZero(0.0));
  }
  SUBCASE("regularizer-only case reduces to 2 * weight * theta") {
    const double fit = mlp.forward(theta, ux, us);
    const LossConfig cfg{0.37};
    const auto r = mlp.loss_grad(theta, cfg, ux, us, fit);
    CHECK((r.grad - 2.0 * cfg.regularizer_weight * theta).norm() == 0.0);
    CHECK(r.loss == doctest::Approx(cfg.regularizer_weight * theta.squaredNorm()));
  }
  SUBCASE("matches finite differences in random coordinates") {
    const LossConfig cfg{1e-3};
    const double y_obs = 2.5;
    const auto r = mlp.loss_grad(theta, cfg, ux, us, y_obs);
    RngStream rng(13);
    for (int t = 0; t < 20; ++t) {
      const int coord = static_cast<int>(rng.next_u64() % theta.size());
      auto f = [&](double v) {
        Eigen::VectorXd th = theta;
        th(coord) = v;
        return mlp.loss_grad(th, cfg, ux, us, y_obs).loss;
      };
      CHECK(close_rel(r.grad(coord), central_diff(f, theta(coord), 1e-5), 1e-5));
    }
  }
  SUBCASE("loss value spot check") {
    const double fit = mlp.forward(theta, ux, us);
    const LossConfig cfg{1e-3};
    const auto r = mlp.loss_grad(theta, cfg, ux, us, fit + 3.0);
    CHECK(r.loss == doctest::Approx(4.5 + cfg.regularizer_weight * theta.squaredNorm())
                        .epsilon(1e-12));
  }
}

TEST_CASE("checkpoint round trip") {
  const Eigen::VectorXd theta = xavier_init(kArch, 99);
  const auto path = std::filesystem::temp_directory_path() / "deltasim_ckpt_test.bin";
  save_checkpoint(path.string(), kArch, 99, theta);
  const Checkpoint ck = load_checkpoint(path.string());
  CHECK(ck.arch.input_dim == kArch.input_dim);
  CHECK(ck.arch.hidden_width == kArch.hidden_width);
  CHECK(ck.seed == 99);
  CHECK(ck.params == theta);
  std::filesystem::remove(path);
}
