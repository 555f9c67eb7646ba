#pragma once

#include <cmath>
#include <cstdint>
#include <string>

#include <Eigen/Dense>

namespace delta {

// Two hidden layers of equal width with softplus activations, scalar output.
// Parameters live in one flat vector laid out as
//   [W1 (h x in, row-major) | b1 | W2 (h x h, row-major) | b2 | w3 | b3].
struct MlpArch {
  int input_dim = 2;  // local decision block + aggregate block
  int hidden_width = 32;

  int param_count() const {
    const int h = hidden_width;
    return h * input_dim + h + h * h + h + h + 1;
  }
};

inline constexpr double kSoftplusLinearCutoff = 30.0;

inline double softplus(double z) {
  return z > kSoftplusLinearCutoff ? z : std::log1p(std::exp(z));
}

// Derivative of softplus.
inline double logistic(double z) {
  return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

// Xavier-uniform weights (bound sqrt(6 / (fan_in + fan_out))), zero biases.
Eigen::VectorXd xavier_init(const MlpArch& arch, std::uint64_t seed);

struct LossConfig {
  double regularizer_weight = 1e-3;  // coefficient of |theta|^2
};

// Stateless evaluator for one architecture. All derivatives are exact
// reverse-mode passes written out by hand.
class Mlp {
 public:
  explicit Mlp(MlpArch arch);

  const MlpArch& arch() const { return arch_; }
  int param_count() const { return arch_.param_count(); }

  // Surrogate value at inputs (x, s) stacked to the input layer.
  double forward(const Eigen::VectorXd& theta, const Eigen::VectorXd& x,
                 const Eigen::VectorXd& s) const;

  struct InputGrads {
    Eigen::VectorXd wrt_x;
    Eigen::VectorXd wrt_s;
  };
  InputGrads input_grads(const Eigen::VectorXd& theta, const Eigen::VectorXd& x,
                         const Eigen::VectorXd& s) const;

  struct LossResult {
    double loss = 0.0;
    Eigen::VectorXd grad;  // with respect to the flat parameter vector
  };
  // Regularized squared loss on one observation:
  //   1/2 (y_obs - value(u_x, u_s))^2 + regularizer_weight * |theta|^2.
  LossResult loss_grad(const Eigen::VectorXd& theta, const LossConfig& cfg,
                       const Eigen::VectorXd& u_x, const Eigen::VectorXd& u_s,
                       double y_obs) const;

 private:
  MlpArch arch_;
};

// Checkpoint format: one-line JSON header (arch + seed + count), then the
// parameters as little-endian 64-bit floats.
void save_checkpoint(const std::string& path, const MlpArch& arch,
                     std::uint64_t seed, const Eigen::VectorXd& theta);

struct Checkpoint {
  MlpArch arch;
  std::uint64_t seed = 0;
  Eigen::VectorXd params;
};
Checkpoint load_checkpoint(const std::string& path);

}  // namespace delta
