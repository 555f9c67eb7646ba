#include "delta/estimator.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "delta/errors.hpp"
#include "delta/rng.hpp"

namespace delta {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<const RowMajor>;
using MapVec = Eigen::Map<const Eigen::VectorXd>;

// Read-only views into the flat parameter vector.
struct Views {
  MapMat w1;
  MapVec b1;
  MapMat w2;
  MapVec b2;
  MapVec w3;
  double b3;
};

Views view(const MlpArch& a, const Eigen::VectorXd& theta) {
  const int h = a.hidden_width;
  const int in = a.input_dim;
  const double* p = theta.data();
  return Views{MapMat(p, h, in),
               MapVec(p + h * in, h),
               MapMat(p + h * in + h, h, h),
               MapVec(p + h * in + h + h * h, h),
               MapVec(p + h * in + h + h * h + h, h),
               p[h * in + h + h * h + h + h]};
}

void check_theta(const MlpArch& a, const Eigen::VectorXd& theta) {
  if (theta.size() != a.param_count())
    throw EvaluationError("parameter vector length does not match architecture");
  if (!theta.allFinite()) throw EvaluationError("non-finite parameters");
}

Eigen::VectorXd stack_inputs(const MlpArch& a, const Eigen::VectorXd& x,
                             const Eigen::VectorXd& s) {
  if (x.size() + s.size() != a.input_dim)
    throw EvaluationError("input dimensions do not match architecture");
  Eigen::VectorXd u(a.input_dim);
  u << x, s;
  return u;
}

struct ForwardPass {
  Eigen::VectorXd u, z1, a1, z2, a2;
  double out = 0.0;
};

ForwardPass run_forward(const Views& v, Eigen::VectorXd u) {
  ForwardPass f;
  f.u = std::move(u);
  f.z1 = v.w1 * f.u + v.b1;
  f.a1 = f.z1.unaryExpr([](double z) { return softplus(z); });
  f.z2 = v.w2 * f.a1 + v.b2;
  f.a2 = f.z2.unaryExpr([](double z) { return softplus(z); });
  f.out = v.w3.dot(f.a2) + v.b3;
  return f;
}

}  // namespace

Eigen::VectorXd xavier_init(const MlpArch& arch, std::uint64_t seed) {
  const int h = arch.hidden_width;
  const int in = arch.input_dim;
  RngStream rng(seed);
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(arch.param_count());

  auto fill = [&rng](double* dst, int count, int fan_in, int fan_out) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (int i = 0; i < count; ++i) dst[i] = rng.uniform(-bound, bound);
  };
  double* p = theta.data();
  fill(p, h * in, in, h);                          // W1; b1 stays zero
  fill(p + h * in + h, h * h, h, h);               // W2; b2 stays zero
  fill(p + h * in + h + h * h + h, h, h, 1);       // w3; b3 stays zero
  return theta;
}

Mlp::Mlp(MlpArch arch) : arch_(arch) {
  if (arch_.input_dim < 1 || arch_.hidden_width < 1)
    throw ConfigError("MLP architecture dimensions must be positive");
}

double Mlp::forward(const Eigen::VectorXd& theta, const Eigen::VectorXd& x,
                    const Eigen::VectorXd& s) const {
  check_theta(arch_, theta);
  const Views v = view(arch_, theta);
  return run_forward(v, stack_inputs(arch_, x, s)).out;
}

Mlp::InputGrads Mlp::input_grads(const Eigen::VectorXd& theta,
                                 const Eigen::VectorXd& x,
                                 const Eigen::VectorXd& s) const {
  check_theta(arch_, theta);
  const Views v = view(arch_, theta);
  const ForwardPass f = run_forward(v, stack_inputs(arch_, x, s));

  Eigen::VectorXd dz2 =
      f.z2.unaryExpr([](double z) { return logistic(z); }).cwiseProduct(v.w3);
  Eigen::VectorXd dz1 = f.z1.unaryExpr([](double z) { return logistic(z); })
                            .cwiseProduct(v.w2.transpose() * dz2);
  Eigen::VectorXd du = v.w1.transpose() * dz1;
  return {du.head(x.size()), du.tail(s.size())};
}

Mlp::LossResult Mlp::loss_grad(const Eigen::VectorXd& theta, const LossConfig& cfg,
                               const Eigen::VectorXd& u_x, const Eigen::VectorXd& u_s,
                               double y_obs) const {
  check_theta(arch_, theta);
  if (!std::isfinite(y_obs)) throw EvaluationError("non-finite observation");
  const Views v = view(arch_, theta);
  const ForwardPass f = run_forward(v, stack_inputs(arch_, u_x, u_s));

  const int h = arch_.hidden_width;
  const int in = arch_.input_dim;
  const double residual = f.out - y_obs;  // d loss / d out

  LossResult r;
  r.loss = 0.5 * residual * residual + cfg.regularizer_weight * theta.squaredNorm();
  r.grad = 2.0 * cfg.regularizer_weight * theta;

  Eigen::VectorXd dz2 = residual *
      f.z2.unaryExpr([](double z) { return logistic(z); }).cwiseProduct(v.w3);
  Eigen::VectorXd dz1 = f.z1.unaryExpr([](double z) { return logistic(z); })
                            .cwiseProduct(v.w2.transpose() * dz2);

  double* g = r.grad.data();
  Eigen::Map<RowMajor>(g, h, in) += dz1 * f.u.transpose();
  Eigen::Map<Eigen::VectorXd>(g + h * in, h) += dz1;
  Eigen::Map<RowMajor>(g + h * in + h, h, h) += dz2 * f.a1.transpose();
  Eigen::Map<Eigen::VectorXd>(g + h * in + h + h * h, h) += dz2;
  Eigen::Map<Eigen::VectorXd>(g + h * in + h + h * h + h, h) += residual * f.a2;
  g[h * in + h + h * h + h + h] += residual;
  return r;
}

void save_checkpoint(const std::string& path, const MlpArch& arch,
                     std::uint64_t seed, const Eigen::VectorXd& theta) {
  static_assert(std::endian::native == std::endian::little,
                "checkpoint format assumes little-endian doubles");
  if (theta.size() != arch.param_count())
    throw IoError("checkpoint: parameter count does not match architecture");
  nlohmann::json header = {{"input_dim", arch.input_dim},
                           {"hidden_width", arch.hidden_width},
                           {"seed", seed},
                           {"count", theta.size()}};
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << header.dump() << '\n';
  out.write(reinterpret_cast<const char*>(theta.data()),
            static_cast<std::streamsize>(sizeof(double) * theta.size()));
  if (!out) throw IoError("write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path);
  std::string line;
  if (!std::getline(in, line)) throw IoError("checkpoint missing header: " + path);
  nlohmann::json header = nlohmann::json::parse(line);

  Checkpoint ck;
  ck.arch.input_dim = header.at("input_dim").get<int>();
  ck.arch.hidden_width = header.at("hidden_width").get<int>();
  ck.seed = header.at("seed").get<std::uint64_t>();
  const auto count = header.at("count").get<Eigen::Index>();
  if (count != ck.arch.param_count())
    throw IoError("checkpoint header count does not match architecture");
  ck.params.resize(count);
  in.read(reinterpret_cast<char*>(ck.params.data()),
          static_cast<std::streamsize>(sizeof(double) * count));
  if (!in) throw IoError("checkpoint truncated: " + path);
  return ck;
}

}  // namespace delta
