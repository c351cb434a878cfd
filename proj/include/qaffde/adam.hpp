#ifndef QAFFDE_ADAM_HPP
#define QAFFDE_ADAM_HPP

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <stdexcept>

namespace qaffde {

/// Adam hyperparameters with polynomial learning-rate decay
/// lr(t) = final + (initial - final) * (1 - t/steps)^decay_power.
struct OptimizerConfig {
  double initial_lr = 1e-2;
  double final_lr = 1e-5;
  double decay_power = 1.0;
  long steps = 1000;
  int batch_size = 64;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(final_lr > 0.0) || final_lr > initial_lr)
      throw std::invalid_argument("OptimizerConfig: need 0 < final_lr <= initial_lr");
    if (batch_size < 1) throw std::invalid_argument("OptimizerConfig: batch_size must be >= 1");
    if (!(beta1 > 0.0 && beta1 < 1.0 && beta2 > 0.0 && beta2 < 1.0))
      throw std::invalid_argument("OptimizerConfig: betas must lie in (0,1)");
    if (steps < 0) throw std::invalid_argument("OptimizerConfig: steps must be >= 0");
  }

  double lr_at(long step) const {
    if (steps == 0) return final_lr;
    const double frac = 1.0 - static_cast<double>(step) / static_cast<double>(steps);
    return final_lr + (initial_lr - final_lr) * std::pow(frac, decay_power);
  }
};

/// Adam state over a flat parameter vector.
class Adam {
 public:
  Adam(Eigen::Index n, const OptimizerConfig& cfg)
      : cfg_(cfg), m_(Eigen::VectorXd::Zero(n)), v_(Eigen::VectorXd::Zero(n)) {}

  // step is 0-based; the bias correction uses t = step + 1.
  void update(Eigen::Ref<Eigen::VectorXd> params, const Eigen::Ref<const Eigen::VectorXd>& grad,
              long step) {
    const double t = static_cast<double>(step + 1);
    m_ = cfg_.beta1 * m_ + (1.0 - cfg_.beta1) * grad;
    v_ = cfg_.beta2 * v_ + (1.0 - cfg_.beta2) * grad.array().square().matrix();
    const double m_corr = 1.0 - std::pow(cfg_.beta1, t);
    const double v_corr = 1.0 - std::pow(cfg_.beta2, t);
    const double lr = cfg_.lr_at(step);
    params.array() -=
        lr * (m_.array() / m_corr) / ((v_.array() / v_corr).sqrt() + cfg_.epsilon);
  }

 private:
  OptimizerConfig cfg_;
  Eigen::VectorXd m_;
  Eigen::VectorXd v_;
};

}  // namespace qaffde

#endif  // QAFFDE_ADAM_HPP
