#pragma once

#include <Eigen/Dense>

namespace psf {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate() const;
};

struct AdamState {
  double m = 0.0;
  double v = 0.0;
  long t = 0;
};

// One Adam step on a scalar: advances state.t, updates both moments and
// returns the bias-corrected update applied to `param`.
double adam_update(double param, double grad, AdamState& state, const AdamConfig& config);

// Adam over a flat parameter vector with a shared step counter.
class Adam {
 public:
  Adam() = default;
  Adam(Eigen::Index size, AdamConfig config);

  // Coordinates where mask == 0 are left untouched (moments included).
  void step(Eigen::VectorXd& params, const Eigen::VectorXd& grad, const Eigen::VectorXd* mask = nullptr);

  const AdamConfig& config() const { return config_; }
  void set_config(const AdamConfig& config) { config_ = config; }
  long steps() const { return t_; }
  const Eigen::VectorXd& first_moment() const { return m_; }
  const Eigen::VectorXd& second_moment() const { return v_; }
  void restore(Eigen::VectorXd m, Eigen::VectorXd v, long t);

 private:
  AdamConfig config_;
  Eigen::VectorXd m_;
  Eigen::VectorXd v_;
  long t_ = 0;
};

}  // namespace psf
