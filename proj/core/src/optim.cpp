#include "psf/optim.hpp"

#include <cmath>

#include "psf/error.hpp"

namespace psf {

void AdamConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("adam: learning rate must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("adam: betas must lie in [0, 1)");
  }
  if (!(eps > 0.0)) throw ConfigError("adam: eps must be > 0");
}

namespace {

inline double adam_apply(double param, double grad, double& m, double& v, long t, const AdamConfig& c) {
  m = c.beta1 * m + (1.0 - c.beta1) * grad;
  v = c.beta2 * v + (1.0 - c.beta2) * grad * grad;
  const double m_hat = m / (1.0 - std::pow(c.beta1, static_cast<double>(t)));
  const double v_hat = v / (1.0 - std::pow(c.beta2, static_cast<double>(t)));
  return param - c.learning_rate * m_hat / (std::sqrt(v_hat) + c.eps);
}

}  // namespace

double adam_update(double param, double grad, AdamState& state, const AdamConfig& config) {
  ++state.t;
  return adam_apply(param, grad, state.m, state.v, state.t, config);
}

Adam::Adam(Eigen::Index size, AdamConfig config)
    : config_(config), m_(Eigen::VectorXd::Zero(size)), v_(Eigen::VectorXd::Zero(size)) {
  config_.validate();
}

void Adam::step(Eigen::VectorXd& params, const Eigen::VectorXd& grad, const Eigen::VectorXd* mask) {
  if (params.size() != m_.size() || grad.size() != m_.size()) throw ConfigError("adam: size mismatch");
  ++t_;
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    if (mask && (*mask)[i] == 0.0) continue;
    params[i] = adam_apply(params[i], grad[i], m_[i], v_[i], t_, config_);
  }
}

void Adam::restore(Eigen::VectorXd m, Eigen::VectorXd v, long t) {
  if (m.size() != m_.size() || v.size() != v_.size()) throw DataError("adam: restored state has wrong size");
  m_ = std::move(m);
  v_ = std::move(v);
  t_ = t;
}

}  // namespace psf
