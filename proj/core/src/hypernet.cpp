#include "psf/hypernet.hpp"

#include <cmath>

#include "psf/error.hpp"
#include "psf/gauss.hpp"
#include "psf/rng.hpp"

namespace psf {

std::vector<int> default_hidden_widths() { return {400, 768, 768, 768, 768}; }

HyperNet::HyperNet(HyperDims dims) : dims_(std::move(dims)) {
  if (dims_.h < 1 || dims_.e < 1 || dims_.c < 1) throw ConfigError("hypernet: h, e, c must be >= 1");
  Eigen::Index in = 4 * dims_.h;
  for (int width : dims_.hidden) {
    if (width < 1) throw ConfigError("hypernet: hidden widths must be >= 1");
    shared_.emplace_back(in, width);
    in = width;
  }
  mean_head_ = Affine(in, dims_.d());
  var_head_ = Affine(in, dims_.d());
}

Eigen::VectorXd HyperNet::features(const Eigen::VectorXd& combined) const {
  if (combined.size() != 4 * dims_.h) throw ConfigError("hypernet: input length != 4h");
  Eigen::VectorXd x = combined;
  for (const auto& layer : shared_) x = layer.apply(x).cwiseMax(0.0);
  return x;
}

HyperNet init_hypernet(const HyperDims& dims, std::uint64_t seed) {
  HyperNet net(dims);
  Engine rng = make_engine(seed, "hypernet/init");
  auto fill_uniform = [&](Eigen::MatrixXd& w, double bound) {
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = uniform(rng, -bound, bound);
  };
  for (auto& layer : net.shared()) {
    fill_uniform(layer.weight, std::sqrt(6.0 / static_cast<double>(layer.in())));
  }
  const double head_bound = std::sqrt(3.0 / static_cast<double>(net.mean_head().in()));
  fill_uniform(net.mean_head().weight, head_bound);
  fill_uniform(net.var_head().weight, head_bound);
  net.var_head().bias.setConstant(softplus_inverse(1e-3));
  return net;
}

Eigen::VectorXd combine(const Eigen::VectorXd& t, const Eigen::VectorXd& l) {
  if (t.size() != l.size()) throw ConfigError("combine: task and language latents differ in length");
  const Eigen::Index h = t.size();
  Eigen::VectorXd out(4 * h);
  out.segment(0, h) = t;
  out.segment(h, h) = l;
  out.segment(2 * h, h) = t - l;
  out.segment(3 * h, h) = t.cwiseProduct(l);
  return out;
}

ThetaDist forward(const HyperNet& net, const Eigen::VectorXd& t, const Eigen::VectorXd& l) {
  const Eigen::VectorXd z = net.features(combine(t, l));
  return {net.mean_head().apply(z), softplus(net.var_head().apply(z))};
}

Eigen::VectorXd forward_mean(const HyperNet& net, const Eigen::VectorXd& t, const Eigen::VectorXd& l) {
  return net.mean_head().apply(net.features(combine(t, l)));
}

Eigen::VectorXd sample_theta(const Eigen::VectorXd& mean, const Eigen::VectorXd& var,
                             const Eigen::VectorXd& noise) {
  if (mean.size() != var.size() || mean.size() != noise.size()) {
    throw ConfigError("sample_theta: length mismatch");
  }
  return mean + var.cwiseSqrt().cwiseProduct(noise);
}

HeadParams reshape_theta(const Eigen::VectorXd& theta, int e, int c) {
  if (e < 1 || c < 1 || theta.size() != static_cast<Eigen::Index>(e) * c + c) {
    throw ConfigError("reshape_theta: theta length " + std::to_string(theta.size()) +
                      " != e*c + c");
  }
  HeadParams head;
  head.weight.resize(e, c);
  for (int r = 0; r < e; ++r) {
    for (int k = 0; k < c; ++k) head.weight(r, k) = theta[static_cast<Eigen::Index>(r) * c + k];
  }
  head.bias = theta.tail(c);
  return head;
}

Eigen::VectorXd flatten(const HeadParams& head) {
  const Eigen::Index e = head.weight.rows();
  const Eigen::Index c = head.weight.cols();
  Eigen::VectorXd theta(e * c + c);
  for (Eigen::Index r = 0; r < e; ++r) {
    for (Eigen::Index k = 0; k < c; ++k) theta[r * c + k] = head.weight(r, k);
  }
  theta.tail(c) = head.bias;
  return theta;
}

}  // namespace psf
