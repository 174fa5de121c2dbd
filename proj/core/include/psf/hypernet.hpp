#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

namespace psf {

// y = weight * x + bias
struct Affine {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;    // out

  Affine() = default;
  Affine(Eigen::Index in, Eigen::Index out)
      : weight(Eigen::MatrixXd::Zero(out, in)), bias(Eigen::VectorXd::Zero(out)) {}

  Eigen::Index in() const { return weight.cols(); }
  Eigen::Index out() const { return weight.rows(); }
  Eigen::VectorXd apply(const Eigen::VectorXd& x) const { return weight * x + bias; }
};

struct HyperDims {
  int h = 0;                // latent dimension
  int e = 0;                // token embedding width
  int c = 0;                // maximum class count across tasks
  std::vector<int> hidden;  // widths of the shared ReLU layers

  // Parameter count of the generated affine head.
  int d() const { return e * c + c; }
  bool operator==(const HyperDims&) const = default;
};

// The widths used for the full-scale configuration: five shared layers
// (400 then 768s), plus the untied final layers make six.
std::vector<int> default_hidden_widths();

// Classifier head generated for one task-language cell.
struct HeadParams {
  Eigen::MatrixXd weight;  // e x c
  Eigen::VectorXd bias;    // c
};

// Mean and diagonal variance of the distribution over flattened head params.
struct ThetaDist {
  Eigen::VectorXd mean;
  Eigen::VectorXd var;
};

// Parameter generator. The shared ReLU stack exists once and feeds both the
// mean head (linear output) and the variance head (softplus output).
class HyperNet {
 public:
  HyperNet() = default;
  // All weights and biases zero.
  explicit HyperNet(HyperDims dims);

  const HyperDims& dims() const { return dims_; }

  std::vector<Affine>& shared() { return shared_; }
  const std::vector<Affine>& shared() const { return shared_; }
  Affine& mean_head() { return mean_head_; }
  const Affine& mean_head() const { return mean_head_; }
  Affine& var_head() { return var_head_; }
  const Affine& var_head() const { return var_head_; }

  // Output of the shared stack for a combined input of length 4h.
  Eigen::VectorXd features(const Eigen::VectorXd& combined) const;

 private:
  HyperDims dims_;
  std::vector<Affine> shared_;
  Affine mean_head_;
  Affine var_head_;
};

// Hidden layers: uniform fan-in (Kaiming) scaling, zero bias. Heads: uniform
// with variance 1/fan_in; variance-head bias softplus^-1(1e-3) so early
// samples of theta are nearly deterministic.
HyperNet init_hypernet(const HyperDims& dims, std::uint64_t seed);

// t ++ l ++ (t - l) ++ (t .* l)
Eigen::VectorXd combine(const Eigen::VectorXd& t, const Eigen::VectorXd& l);

ThetaDist forward(const HyperNet& net, const Eigen::VectorXd& t, const Eigen::VectorXd& l);

// Mean head only; what plug-in prediction uses.
Eigen::VectorXd forward_mean(const HyperNet& net, const Eigen::VectorXd& t, const Eigen::VectorXd& l);

// mean + sqrt(var) .* noise
Eigen::VectorXd sample_theta(const Eigen::VectorXd& mean, const Eigen::VectorXd& var,
                             const Eigen::VectorXd& noise);

// First e*c entries fill the weight row-major (row = embedding index,
// column = class); the last c entries are the bias.
HeadParams reshape_theta(const Eigen::VectorXd& theta, int e, int c);
Eigen::VectorXd flatten(const HeadParams& head);

}  // namespace psf
