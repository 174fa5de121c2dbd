#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include <Eigen/Dense>

namespace psf::ad {

class Tape;

// Handle to a node on a Tape. Vectors are stored as n x 1 matrices.
struct Var {
  std::size_t id = static_cast<std::size_t>(-1);
};

// Propagates the node's upstream gradient into its parents.
using Backward = std::function<void(Tape&, const Eigen::MatrixXd& upstream)>;

// Reverse-mode automatic differentiation over dense matrices.
//
// Nodes are appended in evaluation order, so a single reverse sweep visits
// every node after all of its consumers. Gradients are allocated lazily and
// only for nodes that transitively depend on a variable.
class Tape {
 public:
  Var constant(Eigen::MatrixXd value);
  Var variable(Eigen::MatrixXd value);
  Var push(Eigen::MatrixXd value, bool needs_grad, Backward backward);

  const Eigen::MatrixXd& value(Var v) const { return nodes_[v.id].value; }
  double scalar(Var v) const;
  bool needs_grad(Var v) const { return nodes_[v.id].needs_grad; }

  // Gradient of the last backward() root with respect to v. Zero-sized when v
  // received no gradient.
  const Eigen::MatrixXd& grad(Var v) const { return nodes_[v.id].grad; }

  // Adds `contribution` into the gradient of v if v is differentiable.
  void accumulate(Var v, const Eigen::MatrixXd& contribution);

  // Seeds d root / d root = 1 and sweeps. root must be 1 x 1.
  void backward(Var root);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Eigen::MatrixXd value;
    Eigen::MatrixXd grad;
    bool needs_grad = false;
    Backward backward;
  };
  std::vector<Node> nodes_;
};

// Elementwise and structural operations. Shapes must agree exactly; no
// implicit broadcasting.
Var add(Tape& t, Var a, Var b);
Var sub(Tape& t, Var a, Var b);
Var mul(Tape& t, Var a, Var b);  // elementwise
Var scale(Tape& t, Var a, double s);
Var square(Tape& t, Var a);
Var sqrt(Tape& t, Var a);
Var relu(Tape& t, Var a);
Var softplus(Tape& t, Var a);
Var sum(Tape& t, Var a);                        // -> 1 x 1
Var matmul(Tape& t, Var a, Var b);              // a * b
Var affine(Tape& t, Var weight, Var bias, Var x);  // weight * x + bias, x a column
Var concat_rows(Tape& t, const std::vector<Var>& parts);  // stack columns vertically

}  // namespace psf::ad
