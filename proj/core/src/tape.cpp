#include "psf/tape.hpp"

#include <cmath>
#include <stdexcept>

#include "psf/error.hpp"
#include "psf/gauss.hpp"

namespace psf::ad {

Var Tape::constant(Eigen::MatrixXd value) { return push(std::move(value), false, nullptr); }

Var Tape::variable(Eigen::MatrixXd value) { return push(std::move(value), true, nullptr); }

Var Tape::push(Eigen::MatrixXd value, bool needs_grad, Backward backward) {
  nodes_.push_back(Node{std::move(value), Eigen::MatrixXd(), needs_grad, std::move(backward)});
  return Var{nodes_.size() - 1};
}

double Tape::scalar(Var v) const {
  const auto& m = nodes_[v.id].value;
  if (m.rows() != 1 || m.cols() != 1) throw ConfigError("tape: node is not a scalar");
  return m(0, 0);
}

void Tape::accumulate(Var v, const Eigen::MatrixXd& contribution) {
  Node& n = nodes_[v.id];
  if (!n.needs_grad) return;
  if (n.grad.size() == 0) {
    n.grad = contribution;
  } else {
    n.grad += contribution;
  }
}

void Tape::backward(Var root) {
  if (root.id >= nodes_.size()) throw ConfigError("tape: invalid root");
  for (auto& n : nodes_) n.grad.resize(0, 0);
  if (nodes_[root.id].value.size() != 1) throw ConfigError("tape: backward root must be scalar");
  nodes_[root.id].grad = Eigen::MatrixXd::Ones(1, 1);
  for (std::size_t i = root.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.backward || n.grad.size() == 0) continue;
    // Parents always have smaller ids, so n.grad is not written during its own
    // callback.
    n.backward(*this, n.grad);
  }
}

namespace {

void require_same_shape(const Tape& t, Var a, Var b, const char* op) {
  const auto& x = t.value(a);
  const auto& y = t.value(b);
  if (x.rows() != y.rows() || x.cols() != y.cols()) {
    throw ConfigError(std::string("tape: shape mismatch in ") + op);
  }
}

bool any_grad(const Tape& t, std::initializer_list<Var> vars) {
  for (Var v : vars) {
    if (t.needs_grad(v)) return true;
  }
  return false;
}

}  // namespace

Var add(Tape& t, Var a, Var b) {
  require_same_shape(t, a, b, "add");
  return t.push(t.value(a) + t.value(b), any_grad(t, {a, b}),
                [a, b](Tape& tp, const Eigen::MatrixXd& g) {
                  tp.accumulate(a, g);
                  tp.accumulate(b, g);
                });
}

Var sub(Tape& t, Var a, Var b) {
  require_same_shape(t, a, b, "sub");
  return t.push(t.value(a) - t.value(b), any_grad(t, {a, b}),
                [a, b](Tape& tp, const Eigen::MatrixXd& g) {
                  tp.accumulate(a, g);
                  tp.accumulate(b, -g);
                });
}

Var mul(Tape& t, Var a, Var b) {
  require_same_shape(t, a, b, "mul");
  return t.push(t.value(a).cwiseProduct(t.value(b)), any_grad(t, {a, b}),
                [a, b](Tape& tp, const Eigen::MatrixXd& g) {
                  if (tp.needs_grad(a)) tp.accumulate(a, g.cwiseProduct(tp.value(b)));
                  if (tp.needs_grad(b)) tp.accumulate(b, g.cwiseProduct(tp.value(a)));
                });
}

Var scale(Tape& t, Var a, double s) {
  return t.push(t.value(a) * s, t.needs_grad(a),
                [a, s](Tape& tp, const Eigen::MatrixXd& g) { tp.accumulate(a, g * s); });
}

Var square(Tape& t, Var a) {
  return t.push(t.value(a).cwiseProduct(t.value(a)), t.needs_grad(a),
                [a](Tape& tp, const Eigen::MatrixXd& g) {
                  tp.accumulate(a, 2.0 * g.cwiseProduct(tp.value(a)));
                });
}

Var sqrt(Tape& t, Var a) {
  Eigen::MatrixXd out = t.value(a).cwiseSqrt();
  return t.push(out, t.needs_grad(a), [a, out](Tape& tp, const Eigen::MatrixXd& g) {
    tp.accumulate(a, (0.5 * g.array() / out.array()).matrix());
  });
}

Var relu(Tape& t, Var a) {
  return t.push(t.value(a).cwiseMax(0.0), t.needs_grad(a),
                [a](Tape& tp, const Eigen::MatrixXd& g) {
                  const Eigen::MatrixXd& x = tp.value(a);
                  tp.accumulate(a, (x.array() > 0.0).select(g, 0.0).matrix());
                });
}

Var softplus(Tape& t, Var a) {
  const Eigen::MatrixXd& x = t.value(a);
  Eigen::MatrixXd out(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.size(); ++i) out.data()[i] = psf::softplus(x.data()[i]);
  return t.push(std::move(out), t.needs_grad(a), [a](Tape& tp, const Eigen::MatrixXd& g) {
    const Eigen::MatrixXd& x = tp.value(a);
    Eigen::MatrixXd d(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.size(); ++i) d.data()[i] = g.data()[i] * sigmoid(x.data()[i]);
    tp.accumulate(a, d);
  });
}

Var sum(Tape& t, Var a) {
  Eigen::MatrixXd out(1, 1);
  out(0, 0) = t.value(a).sum();
  const Eigen::Index rows = t.value(a).rows();
  const Eigen::Index cols = t.value(a).cols();
  return t.push(std::move(out), t.needs_grad(a),
                [a, rows, cols](Tape& tp, const Eigen::MatrixXd& g) {
                  tp.accumulate(a, Eigen::MatrixXd::Constant(rows, cols, g(0, 0)));
                });
}

Var matmul(Tape& t, Var a, Var b) {
  if (t.value(a).cols() != t.value(b).rows()) throw ConfigError("tape: shape mismatch in matmul");
  return t.push(t.value(a) * t.value(b), any_grad(t, {a, b}),
                [a, b](Tape& tp, const Eigen::MatrixXd& g) {
                  if (tp.needs_grad(a)) tp.accumulate(a, g * tp.value(b).transpose());
                  if (tp.needs_grad(b)) tp.accumulate(b, tp.value(a).transpose() * g);
                });
}

Var affine(Tape& t, Var weight, Var bias, Var x) {
  const auto& w = t.value(weight);
  const auto& xv = t.value(x);
  const auto& bv = t.value(bias);
  if (xv.cols() != 1 || w.cols() != xv.rows() || bv.rows() != w.rows() || bv.cols() != 1) {
    throw ConfigError("tape: shape mismatch in affine");
  }
  Eigen::MatrixXd out = w * xv;
  out += bv;
  return t.push(std::move(out), any_grad(t, {weight, bias, x}),
                [weight, bias, x](Tape& tp, const Eigen::MatrixXd& g) {
                  if (tp.needs_grad(weight)) tp.accumulate(weight, g * tp.value(x).transpose());
                  tp.accumulate(bias, g);
                  if (tp.needs_grad(x)) tp.accumulate(x, tp.value(weight).transpose() * g);
                });
}

Var concat_rows(Tape& t, const std::vector<Var>& parts) {
  Eigen::Index rows = 0;
  Eigen::Index cols = -1;
  bool grad = false;
  for (Var p : parts) {
    const auto& v = t.value(p);
    if (cols >= 0 && v.cols() != cols) throw ConfigError("tape: column mismatch in concat_rows");
    cols = v.cols();
    rows += v.rows();
    grad = grad || t.needs_grad(p);
  }
  Eigen::MatrixXd out(rows, cols < 0 ? 0 : cols);
  Eigen::Index offset = 0;
  for (Var p : parts) {
    const auto& v = t.value(p);
    out.middleRows(offset, v.rows()) = v;
    offset += v.rows();
  }
  return t.push(std::move(out), grad, [parts](Tape& tp, const Eigen::MatrixXd& g) {
    Eigen::Index off = 0;
    for (Var p : parts) {
      const Eigen::Index r = tp.value(p).rows();
      if (tp.needs_grad(p)) tp.accumulate(p, g.middleRows(off, r));
      off += r;
    }
  });
}

}  // namespace psf::ad
