#include "psf/elbo.hpp"

#include <cmath>

#include "psf/error.hpp"

namespace psf {

NoiseSource::NoiseSource(std::uint64_t seed)
    : epsilon_(make_engine(seed, "noise/epsilon")),
      zeta_(make_engine(seed, "noise/zeta")),
      theta_(make_engine(seed, "noise/theta")) {}

McNoise NoiseSource::draw(int h, int k, int d) {
  McNoise n;
  n.task.epsilon.resize(h);
  n.lang.epsilon.resize(h);
  n.task.zeta.resize(k);
  n.lang.zeta.resize(k);
  n.theta.resize(d);
  fill_normal(epsilon_, n.task.epsilon);
  fill_normal(epsilon_, n.lang.epsilon);
  fill_normal(zeta_, n.task.zeta);
  fill_normal(zeta_, n.lang.zeta);
  fill_normal(theta_, n.theta);
  return n;
}

StepNoise NoiseSource::draw_step(int samples, int h, int k, int d) {
  StepNoise s;
  for (int v = 0; v < samples; ++v) s.samples.push_back(draw(h, k, d));
  return s;
}

std::vector<std::string> NoiseSource::state() const {
  return {engine_state(epsilon_), engine_state(zeta_), engine_state(theta_)};
}

void NoiseSource::restore(const std::vector<std::string>& state) {
  if (state.size() != 3) throw DataError("noise source state needs 3 engines");
  restore_engine(epsilon_, state[0]);
  restore_engine(zeta_, state[1]);
  restore_engine(theta_, state[2]);
}

StepNoise zero_noise(int samples, int h, int k, int d) {
  StepNoise s;
  for (int v = 0; v < samples; ++v) {
    McNoise n;
    n.task = {Eigen::VectorXd::Zero(h), Eigen::VectorXd::Zero(k)};
    n.lang = n.task;
    n.theta = Eigen::VectorXd::Zero(d);
    s.samples.push_back(std::move(n));
  }
  return s;
}

namespace ad_ops {

namespace {

Eigen::VectorXd as_vector(const Eigen::MatrixXd& m) { return Eigen::Map<const Eigen::VectorXd>(m.data(), m.size()); }

Eigen::MatrixXd scalar_matrix(double x) {
  Eigen::MatrixXd m(1, 1);
  m(0, 0) = x;
  return m;
}

// d sqrt(softplus(rho)) / d rho
Eigen::VectorXd std_derivative(const Eigen::VectorXd& rho) {
  Eigen::VectorXd out(rho.size());
  for (Eigen::Index i = 0; i < rho.size(); ++i) {
    out[i] = sigmoid(rho[i]) / (2.0 * std::sqrt(softplus(rho[i])));
  }
  return out;
}

}  // namespace

ad::Var kl_diag(ad::Tape& t, ad::Var mean, ad::Var rho) {
  const DiagGaussian q{as_vector(t.value(mean)), as_vector(t.value(rho))};
  const bool grad = t.needs_grad(mean) || t.needs_grad(rho);
  return t.push(scalar_matrix(kl_diag_to_std(q)), grad, [mean, rho, q](ad::Tape& tp, const Eigen::MatrixXd& g) {
    const DiagKlGradient d = kl_diag_gradient(q);
    tp.accumulate(mean, g(0, 0) * d.mean);
    tp.accumulate(rho, g(0, 0) * d.rho);
  });
}

ad::Var kl_lowrank(ad::Tape& t, ad::Var mean, ad::Var rho, ad::Var factor) {
  const LowRankGaussian q{as_vector(t.value(mean)), as_vector(t.value(rho)), t.value(factor)};
  const bool grad = t.needs_grad(mean) || t.needs_grad(rho) || t.needs_grad(factor);
  return t.push(scalar_matrix(kl_lowrank_to_std(q)), grad,
                [mean, rho, factor, q](ad::Tape& tp, const Eigen::MatrixXd& g) {
                  const LowRankKlGradient d = kl_lowrank_gradient(q);
                  tp.accumulate(mean, g(0, 0) * d.mean);
                  tp.accumulate(rho, g(0, 0) * d.rho);
                  tp.accumulate(factor, g(0, 0) * d.factor);
                });
}

ad::Var sample_diag(ad::Tape& t, ad::Var mean, ad::Var rho, const Eigen::VectorXd& epsilon) {
  const DiagGaussian q{as_vector(t.value(mean)), as_vector(t.value(rho))};
  const Eigen::VectorXd out = psf::sample_diag(q, NoiseDraw{epsilon, {}});
  const bool grad = t.needs_grad(mean) || t.needs_grad(rho);
  return t.push(out, grad, [mean, rho, epsilon, r = q.rho](ad::Tape& tp, const Eigen::MatrixXd& g) {
    tp.accumulate(mean, g);
    if (tp.needs_grad(rho)) {
      tp.accumulate(rho, g.col(0).cwiseProduct(epsilon).cwiseProduct(std_derivative(r)));
    }
  });
}

ad::Var sample_lowrank(ad::Tape& t, ad::Var mean, ad::Var rho, ad::Var factor, const NoiseDraw& noise) {
  const LowRankGaussian q{as_vector(t.value(mean)), as_vector(t.value(rho)), t.value(factor)};
  const Eigen::VectorXd out = psf::sample_lowrank(q, noise);
  const bool grad = t.needs_grad(mean) || t.needs_grad(rho) || t.needs_grad(factor);
  return t.push(out, grad, [mean, rho, factor, noise, r = q.rho](ad::Tape& tp, const Eigen::MatrixXd& g) {
    tp.accumulate(mean, g);
    if (tp.needs_grad(rho)) {
      tp.accumulate(rho, g.col(0).cwiseProduct(noise.epsilon).cwiseProduct(std_derivative(r)));
    }
    if (tp.needs_grad(factor)) tp.accumulate(factor, g * noise.zeta.transpose());
  });
}

ad::Var head_nll(ad::Tape& t, ad::Var theta, const TokenBatch& batch, int e, int c, int class_count) {
  const HeadParams head = reshape_theta(as_vector(t.value(theta)), e, c);
  const bool grad = t.needs_grad(theta);
  HeadLoss loss = psf::head_nll(head, batch.embeddings, batch.gold, class_count, grad);
  Eigen::VectorXd dtheta;
  if (grad) dtheta = flatten(loss.grad);
  return t.push(scalar_matrix(loss.nll), grad, [theta, dtheta](ad::Tape& tp, const Eigen::MatrixXd& g) {
    tp.accumulate(theta, g(0, 0) * dtheta);
  });
}

}  // namespace ad_ops

namespace {

struct BoundPosterior {
  ad::Var mean;
  ad::Var rho;
  ad::Var factor;
};

struct BoundAffine {
  ad::Var weight;
  ad::Var bias;
};

struct BoundModel {
  std::vector<BoundPosterior> tasks;
  std::vector<BoundPosterior> langs;
  std::vector<BoundAffine> shared;
  BoundAffine mean_head;
  BoundAffine var_head;
};

// Mirrors the order of visit_parameters().
BoundModel bind_model(const LatentStore& store, const HyperNet& net, const std::vector<ad::Var>& leaves) {
  const bool low_rank = store.family() == Family::low_rank;
  std::size_t next = 0;
  auto take = [&] {
    if (next >= leaves.size()) throw ConfigError("step objective: too few parameter leaves");
    return leaves[next++];
  };
  auto posteriors = [&](std::size_t n) {
    std::vector<BoundPosterior> out(n);
    for (auto& p : out) {
      p.mean = take();
      p.rho = take();
      if (low_rank) p.factor = take();
    }
    return out;
  };
  BoundModel m;
  m.tasks = posteriors(store.tasks().size());
  m.langs = posteriors(store.langs().size());
  for (std::size_t i = 0; i < net.shared().size(); ++i) m.shared.push_back({take(), take()});
  m.mean_head = {take(), take()};
  m.var_head = {take(), take()};
  if (next != leaves.size()) throw ConfigError("step objective: too many parameter leaves");
  return m;
}

struct StepVars {
  ad::Var value;
  ad::Var neg_log_lik;
  ad::Var kl_weighted;
};

void check_inputs(const LatentStore& store, const HyperNet& net, const StepInputs& in, const StepNoise& noise) {
  if (!in.batch || !in.schema) throw ConfigError("evaluate_step: batch and schema are required");
  if (noise.samples.empty()) throw ConfigError("evaluate_step: need at least one Monte Carlo sample");
  if (in.batch->gold.empty()) throw ConfigError("evaluate_step: empty batch");
  if (!store.has_task(in.task) || !store.has_lang(in.lang)) {
    throw ConfigError("evaluate_step: no posterior for cell " + in.task + "-" + in.lang);
  }
  if (store.dim() != net.dims().h) throw ConfigError("evaluate_step: latent dim != hypernet h");
  if (in.schema->class_count() > net.dims().c) throw ConfigError("evaluate_step: task has more classes than c");
}

StepVars build_step(ad::Tape& t, const LatentStore& store, const HyperNet& net, const BoundModel& m,
                    const StepInputs& in, const StepNoise& noise) {
  const bool low_rank = store.family() == Family::low_rank;
  const BoundPosterior& tp = m.tasks[store.task_index(in.task)];
  const BoundPosterior& lp = m.langs[store.lang_index(in.lang)];
  const HyperDims& dims = net.dims();

  auto draw = [&](const BoundPosterior& p, const NoiseDraw& n) {
    return low_rank ? ad_ops::sample_lowrank(t, p.mean, p.rho, p.factor, n)
                    : ad_ops::sample_diag(t, p.mean, p.rho, n.epsilon);
  };

  ad::Var nll_sum{};
  for (std::size_t v = 0; v < noise.samples.size(); ++v) {
    const McNoise& n = noise.samples[v];
    const ad::Var task = draw(tp, n.task);
    const ad::Var lang = draw(lp, n.lang);
    ad::Var z = ad::concat_rows(t, {task, lang, ad::sub(t, task, lang), ad::mul(t, task, lang)});
    for (const auto& layer : m.shared) z = ad::relu(t, ad::affine(t, layer.weight, layer.bias, z));
    const ad::Var mean = ad::affine(t, m.mean_head.weight, m.mean_head.bias, z);
    const ad::Var var = ad::softplus(t, ad::affine(t, m.var_head.weight, m.var_head.bias, z));
    const ad::Var theta = ad::add(t, mean, ad::mul(t, ad::sqrt(t, var), t.constant(n.theta)));
    const ad::Var nll = ad_ops::head_nll(t, theta, *in.batch, dims.e, dims.c, in.schema->class_count());
    nll_sum = v == 0 ? nll : ad::add(t, nll_sum, nll);
  }
  const ad::Var neg_log_lik = ad::scale(t, nll_sum, 1.0 / static_cast<double>(noise.samples.size()));

  // Same summation order as kl_penalty().
  ad::Var kl{};
  bool first = true;
  auto add_kl = [&](const BoundPosterior& p) {
    const ad::Var term = low_rank ? ad_ops::kl_lowrank(t, p.mean, p.rho, p.factor) : ad_ops::kl_diag(t, p.mean, p.rho);
    kl = first ? term : ad::add(t, kl, term);
    first = false;
  };
  for (const auto& p : m.tasks) add_kl(p);
  for (const auto& p : m.langs) add_kl(p);
  const ad::Var kl_weighted = ad::scale(t, kl, in.kl_weight);
  return {ad::add(t, neg_log_lik, kl_weighted), neg_log_lik, kl_weighted};
}

std::vector<ad::Var> make_leaves(ad::Tape& t, const LatentStore& store, const HyperNet& net,
                                 bool differentiable, bool freeze_factor) {
  std::vector<ad::Var> leaves;
  visit_parameters(store, net, freeze_factor, [&](const std::string&, const auto& m, bool trainable) {
    Eigen::MatrixXd value = Eigen::Map<const Eigen::MatrixXd>(m.data(), m.rows(), m.cols());
    leaves.push_back(differentiable && trainable ? t.variable(std::move(value)) : t.constant(std::move(value)));
  });
  return leaves;
}

}  // namespace

StepObjective evaluate_step(const LatentStore& store, const HyperNet& net, const StepInputs& in,
                            const StepNoise& noise) {
  check_inputs(store, net, in, noise);
  ad::Tape t;
  const auto leaves = make_leaves(t, store, net, false, false);
  const StepVars vars = build_step(t, store, net, bind_model(store, net, leaves), in, noise);
  return {t.scalar(vars.value), t.scalar(vars.neg_log_lik), t.scalar(vars.kl_weighted), noise};
}

StepObjective evaluate_step(const LatentStore& store, const HyperNet& net, const StepInputs& in, int samples,
                            NoiseSource& noise) {
  if (samples < 1) throw ConfigError("evaluate_step: V must be >= 1");
  StepNoise drawn = noise.draw_step(samples, store.dim(), store.rank(), net.dims().d());
  return evaluate_step(store, net, in, drawn);
}

GradientResult gradient(const Objective& objective, const std::vector<ParamBlock>& params) {
  ad::Tape t;
  std::vector<ad::Var> leaves;
  leaves.reserve(params.size());
  for (const auto& b : params) {
    Eigen::MatrixXd value = b.view();
    leaves.push_back(b.trainable ? t.variable(std::move(value)) : t.constant(std::move(value)));
  }
  const ad::Var root = objective(t, leaves);
  t.backward(root);
  GradientResult out;
  out.value = t.scalar(root);
  out.gradient = Eigen::VectorXd::Zero(total_size(params));
  Eigen::Index off = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& g = t.grad(leaves[i]);
    if (g.size() == params[i].size()) {
      out.gradient.segment(off, g.size()) = Eigen::Map<const Eigen::VectorXd>(g.data(), g.size());
    }
    off += params[i].size();
  }
  return out;
}

Objective step_objective(const LatentStore& store, const HyperNet& net, const StepInputs& in,
                         const StepNoise& noise) {
  check_inputs(store, net, in, noise);
  return [&store, &net, in, noise](ad::Tape& t, const std::vector<ad::Var>& leaves) {
    return build_step(t, store, net, bind_model(store, net, leaves), in, noise).value;
  };
}

StepGradient step_gradient(LatentStore& store, HyperNet& net, const StepInputs& in, const StepNoise& noise,
                           bool freeze_factor) {
  check_inputs(store, net, in, noise);
  ad::Tape t;
  const auto leaves = make_leaves(t, store, net, true, freeze_factor);
  const StepVars vars = build_step(t, store, net, bind_model(store, net, leaves), in, noise);
  t.backward(vars.value);

  StepGradient out;
  out.objective = {t.scalar(vars.value), t.scalar(vars.neg_log_lik), t.scalar(vars.kl_weighted), noise};
  const auto blocks = parameter_blocks(store, net, freeze_factor);
  out.gradient = Eigen::VectorXd::Zero(total_size(blocks));
  Eigen::Index off = 0;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const auto& g = t.grad(leaves[i]);
    if (g.size() == blocks[i].size()) {
      out.gradient.segment(off, g.size()) = Eigen::Map<const Eigen::VectorXd>(g.data(), g.size());
    }
    off += blocks[i].size();
  }
  return out;
}

}  // namespace psf
