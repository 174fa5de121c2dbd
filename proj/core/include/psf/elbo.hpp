#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "psf/gauss.hpp"
#include "psf/hypernet.hpp"
#include "psf/latents.hpp"
#include "psf/likelihood.hpp"
#include "psf/model.hpp"
#include "psf/rng.hpp"
#include "psf/tape.hpp"

namespace psf {

// Noise for one Monte Carlo sample: latent draws for the task and the
// language, and a fresh d-vector for the head parameters.
struct McNoise {
  NoiseDraw task;
  NoiseDraw lang;
  Eigen::VectorXd theta;
};

struct StepNoise {
  std::vector<McNoise> samples;  // one per Monte Carlo sample
};

// Gaussian noise with one engine per noise kind. Epsilon, zeta and theta
// draws come from separate streams, so a diagonal model and a low-rank model
// with the same seed see identical epsilon and theta noise.
class NoiseSource {
 public:
  explicit NoiseSource(std::uint64_t seed);

  McNoise draw(int h, int k, int d);
  StepNoise draw_step(int samples, int h, int k, int d);

  // Engine states, for checkpointing.
  std::vector<std::string> state() const;
  void restore(const std::vector<std::string>& state);

 private:
  Engine epsilon_;
  Engine zeta_;
  Engine theta_;
};

// Zero noise of the right shapes; turns sampling into the mean map.
StepNoise zero_noise(int samples, int h, int k, int d);

// Token batch of one cell: stacked embeddings and gold class indices.
struct TokenBatch {
  Eigen::MatrixXd embeddings;  // n x e
  std::vector<int> gold;
};

struct StepObjective {
  double value = 0.0;         // neg_log_lik + kl_weighted
  double neg_log_lik = 0.0;   // -(1/V) sum_v sum_batch log p(y | x, theta_v)
  double kl_weighted = 0.0;   // kl_weight * kl_penalty(store)
  StepNoise noise;
};

struct StepInputs {
  const TokenBatch* batch = nullptr;
  const TaskSchema* schema = nullptr;
  TaskId task;
  LangId lang;
  double kl_weight = 0.0;
};

// Draws V Monte Carlo samples from `noise` and evaluates the negative ELBO
// contribution of one SVI step.
StepObjective evaluate_step(const LatentStore& store, const HyperNet& net, const StepInputs& in,
                            int samples, NoiseSource& noise);

// Same objective with the noise fixed; deterministic.
StepObjective evaluate_step(const LatentStore& store, const HyperNet& net, const StepInputs& in,
                            const StepNoise& noise);

struct GradientResult {
  double value = 0.0;
  Eigen::VectorXd gradient;  // aligned with the parameter blocks; zero where frozen
};

// Builds a scalar on the tape from one leaf per parameter block.
using Objective = std::function<ad::Var(ad::Tape&, const std::vector<ad::Var>& leaves)>;

// Exact reverse-mode gradient of `objective` at the current block values.
GradientResult gradient(const Objective& objective, const std::vector<ParamBlock>& params);

// Value, components and gradient of one step with fixed noise, with respect
// to parameter_blocks(store, net, freeze_factor).
struct StepGradient {
  StepObjective objective;
  Eigen::VectorXd gradient;
};
StepGradient step_gradient(LatentStore& store, HyperNet& net, const StepInputs& in,
                           const StepNoise& noise, bool freeze_factor = false);

// The step objective as an Objective over parameter_blocks(store, net, ...).
// Store and net provide shapes and ids only; values come from the leaves.
Objective step_objective(const LatentStore& store, const HyperNet& net, const StepInputs& in,
                         const StepNoise& noise);

// Tape operations for the model's fused pieces.
namespace ad_ops {
ad::Var kl_diag(ad::Tape& t, ad::Var mean, ad::Var rho);
ad::Var kl_lowrank(ad::Tape& t, ad::Var mean, ad::Var rho, ad::Var factor);
ad::Var sample_diag(ad::Tape& t, ad::Var mean, ad::Var rho, const Eigen::VectorXd& epsilon);
ad::Var sample_lowrank(ad::Tape& t, ad::Var mean, ad::Var rho, ad::Var factor, const NoiseDraw& noise);
// Summed negative log-likelihood of a batch under the head reshaped from theta.
ad::Var head_nll(ad::Tape& t, ad::Var theta, const TokenBatch& batch, int e, int c, int class_count);
}  // namespace ad_ops

}  // namespace psf
