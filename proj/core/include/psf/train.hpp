#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "psf/container.hpp"
#include "psf/data.hpp"
#include "psf/elbo.hpp"
#include "psf/model.hpp"
#include "psf/optim.hpp"
#include "psf/rng.hpp"

namespace psf {

struct TrainConfig {
  AdamConfig adam{5e-6, 0.9, 0.999, 1e-8};
  int batch_size = 8;
  int samples = 3;             // Monte Carlo samples per step
  int patience = 10;           // validations without improvement
  int validation_every = 2500; // steps
  long max_steps = 250000;
  std::uint64_t seed = 0;
  double clip_norm = 0.0;      // global gradient-norm cap; 0 disables
  bool freeze_factor = false;  // keep low-rank factors at their current value
  int checkpoint_every = 0;    // steps; 0 disables the checkpoint hook

  // lr 1e-3 and validation every 200 steps; for small grids.
  static TrainConfig desk();
  void validate() const;
};

// Training and development sentences of one seen cell.
struct TrainCell {
  Cell cell;
  TaskSchema schema;
  std::vector<EncodedSentence> train;
  std::vector<EncodedSentence> dev;
};

struct StepRecord {
  long step = 0;
  Cell cell;
  double loss = 0.0;
  double neg_log_lik = 0.0;
  double kl_weighted = 0.0;
};

// "step\ttask\tlang\tloss\tneg_log_lik\tkl_weighted" with exact (%.17g) reals.
std::string format_step(const StepRecord& r);

struct TrainHooks {
  std::function<void(const StepRecord&)> on_step;
  std::function<void(long step, double dev_objective)> on_validation;
  // Called every checkpoint_every steps, after the step's update.
  std::function<void(const class Trainer&)> on_checkpoint;
};

struct TrainSummary {
  long steps = 0;
  long best_step = 0;
  double initial_dev = 0.0;
  double best_dev = 0.0;
  bool early_stopped = false;
};

// Encoded train/dev splits of every seen cell, in grid order.
std::vector<TrainCell> seen_cells(const Grid& grid, const CellPartition& partition, const Embedder& embedder);

// Mean per-token log-likelihood of the dev splits at the posterior means.
double dev_objective(const Model& model, const std::vector<TrainCell>& cells);

// Stacks the tokens of several sentences into one batch.
TokenBatch make_batch(const std::vector<EncodedSentence>& sentences, const std::vector<int>& indices);

// Stochastic variational inference over the seen cells. Owns all training
// state besides the model: optimizer moments, random streams, per-cell epoch
// permutations, and the early-stopping bookkeeping.
class Trainer {
 public:
  Trainer(Model& model, std::vector<TrainCell> cells, TrainConfig config);

  // Continues from a checkpoint written by to_checkpoint(); the model is
  // overwritten with the checkpointed parameters.
  void restore(const Container& checkpoint);

  TrainSummary run(const TrainHooks& hooks = {});

  // One SVI step on a uniformly sampled seen cell.
  StepRecord step_once();

  // Current parameters, optimizer, random state and progress.
  Container to_checkpoint() const;

  // Copies the best parameters seen so far into the model.
  void load_best();

  long step() const { return step_; }
  double kl_weight() const { return kl_weight_; }
  const TrainConfig& config() const { return config_; }
  const std::vector<TrainCell>& cells() const { return cells_; }

 private:
  void validate(const TrainHooks& hooks);
  std::vector<int> next_batch(std::size_t cell);

  Model& model_;
  std::vector<TrainCell> cells_;
  TrainConfig config_;
  std::vector<ParamBlock> blocks_;
  Eigen::VectorXd mask_;
  Adam adam_;
  Engine cell_rng_;
  Engine batch_rng_;
  NoiseSource noise_;
  struct Cursor {
    std::vector<int> order;
    std::size_t next = 0;
  };
  std::vector<Cursor> cursors_;
  double kl_weight_ = 0.0;
  long step_ = 0;
  bool validated_initial_ = false;
  double initial_dev_ = 0.0;
  double best_dev_ = -std::numeric_limits<double>::infinity();
  long best_step_ = 0;
  int bad_validations_ = 0;
  bool stopped_ = false;
  Eigen::VectorXd best_params_;
};

struct TrainResult {
  TrainSummary summary;
  Container checkpoint;  // best parameters plus the final training state
};

// Runs the trainer to completion and leaves the best parameters in `model`.
TrainResult train(Model& model, const std::vector<TrainCell>& cells, const TrainConfig& config,
                  const TrainHooks& hooks = {});

// Model (dims, ids, label maps, parameters) to and from the container format.
Container save_model(const Model& model);
Model load_model(const Container& checkpoint);

inline constexpr int kCheckpointVersion = 1;

}  // namespace psf
