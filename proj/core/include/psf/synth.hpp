#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "psf/baselines.hpp"
#include "psf/container.hpp"
#include "psf/data.hpp"
#include "psf/hypernet.hpp"

namespace psf {

struct SynthConfig {
  int n_tasks = 3;
  int n_langs = 6;
  int h = 8;
  int e = 16;
  std::vector<int> class_counts{3, 4, 5};  // one per task
  int examples_per_cell = 500;
  int sentence_length = 10;
  std::uint64_t seed = 0;
  std::vector<int> generator_hidden{16};  // shared widths of the generator network
  double theta_scale = 1.0;               // multiplies the generator's mean head
  double theta_var = 1e-2;                // variance of theta around the generator mean
  double feature_noise = 0.1;             // variance added to l* for language features

  void validate() const;
};

// Everything the generator drew. Task ids are "task<i>", language ids
// "lang<j>", labels "c<k>".
struct GroundTruth {
  SynthConfig config;
  std::vector<TaskId> tasks;
  std::vector<LangId> langs;
  std::map<TaskId, Eigen::VectorXd> task_latents;
  std::map<LangId, Eigen::VectorXd> lang_latents;
  HyperNet generator;
  std::map<TaskId, TaskSchema> schemas;
  std::map<Cell, Eigen::VectorXd> thetas;  // flattened true heads
  LangFeatures features;
  std::vector<Corpus> corpora;         // task-major cell order
  PrecomputedEmbeddings embeddings;    // keyed by sentence_id(cell, i)

  HeadParams head(const Cell& cell) const;
};

// Samples latents from N(0, I), a random generator network, one theta per
// cell from the generator's output distribution, N(0, I) token embeddings,
// and labels from the softmax of the true head. Deterministic given seed.
GroundTruth generate(const SynthConfig& config);

// Writes "<task>.labels", "<task>-<lang>.conll", "<task>-<lang>.emb",
// "manifest.txt", "lang_features.txt" and "truth.ckpt" into `dir`.
void write_synth(const GroundTruth& truth, const std::string& dir);

// The truth file: latents, generator and heads (corpora are not included).
Container truth_container(const GroundTruth& truth);
GroundTruth load_truth(const std::string& path);

// Accuracy of the true head's argmax on the examples.
double oracle_score(const GroundTruth& truth, const Cell& cell, const std::vector<EncodedSentence>& examples);

// Frequency of each class among the labelled tokens.
Eigen::VectorXd label_marginals(const std::vector<EncodedSentence>& examples, int class_count);

}  // namespace psf
