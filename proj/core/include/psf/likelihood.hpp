#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "psf/hypernet.hpp"
#include "psf/latents.hpp"

namespace psf {

// Label inventory of one task. Heads carry c >= class_count() columns; the
// extra columns are masked out of every softmax.
struct TaskSchema {
  TaskId task;
  std::vector<std::string> labels;
  // True when every label is O, B-X or I-X (and some label is B-X); such
  // tasks are also scored by exact-match span F1.
  bool span_based = false;

  int class_count() const { return static_cast<int>(labels.size()); }
  // Index of `label`, or -1.
  int find(const std::string& label) const;
  // Index of `label`; throws DataError when absent.
  int index_of(const std::string& label) const;
};

// Validates labels (non-empty, duplicate-free) and detects span tagging.
TaskSchema make_schema(TaskId task, std::vector<std::string> labels);

struct PredictiveDist {
  Eigen::VectorXd probs;  // over the task's valid classes
};

// softmax(W^T x + b) over the first class_count classes.
PredictiveDist class_distribution(const HeadParams& params, const Eigen::VectorXd& embedding,
                                  const TaskSchema& schema);

double log_likelihood(const HeadParams& params, const Eigen::VectorXd& embedding,
                      const TaskSchema& schema, const std::string& gold);
double log_likelihood(const HeadParams& params, const Eigen::VectorXd& embedding,
                      const TaskSchema& schema, int gold);

// Entropy in nats, 0 ln 0 = 0.
double entropy(const PredictiveDist& dist);

// Row-wise class probabilities for n stacked embeddings (n x e), masked to
// the first class_count classes. Result is n x class_count.
Eigen::MatrixXd class_probabilities(const HeadParams& params, const Eigen::MatrixXd& embeddings,
                                    int class_count);

// Row-wise masked log-softmax of logits (n x c) over the first class_count
// columns. Result is n x class_count.
Eigen::MatrixXd masked_log_softmax(const Eigen::MatrixXd& logits, int class_count);

// Summed negative log-likelihood of gold labels over a token batch, and its
// gradient with respect to the head. Gradient columns of masked classes are
// exactly zero.
struct HeadLoss {
  double nll = 0.0;
  HeadParams grad;
};
HeadLoss head_nll(const HeadParams& params, const Eigen::MatrixXd& embeddings,
                  const std::vector<int>& gold, int class_count, bool with_gradient);

}  // namespace psf
