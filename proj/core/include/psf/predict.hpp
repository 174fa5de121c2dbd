#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "psf/data.hpp"
#include "psf/metrics.hpp"
#include "psf/model.hpp"

namespace psf {

// One predicted token.
struct TokenRecord {
  std::string example_id;
  int token = 0;
  int gold = -1;  // -1 when the example carries no (known) label
  int predicted = 0;
  Eigen::VectorXd probs;  // over the task's valid classes
  double entropy = 0.0;   // nats
};

struct ReportAggregates {
  long long tokens = 0;
  long long labelled = 0;
  long long correct = 0;
  double accuracy = 0.0;      // correct / labelled, 0 when nothing is labelled
  SpanCounts spans;           // span-based tasks only
  double mean_entropy = 0.0;  // over all tokens
};

struct PredictiveReport {
  Cell cell;
  TaskSchema schema;
  std::size_t n_examples = 0;
  std::vector<TokenRecord> records;  // example order, then token order
  ReportAggregates aggregates;

  // Span F1 for span-based tasks, token accuracy otherwise.
  double score() const;
};

// Per-example n x class_count probability matrix.
using ProbabilityFn = std::function<Eigen::MatrixXd(const EncodedSentence&)>;

// Runs `probabilities` over the examples and scores the result. Aggregates
// are accumulated in example-id order, so they do not depend on the order of
// `examples`.
PredictiveReport build_report(const Cell& cell, const TaskSchema& schema,
                              const std::vector<EncodedSentence>& examples, const ProbabilityFn& probabilities);

// Index of the largest probability; the lowest index wins ties.
int argmax(const Eigen::VectorXd& probs);

// Head generated from the posterior means through the mean network.
HeadParams plug_in_head(const Model& model, const Cell& cell);

PredictiveReport plug_in_predict(const Model& model, const Cell& cell, const std::vector<EncodedSentence>& examples);

struct BmaOptions {
  int samples = 100;
  std::uint64_t seed = 0;
  bool zero_noise = false;  // every draw collapses to the posterior mean
};

// Averages the class distributions of `samples` heads, each drawn by sampling
// the task latent, the language latent and then theta. Every example has its
// own noise stream derived from the seed and the example id.
PredictiveReport bma_predict(const Model& model, const Cell& cell, const std::vector<EncodedSentence>& examples,
                             const BmaOptions& options);

// Prediction with a fixed head (used by the baselines).
PredictiveReport head_predict(const HeadParams& head, const Cell& cell, const TaskSchema& schema,
                              const std::vector<EncodedSentence>& examples);

// The per-cell summary row.
struct CellSummary {
  Cell cell;
  std::size_t n_examples = 0;
  double accuracy = 0.0;
  double score = 0.0;  // accuracy, or span F1 for span-based tasks
  double mean_entropy = 0.0;
};

CellSummary summarize(const PredictiveReport& report);

// Pearson correlation of per-cell mean entropy against per-cell accuracy.
Correlation entropy_accuracy_correlation(const std::vector<CellSummary>& cells);
Correlation entropy_accuracy_correlation(const std::vector<PredictiveReport>& reports);

// Token records as TSV followed by a "#"-prefixed aggregate block. With
// per_example set, one row per example (mean entropy, token accuracy) instead.
void write_report(const PredictiveReport& report, const std::string& path, bool per_example = false);

// "task lang n_examples accuracy_or_f1 mean_entropy accuracy", tab-separated,
// with a header line.
void write_cell_summaries(const std::vector<CellSummary>& cells, const std::string& path);
std::vector<CellSummary> load_cell_summaries(const std::string& path);

}  // namespace psf
