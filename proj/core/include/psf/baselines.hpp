#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "psf/data.hpp"
#include "psf/optim.hpp"
#include "psf/predict.hpp"
#include "psf/train.hpp"

namespace psf {

// Per-language feature vectors used to pick the nearest source language.
// File format: one "lang v1 ... vh" line per language.
struct LangFeatures {
  std::map<LangId, Eigen::VectorXd> vectors;

  // Equal lengths and no zero vectors.
  void validate() const;
  const Eigen::VectorXd& at(const LangId& lang) const;
};

LangFeatures load_lang_features(const std::string& path);
void write_lang_features(const LangFeatures& features, const std::string& path);

// Maximum-likelihood training of a single softmax head.
struct HeadTrainConfig {
  AdamConfig adam{1e-2, 0.9, 0.999, 1e-8};
  int batch_size = 8;
  int patience = 10;
  int validation_every = 50;
  long max_steps = 20000;
  std::uint64_t seed = 0;

  void validate() const;
};

struct HeadFit {
  HeadParams head;
  long steps = 0;
  double best_dev = 0.0;  // mean dev log-likelihood of the returned head
};

// Starts from a zero head, samples batches from epoch permutations (stream
// derived from seed and `stream_tag`), and keeps the head with the best mean
// dev log-likelihood. An empty dev set falls back to the training set.
HeadFit train_head(const std::vector<EncodedSentence>& train, const std::vector<EncodedSentence>& dev, int e, int c,
                   int class_count, const HeadTrainConfig& config, const std::string& stream_tag);

struct CellClassifier {
  Cell cell;
  HeadParams head;
  long long train_tokens = 0;
};

using ClassifierMap = std::map<Cell, CellClassifier>;

// One head per seen cell, trained on that cell alone.
ClassifierMap train_cell_classifiers(const std::vector<TrainCell>& seen, int e, int c, const HeadTrainConfig& config);

// Same-task source whose language features have the highest cosine
// similarity with the target's; ties go to the lexicographically first id.
Cell nearest_source(const ClassifierMap& classifiers, const LangFeatures& features, const Cell& target);

// Same-task source with the most training tokens; ties as above.
Cell largest_source(const ClassifierMap& classifiers, const Cell& target);

PredictiveReport nearest_source_predict(const ClassifierMap& classifiers, const LangFeatures& features,
                                        const TaskSchema& schema, const Cell& target,
                                        const std::vector<EncodedSentence>& examples);
PredictiveReport largest_source_predict(const ClassifierMap& classifiers, const TaskSchema& schema,
                                        const Cell& target, const std::vector<EncodedSentence>& examples);

// One head per task, trained on the union of that task's seen cells (in
// the order given).
std::map<TaskId, HeadParams> joint_multilingual(const std::vector<TrainCell>& seen, int e, int c,
                                                const HeadTrainConfig& config);

PredictiveReport joint_predict(const std::map<TaskId, HeadParams>& heads, const TaskSchema& schema,
                               const Cell& target, const std::vector<EncodedSentence>& examples);

// Stream tags, exposed so a one-language joint model and the matching cell
// classifier can be checked against each other.
std::string cell_stream_tag(const Cell& cell);
std::string joint_stream_tag(const TaskId& task, const std::vector<LangId>& langs);

}  // namespace psf
