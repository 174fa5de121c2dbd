#include "psf/likelihood.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "psf/error.hpp"

namespace psf {

int TaskSchema::find(const std::string& label) const {
  auto it = std::find(labels.begin(), labels.end(), label);
  return it == labels.end() ? -1 : static_cast<int>(it - labels.begin());
}

int TaskSchema::index_of(const std::string& label) const {
  const int i = find(label);
  if (i < 0) throw DataError("label '" + label + "' is not in the schema of task '" + task + "'");
  return i;
}

TaskSchema make_schema(TaskId task, std::vector<std::string> labels) {
  if (labels.empty()) throw DataError("task '" + task + "' has no labels");
  std::unordered_set<std::string> seen;
  bool bio = true;
  bool has_begin = false;
  for (const auto& l : labels) {
    if (l.empty()) throw DataError("task '" + task + "': empty label");
    if (!seen.insert(l).second) throw DataError("task '" + task + "': duplicate label '" + l + "'");
    if (l == "O") continue;
    if (l.size() > 2 && (l[0] == 'B' || l[0] == 'I') && l[1] == '-') {
      has_begin = has_begin || l[0] == 'B';
    } else {
      bio = false;
    }
  }
  return TaskSchema{std::move(task), std::move(labels), bio && has_begin};
}

Eigen::MatrixXd masked_log_softmax(const Eigen::MatrixXd& logits, int class_count) {
  if (class_count < 1 || class_count > logits.cols()) {
    throw ConfigError("class count " + std::to_string(class_count) + " exceeds head width " +
                      std::to_string(logits.cols()));
  }
  Eigen::MatrixXd out = logits.leftCols(class_count);
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    const double m = out.row(r).maxCoeff();
    const double lse = m + std::log((out.row(r).array() - m).exp().sum());
    out.row(r).array() -= lse;
  }
  return out;
}

namespace {

Eigen::MatrixXd logits_for(const HeadParams& params, const Eigen::MatrixXd& embeddings) {
  if (embeddings.cols() != params.weight.rows()) {
    throw ConfigError("embedding width " + std::to_string(embeddings.cols()) +
                      " does not match head width " + std::to_string(params.weight.rows()));
  }
  Eigen::MatrixXd logits = embeddings * params.weight;
  logits.rowwise() += params.bias.transpose();
  return logits;
}

}  // namespace

Eigen::MatrixXd class_probabilities(const HeadParams& params, const Eigen::MatrixXd& embeddings,
                                    int class_count) {
  return masked_log_softmax(logits_for(params, embeddings), class_count).array().exp().matrix();
}

PredictiveDist class_distribution(const HeadParams& params, const Eigen::VectorXd& embedding,
                                  const TaskSchema& schema) {
  const Eigen::MatrixXd probs = class_probabilities(params, embedding.transpose(), schema.class_count());
  return {probs.row(0).transpose()};
}

double log_likelihood(const HeadParams& params, const Eigen::VectorXd& embedding,
                      const TaskSchema& schema, int gold) {
  if (gold < 0 || gold >= schema.class_count()) throw DataError("gold class index out of range");
  const Eigen::MatrixXd lp =
      masked_log_softmax(logits_for(params, embedding.transpose()), schema.class_count());
  return lp(0, gold);
}

double log_likelihood(const HeadParams& params, const Eigen::VectorXd& embedding,
                      const TaskSchema& schema, const std::string& gold) {
  return log_likelihood(params, embedding, schema, schema.index_of(gold));
}

double entropy(const PredictiveDist& dist) {
  double h = 0.0;
  for (Eigen::Index i = 0; i < dist.probs.size(); ++i) {
    const double p = dist.probs[i];
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

HeadLoss head_nll(const HeadParams& params, const Eigen::MatrixXd& embeddings,
                  const std::vector<int>& gold, int class_count, bool with_gradient) {
  if (static_cast<Eigen::Index>(gold.size()) != embeddings.rows()) {
    throw ConfigError("head_nll: gold count != embedding rows");
  }
  const Eigen::MatrixXd lp = masked_log_softmax(logits_for(params, embeddings), class_count);
  HeadLoss out;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (gold[i] < 0 || gold[i] >= class_count) throw DataError("gold class index out of range");
    out.nll -= lp(static_cast<Eigen::Index>(i), gold[i]);
  }
  if (!with_gradient) return out;

  // d nll / d logits = softmax - onehot on valid columns, zero on masked ones.
  Eigen::MatrixXd dlogits = Eigen::MatrixXd::Zero(embeddings.rows(), params.weight.cols());
  dlogits.leftCols(class_count) = lp.array().exp().matrix();
  for (std::size_t i = 0; i < gold.size(); ++i) dlogits(static_cast<Eigen::Index>(i), gold[i]) -= 1.0;
  out.grad.weight = embeddings.transpose() * dlogits;
  out.grad.bias = dlogits.colwise().sum().transpose();
  return out;
}

}  // namespace psf
