#include "psf/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "psf/rng.hpp"

namespace psf {

void LangFeatures::validate() const {
  Eigen::Index width = -1;
  for (const auto& [lang, v] : vectors) {
    if (width < 0) width = v.size();
    if (v.size() != width) throw DataError("language features: '" + lang + "' has a different length");
    if (v.squaredNorm() == 0.0) throw DataError("language features: '" + lang + "' is the zero vector");
  }
}

const Eigen::VectorXd& LangFeatures::at(const LangId& lang) const {
  const auto it = vectors.find(lang);
  if (it == vectors.end()) throw DataError("no features for language '" + lang + "'");
  return it->second;
}

LangFeatures load_lang_features(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read language features '" + path + "'");
  LangFeatures f;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string lang;
    ls >> lang;
    std::vector<double> values;
    std::string tok;
    while (ls >> tok) {
      try {
        std::size_t used = 0;
        values.push_back(std::stod(tok, &used));
        if (used != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        throw DataError(path + ":" + std::to_string(lineno) + ": bad number '" + tok + "'");
      }
    }
    if (values.empty()) throw DataError(path + ":" + std::to_string(lineno) + ": no feature values");
    if (!f.vectors.emplace(lang, Eigen::Map<Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size())))
             .second) {
      throw DataError(path + ":" + std::to_string(lineno) + ": duplicate language '" + lang + "'");
    }
  }
  f.validate();
  return f;
}

void write_lang_features(const LangFeatures& features, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write language features '" + path + "'");
  char buf[40];
  for (const auto& [lang, v] : features.vectors) {
    out << lang;
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      std::snprintf(buf, sizeof buf, " %.17g", v(i));
      out << buf;
    }
    out << '\n';
  }
}

void HeadTrainConfig::validate() const {
  adam.validate();
  if (batch_size < 1 || patience < 1 || validation_every < 1) {
    throw ConfigError("head training: batch_size, patience and validation_every must be >= 1");
  }
  if (max_steps < 0) throw ConfigError("head training: max_steps must be >= 0");
}

namespace {

double mean_log_lik(const HeadParams& head, const std::vector<EncodedSentence>& sentences, int class_count) {
  double total = 0.0;
  std::size_t tokens = 0;
  for (const auto& s : sentences) {
    total -= head_nll(head, s.embeddings, s.gold, class_count, false).nll;
    tokens += s.gold.size();
  }
  return tokens == 0 ? 0.0 : total / static_cast<double>(tokens);
}

long long token_count(const std::vector<EncodedSentence>& sentences) {
  long long n = 0;
  for (const auto& s : sentences) n += static_cast<long long>(s.gold.size());
  return n;
}

}  // namespace

HeadFit train_head(const std::vector<EncodedSentence>& train, const std::vector<EncodedSentence>& dev, int e, int c,
                   int class_count, const HeadTrainConfig& config, const std::string& stream_tag) {
  config.validate();
  if (train.empty()) throw DataError("head training: no training sentences");
  const std::vector<EncodedSentence>& held = dev.empty() ? train : dev;
  Engine rng = make_engine(config.seed, stream_tag + "/batches");

  HeadParams head{Eigen::MatrixXd::Zero(e, c), Eigen::VectorXd::Zero(c)};
  Eigen::VectorXd params = flatten(head);
  Adam adam(params.size(), config.adam);
  HeadFit fit;
  fit.head = head;
  fit.best_dev = mean_log_lik(head, held, class_count);
  int bad = 0;

  std::vector<int> order(train.size());
  std::size_t next = order.size();
  for (long step = 1; step <= config.max_steps; ++step) {
    if (next >= order.size()) {
      std::iota(order.begin(), order.end(), 0);
      for (std::size_t i = order.size() - 1; i > 0; --i) std::swap(order[i], order[uniform_index(rng, i + 1)]);
      next = 0;
    }
    const std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(config.batch_size), order.size() - next);
    const TokenBatch batch =
        make_batch(train, std::vector<int>(order.begin() + static_cast<long>(next),
                                           order.begin() + static_cast<long>(next + take)));
    next += take;
    const HeadLoss loss = head_nll(head, batch.embeddings, batch.gold, class_count, true);
    adam.step(params, flatten(loss.grad));
    head = reshape_theta(params, e, c);
    fit.steps = step;
    if (step % config.validation_every == 0) {
      const double d = mean_log_lik(head, held, class_count);
      if (d > fit.best_dev) {
        fit.best_dev = d;
        fit.head = head;
        bad = 0;
      } else if (++bad >= config.patience) {
        break;
      }
    }
  }
  return fit;
}

std::string cell_stream_tag(const Cell& cell) { return "head:" + cell.task + "/" + cell.lang; }

std::string joint_stream_tag(const TaskId& task, const std::vector<LangId>& langs) {
  return "head:" + task + "/" + join(langs, '+');
}

ClassifierMap train_cell_classifiers(const std::vector<TrainCell>& seen, int e, int c, const HeadTrainConfig& config) {
  ClassifierMap out;
  for (const auto& cell : seen) {
    CellClassifier cc;
    cc.cell = cell.cell;
    cc.head = train_head(cell.train, cell.dev, e, c, cell.schema.class_count(), config, cell_stream_tag(cell.cell)).head;
    cc.train_tokens = token_count(cell.train);
    out.emplace(cell.cell, std::move(cc));
  }
  return out;
}

namespace {

std::vector<const CellClassifier*> same_task_sources(const ClassifierMap& classifiers, const Cell& target) {
  std::vector<const CellClassifier*> out;
  for (const auto& [cell, cc] : classifiers) {
    if (cell.task == target.task && cell.lang != target.lang) out.push_back(&cc);
  }
  if (out.empty()) throw DataError("no seen source cell shares the task of " + target.key());
  return out;  // map order: lexicographic by language within a task
}

}  // namespace

Cell nearest_source(const ClassifierMap& classifiers, const LangFeatures& features, const Cell& target) {
  const Eigen::VectorXd& t = features.at(target.lang);
  const CellClassifier* best = nullptr;
  double best_cos = -2.0;
  for (const auto* cc : same_task_sources(classifiers, target)) {
    const Eigen::VectorXd& s = features.at(cc->cell.lang);
    if (s.size() != t.size()) throw DataError("language features differ in length");
    const double cos = s.dot(t) / (s.norm() * t.norm());
    if (cos > best_cos) {
      best_cos = cos;
      best = cc;
    }
  }
  return best->cell;
}

Cell largest_source(const ClassifierMap& classifiers, const Cell& target) {
  const CellClassifier* best = nullptr;
  for (const auto* cc : same_task_sources(classifiers, target)) {
    if (!best || cc->train_tokens > best->train_tokens) best = cc;
  }
  return best->cell;
}

PredictiveReport nearest_source_predict(const ClassifierMap& classifiers, const LangFeatures& features,
                                        const TaskSchema& schema, const Cell& target,
                                        const std::vector<EncodedSentence>& examples) {
  const Cell src = nearest_source(classifiers, features, target);
  return head_predict(classifiers.at(src).head, target, schema, examples);
}

PredictiveReport largest_source_predict(const ClassifierMap& classifiers, const TaskSchema& schema,
                                        const Cell& target, const std::vector<EncodedSentence>& examples) {
  const Cell src = largest_source(classifiers, target);
  return head_predict(classifiers.at(src).head, target, schema, examples);
}

std::map<TaskId, HeadParams> joint_multilingual(const std::vector<TrainCell>& seen, int e, int c,
                                                const HeadTrainConfig& config) {
  std::vector<TaskId> tasks;
  for (const auto& cell : seen) {
    if (std::find(tasks.begin(), tasks.end(), cell.cell.task) == tasks.end()) tasks.push_back(cell.cell.task);
  }
  std::map<TaskId, HeadParams> out;
  for (const auto& task : tasks) {
    std::vector<EncodedSentence> train, dev;
    std::vector<LangId> langs;
    int classes = 0;
    for (const auto& cell : seen) {
      if (cell.cell.task != task) continue;
      langs.push_back(cell.cell.lang);
      classes = cell.schema.class_count();
      train.insert(train.end(), cell.train.begin(), cell.train.end());
      dev.insert(dev.end(), cell.dev.begin(), cell.dev.end());
    }
    out.emplace(task, train_head(train, dev, e, c, classes, config, joint_stream_tag(task, langs)).head);
  }
  return out;
}

PredictiveReport joint_predict(const std::map<TaskId, HeadParams>& heads, const TaskSchema& schema,
                               const Cell& target, const std::vector<EncodedSentence>& examples) {
  const auto it = heads.find(target.task);
  if (it == heads.end()) throw DataError("joint model has no head for task '" + target.task + "'");
  return head_predict(it->second, target, schema, examples);
}

}  // namespace psf
