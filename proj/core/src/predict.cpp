#include "psf/predict.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "psf/gauss.hpp"
#include "psf/rng.hpp"

namespace psf {

namespace {

double entropy_of(const Eigen::VectorXd& p) {
  double h = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (p(i) > 0.0) h -= p(i) * std::log(p(i));
  }
  return std::max(h, 0.0);
}

std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

const Posterior& task_posterior(const Model& model, const Cell& cell) {
  if (!model.latents.has_task(cell.task)) throw ConfigError("unknown task '" + cell.task + "'");
  return model.latents.task(cell.task);
}

const Posterior& lang_posterior(const Model& model, const Cell& cell) {
  if (!model.latents.has_lang(cell.lang)) throw ConfigError("unknown language '" + cell.lang + "'");
  return model.latents.lang(cell.lang);
}

Eigen::VectorXd draw_latent(const Posterior& q, Family family, Engine& engine, bool zero) {
  NoiseDraw n;
  n.epsilon = Eigen::VectorXd::Zero(q.mean.size());
  n.zeta = Eigen::VectorXd::Zero(q.factor.cols());
  if (!zero) {
    fill_normal(engine, n.epsilon);
    fill_normal(engine, n.zeta);
  }
  return family == Family::low_rank ? sample_lowrank(q.as_lowrank(), n) : sample_diag(q.as_diag(), n);
}

}  // namespace

double PredictiveReport::score() const {
  return schema.span_based ? aggregates.spans.f1() : aggregates.accuracy;
}

int argmax(const Eigen::VectorXd& probs) {
  int best = 0;
  for (Eigen::Index i = 1; i < probs.size(); ++i) {
    if (probs(i) > probs(best)) best = static_cast<int>(i);
  }
  return best;
}

PredictiveReport build_report(const Cell& cell, const TaskSchema& schema,
                              const std::vector<EncodedSentence>& examples, const ProbabilityFn& probabilities) {
  PredictiveReport r;
  r.cell = cell;
  r.schema = schema;
  r.n_examples = examples.size();
  std::vector<std::size_t> first(examples.size());
  for (std::size_t x = 0; x < examples.size(); ++x) {
    const EncodedSentence& s = examples[x];
    const Eigen::MatrixXd p = probabilities(s);
    if (p.rows() != static_cast<Eigen::Index>(s.gold.size()) || p.cols() != schema.class_count()) {
      throw NumericError("probability matrix of " + s.id + " has the wrong shape");
    }
    first[x] = r.records.size();
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
      TokenRecord t;
      t.example_id = s.id;
      t.token = static_cast<int>(i);
      t.gold = s.gold[static_cast<std::size_t>(i)];
      t.probs = p.row(i).transpose();
      t.predicted = argmax(t.probs);
      t.entropy = entropy_of(t.probs);
      r.records.push_back(std::move(t));
    }
  }

  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return examples[a].id < examples[b].id;
  });
  ReportAggregates& agg = r.aggregates;
  double entropy_sum = 0.0;
  for (std::size_t x : order) {
    const std::size_t n = examples[x].gold.size();
    std::vector<std::string> gold, pred;
    bool complete = true;
    for (std::size_t i = 0; i < n; ++i) {
      const TokenRecord& t = r.records[first[x] + i];
      ++agg.tokens;
      entropy_sum += t.entropy;
      if (t.gold < 0) {
        complete = false;
        continue;
      }
      ++agg.labelled;
      if (t.gold == t.predicted) ++agg.correct;
      if (schema.span_based) {
        gold.push_back(schema.labels[static_cast<std::size_t>(t.gold)]);
        pred.push_back(schema.labels[static_cast<std::size_t>(t.predicted)]);
      }
    }
    if (schema.span_based && complete) agg.spans += count_spans(gold, pred);
  }
  agg.accuracy = agg.labelled == 0 ? 0.0 : static_cast<double>(agg.correct) / static_cast<double>(agg.labelled);
  agg.mean_entropy = agg.tokens == 0 ? 0.0 : entropy_sum / static_cast<double>(agg.tokens);
  return r;
}

HeadParams plug_in_head(const Model& model, const Cell& cell) {
  const HyperDims& d = model.net.dims();
  return reshape_theta(forward_mean(model.net, task_posterior(model, cell).mean, lang_posterior(model, cell).mean),
                       d.e, d.c);
}

PredictiveReport plug_in_predict(const Model& model, const Cell& cell, const std::vector<EncodedSentence>& examples) {
  const TaskSchema& schema = model.schema(cell.task);
  return head_predict(plug_in_head(model, cell), cell, schema, examples);
}

PredictiveReport bma_predict(const Model& model, const Cell& cell, const std::vector<EncodedSentence>& examples,
                             const BmaOptions& options) {
  if (options.samples < 1) throw ConfigError("bma: samples must be >= 1");
  const Posterior& tq = task_posterior(model, cell);
  const Posterior& lq = lang_posterior(model, cell);
  const TaskSchema& schema = model.schema(cell.task);
  const HyperDims& d = model.net.dims();
  const Family family = model.latents.family();
  const int classes = schema.class_count();
  return build_report(cell, schema, examples, [&](const EncodedSentence& s) {
    Engine engine = make_engine(options.seed, "bma/" + s.id);
    Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(s.embeddings.rows(), classes);
    for (int v = 0; v < options.samples; ++v) {
      const Eigen::VectorXd t = draw_latent(tq, family, engine, options.zero_noise);
      const Eigen::VectorXd l = draw_latent(lq, family, engine, options.zero_noise);
      const ThetaDist dist = forward(model.net, t, l);
      Eigen::VectorXd noise = Eigen::VectorXd::Zero(d.d());
      if (!options.zero_noise) fill_normal(engine, noise);
      const HeadParams head = reshape_theta(sample_theta(dist.mean, dist.var, noise), d.e, d.c);
      sum += class_probabilities(head, s.embeddings, classes);
    }
    return Eigen::MatrixXd(sum / static_cast<double>(options.samples));
  });
}

PredictiveReport head_predict(const HeadParams& head, const Cell& cell, const TaskSchema& schema,
                              const std::vector<EncodedSentence>& examples) {
  return build_report(cell, schema, examples, [&](const EncodedSentence& s) {
    return class_probabilities(head, s.embeddings, schema.class_count());
  });
}

CellSummary summarize(const PredictiveReport& report) {
  CellSummary s;
  s.cell = report.cell;
  s.n_examples = report.n_examples;
  s.accuracy = report.aggregates.accuracy;
  s.score = report.score();
  s.mean_entropy = report.aggregates.mean_entropy;
  return s;
}

Correlation entropy_accuracy_correlation(const std::vector<CellSummary>& cells) {
  std::vector<double> h, a;
  for (const auto& c : cells) {
    h.push_back(c.mean_entropy);
    a.push_back(c.accuracy);
  }
  return pearson(h, a);
}

Correlation entropy_accuracy_correlation(const std::vector<PredictiveReport>& reports) {
  std::vector<CellSummary> cells;
  for (const auto& r : reports) {
    if (r.aggregates.labelled == 0) {
      throw DataError("cell " + r.cell.key() + " has no gold labels to correlate against");
    }
    cells.push_back(summarize(r));
  }
  return entropy_accuracy_correlation(cells);
}

void write_report(const PredictiveReport& report, const std::string& path, bool per_example) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write report '" + path + "'");
  const auto& labels = report.schema.labels;
  auto label = [&](int i) { return i < 0 ? std::string("-") : labels[static_cast<std::size_t>(i)]; };
  if (per_example) {
    out << "example_id\ttokens\taccuracy\tmean_entropy\n";
    std::size_t i = 0;
    while (i < report.records.size()) {
      std::size_t j = i;
      long long labelled = 0, correct = 0;
      double h = 0.0;
      while (j < report.records.size() && report.records[j].example_id == report.records[i].example_id) {
        const auto& t = report.records[j];
        h += t.entropy;
        if (t.gold >= 0) {
          ++labelled;
          if (t.gold == t.predicted) ++correct;
        }
        ++j;
      }
      const double n = static_cast<double>(j - i);
      out << report.records[i].example_id << '\t' << (j - i) << '\t'
          << (labelled == 0 ? std::string("-") : fmt(static_cast<double>(correct) / static_cast<double>(labelled)))
          << '\t' << fmt(h / n) << '\n';
      i = j;
    }
  } else {
    out << "example_id\ttoken\tgold\tpredicted\tentropy";
    for (const auto& l : labels) out << "\tp(" << l << ")";
    out << '\n';
    for (const auto& t : report.records) {
      out << t.example_id << '\t' << t.token << '\t' << label(t.gold) << '\t' << label(t.predicted) << '\t'
          << fmt(t.entropy);
      for (Eigen::Index c = 0; c < t.probs.size(); ++c) out << '\t' << fmt(t.probs(c));
      out << '\n';
    }
  }
  const auto& a = report.aggregates;
  out << "# task\t" << report.cell.task << "\n# lang\t" << report.cell.lang << "\n# examples\t" << report.n_examples
      << "\n# tokens\t" << a.tokens << "\n# labelled\t" << a.labelled << "\n# accuracy\t" << fmt(a.accuracy)
      << "\n# mean_entropy\t" << fmt(a.mean_entropy) << '\n';
  if (report.schema.span_based) {
    out << "# span_precision\t" << fmt(a.spans.precision()) << "\n# span_recall\t" << fmt(a.spans.recall())
        << "\n# span_f1\t" << fmt(a.spans.f1()) << '\n';
  }
  if (!out) throw DataError("failed writing report '" + path + "'");
}

void write_cell_summaries(const std::vector<CellSummary>& cells, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write summary '" + path + "'");
  out << "task\tlang\tn_examples\taccuracy_or_f1\tmean_entropy\taccuracy\n";
  for (const auto& c : cells) {
    out << c.cell.task << '\t' << c.cell.lang << '\t' << c.n_examples << '\t' << fmt(c.score) << '\t'
        << fmt(c.mean_entropy) << '\t' << fmt(c.accuracy) << '\n';
  }
  if (!out) throw DataError("failed writing summary '" + path + "'");
}

std::vector<CellSummary> load_cell_summaries(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read summary '" + path + "'");
  std::vector<CellSummary> cells;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (lineno == 1 || line.empty()) continue;
    std::istringstream ls(line);
    CellSummary c;
    if (!(ls >> c.cell.task >> c.cell.lang >> c.n_examples >> c.score >> c.mean_entropy >> c.accuracy)) {
      throw DataError(path + ":" + std::to_string(lineno) + ": malformed summary row");
    }
    cells.push_back(c);
  }
  return cells;
}

}  // namespace psf
