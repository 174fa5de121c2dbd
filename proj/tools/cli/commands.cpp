#include "cli/commands.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>

#include "psf/baselines.hpp"
#include "psf/container.hpp"
#include "psf/data.hpp"
#include "psf/predict.hpp"
#include "psf/synth.hpp"
#include "psf/train.hpp"

namespace psf::cli {

namespace fs = std::filesystem;

System parse_system(const std::string& name) {
  if (name == "factor") return System::factor;
  if (name == "ns") return System::ns;
  if (name == "ls") return System::ls;
  if (name == "jm") return System::jm;
  throw UsageError("unknown system '" + name + "' (expected factor, ns, ls or jm)");
}

const char* to_string(System system) {
  switch (system) {
    case System::factor: return "factor";
    case System::ns: return "ns";
    case System::ls: return "ls";
    case System::jm: return "jm";
  }
  return "?";
}

namespace {

std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6f", x);
  return buf;
}

std::string out_path(const RunConfig& rc, const std::string& name) {
  return (fs::path(rc.paths.output) / name).string();
}

std::string checkpoint_path(const RunConfig& rc) {
  return rc.paths.checkpoint.empty() ? out_path(rc, "model.ckpt") : rc.paths.checkpoint;
}

// Grid, partition and embeddings of a run.
struct Workspace {
  Grid grid;
  CellPartition partition;
  std::unique_ptr<Embedder> embedder;
};

std::unique_ptr<Embedder> make_embedder(const RunConfig& rc, const Manifest& manifest) {
  std::size_t with = 0;
  for (const auto& e : manifest.entries) with += e.embeddings_path.empty() ? 0 : 1;
  if (with == 0) return std::make_unique<Embedder>(Embedder::from_featurizer(rc.featurizer));
  if (with != manifest.entries.size()) {
    throw DataError("manifest mixes cells with and without precomputed embeddings");
  }
  PrecomputedEmbeddings table(rc.model.e);
  for (const auto& e : manifest.entries) {
    PrecomputedEmbeddings part = load_precomputed(e.embeddings_path);
    if (part.width() != rc.model.e) {
      throw EmbeddingError(EmbeddingError::Kind::width_mismatch,
                           e.embeddings_path + ": width " + std::to_string(part.width()) + " but dims.e is " +
                               std::to_string(rc.model.e));
    }
    table.merge(part);
  }
  return std::make_unique<Embedder>(Embedder::from_table(std::move(table)));
}

// Explicit path, else the file inside <output>/data written by `synth`.
std::string data_file(const RunConfig& rc, const std::string& configured, const std::string& name) {
  if (!configured.empty()) return configured;
  const fs::path p = fs::path(rc.paths.output) / "data" / name;
  return fs::exists(p) ? p.string() : std::string();
}

Workspace load_workspace(const RunConfig& rc, const std::map<TaskId, TaskSchema>* schemas) {
  const std::string manifest_path = data_file(rc, rc.paths.manifest, "manifest.txt");
  if (manifest_path.empty()) throw UsageError("paths.manifest is required (or run synth into the output directory)");
  const Manifest manifest = load_manifest(manifest_path);
  Workspace ws;
  ws.grid = load_grid(manifest, schemas);
  ws.embedder = make_embedder(rc, manifest);
  if (!rc.paths.partition.empty()) {
    ws.partition = load_partition(rc.paths.partition);
    const auto cells = ws.grid.cells();
    if (std::set<Cell>(cells.begin(), cells.end()) != std::set<Cell>(ws.partition.grid.begin(), ws.partition.grid.end())) {
      throw DataError("partition file '" + rc.paths.partition + "' does not cover the manifest's cells");
    }
  } else {
    ws.partition = partition(ws.grid.cells(), rc.hold_out_fraction, rc.seed);
    assign_splits(ws.partition, ws.grid, rc.seed);
  }
  return ws;
}

Cell parse_cell(const std::string& text) {
  const auto colon = text.find(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 == text.size()) {
    throw UsageError("cell '" + text + "' must look like task:lang");
  }
  return {text.substr(0, colon), text.substr(colon + 1)};
}

// Cells to evaluate: the --cell selection, else every cell (or only the
// unseen ones when `unseen_only`).
std::vector<Cell> target_cells(const Workspace& ws, const Flags& flags, bool unseen_only) {
  std::vector<Cell> out;
  if (!flags.cells.empty()) {
    for (const auto& t : flags.cells) {
      const Cell c = parse_cell(t);
      ws.grid.corpus(c);  // throws for cells outside the grid
      out.push_back(c);
    }
    return out;
  }
  for (const auto& c : ws.grid.cells()) {
    if (!unseen_only || !ws.partition.is_seen(c)) out.push_back(c);
  }
  return out;
}

// Seen cells are scored on their test split, unseen cells on all data.
std::vector<EncodedSentence> eval_examples(const Workspace& ws, const Cell& cell) {
  const Corpus& corpus = ws.grid.corpus(cell);
  if (ws.partition.is_seen(cell)) return encode(corpus, *ws.embedder, ws.partition.splits.at(cell).test);
  return encode_all(corpus, *ws.embedder);
}

using Predictor = std::function<PredictiveReport(const Cell&, const std::vector<EncodedSentence>&)>;

struct SystemState {
  Workspace ws;
  Model model;
  ClassifierMap classifiers;
  std::map<TaskId, HeadParams> joint;
  LangFeatures features;
  Predictor predict;
};

std::unique_ptr<SystemState> prepare(const RunConfig& rc, const Flags& flags) {
  if (flags.bma < 0) throw UsageError("--bma must be positive");
  if (flags.bma > 0 && flags.system != System::factor) throw UsageError("--bma applies to the factor system only");
  const std::string features_path = data_file(rc, rc.paths.features, "lang_features.txt");
  if (flags.system == System::ns && features_path.empty()) {
    throw UsageError("the ns baseline needs a language feature file (paths.features)");
  }
  auto st = std::make_unique<SystemState>();
  if (flags.system == System::factor) {
    const std::string path = checkpoint_path(rc);
    if (!fs::exists(path)) throw UsageError("missing checkpoint '" + path + "' (run train first)");
    st->model = load_model(read_container(path));
    st->ws = load_workspace(rc, &st->model.schemas);
    SystemState* s = st.get();
    if (flags.bma > 0) {
      BmaOptions opt;
      opt.samples = flags.bma;
      opt.seed = derive_seed(rc.seed, "predict/bma");
      st->predict = [s, opt](const Cell& c, const std::vector<EncodedSentence>& ex) {
        return bma_predict(s->model, c, ex, opt);
      };
    } else {
      st->predict = [s](const Cell& c, const std::vector<EncodedSentence>& ex) {
        return plug_in_predict(s->model, c, ex);
      };
    }
    return st;
  }

  st->ws = load_workspace(rc, nullptr);
  const int c = std::max(rc.model.c, st->ws.grid.max_class_count());
  const std::vector<TrainCell> seen = seen_cells(st->ws.grid, st->ws.partition, *st->ws.embedder);
  SystemState* s = st.get();
  const int e = st->ws.embedder->width();
  if (flags.system == System::jm) {
    st->joint = joint_multilingual(seen, e, c, rc.baseline);
    st->predict = [s](const Cell& cell, const std::vector<EncodedSentence>& ex) {
      return joint_predict(s->joint, s->ws.grid.schemas.at(cell.task), cell, ex);
    };
    return st;
  }
  st->classifiers = train_cell_classifiers(seen, e, c, rc.baseline);
  if (flags.system == System::ns) {
    st->features = load_lang_features(features_path);
    st->predict = [s](const Cell& cell, const std::vector<EncodedSentence>& ex) {
      const TaskSchema& schema = s->ws.grid.schemas.at(cell.task);
      if (s->ws.partition.is_seen(cell)) return head_predict(s->classifiers.at(cell).head, cell, schema, ex);
      return nearest_source_predict(s->classifiers, s->features, schema, cell, ex);
    };
  } else {
    st->predict = [s](const Cell& cell, const std::vector<EncodedSentence>& ex) {
      const TaskSchema& schema = s->ws.grid.schemas.at(cell.task);
      if (s->ws.partition.is_seen(cell)) return head_predict(s->classifiers.at(cell).head, cell, schema, ex);
      return largest_source_predict(s->classifiers, schema, cell, ex);
    };
  }
  return st;
}

std::string mode_name(const Flags& flags) {
  std::string name = to_string(flags.system);
  if (flags.bma > 0) name += "-bma" + std::to_string(flags.bma);
  return name;
}

void print_correlation(const std::vector<CellSummary>& unseen, std::ostream& out, const std::string& file) {
  std::ofstream f(file, std::ios::binary);
  f << "n\tpearson_r\tp_value\n";
  try {
    const Correlation c = entropy_accuracy_correlation(unseen);
    f << unseen.size() << '\t' << fmt(c.r) << '\t' << fmt(c.p_value) << '\n';
    out << "entropy/accuracy correlation over " << unseen.size() << " unseen cells: r = " << fmt(c.r)
        << ", p = " << fmt(c.p_value) << '\n';
  } catch (const NumericError& e) {
    f << unseen.size() << "\tNA\tNA\n";
    out << "entropy/accuracy correlation unavailable: " << e.what() << '\n';
  }
}

int evaluate(const RunConfig& rc, const Flags& flags, std::ostream& out, const std::string& dir_name) {
  auto st = prepare(rc, flags);
  const fs::path dir = fs::path(rc.paths.output) / dir_name / mode_name(flags);
  fs::create_directories(dir);
  std::vector<CellSummary> all, unseen;
  out << "task\tlang\tstatus\tn_examples\taccuracy_or_f1\tmean_entropy\n";
  for (const auto& cell : target_cells(st->ws, flags, false)) {
    const PredictiveReport report = st->predict(cell, eval_examples(st->ws, cell));
    const CellSummary s = summarize(report);
    const bool seen = st->ws.partition.is_seen(cell);
    out << cell.task << '\t' << cell.lang << '\t' << (seen ? "seen" : "unseen") << '\t' << s.n_examples << '\t'
        << fmt(s.score) << '\t' << fmt(s.mean_entropy) << '\n';
    all.push_back(s);
    if (!seen) unseen.push_back(s);
  }
  write_cell_summaries(all, (dir / "summary.tsv").string());
  write_cell_summaries(unseen, (dir / "summary_unseen.tsv").string());
  double mean = 0.0;
  for (const auto& s : unseen) mean += s.score;
  if (!unseen.empty()) {
    out << "mean unseen accuracy_or_f1: " << fmt(mean / static_cast<double>(unseen.size())) << '\n';
  }
  print_correlation(unseen, out, (dir / "correlation.tsv").string());
  return 0;
}

}  // namespace

void echo_config(const RunConfig& rc) {
  fs::create_directories(rc.paths.output);
  std::ofstream f(out_path(rc, "config.resolved.json"), std::ios::binary);
  if (!f) throw DataError("cannot write to output directory '" + rc.paths.output + "'");
  f << dump_run_config(rc);
}

int run_synth(const RunConfig& rc, std::ostream& out) {
  const GroundTruth truth = generate(rc.synth);
  const std::string dir = out_path(rc, "data");
  write_synth(truth, dir);
  out << "wrote " << truth.corpora.size() << " cells to " << dir << '\n';
  const Embedder embedder = Embedder::from_table(truth.embeddings);
  for (const auto& corpus : truth.corpora) {
    const auto examples = encode_all(corpus, embedder);
    out << corpus.cell.task << '\t' << corpus.cell.lang << "\toracle accuracy "
        << fmt(oracle_score(truth, corpus.cell, examples)) << '\n';
  }
  return 0;
}

int run_train(const RunConfig& rc, const Flags& flags, std::ostream& out) {
  Workspace ws = load_workspace(rc, nullptr);
  write_partition(ws.partition, out_path(rc, "partition.tsv"));
  std::vector<TrainCell> cells = seen_cells(ws.grid, ws.partition, *ws.embedder);
  ModelSpec spec = rc.model;
  if (ws.embedder->width() != spec.e) throw ConfigError("dims.e does not match the embedding width");
  Model model = init_model(spec, ws.grid.tasks(), ws.grid.langs(), ws.grid.schemas, rc.seed);
  if (rc.train.freeze_factor) {
    for (auto* posts : {&model.latents.task_posteriors(), &model.latents.lang_posteriors()}) {
      for (auto& p : *posts) p.factor.setZero();
    }
  }

  Trainer trainer(model, cells, rc.train);
  const bool resume = !flags.resume.empty();
  if (resume) {
    trainer.restore(read_container(flags.resume));
    out << "resumed from " << flags.resume << " at step " << trainer.step() << '\n';
  }
  const auto mode = resume ? std::ios::app : std::ios::trunc;
  std::ofstream log(out_path(rc, "train.log"), std::ios::binary | mode);
  std::ofstream dev(out_path(rc, "dev.log"), std::ios::binary | mode);
  if (!log || !dev) throw DataError("cannot write logs to '" + rc.paths.output + "'");
  TrainHooks hooks;
  hooks.on_step = [&](const StepRecord& r) { log << format_step(r) << '\n'; };
  hooks.on_validation = [&](long step, double d) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", d);
    dev << step << '\t' << buf << '\n';
  };
  hooks.on_checkpoint = [&](const Trainer& t) { write_container(t.to_checkpoint(), out_path(rc, "last.ckpt")); };

  const TrainSummary s = trainer.run(hooks);
  write_container(trainer.to_checkpoint(), out_path(rc, "last.ckpt"));
  trainer.load_best();
  write_container(trainer.to_checkpoint(), checkpoint_path(rc));
  out << "trained " << s.steps << " steps on " << cells.size() << " seen cells"
      << (s.early_stopped ? " (early stop)" : "") << '\n';
  out << "dev objective: initial " << fmt(s.initial_dev) << ", best " << fmt(s.best_dev) << " at step "
      << s.best_step << '\n';
  dev << "# final best " << fmt(s.best_dev) << " at step " << s.best_step << '\n';
  return 0;
}

int run_eval(const RunConfig& rc, const Flags& flags, std::ostream& out) { return evaluate(rc, flags, out, "eval"); }

int run_baseline(const RunConfig& rc, const Flags& flags, std::ostream& out) {
  if (flags.system == System::factor) throw UsageError("baseline needs --system ns, ls or jm");
  return evaluate(rc, flags, out, "baseline");
}

int run_predict(const RunConfig& rc, const Flags& flags, std::ostream& out) {
  auto st = prepare(rc, flags);
  const fs::path dir = fs::path(rc.paths.output) / "predict" / mode_name(flags);
  fs::create_directories(dir);
  for (const auto& cell : target_cells(st->ws, flags, true)) {
    const PredictiveReport report = st->predict(cell, eval_examples(st->ws, cell));
    const std::string file = (dir / (cell.key() + ".tsv")).string();
    write_report(report, file, flags.per_example);
    out << cell.task << '\t' << cell.lang << '\t' << report.records.size() << " tokens\t" << fmt(report.score())
        << '\t' << file << '\n';
  }
  return 0;
}

int run_entropy(const RunConfig& rc, const Flags& flags, std::ostream& out) {
  auto st = prepare(rc, flags);
  const fs::path dir = fs::path(rc.paths.output) / "entropy" / mode_name(flags);
  fs::create_directories(dir);
  std::ofstream f((dir / "entropy.tsv").string(), std::ios::binary);
  if (flags.per_example) {
    f << "task\tlang\texample_id\ttokens\tmean_entropy\taccuracy\n";
  } else {
    f << "task\tlang\texample_id\ttoken\tentropy\tcorrect\n";
  }
  std::vector<CellSummary> cells;
  std::size_t rows = 0;
  char buf[40];
  for (const auto& cell : target_cells(st->ws, flags, true)) {
    const PredictiveReport r = st->predict(cell, eval_examples(st->ws, cell));
    cells.push_back(summarize(r));
    std::size_t i = 0;
    while (i < r.records.size()) {
      std::size_t j = i;
      double h = 0.0;
      long long labelled = 0, correct = 0;
      while (j < r.records.size() && r.records[j].example_id == r.records[i].example_id) {
        const TokenRecord& t = r.records[j];
        if (!flags.per_example) {
          std::snprintf(buf, sizeof buf, "%.17g", t.entropy);
          f << cell.task << '\t' << cell.lang << '\t' << t.example_id << '\t' << t.token << '\t' << buf << '\t'
            << (t.gold < 0 ? "-" : (t.gold == t.predicted ? "1" : "0")) << '\n';
          ++rows;
        }
        h += t.entropy;
        if (t.gold >= 0) {
          ++labelled;
          correct += t.gold == t.predicted ? 1 : 0;
        }
        ++j;
      }
      if (flags.per_example) {
        std::snprintf(buf, sizeof buf, "%.17g", h / static_cast<double>(j - i));
        f << cell.task << '\t' << cell.lang << '\t' << r.records[i].example_id << '\t' << (j - i) << '\t' << buf
          << '\t' << (labelled == 0 ? std::string("-") : fmt(static_cast<double>(correct) / static_cast<double>(labelled)))
          << '\n';
        ++rows;
      }
      i = j;
    }
  }
  write_cell_summaries(cells, (dir / "summary.tsv").string());
  out << "wrote " << rows << (flags.per_example ? " example" : " token") << " rows to " << (dir / "entropy.tsv").string()
      << '\n';
  print_correlation(cells, out, (dir / "correlation.tsv").string());
  return 0;
}

}  // namespace psf::cli
