#include "psf/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "psf/gauss.hpp"
#include "psf/likelihood.hpp"
#include "psf/predict.hpp"
#include "psf/rng.hpp"
#include "psf/train.hpp"

namespace psf {

void SynthConfig::validate() const {
  if (n_tasks < 1 || n_langs < 1) throw ConfigError("synth: n_tasks and n_langs must be >= 1");
  if (h < 1 || e < 1) throw ConfigError("synth: h and e must be >= 1");
  if (static_cast<int>(class_counts.size()) != n_tasks) {
    throw ConfigError("synth: class_counts needs one entry per task (" + std::to_string(n_tasks) + ")");
  }
  for (int c : class_counts) {
    if (c < 1) throw ConfigError("synth: class counts must be >= 1");
  }
  if (examples_per_cell < 1 || sentence_length < 1) {
    throw ConfigError("synth: examples_per_cell and sentence_length must be >= 1");
  }
  for (int w : generator_hidden) {
    if (w < 1) throw ConfigError("synth: generator widths must be >= 1");
  }
  if (!(theta_var > 0.0) || !(feature_noise >= 0.0)) {
    throw ConfigError("synth: theta_var must be > 0 and feature_noise >= 0");
  }
}

HeadParams GroundTruth::head(const Cell& cell) const {
  const auto it = thetas.find(cell);
  if (it == thetas.end()) throw DataError("no true head for cell " + cell.key());
  return reshape_theta(it->second, generator.dims().e, generator.dims().c);
}

namespace {

int sample_class(Engine& rng, const Eigen::VectorXd& probs) {
  const double u = uniform(rng, 0.0, 1.0);
  double acc = 0.0;
  for (Eigen::Index i = 0; i < probs.size(); ++i) {
    acc += probs(i);
    if (u < acc) return static_cast<int>(i);
  }
  return static_cast<int>(probs.size() - 1);
}

}  // namespace

GroundTruth generate(const SynthConfig& config) {
  config.validate();
  GroundTruth g;
  g.config = config;
  for (int i = 0; i < config.n_tasks; ++i) g.tasks.push_back("task" + std::to_string(i));
  for (int j = 0; j < config.n_langs; ++j) g.langs.push_back("lang" + std::to_string(j));

  Engine latent_rng = make_engine(config.seed, "synth/latents");
  for (const auto& t : g.tasks) {
    Eigen::VectorXd v(config.h);
    fill_normal(latent_rng, v);
    g.task_latents[t] = v;
  }
  for (const auto& l : g.langs) {
    Eigen::VectorXd v(config.h);
    fill_normal(latent_rng, v);
    g.lang_latents[l] = v;
  }

  Engine feature_rng = make_engine(config.seed, "synth/features");
  for (const auto& l : g.langs) {
    Eigen::VectorXd noise(config.h);
    fill_normal(feature_rng, noise);
    g.features.vectors[l] = g.lang_latents[l] + std::sqrt(config.feature_noise) * noise;
  }

  HyperDims dims;
  dims.h = config.h;
  dims.e = config.e;
  dims.c = *std::max_element(config.class_counts.begin(), config.class_counts.end());
  dims.hidden = config.generator_hidden;
  g.generator = init_hypernet(dims, derive_seed(config.seed, "synth/generator"));
  g.generator.mean_head().weight *= config.theta_scale;
  g.generator.var_head().weight.setZero();
  g.generator.var_head().bias.setConstant(softplus_inverse(config.theta_var));

  for (int i = 0; i < config.n_tasks; ++i) {
    std::vector<std::string> labels;
    for (int k = 0; k < config.class_counts[static_cast<std::size_t>(i)]; ++k) labels.push_back("c" + std::to_string(k));
    g.schemas[g.tasks[static_cast<std::size_t>(i)]] = make_schema(g.tasks[static_cast<std::size_t>(i)], labels);
  }

  g.embeddings = PrecomputedEmbeddings(config.e);
  for (const auto& t : g.tasks) {
    for (const auto& l : g.langs) {
      const Cell cell{t, l};
      const std::string key = cell.key();
      Engine theta_rng = make_engine(config.seed, "synth/theta/" + key);
      const ThetaDist dist = forward(g.generator, g.task_latents[t], g.lang_latents[l]);
      Eigen::VectorXd noise(dims.d());
      fill_normal(theta_rng, noise);
      g.thetas[cell] = sample_theta(dist.mean, dist.var, noise);
      const HeadParams head = g.head(cell);
      const TaskSchema& schema = g.schemas[t];

      Engine token_rng = make_engine(config.seed, "synth/tokens/" + key);
      Engine label_rng = make_engine(config.seed, "synth/labels/" + key);
      Corpus corpus;
      corpus.cell = cell;
      corpus.schema = schema;
      for (int s = 0; s < config.examples_per_cell; ++s) {
        const std::string id = sentence_id(cell, static_cast<std::size_t>(s));
        Sentence sentence;
        for (int p = 0; p < config.sentence_length; ++p) {
          Eigen::VectorXd x(config.e);
          fill_normal(token_rng, x);
          const PredictiveDist probs = class_distribution(head, x, schema);
          sentence.tokens.push_back("tok_" + key + "_" + std::to_string(s) + "_" + std::to_string(p));
          sentence.labels.push_back(schema.labels[static_cast<std::size_t>(sample_class(label_rng, probs.probs))]);
          g.embeddings.insert(id, p, std::move(x));
        }
        corpus.sentences.push_back(std::move(sentence));
      }
      g.corpora.push_back(std::move(corpus));
    }
  }
  return g;
}

Container truth_container(const GroundTruth& g) {
  Model m;
  m.latents = LatentStore(g.tasks, g.langs, Family::diagonal, g.config.h, 0);
  for (const auto& t : g.tasks) m.latents.task(t).mean = g.task_latents.at(t);
  for (const auto& l : g.langs) m.latents.lang(l).mean = g.lang_latents.at(l);
  m.net = g.generator;
  m.schemas = g.schemas;
  Container c = save_model(m);
  c.set("synth.truth", "1");
  c.set_int("synth.seed", static_cast<long long>(g.config.seed));
  c.set_int("synth.examples_per_cell", g.config.examples_per_cell);
  c.set_int("synth.sentence_length", g.config.sentence_length);
  c.set_double("synth.theta_scale", g.config.theta_scale);
  c.set_double("synth.theta_var", g.config.theta_var);
  c.set_double("synth.feature_noise", g.config.feature_noise);
  for (const auto& [cell, theta] : g.thetas) c.add_array("theta/" + cell.key(), theta);
  for (const auto& [lang, v] : g.features.vectors) c.add_array("features/" + lang, v);
  return c;
}

GroundTruth load_truth(const std::string& path) {
  const Container c = read_container(path);
  if (!c.has("synth.truth")) throw CheckpointError("'" + path + "' is not a synthetic truth file", "synth.truth");
  const Model m = load_model(c);
  GroundTruth g;
  g.tasks = m.latents.tasks();
  g.langs = m.latents.langs();
  g.generator = m.net;
  g.schemas = m.schemas;
  g.config.n_tasks = static_cast<int>(g.tasks.size());
  g.config.n_langs = static_cast<int>(g.langs.size());
  g.config.h = m.net.dims().h;
  g.config.e = m.net.dims().e;
  g.config.generator_hidden = m.net.dims().hidden;
  g.config.class_counts.clear();
  for (const auto& t : g.tasks) g.config.class_counts.push_back(g.schemas.at(t).class_count());
  g.config.seed = static_cast<std::uint64_t>(c.get_int("synth.seed"));
  g.config.examples_per_cell = static_cast<int>(c.get_int("synth.examples_per_cell"));
  g.config.sentence_length = static_cast<int>(c.get_int("synth.sentence_length"));
  g.config.theta_scale = c.get_double("synth.theta_scale");
  g.config.theta_var = c.get_double("synth.theta_var");
  g.config.feature_noise = c.get_double("synth.feature_noise");
  for (const auto& t : g.tasks) g.task_latents[t] = m.latents.task(t).mean;
  for (const auto& l : g.langs) {
    g.lang_latents[l] = m.latents.lang(l).mean;
    const Eigen::MatrixXd& f = c.array("features/" + l);
    g.features.vectors[l] = Eigen::Map<const Eigen::VectorXd>(f.data(), f.size());
  }
  for (const auto& t : g.tasks) {
    for (const auto& l : g.langs) {
      const Cell cell{t, l};
      const Eigen::MatrixXd& a = c.array("theta/" + cell.key());
      g.thetas[cell] = Eigen::Map<const Eigen::VectorXd>(a.data(), a.size());
    }
  }
  return g;
}

void write_synth(const GroundTruth& g, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  Manifest manifest;
  for (const auto& [task, schema] : g.schemas) {
    write_schema_file(schema, (fs::path(dir) / (task + ".labels")).string());
    manifest.schema_paths[task] = task + ".labels";
  }
  for (const auto& corpus : g.corpora) {
    const std::string key = corpus.cell.key();
    write_conll(corpus, (fs::path(dir) / (key + ".conll")).string());
    PrecomputedEmbeddings table(g.config.e);
    for (std::size_t s = 0; s < corpus.sentences.size(); ++s) {
      const std::string id = sentence_id(corpus.cell, s);
      for (std::size_t p = 0; p < corpus.sentences[s].tokens.size(); ++p) {
        table.insert(id, static_cast<int>(p), g.embeddings.at(id, static_cast<int>(p)));
      }
    }
    write_precomputed(table, (fs::path(dir) / (key + ".emb")).string());
    manifest.entries.push_back({corpus.cell, key + ".conll", key + ".emb"});
  }
  write_manifest(manifest, (fs::path(dir) / "manifest.txt").string());
  write_lang_features(g.features, (fs::path(dir) / "lang_features.txt").string());
  write_container(truth_container(g), (fs::path(dir) / "truth.ckpt").string());
}

double oracle_score(const GroundTruth& truth, const Cell& cell, const std::vector<EncodedSentence>& examples) {
  const auto it = truth.schemas.find(cell.task);
  if (it == truth.schemas.end()) throw DataError("unknown task '" + cell.task + "'");
  return head_predict(truth.head(cell), cell, it->second, examples).aggregates.accuracy;
}

Eigen::VectorXd label_marginals(const std::vector<EncodedSentence>& examples, int class_count) {
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(class_count);
  double n = 0.0;
  for (const auto& s : examples) {
    for (int g : s.gold) {
      if (g < 0 || g >= class_count) continue;
      counts(g) += 1.0;
      n += 1.0;
    }
  }
  return n > 0.0 ? Eigen::VectorXd(counts / n) : counts;
}

}  // namespace psf
