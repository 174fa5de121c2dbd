#include "cli/run_config.hpp"

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace psf::cli {

namespace {

using nlohmann::json;

const json& section(const json& root, const char* name) {
  static const json empty = json::object();
  if (!root.contains(name)) return empty;
  const json& s = root.at(name);
  if (!s.is_object()) throw ConfigError(std::string("config: '") + name + "' must be an object");
  return s;
}

void check_keys(const json& obj, const std::string& where, const std::set<std::string>& known) {
  for (const auto& [key, value] : obj.items()) {
    if (!known.count(key)) {
      throw ConfigError("config: unknown key '" + (where.empty() ? key : where + "." + key) + "'");
    }
  }
}

template <class T>
void read(const json& obj, const std::string& where, const char* key, T& out) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("config: '" + (where.empty() ? std::string(key) : where + "." + key) +
                      "' has the wrong type (" + e.what() + ")");
  }
}

std::string resolve(const std::string& base, const std::string& p) {
  if (p.empty() || base.empty() || std::filesystem::path(p).is_absolute()) return p;
  return (std::filesystem::path(base) / p).lexically_normal().string();
}

}  // namespace

void RunConfig::apply_seed(std::uint64_t s) {
  seed = s;
  train.seed = s;
  baseline.seed = s;
  synth.seed = s;
  featurizer.hash_seed = s;
}

RunConfig parse_run_config(const std::string& json_text, const std::string& base_dir) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  if (!root.is_object()) throw ConfigError("config: top level must be an object");
  check_keys(root, "",
             {"seed", "dims", "family", "featurizer", "train", "baseline", "synth", "partition", "predict", "paths"});

  RunConfig rc;
  std::uint64_t seed = 0;
  read(root, "", "seed", seed);
  rc.apply_seed(seed);

  const json& dims = section(root, "dims");
  check_keys(dims, "dims", {"h", "e", "c", "k", "hidden"});
  read(dims, "dims", "h", rc.model.h);
  read(dims, "dims", "e", rc.model.e);
  read(dims, "dims", "c", rc.model.c);
  read(dims, "dims", "k", rc.model.k);
  read(dims, "dims", "hidden", rc.model.hidden);
  if (root.contains("family")) {
    std::string family;
    read(root, "", "family", family);
    rc.model.family = parse_family(family);
  }

  const json& feat = section(root, "featurizer");
  check_keys(feat, "featurizer", {"ngram_orders", "window", "hash_seed"});
  read(feat, "featurizer", "ngram_orders", rc.featurizer.ngram_orders);
  read(feat, "featurizer", "window", rc.featurizer.window);
  read(feat, "featurizer", "hash_seed", rc.featurizer.hash_seed);
  rc.featurizer.e = rc.model.e;

  const json& tr = section(root, "train");
  check_keys(tr, "train",
             {"learning_rate", "adam_beta1", "adam_beta2", "adam_eps", "batch_size", "samples", "patience",
              "validation_every", "max_steps", "clip_norm", "checkpoint_every", "freeze_factor"});
  read(tr, "train", "learning_rate", rc.train.adam.learning_rate);
  read(tr, "train", "adam_beta1", rc.train.adam.beta1);
  read(tr, "train", "adam_beta2", rc.train.adam.beta2);
  read(tr, "train", "adam_eps", rc.train.adam.eps);
  read(tr, "train", "batch_size", rc.train.batch_size);
  read(tr, "train", "samples", rc.train.samples);
  read(tr, "train", "patience", rc.train.patience);
  read(tr, "train", "validation_every", rc.train.validation_every);
  read(tr, "train", "max_steps", rc.train.max_steps);
  read(tr, "train", "clip_norm", rc.train.clip_norm);
  read(tr, "train", "checkpoint_every", rc.train.checkpoint_every);
  read(tr, "train", "freeze_factor", rc.train.freeze_factor);

  const json& bl = section(root, "baseline");
  check_keys(bl, "baseline", {"learning_rate", "batch_size", "patience", "validation_every", "max_steps"});
  read(bl, "baseline", "learning_rate", rc.baseline.adam.learning_rate);
  read(bl, "baseline", "batch_size", rc.baseline.batch_size);
  read(bl, "baseline", "patience", rc.baseline.patience);
  read(bl, "baseline", "validation_every", rc.baseline.validation_every);
  read(bl, "baseline", "max_steps", rc.baseline.max_steps);

  const json& sy = section(root, "synth");
  check_keys(sy, "synth",
             {"n_tasks", "n_langs", "class_counts", "examples_per_cell", "sentence_length", "generator_hidden",
              "theta_scale", "theta_var", "feature_noise"});
  read(sy, "synth", "n_tasks", rc.synth.n_tasks);
  read(sy, "synth", "n_langs", rc.synth.n_langs);
  read(sy, "synth", "class_counts", rc.synth.class_counts);
  read(sy, "synth", "examples_per_cell", rc.synth.examples_per_cell);
  read(sy, "synth", "sentence_length", rc.synth.sentence_length);
  read(sy, "synth", "generator_hidden", rc.synth.generator_hidden);
  read(sy, "synth", "theta_scale", rc.synth.theta_scale);
  read(sy, "synth", "theta_var", rc.synth.theta_var);
  read(sy, "synth", "feature_noise", rc.synth.feature_noise);
  rc.synth.h = rc.model.h;
  rc.synth.e = rc.model.e;

  const json& part = section(root, "partition");
  check_keys(part, "partition", {"hold_out_fraction"});
  read(part, "partition", "hold_out_fraction", rc.hold_out_fraction);

  const json& pred = section(root, "predict");
  check_keys(pred, "predict", {"bma_samples"});
  read(pred, "predict", "bma_samples", rc.bma_samples);

  const json& paths = section(root, "paths");
  check_keys(paths, "paths", {"manifest", "features", "partition", "checkpoint", "output"});
  read(paths, "paths", "manifest", rc.paths.manifest);
  read(paths, "paths", "features", rc.paths.features);
  read(paths, "paths", "partition", rc.paths.partition);
  read(paths, "paths", "checkpoint", rc.paths.checkpoint);
  read(paths, "paths", "output", rc.paths.output);
  rc.paths.manifest = resolve(base_dir, rc.paths.manifest);
  rc.paths.features = resolve(base_dir, rc.paths.features);
  rc.paths.partition = resolve(base_dir, rc.paths.partition);
  rc.paths.checkpoint = resolve(base_dir, rc.paths.checkpoint);
  rc.paths.output = resolve(base_dir, rc.paths.output);

  if (rc.model.h < 1 || rc.model.e < 8) throw ConfigError("config: dims.h must be >= 1 and dims.e >= 8");
  if (rc.model.family == Family::low_rank && (rc.model.k < 1 || rc.model.k > rc.model.h)) {
    throw ConfigError("config: dims.k must lie in [1, h] for the low-rank family");
  }
  if (rc.model.c < 0) throw ConfigError("config: dims.c must be >= 0");
  for (int w : rc.model.hidden) {
    if (w < 1) throw ConfigError("config: dims.hidden widths must be >= 1");
  }
  if (!(rc.hold_out_fraction > 0.0 && rc.hold_out_fraction < 1.0)) {
    throw ConfigError("config: partition.hold_out_fraction must lie in (0, 1)");
  }
  if (rc.bma_samples < 1) throw ConfigError("config: predict.bma_samples must be >= 1");
  rc.featurizer.validate();
  rc.train.validate();
  rc.baseline.validate();
  rc.synth.validate();
  return rc;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str(), std::filesystem::path(path).parent_path().string());
}

std::string dump_run_config(const RunConfig& rc) {
  json j;
  j["seed"] = rc.seed;
  j["dims"] = {{"h", rc.model.h}, {"e", rc.model.e}, {"c", rc.model.c}, {"k", rc.model.k}, {"hidden", rc.model.hidden}};
  j["family"] = to_string(rc.model.family);
  j["featurizer"] = {{"ngram_orders", rc.featurizer.ngram_orders},
                     {"window", rc.featurizer.window},
                     {"hash_seed", rc.featurizer.hash_seed}};
  j["train"] = {{"learning_rate", rc.train.adam.learning_rate},
                {"adam_beta1", rc.train.adam.beta1},
                {"adam_beta2", rc.train.adam.beta2},
                {"adam_eps", rc.train.adam.eps},
                {"batch_size", rc.train.batch_size},
                {"samples", rc.train.samples},
                {"patience", rc.train.patience},
                {"validation_every", rc.train.validation_every},
                {"max_steps", rc.train.max_steps},
                {"clip_norm", rc.train.clip_norm},
                {"checkpoint_every", rc.train.checkpoint_every},
                {"freeze_factor", rc.train.freeze_factor}};
  j["baseline"] = {{"learning_rate", rc.baseline.adam.learning_rate},
                   {"batch_size", rc.baseline.batch_size},
                   {"patience", rc.baseline.patience},
                   {"validation_every", rc.baseline.validation_every},
                   {"max_steps", rc.baseline.max_steps}};
  j["synth"] = {{"n_tasks", rc.synth.n_tasks},
                {"n_langs", rc.synth.n_langs},
                {"class_counts", rc.synth.class_counts},
                {"examples_per_cell", rc.synth.examples_per_cell},
                {"sentence_length", rc.synth.sentence_length},
                {"generator_hidden", rc.synth.generator_hidden},
                {"theta_scale", rc.synth.theta_scale},
                {"theta_var", rc.synth.theta_var},
                {"feature_noise", rc.synth.feature_noise}};
  j["partition"] = {{"hold_out_fraction", rc.hold_out_fraction}};
  j["predict"] = {{"bma_samples", rc.bma_samples}};
  j["paths"] = {{"manifest", rc.paths.manifest},
                {"features", rc.paths.features},
                {"partition", rc.paths.partition},
                {"checkpoint", rc.paths.checkpoint},
                {"output", rc.paths.output}};
  return j.dump(2) + "\n";
}

}  // namespace psf::cli
