#include "psf/train.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>

namespace psf {

TrainConfig TrainConfig::desk() {
  TrainConfig c;
  c.adam.learning_rate = 1e-3;
  c.validation_every = 200;
  c.max_steps = 20000;
  return c;
}

void TrainConfig::validate() const {
  adam.validate();
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (samples < 1) throw ConfigError("train: samples must be >= 1");
  if (patience < 1) throw ConfigError("train: patience must be >= 1");
  if (validation_every < 1) throw ConfigError("train: validation_every must be >= 1");
  if (max_steps < 0) throw ConfigError("train: max_steps must be >= 0");
  if (clip_norm < 0.0) throw ConfigError("train: clip_norm must be >= 0");
  if (checkpoint_every < 0) throw ConfigError("train: checkpoint_every must be >= 0");
}

std::string format_step(const StepRecord& r) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "\t%.17g\t%.17g\t%.17g", r.loss, r.neg_log_lik, r.kl_weighted);
  return std::to_string(r.step) + "\t" + r.cell.task + "\t" + r.cell.lang + buf;
}

TokenBatch make_batch(const std::vector<EncodedSentence>& sentences, const std::vector<int>& indices) {
  Eigen::Index rows = 0;
  Eigen::Index width = 0;
  for (int i : indices) {
    const auto& s = sentences.at(static_cast<std::size_t>(i));
    rows += s.embeddings.rows();
    width = s.embeddings.cols();
  }
  TokenBatch b;
  b.embeddings.resize(rows, width);
  b.gold.reserve(static_cast<std::size_t>(rows));
  Eigen::Index r = 0;
  for (int i : indices) {
    const auto& s = sentences[static_cast<std::size_t>(i)];
    b.embeddings.middleRows(r, s.embeddings.rows()) = s.embeddings;
    r += s.embeddings.rows();
    b.gold.insert(b.gold.end(), s.gold.begin(), s.gold.end());
  }
  return b;
}

std::vector<TrainCell> seen_cells(const Grid& grid, const CellPartition& partition, const Embedder& embedder) {
  std::vector<TrainCell> out;
  for (const auto& corpus : grid.corpora) {
    if (!partition.is_seen(corpus.cell)) continue;
    const auto it = partition.splits.find(corpus.cell);
    if (it == partition.splits.end()) throw DataError("seen cell " + corpus.cell.key() + " has no split");
    TrainCell c;
    c.cell = corpus.cell;
    c.schema = grid.schemas.at(corpus.cell.task);
    c.train = encode(corpus, embedder, it->second.train);
    c.dev = encode(corpus, embedder, it->second.dev);
    out.push_back(std::move(c));
  }
  return out;
}

double dev_objective(const Model& model, const std::vector<TrainCell>& cells) {
  const HyperDims& dims = model.net.dims();
  double total = 0.0;
  std::size_t tokens = 0;
  for (const auto& cell : cells) {
    if (cell.dev.empty()) continue;
    const Eigen::VectorXd theta = forward_mean(model.net, model.latents.task(cell.cell.task).mean,
                                               model.latents.lang(cell.cell.lang).mean);
    const HeadParams head = reshape_theta(theta, dims.e, dims.c);
    for (const auto& s : cell.dev) {
      const Eigen::MatrixXd lp = [&] {
        Eigen::MatrixXd logits = s.embeddings * head.weight;
        logits.rowwise() += head.bias.transpose();
        return masked_log_softmax(logits, cell.schema.class_count());
      }();
      for (std::size_t i = 0; i < s.gold.size(); ++i) {
        if (s.gold[i] < 0) continue;
        total += lp(static_cast<Eigen::Index>(i), s.gold[i]);
        ++tokens;
      }
    }
  }
  if (tokens == 0) throw DataError("development splits contain no labelled tokens");
  return total / static_cast<double>(tokens);
}

Trainer::Trainer(Model& model, std::vector<TrainCell> cells, TrainConfig config)
    : model_(model),
      cells_(std::move(cells)),
      config_(std::move(config)),
      cell_rng_(make_engine(config_.seed, "train/cells")),
      batch_rng_(make_engine(config_.seed, "train/batches")),
      noise_(derive_seed(config_.seed, "train/noise")) {
  config_.validate();
  if (cells_.empty()) throw DataError("training needs at least one seen cell");
  std::size_t total = 0;
  for (const auto& c : cells_) {
    if (c.train.empty()) throw DataError("cell " + c.cell.key() + " has no training sentences");
    if (!model_.latents.has_task(c.cell.task) || !model_.latents.has_lang(c.cell.lang)) {
      throw ConfigError("cell " + c.cell.key() + " has no latent posterior");
    }
    total += c.train.size();
  }
  // |K|: mini-batches per epoch over all seen cells.
  const auto batches = (total + static_cast<std::size_t>(config_.batch_size) - 1) /
                       static_cast<std::size_t>(config_.batch_size);
  kl_weight_ = 1.0 / static_cast<double>(batches);
  cursors_.resize(cells_.size());
  blocks_ = parameter_blocks(model_.latents, model_.net, config_.freeze_factor);
  mask_ = trainable_mask(blocks_);
  adam_ = Adam(total_size(blocks_), config_.adam);
}

std::vector<int> Trainer::next_batch(std::size_t cell) {
  Cursor& cur = cursors_[cell];
  const std::size_t n = cells_[cell].train.size();
  if (cur.next >= cur.order.size()) {
    cur.order.resize(n);
    std::iota(cur.order.begin(), cur.order.end(), 0);
    for (std::size_t i = n - 1; i > 0; --i) std::swap(cur.order[i], cur.order[uniform_index(batch_rng_, i + 1)]);
    cur.next = 0;
  }
  const std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(config_.batch_size), n - cur.next);
  std::vector<int> out(cur.order.begin() + static_cast<long>(cur.next),
                       cur.order.begin() + static_cast<long>(cur.next + take));
  cur.next += take;
  return out;
}

StepRecord Trainer::step_once() {
  const std::size_t ci = uniform_index(cell_rng_, cells_.size());
  const TrainCell& cell = cells_[ci];
  const TokenBatch batch = make_batch(cell.train, next_batch(ci));
  const HyperDims& dims = model_.net.dims();
  const StepNoise noise = noise_.draw_step(config_.samples, dims.h, model_.latents.rank(), dims.d());
  const StepInputs in{&batch, &cell.schema, cell.cell.task, cell.cell.lang, kl_weight_};
  StepGradient sg = step_gradient(model_.latents, model_.net, in, noise, config_.freeze_factor);

  StepRecord rec{step_ + 1, cell.cell, sg.objective.value, sg.objective.neg_log_lik, sg.objective.kl_weighted};
  if (!std::isfinite(rec.loss) || !sg.gradient.allFinite()) {
    throw NumericError("non-finite loss or gradient at step " + std::to_string(rec.step) + " in cell " +
                       cell.cell.key() + " (loss " + std::to_string(rec.loss) + ")");
  }
  if (config_.clip_norm > 0.0) {
    const double norm = sg.gradient.cwiseProduct(mask_).norm();
    if (norm > config_.clip_norm) sg.gradient *= config_.clip_norm / norm;
  }
  Eigen::VectorXd params = gather(blocks_);
  adam_.step(params, sg.gradient, &mask_);
  scatter(blocks_, params);
  ++step_;
  return rec;
}

void Trainer::validate(const TrainHooks& hooks) {
  const double dev = dev_objective(model_, cells_);
  if (hooks.on_validation) hooks.on_validation(step_, dev);
  if (dev > best_dev_) {
    best_dev_ = dev;
    best_step_ = step_;
    best_params_ = gather(blocks_);
    bad_validations_ = 0;
  } else if (++bad_validations_ >= config_.patience) {
    stopped_ = true;
  }
}

TrainSummary Trainer::run(const TrainHooks& hooks) {
  if (!validated_initial_) {
    validate(hooks);
    initial_dev_ = best_dev_;
    validated_initial_ = true;
  }
  bool validated_last = true;
  while (!stopped_ && step_ < config_.max_steps) {
    const StepRecord rec = step_once();
    if (hooks.on_step) hooks.on_step(rec);
    validated_last = false;
    if (step_ % config_.validation_every == 0 || step_ == config_.max_steps) {
      validate(hooks);
      validated_last = true;
    }
    if (config_.checkpoint_every > 0 && step_ % config_.checkpoint_every == 0 && hooks.on_checkpoint) {
      hooks.on_checkpoint(*this);
    }
  }
  if (!validated_last) validate(hooks);
  TrainSummary s;
  s.steps = step_;
  s.best_step = best_step_;
  s.initial_dev = initial_dev_;
  s.best_dev = best_dev_;
  s.early_stopped = stopped_;
  return s;
}

void Trainer::load_best() {
  if (best_params_.size() == total_size(blocks_)) scatter(blocks_, best_params_);
}

namespace {

std::string widths_to_string(const std::vector<int>& w) {
  std::vector<std::string> parts;
  for (int x : w) parts.push_back(std::to_string(x));
  return join(parts);
}

Eigen::MatrixXd column(const Eigen::VectorXd& v) { return v; }

}  // namespace

Container save_model(const Model& model) {
  Container c;
  const HyperDims& d = model.net.dims();
  c.set("format", "psf-checkpoint");
  c.set_int("version", kCheckpointVersion);
  c.set_int("h", d.h);
  c.set_int("e", d.e);
  c.set_int("c", d.c);
  c.set_int("k", model.latents.rank());
  c.set("family", to_string(model.latents.family()));
  c.set("hidden", widths_to_string(d.hidden));
  c.set("tasks", join(model.latents.tasks()));
  c.set("langs", join(model.latents.langs()));
  for (const auto& [task, schema] : model.schemas) c.set("labels." + task, join(schema.labels));
  visit_parameters(model.latents, model.net, false, [&](const std::string& name, const auto& m, bool) {
    c.add_array(name, Eigen::MatrixXd(m));
  });
  return c;
}

Model load_model(const Container& c) {
  if (!c.has("format") || c.get("format") != "psf-checkpoint") {
    throw CheckpointError("not a model checkpoint (format key)", "format");
  }
  if (c.get_int("version") != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + c.get("version"), "version");
  }
  HyperDims dims;
  dims.h = static_cast<int>(c.get_int("h"));
  dims.e = static_cast<int>(c.get_int("e"));
  dims.c = static_cast<int>(c.get_int("c"));
  for (const auto& w : split_words(c.get("hidden"))) dims.hidden.push_back(std::stoi(w));
  const Family family = parse_family(c.get("family"));
  const int k = static_cast<int>(c.get_int("k"));

  Model m;
  m.latents = LatentStore(split_words(c.get("tasks")), split_words(c.get("langs")), family, dims.h, k);
  m.net = HyperNet(dims);
  for (const auto& task : m.latents.tasks()) {
    m.schemas[task] = make_schema(task, split_words(c.get("labels." + task)));
  }
  visit_parameters(m.latents, m.net, false, [&](const std::string& name, auto& target, bool) {
    const Eigen::MatrixXd& a = c.array(name);
    if (a.rows() != target.rows() || a.cols() != target.cols()) {
      throw CheckpointError("checkpoint array '" + name + "' has shape " + std::to_string(a.rows()) + "x" +
                                std::to_string(a.cols()) + ", expected " + std::to_string(target.rows()) + "x" +
                                std::to_string(target.cols()),
                            name);
    }
    target = a;
  });
  return m;
}

Container Trainer::to_checkpoint() const {
  Container c = save_model(model_);
  c.set_int("train.step", step_);
  c.set_double("train.kl_weight", kl_weight_);
  c.set_int("train.validated_initial", validated_initial_ ? 1 : 0);
  c.set_double("train.initial_dev", initial_dev_);
  c.set_double("train.best_dev", best_dev_);
  c.set_int("train.best_step", best_step_);
  c.set_int("train.bad_validations", bad_validations_);
  c.set_int("train.stopped", stopped_ ? 1 : 0);
  c.set_int("train.freeze_factor", config_.freeze_factor ? 1 : 0);
  std::vector<std::string> cell_keys;
  for (const auto& cell : cells_) cell_keys.push_back(cell.cell.task + "/" + cell.cell.lang);
  c.set("train.cells", join(cell_keys));
  c.set("rng.cells", engine_state(cell_rng_));
  c.set("rng.batches", engine_state(batch_rng_));
  const auto noise_state = noise_.state();
  c.set("rng.noise.epsilon", noise_state[0]);
  c.set("rng.noise.zeta", noise_state[1]);
  c.set("rng.noise.theta", noise_state[2]);
  for (std::size_t i = 0; i < cursors_.size(); ++i) {
    std::vector<std::string> order;
    for (int x : cursors_[i].order) order.push_back(std::to_string(x));
    c.set("cursor." + std::to_string(i), std::to_string(cursors_[i].next) + " " + join(order, ','));
  }
  c.set_int("adam.t", adam_.steps());
  c.add_array("adam/m", column(adam_.first_moment()));
  c.add_array("adam/v", column(adam_.second_moment()));
  if (best_params_.size() > 0) c.add_array("best/params", column(best_params_));
  return c;
}

void Trainer::restore(const Container& c) {
  Model loaded = load_model(c);
  if (loaded.net.dims() != model_.net.dims() || loaded.latents.tasks() != model_.latents.tasks() ||
      loaded.latents.langs() != model_.latents.langs() || loaded.latents.family() != model_.latents.family() ||
      loaded.latents.rank() != model_.latents.rank()) {
    throw CheckpointError("checkpoint dimensions or ids do not match the model being trained");
  }
  std::vector<std::string> cell_keys;
  for (const auto& cell : cells_) cell_keys.push_back(cell.cell.task + "/" + cell.cell.lang);
  if (c.get("train.cells") != join(cell_keys)) {
    throw CheckpointError("checkpoint was trained on a different set of seen cells", "train.cells");
  }
  model_.latents = std::move(loaded.latents);
  model_.net = std::move(loaded.net);
  blocks_ = parameter_blocks(model_.latents, model_.net, config_.freeze_factor);

  step_ = c.get_int("train.step");
  kl_weight_ = c.get_double("train.kl_weight");
  validated_initial_ = c.get_int("train.validated_initial") != 0;
  initial_dev_ = c.get_double("train.initial_dev");
  best_dev_ = c.get_double("train.best_dev");
  best_step_ = c.get_int("train.best_step");
  bad_validations_ = static_cast<int>(c.get_int("train.bad_validations"));
  stopped_ = c.get_int("train.stopped") != 0;
  restore_engine(cell_rng_, c.get("rng.cells"));
  restore_engine(batch_rng_, c.get("rng.batches"));
  noise_.restore({c.get("rng.noise.epsilon"), c.get("rng.noise.zeta"), c.get("rng.noise.theta")});
  for (std::size_t i = 0; i < cursors_.size(); ++i) {
    const std::string key = "cursor." + std::to_string(i);
    const std::string& v = c.get(key);
    const auto space = v.find(' ');
    Cursor cur;
    try {
      cur.next = std::stoul(v.substr(0, space));
      if (space != std::string::npos) {
        std::string rest = v.substr(space + 1);
        std::size_t pos = 0;
        while (pos < rest.size()) {
          const auto comma = rest.find(',', pos);
          cur.order.push_back(std::stoi(rest.substr(pos, comma - pos)));
          if (comma == std::string::npos) break;
          pos = comma + 1;
        }
      }
    } catch (const std::exception&) {
      throw CheckpointError("malformed batch cursor '" + key + "'", key);
    }
    cursors_[i] = std::move(cur);
  }
  const Eigen::MatrixXd& m = c.array("adam/m");
  const Eigen::MatrixXd& v = c.array("adam/v");
  adam_.restore(Eigen::Map<const Eigen::VectorXd>(m.data(), m.size()),
                Eigen::Map<const Eigen::VectorXd>(v.data(), v.size()), c.get_int("adam.t"));
  if (c.has_array("best/params")) {
    const Eigen::MatrixXd& b = c.array("best/params");
    if (b.size() != total_size(blocks_)) throw CheckpointError("best/params has the wrong size", "best/params");
    best_params_ = Eigen::Map<const Eigen::VectorXd>(b.data(), b.size());
  }
}

TrainResult train(Model& model, const std::vector<TrainCell>& cells, const TrainConfig& config,
                  const TrainHooks& hooks) {
  Trainer trainer(model, cells, config);
  TrainResult r;
  r.summary = trainer.run(hooks);
  trainer.load_best();
  r.checkpoint = trainer.to_checkpoint();
  return r;
}

}  // namespace psf
