// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// nonzero when any criterion fails. Tolerances are fixed below.

#include <chrono>
#include <cstdarg>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "psf/baselines.hpp"
#include "psf/elbo.hpp"
#include "psf/gauss.hpp"
#include "psf/likelihood.hpp"
#include "psf/metrics.hpp"
#include "psf/predict.hpp"
#include "psf/rng.hpp"
#include "psf/synth.hpp"
#include "psf/train.hpp"

namespace {

using namespace psf;
namespace fs = std::filesystem;

constexpr double kKlDenseTol = 1e-10;
constexpr double kKlMonteCarloTol = 0.01;
constexpr long kKlMonteCarloSamples = 1000000;
constexpr double kLogdetTol = 1e-10;
constexpr double kMomentTol = 0.02;
constexpr long kMomentDraws = 1000000;
constexpr double kGradientStep = 1e-5;
constexpr double kGradientTol = 1e-4;
constexpr double kGradientFloor = 1e-6;
constexpr double kCorrelationAlpha = 0.05;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* format, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* format, ...) {
  char buf[512];
  va_list args;
  va_start(args, format);
  std::vsnprintf(buf, sizeof buf, format, args);
  va_end(args);
  return buf;
}

double rel(double got, double want) { return std::abs(got - want) / std::max(std::abs(want), 1e-300); }

// Random posteriors of both families with h in [5, 50] and k in [1, 5].
struct Instances {
  std::vector<DiagGaussian> diag;
  std::vector<LowRankGaussian> lowrank;
};

Instances make_instances() {
  Engine rng = make_engine(20240601, "acceptance/kl");
  Instances out;
  for (int i = 0; i < 200; ++i) {
    const int h = 5 + static_cast<int>(uniform_index(rng, 46));
    DiagGaussian q{Eigen::VectorXd(h), Eigen::VectorXd(h)};
    for (int j = 0; j < h; ++j) {
      q.mean(j) = uniform(rng, -1.5, 1.5);
      q.rho(j) = uniform(rng, -3.0, 1.5);
    }
    out.diag.push_back(q);
  }
  for (int i = 0; i < 200; ++i) {
    const int h = 5 + static_cast<int>(uniform_index(rng, 46));
    const int k = 1 + static_cast<int>(uniform_index(rng, 5));
    LowRankGaussian q{Eigen::VectorXd(h), Eigen::VectorXd(h), Eigen::MatrixXd(h, k)};
    for (int j = 0; j < h; ++j) {
      q.mean(j) = uniform(rng, -1.5, 1.5);
      q.rho(j) = uniform(rng, -3.0, 1.5);
    }
    for (Eigen::Index j = 0; j < q.factor.size(); ++j) q.factor.data()[j] = uniform(rng, -0.7, 0.7);
    out.lowrank.push_back(q);
  }
  return out;
}

Eigen::MatrixXd dense_cov(const DiagGaussian& q) { return q.variance().asDiagonal(); }
Eigen::MatrixXd dense_cov(const LowRankGaussian& q) { return q.covariance(); }

// Monte Carlo estimate of KL(q || N(0, I)) in the eigenbasis of the dense
// covariance: x = mu + Q diag(sqrt(lambda)) z, so log q(x) needs only |z|^2
// and |x|^2 = |Q^T mu + sqrt(lambda) .* z|^2. The noise chunks are shared by
// every instance.
std::vector<double> monte_carlo_kl(const std::vector<Eigen::MatrixXd>& covs, const std::vector<Eigen::VectorXd>& means) {
  struct Rotated {
    Eigen::ArrayXd sqrt_lambda;
    Eigen::ArrayXd mean;
    double half_logdet = 0.0;
  };
  std::vector<Rotated> rot;
  int h_max = 0;
  for (std::size_t i = 0; i < covs.size(); ++i) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(covs[i]);
    Rotated r;
    r.sqrt_lambda = eig.eigenvalues().array().sqrt();
    r.mean = (eig.eigenvectors().transpose() * means[i]).array();
    r.half_logdet = 0.5 * eig.eigenvalues().array().log().sum();
    h_max = std::max(h_max, static_cast<int>(r.mean.size()));
    rot.push_back(std::move(r));
  }
  std::vector<double> sums(covs.size(), 0.0);
  Engine rng = make_engine(7, "acceptance/kl-mc");
  const long chunk = 20000;
  Eigen::MatrixXd z(h_max, chunk);
  for (long done = 0; done < kKlMonteCarloSamples; done += chunk) {
    for (Eigen::Index j = 0; j < z.size(); ++j) z.data()[j] = standard_normal(rng);
    for (std::size_t i = 0; i < rot.size(); ++i) {
      const Rotated& r = rot[i];
      const auto zh = z.topRows(r.mean.size()).array();
      const Eigen::ArrayXXd x = (zh.colwise() * r.sqrt_lambda).colwise() + r.mean;
      sums[i] += 0.5 * (x.square().sum() - zh.square().sum());
      sums[i] -= r.half_logdet * static_cast<double>(chunk);
    }
  }
  for (double& s : sums) s /= static_cast<double>(kKlMonteCarloSamples);
  return sums;
}

Outcome criterion_kl(const Instances& in) {
  double worst_dense = 0.0, worst_mc = 0.0;
  std::vector<Eigen::MatrixXd> covs;
  std::vector<Eigen::VectorXd> means;
  std::vector<double> closed;
  for (const auto& q : in.diag) {
    covs.push_back(dense_cov(q));
    means.push_back(q.mean);
    closed.push_back(kl_diag_to_std(q));
  }
  for (const auto& q : in.lowrank) {
    covs.push_back(dense_cov(q));
    means.push_back(q.mean);
    closed.push_back(kl_lowrank_to_std(q));
  }
  for (std::size_t i = 0; i < covs.size(); ++i) {
    const Eigen::Index h = means[i].size();
    const double dense =
        kl_general(means[i], covs[i], Eigen::VectorXd::Zero(h), Eigen::MatrixXd::Identity(h, h));
    worst_dense = std::max(worst_dense, rel(closed[i], dense));
  }
  const std::vector<double> mc = monte_carlo_kl(covs, means);
  for (std::size_t i = 0; i < covs.size(); ++i) worst_mc = std::max(worst_mc, rel(closed[i], mc[i]));
  return {worst_dense <= kKlDenseTol && worst_mc <= kKlMonteCarloTol,
          fmt("400 posteriors; max rel err vs dense %.3g (tol %.0e), vs %ld-sample MC %.3g (tol %.2f)", worst_dense,
              kKlDenseTol, kKlMonteCarloSamples, worst_mc, kKlMonteCarloTol)};
}

Outcome criterion_logdet(const Instances& in) {
  double worst = 0.0;
  for (const auto& q : in.lowrank) {
    const Eigen::LLT<Eigen::MatrixXd> llt(q.covariance());
    const double dense = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
    worst = std::max(worst, rel(logdet_lowrank(q), dense));
  }
  return {worst <= kLogdetTol, fmt("200 posteriors; max rel err %.3g (tol %.0e)", worst, kLogdetTol)};
}

// Errors are relative to each entry's natural scale: sqrt(S_ii) for means and
// sqrt(S_ii S_jj) for covariances, since raw entries may sit at zero.
Outcome criterion_moments() {
  Engine rng = make_engine(11, "acceptance/moments");
  const int h = 10, k = 3;
  double worst_mean = 0.0, worst_cov = 0.0;
  for (int p = 0; p < 10; ++p) {
    LowRankGaussian q{Eigen::VectorXd(h), Eigen::VectorXd(h), Eigen::MatrixXd(h, k)};
    for (int j = 0; j < h; ++j) {
      q.mean(j) = uniform(rng, -2.0, 2.0);
      q.rho(j) = uniform(rng, -2.0, 1.0);
    }
    for (Eigen::Index j = 0; j < q.factor.size(); ++j) q.factor.data()[j] = uniform(rng, -1.0, 1.0);
    const Eigen::MatrixXd cov = q.covariance();

    const long chunk = 10000;
    Eigen::MatrixXd xs(h, chunk);
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(h);
    Eigen::MatrixXd outer = Eigen::MatrixXd::Zero(h, h);
    NoiseDraw noise{Eigen::VectorXd(h), Eigen::VectorXd(k)};
    for (long done = 0; done < kMomentDraws; done += chunk) {
      for (long s = 0; s < chunk; ++s) {
        fill_normal(rng, noise.epsilon);
        fill_normal(rng, noise.zeta);
        xs.col(s) = sample_lowrank(q, noise) - q.mean;
      }
      sum += xs.rowwise().sum();
      outer.noalias() += xs * xs.transpose();
    }
    const double n = static_cast<double>(kMomentDraws);
    const Eigen::VectorXd mean_dev = sum / n;
    const Eigen::MatrixXd emp_cov = outer / n - mean_dev * mean_dev.transpose();
    const Eigen::VectorXd sd = cov.diagonal().cwiseSqrt();
    worst_mean = std::max(worst_mean, (mean_dev.array() / sd.array()).abs().maxCoeff());
    worst_cov = std::max(worst_cov, ((emp_cov - cov).array() / (sd * sd.transpose()).array()).abs().maxCoeff());
  }
  return {worst_mean <= kMomentTol && worst_cov <= kMomentTol,
          fmt("10 posteriors x %ld draws; max scaled err mean %.3g, cov %.3g (tol %.2f)", kMomentDraws, worst_mean,
              worst_cov, kMomentTol)};
}

Outcome criterion_gradient() {
  std::string detail;
  bool pass = true;
  for (Family family : {Family::diagonal, Family::low_rank}) {
    LatentStore store = init_store({"pos", "ner"}, {"en", "de"}, family, 4, 2, 3);
    HyperNet net = init_hypernet(HyperDims{4, 8, 3, {16, 16}}, 3);
    net.var_head().bias.setConstant(softplus_inverse(0.05));
    const TaskSchema schema = make_schema("pos", {"A", "B", "C"});
    Engine rng = make_engine(5, "acceptance/gradient");
    TokenBatch batch{Eigen::MatrixXd(3, 8), {0, 2, 1}};
    for (Eigen::Index j = 0; j < batch.embeddings.size(); ++j) batch.embeddings.data()[j] = uniform(rng, -1, 1);
    const StepInputs in{&batch, &schema, "pos", "de", 0.5};
    NoiseSource src(9);
    const StepNoise noise = src.draw_step(2, 4, store.rank(), net.dims().d());
    const StepGradient sg = step_gradient(store, net, in, noise);
    const auto blocks = parameter_blocks(store, net);
    Eigen::VectorXd params = gather(blocks);
    double worst = 0.0;
    long checked = 0, bad = 0;
    for (Eigen::Index i = 0; i < params.size(); ++i) {
      const double g = sg.gradient(i);
      if (std::abs(g) <= kGradientFloor) continue;
      const double x0 = params(i);
      params(i) = x0 + kGradientStep;
      scatter(blocks, params);
      const double up = evaluate_step(store, net, in, noise).value;
      params(i) = x0 - kGradientStep;
      scatter(blocks, params);
      const double dn = evaluate_step(store, net, in, noise).value;
      params(i) = x0;
      scatter(blocks, params);
      const double r = rel(g, (up - dn) / (2.0 * kGradientStep));
      worst = std::max(worst, r);
      ++checked;
      if (r > kGradientTol) ++bad;
    }
    pass = pass && bad == 0 && checked > 0;
    detail += fmt("%s%s: %ld coords, %ld over tol, max rel err %.3g", detail.empty() ? "" : "; ", to_string(family),
                  checked, bad, worst);
  }
  return {pass, detail + fmt(" (tol %.0e)", kGradientTol)};
}

struct RecoveryPoint {
  Cell cell;
  int seed = 0;
  double factor = 0.0;
  double ls = 0.0;
  double chance = 0.0;
  double oracle = 0.0;
  double entropy = 0.0;
};

std::vector<RecoveryPoint> run_recovery(std::vector<std::string>& log) {
  std::vector<RecoveryPoint> points;
  for (int seed = 1; seed <= 3; ++seed) {
    SynthConfig sc;
    sc.seed = static_cast<std::uint64_t>(seed);
    const GroundTruth truth = generate(sc);
    const Grid grid{truth.corpora, truth.schemas};
    CellPartition part = partition(grid.cells(), 1.0 / 3.0, sc.seed);
    assign_splits(part, grid, sc.seed);
    const Embedder emb = Embedder::from_table(truth.embeddings);
    const std::vector<TrainCell> cells = seen_cells(grid, part, emb);

    ModelSpec spec{Family::low_rank, 8, 2, 16, 0, {64, 64}};
    Model model = init_model(spec, grid.tasks(), grid.langs(), grid.schemas, sc.seed);
    TrainConfig tc = TrainConfig::desk();
    tc.seed = sc.seed;
    const TrainResult tr = train(model, cells, tc);

    HeadTrainConfig hc;
    hc.seed = sc.seed;
    const ClassifierMap classifiers = train_cell_classifiers(cells, 16, model.net.dims().c, hc);
    log.push_back(fmt("seed %d: %ld steps, dev log-lik %.4f -> %.4f", seed, tr.summary.steps, tr.summary.initial_dev,
                      tr.summary.best_dev));
    for (const Cell& c : part.unseen) {
      const auto ex = encode_all(grid.corpus(c), emb);
      const TaskSchema& schema = grid.schemas.at(c.task);
      const PredictiveReport f = plug_in_predict(model, c, ex);
      RecoveryPoint p;
      p.cell = c;
      p.seed = seed;
      p.factor = f.aggregates.accuracy;
      p.entropy = f.aggregates.mean_entropy;
      p.ls = largest_source_predict(classifiers, schema, c, ex).aggregates.accuracy;
      p.chance = label_marginals(ex, schema.class_count()).maxCoeff();
      p.oracle = oracle_score(truth, c, ex);
      log.push_back(fmt("  %-12s factor %.3f  LS %.3f  chance %.3f  oracle %.3f  entropy %.3f", c.key().c_str(),
                        p.factor, p.ls, p.chance, p.oracle, p.entropy));
      points.push_back(p);
    }
  }
  return points;
}

Outcome criterion_recovery(const std::vector<RecoveryPoint>& points) {
  double factor = 0.0, ls = 0.0, oracle = 0.0;
  int below = 0;
  for (const auto& p : points) {
    factor += p.factor;
    ls += p.ls;
    oracle += p.oracle;
    if (!(p.factor > p.chance)) ++below;
  }
  const double n = static_cast<double>(points.size());
  factor /= n;
  ls /= n;
  oracle /= n;
  return {below == 0 && factor > ls && !points.empty(),
          fmt("%zu unseen cells over 3 seeds; mean accuracy factor %.4f vs LS %.4f (margin %+.4f); cells at or below "
              "chance %d; oracle ceiling %.4f",
              points.size(), factor, ls, factor - ls, below, oracle)};
}

Outcome criterion_correlation(const std::vector<RecoveryPoint>& points) {
  std::vector<double> h, a;
  for (const auto& p : points) {
    h.push_back(p.entropy);
    a.push_back(p.factor);
  }
  const Correlation c = pearson(h, a);
  return {c.r < 0.0 && c.p_value < kCorrelationAlpha,
          fmt("Pearson r = %.4f, two-tailed p = %.3g over %zu cells (need r < 0, p < %.2f)", c.r, c.p_value,
              points.size(), kCorrelationAlpha)};
}

// Shared setup for the training-trajectory criteria.
struct SmallRun {
  Grid grid;
  std::vector<TrainCell> cells;

  SmallRun() {
    SynthConfig sc;
    sc.n_tasks = 2;
    sc.n_langs = 3;
    sc.class_counts = {3, 4};
    sc.examples_per_cell = 200;
    sc.seed = 21;
    const GroundTruth truth = generate(sc);
    grid = Grid{truth.corpora, truth.schemas};
    CellPartition part = partition(grid.cells(), 1.0 / 3.0, sc.seed);
    assign_splits(part, grid, sc.seed);
    cells = seen_cells(grid, part, Embedder::from_table(truth.embeddings));
  }

  Model model(Family family, std::uint64_t seed) const {
    return init_model(ModelSpec{family, 8, 2, 16, 0, {32, 32}}, grid.tasks(), grid.langs(), grid.schemas, seed);
  }
};

TrainConfig trajectory_config(long steps) {
  TrainConfig c = TrainConfig::desk();
  c.max_steps = steps;
  c.validation_every = 100;
  c.seed = 4;
  return c;
}

std::vector<std::string> loss_stream(Model& model, const std::vector<TrainCell>& cells, const TrainConfig& config) {
  std::vector<std::string> out;
  TrainHooks hooks;
  hooks.on_step = [&](const StepRecord& r) { out.push_back(format_step(r)); };
  Trainer t(model, cells, config);
  t.run(hooks);
  return out;
}

Outcome criterion_family(const SmallRun& run) {
  Model diag = run.model(Family::diagonal, 8);
  Model low = run.model(Family::low_rank, 8);
  for (auto* posts : {&low.latents.task_posteriors(), &low.latents.lang_posteriors()})
    for (auto& p : *posts) p.factor.setZero();
  TrainConfig frozen = trajectory_config(1000);
  frozen.freeze_factor = true;
  const auto a = loss_stream(diag, run.cells, trajectory_config(1000));
  const auto b = loss_stream(low, run.cells, frozen);
  std::size_t first_diff = a.size();
  for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i) {
    if (a[i] != b[i]) {
      first_diff = i;
      break;
    }
  }
  const bool same = a == b;
  return {same && !a.empty(), same ? fmt("%zu steps, loss/nll/kl identical to the last bit", a.size())
                                   : fmt("trajectories diverge at step %zu", first_diff + 1)};
}

std::string file_bytes(const Container& c, const fs::path& path) {
  write_container(c, path.string());
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome criterion_determinism(const SmallRun& run) {
  const fs::path dir = fs::temp_directory_path() / "psf_acceptance";
  fs::create_directories(dir);
  Model a = run.model(Family::low_rank, 5), b = run.model(Family::low_rank, 5);
  const TrainResult ra = train(a, run.cells, trajectory_config(500));
  const TrainResult rb = train(b, run.cells, trajectory_config(500));
  const bool identical = file_bytes(ra.checkpoint, dir / "a.ckpt") == file_bytes(rb.checkpoint, dir / "b.ckpt");

  TrainConfig c = trajectory_config(600);
  c.checkpoint_every = 300;
  std::vector<std::string> full;
  Container mid;
  {
    Model m = run.model(Family::low_rank, 6);
    Trainer t(m, run.cells, c);
    TrainHooks hooks;
    hooks.on_step = [&](const StepRecord& r) { full.push_back(format_step(r)); };
    hooks.on_checkpoint = [&](const Trainer& tr) {
      if (tr.step() == 300) write_container(tr.to_checkpoint(), (dir / "mid.ckpt").string());
    };
    t.run(hooks);
  }
  mid = read_container((dir / "mid.ckpt").string());
  Model fresh = run.model(Family::low_rank, 1234);
  Trainer t(fresh, run.cells, c);
  t.restore(mid);
  std::vector<std::string> tail;
  TrainHooks hooks;
  hooks.on_step = [&](const StepRecord& r) { tail.push_back(format_step(r)); };
  t.run(hooks);
  const bool resumed = full.size() == 600 && tail == std::vector<std::string>(full.begin() + 300, full.end());
  fs::remove_all(dir);
  return {identical && resumed,
          fmt("checkpoints byte-identical: %s; resumed 300-step tail matches uninterrupted run: %s",
              identical ? "yes" : "no", resumed ? "yes" : "no")};
}

Outcome criterion_evaluation() {
  auto uniform_entropy = [](int c) {
    PredictiveDist d{Eigen::VectorXd::Constant(c, 1.0 / c)};
    return entropy(d);
  };
  const double h9 = uniform_entropy(9), h17 = uniform_entropy(17);
  const bool entropy_ok = std::abs(h9 - std::log(9.0)) <= 1e-12 && std::abs(h17 - std::log(17.0)) <= 1e-12;

  // Hand-counted fixture: 4 correct of 6 predicted and 6 gold spans, F1 2/3.
  SpanCounts total;
  total += count_spans({"B-PER", "I-PER", "O", "B-LOC"}, {"B-PER", "I-PER", "O", "B-LOC"});
  total += count_spans({"B-ORG", "I-ORG", "I-ORG"}, {"B-ORG", "I-ORG", "O"});
  total += count_spans({"O", "O", "B-PER"}, {"O", "B-LOC", "B-PER"});
  total += count_spans({"B-LOC", "O"}, {"O", "O"});
  total += count_spans({"O", "I-MISC", "I-MISC"}, {"O", "B-MISC", "I-MISC"});
  const double want = 2.0 * 4.0 / (6.0 + 6.0);
  const bool f1_ok = total.correct == 4 && total.predicted == 6 && total.gold == 6 && total.f1() == want;
  return {entropy_ok && f1_ok, fmt("uniform entropy 9 classes %.6f (ln 9 = %.6f), 17 classes %.6f (ln 17 = %.6f); "
                                   "fixture span F1 %.17g (want %.17g)",
                                   h9, std::log(9.0), h17, std::log(17.0), total.f1(), want)};
}

}  // namespace

int main() {
  int failures = 0;
  auto report = [&](int id, const char* name, const std::function<Outcome()>& body) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = body();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!o.pass) ++failures;
    std::printf("%s [%d] %s: %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str(), secs);
    std::fflush(stdout);
  };

  const Instances instances = make_instances();
  report(1, "KL oracle agreement", [&] { return criterion_kl(instances); });
  report(2, "log-det lemma", [&] { return criterion_logdet(instances); });
  report(3, "reparametrization moments", criterion_moments);
  report(4, "gradient correctness", criterion_gradient);

  std::vector<RecoveryPoint> points;
  std::vector<std::string> log;
  double recovery_secs = 0.0;
  {
    const auto t0 = std::chrono::steady_clock::now();
    try {
      points = run_recovery(log);
    } catch (const std::exception& e) {
      log.push_back(std::string("exception: ") + e.what());
    }
    recovery_secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
  for (const auto& line : log) std::printf("  %s\n", line.c_str());
  std::printf("  recovery experiment took %.1f s\n", recovery_secs);
  report(5, "synthetic zero-shot recovery", [&] { return criterion_recovery(points); });
  report(6, "entropy-accuracy anti-correlation", [&] { return criterion_correlation(points); });

  const SmallRun run;
  report(7, "family consistency", [&] { return criterion_family(run); });
  report(8, "determinism and checkpoint round-trip", [&] { return criterion_determinism(run); });
  report(9, "evaluation machinery", criterion_evaluation);

  std::printf("%d of 9 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
