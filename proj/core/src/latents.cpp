#include "psf/latents.hpp"

#include <cmath>

#include "psf/error.hpp"
#include "psf/rng.hpp"

namespace psf {

const char* to_string(Family family) {
  return family == Family::diagonal ? "diagonal" : "low_rank";
}

Family parse_family(const std::string& text) {
  if (text == "diagonal") return Family::diagonal;
  if (text == "low_rank") return Family::low_rank;
  throw ConfigError("unknown covariance family '" + text + "' (expected diagonal or low_rank)");
}

double kl_to_std(const Posterior& q, Family family) {
  return family == Family::diagonal ? kl_diag_to_std(q.as_diag()) : kl_lowrank_to_std(q.as_lowrank());
}

namespace {

std::unordered_map<std::string, std::size_t> index_ids(const std::vector<std::string>& ids,
                                                       const char* what) {
  if (ids.empty()) throw ConfigError(std::string("latent store: empty ") + what + " list");
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (!index.emplace(ids[i], i).second) {
      throw ConfigError(std::string("latent store: duplicate ") + what + " id '" + ids[i] + "'");
    }
  }
  return index;
}

Posterior prior_like(int h, int k) {
  Posterior p;
  p.mean = Eigen::VectorXd::Zero(h);
  p.rho = Eigen::VectorXd::Constant(h, softplus_inverse(1.0));
  p.factor = Eigen::MatrixXd::Zero(h, k);
  return p;
}

}  // namespace

LatentStore::LatentStore(std::vector<TaskId> tasks, std::vector<LangId> langs, Family family,
                         int h, int k)
    : tasks_(std::move(tasks)), langs_(std::move(langs)), family_(family), h_(h), k_(k) {
  if (h < 1) throw ConfigError("latent store: h must be >= 1");
  if (family == Family::low_rank && (k < 1 || k > h)) {
    throw ConfigError("latent store: low-rank family needs 1 <= k <= h");
  }
  if (family == Family::diagonal) k_ = 0;
  task_index_ = index_ids(tasks_, "task");
  lang_index_ = index_ids(langs_, "language");
  task_posts_.assign(tasks_.size(), prior_like(h_, k_));
  lang_posts_.assign(langs_.size(), prior_like(h_, k_));
}

std::size_t LatentStore::task_index(const TaskId& id) const {
  auto it = task_index_.find(id);
  if (it == task_index_.end()) throw ConfigError("unknown task '" + id + "'");
  return it->second;
}

std::size_t LatentStore::lang_index(const LangId& id) const {
  auto it = lang_index_.find(id);
  if (it == lang_index_.end()) throw ConfigError("unknown language '" + id + "'");
  return it->second;
}

LatentStore init_store(const std::vector<TaskId>& tasks, const std::vector<LangId>& langs,
                       Family family, int h, int k, std::uint64_t seed) {
  LatentStore store(tasks, langs, family, h, k);
  // Separate streams per parameter kind: the means and rhos of a low-rank
  // store match those of a diagonal store built with the same seed.
  Engine mean_rng = make_engine(seed, "latents/init/mean");
  Engine rho_rng = make_engine(seed, "latents/init/rho");
  Engine factor_rng = make_engine(seed, "latents/init/factor");
  const double mean_std = std::sqrt(0.1);
  auto fill = [&](Posterior& p) {
    for (Eigen::Index i = 0; i < p.mean.size(); ++i) p.mean[i] = mean_std * standard_normal(mean_rng);
    for (Eigen::Index i = 0; i < p.rho.size(); ++i) p.rho[i] = uniform(rho_rng, 0.0, 0.5);
    for (Eigen::Index i = 0; i < p.factor.size(); ++i) {
      p.factor.data()[i] = uniform(factor_rng, 0.0, 0.5);
    }
  };
  for (auto& p : store.task_posteriors()) fill(p);
  for (auto& p : store.lang_posteriors()) fill(p);
  return store;
}

double kl_penalty(const LatentStore& store) {
  double total = 0.0;
  for (const auto& p : store.task_posteriors()) total += kl_to_std(p, store.family());
  for (const auto& p : store.lang_posteriors()) total += kl_to_std(p, store.family());
  return total;
}

}  // namespace psf
