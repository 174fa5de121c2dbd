#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "psf/gauss.hpp"

namespace psf {

using TaskId = std::string;
using LangId = std::string;

enum class Family { diagonal, low_rank };

const char* to_string(Family family);
Family parse_family(const std::string& text);

// Variational posterior over one latent vector. `factor` has zero columns for
// the diagonal family.
struct Posterior {
  Eigen::VectorXd mean;
  Eigen::VectorXd rho;
  Eigen::MatrixXd factor;

  DiagGaussian as_diag() const { return {mean, rho}; }
  LowRankGaussian as_lowrank() const { return {mean, rho, factor}; }
  Eigen::Index parameter_count() const { return mean.size() + rho.size() + factor.size(); }
};

// KL(posterior || N(0, I)) under the given family.
double kl_to_std(const Posterior& q, Family family);

// One posterior per task and per language, all of dimension h (and rank k for
// the low-rank family). Priors are fixed at N(0, I).
class LatentStore {
 public:
  LatentStore() = default;
  // Zero means, rho = softplus^-1(1) (unit variance), zero factors.
  LatentStore(std::vector<TaskId> tasks, std::vector<LangId> langs, Family family, int h, int k);

  Family family() const { return family_; }
  int dim() const { return h_; }
  int rank() const { return family_ == Family::low_rank ? k_ : 0; }

  const std::vector<TaskId>& tasks() const { return tasks_; }
  const std::vector<LangId>& langs() const { return langs_; }
  bool has_task(const TaskId& id) const { return task_index_.count(id) != 0; }
  bool has_lang(const LangId& id) const { return lang_index_.count(id) != 0; }
  std::size_t task_index(const TaskId& id) const;
  std::size_t lang_index(const LangId& id) const;

  Posterior& task(const TaskId& id) { return task_posts_[task_index(id)]; }
  const Posterior& task(const TaskId& id) const { return task_posts_[task_index(id)]; }
  Posterior& lang(const LangId& id) { return lang_posts_[lang_index(id)]; }
  const Posterior& lang(const LangId& id) const { return lang_posts_[lang_index(id)]; }

  std::vector<Posterior>& task_posteriors() { return task_posts_; }
  const std::vector<Posterior>& task_posteriors() const { return task_posts_; }
  std::vector<Posterior>& lang_posteriors() { return lang_posts_; }
  const std::vector<Posterior>& lang_posteriors() const { return lang_posts_; }

 private:
  std::vector<TaskId> tasks_;
  std::vector<LangId> langs_;
  std::unordered_map<std::string, std::size_t> task_index_;
  std::unordered_map<std::string, std::size_t> lang_index_;
  std::vector<Posterior> task_posts_;
  std::vector<Posterior> lang_posts_;
  Family family_ = Family::diagonal;
  int h_ = 0;
  int k_ = 0;
};

// Means ~ N(0, 0.1) (variance 0.1); rho and factor entries ~ U(0, 0.5).
// Deterministic given seed. Rejects duplicate or empty id lists.
LatentStore init_store(const std::vector<TaskId>& tasks, const std::vector<LangId>& langs,
                       Family family, int h, int k, std::uint64_t seed);

// Sum of KL-to-prior over every task and language posterior.
double kl_penalty(const LatentStore& store);

}  // namespace psf
