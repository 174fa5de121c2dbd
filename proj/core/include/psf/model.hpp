#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "psf/hypernet.hpp"
#include "psf/latents.hpp"
#include "psf/likelihood.hpp"

namespace psf {

// Everything needed to predict on any cell of the grid.
struct Model {
  LatentStore latents;
  HyperNet net;
  std::map<TaskId, TaskSchema> schemas;

  const TaskSchema& schema(const TaskId& task) const;
};

// A contiguous block of trainable doubles (column-major), named after its
// role: "task/<id>/mean", "lang/<id>/factor", "net/shared/0/weight", ...
struct ParamBlock {
  std::string name;
  double* data = nullptr;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  bool trainable = true;

  Eigen::Index size() const { return rows * cols; }
  Eigen::Map<Eigen::MatrixXd> view() const { return {data, rows, cols}; }
};

// Calls fn(name, object, trainable) for every parameter in canonical order:
// task posteriors, language posteriors, shared layers, mean head, variance
// head. `object` is an Eigen vector or matrix (const when Store/Net are).
// Factors are marked untrainable when freeze_factor is set.
template <class Store, class Net, class Fn>
void visit_parameters(Store& store, Net& net, bool freeze_factor, Fn&& fn) {
  const bool low_rank = store.family() == Family::low_rank;
  auto posteriors = [&](const char* kind, const auto& ids, auto& posts) {
    for (std::size_t i = 0; i < ids.size(); ++i) {
      const std::string prefix = std::string(kind) + "/" + ids[i] + "/";
      fn(prefix + "mean", posts[i].mean, true);
      fn(prefix + "rho", posts[i].rho, true);
      if (low_rank) fn(prefix + "factor", posts[i].factor, !freeze_factor);
    }
  };
  posteriors("task", store.tasks(), store.task_posteriors());
  posteriors("lang", store.langs(), store.lang_posteriors());
  for (std::size_t i = 0; i < net.shared().size(); ++i) {
    const std::string prefix = "net/shared/" + std::to_string(i) + "/";
    fn(prefix + "weight", net.shared()[i].weight, true);
    fn(prefix + "bias", net.shared()[i].bias, true);
  }
  fn(std::string("net/mean_head/weight"), net.mean_head().weight, true);
  fn(std::string("net/mean_head/bias"), net.mean_head().bias, true);
  fn(std::string("net/var_head/weight"), net.var_head().weight, true);
  fn(std::string("net/var_head/bias"), net.var_head().bias, true);
}

struct ModelSpec {
  Family family = Family::low_rank;
  int h = 100;
  int k = 10;
  int e = 64;
  int c = 0;  // head width; 0 picks the largest class count
  std::vector<int> hidden = default_hidden_widths();
};

// Fresh model over the given ids. The head width c must cover every
// schema's class count. Latents and hypernetwork initialized from `seed`.
Model init_model(const ModelSpec& spec, const std::vector<TaskId>& tasks, const std::vector<LangId>& langs,
                 const std::map<TaskId, TaskSchema>& schemas, std::uint64_t seed);

std::vector<ParamBlock> parameter_blocks(LatentStore& store, HyperNet& net, bool freeze_factor = false);

Eigen::Index total_size(const std::vector<ParamBlock>& blocks);
Eigen::VectorXd gather(const std::vector<ParamBlock>& blocks);
void scatter(const std::vector<ParamBlock>& blocks, const Eigen::VectorXd& flat);
// 1 for trainable coordinates, 0 for frozen ones.
Eigen::VectorXd trainable_mask(const std::vector<ParamBlock>& blocks);

}  // namespace psf
