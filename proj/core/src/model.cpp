#include "psf/model.hpp"

#include <algorithm>

#include "psf/error.hpp"

namespace psf {

const TaskSchema& Model::schema(const TaskId& task) const {
  auto it = schemas.find(task);
  if (it == schemas.end()) throw ConfigError("no schema for task '" + task + "'");
  return it->second;
}

Model init_model(const ModelSpec& spec, const std::vector<TaskId>& tasks, const std::vector<LangId>& langs,
                 const std::map<TaskId, TaskSchema>& schemas, std::uint64_t seed) {
  HyperDims dims;
  dims.h = spec.h;
  dims.e = spec.e;
  dims.hidden = spec.hidden;
  for (const auto& t : tasks) {
    const auto it = schemas.find(t);
    if (it == schemas.end()) throw ConfigError("no schema for task '" + t + "'");
    dims.c = std::max(dims.c, it->second.class_count());
  }
  if (spec.c > 0) {
    if (spec.c < dims.c) {
      throw ConfigError("model: c = " + std::to_string(spec.c) + " is below the largest class count " +
                        std::to_string(dims.c));
    }
    dims.c = spec.c;
  }
  if (spec.h < 1 || spec.e < 1) throw ConfigError("model: h and e must be >= 1");
  for (int w : spec.hidden) {
    if (w < 1) throw ConfigError("model: hidden widths must be >= 1");
  }
  Model m;
  m.latents = init_store(tasks, langs, spec.family, spec.h, spec.k, seed);
  m.net = init_hypernet(dims, seed);
  for (const auto& t : tasks) m.schemas[t] = schemas.at(t);
  return m;
}

std::vector<ParamBlock> parameter_blocks(LatentStore& store, HyperNet& net, bool freeze_factor) {
  std::vector<ParamBlock> blocks;
  visit_parameters(store, net, freeze_factor, [&](const std::string& name, auto& m, bool trainable) {
    blocks.push_back(ParamBlock{name, m.data(), m.rows(), m.cols(), trainable});
  });
  return blocks;
}

Eigen::Index total_size(const std::vector<ParamBlock>& blocks) {
  Eigen::Index n = 0;
  for (const auto& b : blocks) n += b.size();
  return n;
}

Eigen::VectorXd gather(const std::vector<ParamBlock>& blocks) {
  Eigen::VectorXd flat(total_size(blocks));
  Eigen::Index off = 0;
  for (const auto& b : blocks) {
    flat.segment(off, b.size()) = Eigen::Map<const Eigen::VectorXd>(b.data, b.size());
    off += b.size();
  }
  return flat;
}

void scatter(const std::vector<ParamBlock>& blocks, const Eigen::VectorXd& flat) {
  if (flat.size() != total_size(blocks)) throw ConfigError("scatter: size mismatch");
  Eigen::Index off = 0;
  for (const auto& b : blocks) {
    Eigen::Map<Eigen::VectorXd>(b.data, b.size()) = flat.segment(off, b.size());
    off += b.size();
  }
}

Eigen::VectorXd trainable_mask(const std::vector<ParamBlock>& blocks) {
  Eigen::VectorXd mask(total_size(blocks));
  Eigen::Index off = 0;
  for (const auto& b : blocks) {
    mask.segment(off, b.size()).setConstant(b.trainable ? 1.0 : 0.0);
    off += b.size();
  }
  return mask;
}

}  // namespace psf
