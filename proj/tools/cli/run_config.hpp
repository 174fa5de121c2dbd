#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "psf/baselines.hpp"
#include "psf/encoder.hpp"
#include "psf/model.hpp"
#include "psf/synth.hpp"
#include "psf/train.hpp"

namespace psf::cli {

struct Paths {
  std::string manifest;    // grid manifest
  std::string features;    // language feature file (nearest-source baseline)
  std::string partition;   // fixed partition file; empty: sample one
  std::string checkpoint;  // model checkpoint; empty: <output>/model.ckpt
  std::string output = "out";
};

// One experiment, read from a JSON document. Every section is optional;
// absent keys keep the defaults below, unknown keys are rejected.
struct RunConfig {
  std::uint64_t seed = 0;
  ModelSpec model;  // dims.{h,e,c,k,hidden} and family
  FeaturizerConfig featurizer;
  TrainConfig train;
  HeadTrainConfig baseline;
  SynthConfig synth;  // h and e come from dims
  double hold_out_fraction = 0.5;
  int bma_samples = 100;
  Paths paths;

  // Seeds of every section follow the top-level seed.
  void apply_seed(std::uint64_t s);
};

// Parses and validates. Relative paths resolve against `base_dir`.
// Throws ConfigError for unknown keys, wrong types or invalid values.
RunConfig parse_run_config(const std::string& json_text, const std::string& base_dir = "");
RunConfig load_run_config(const std::string& path);

// The fully resolved config as pretty-printed JSON.
std::string dump_run_config(const RunConfig& config);

}  // namespace psf::cli
