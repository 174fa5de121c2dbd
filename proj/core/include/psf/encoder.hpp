#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "psf/error.hpp"

namespace psf {

// Hashed character n-gram featurizer. Stands in for a pretrained contextual
// encoder: deterministic, parameter-free, with a symmetric context window.
struct FeaturizerConfig {
  int e = 64;
  std::vector<int> ngram_orders{2, 3, 4};
  int window = 1;
  std::uint64_t hash_seed = 0;

  void validate() const;
};

// Unit-norm e-vector for sentence[index]; depends only on tokens within
// `window` positions of `index`.
Eigen::VectorXd featurize(const FeaturizerConfig& config, const std::vector<std::string>& sentence,
                          std::size_t index);

class EmbeddingError : public DataError {
 public:
  enum class Kind { malformed, width_mismatch, missing_token };
  EmbeddingError(Kind kind, const std::string& what) : DataError(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

// Embeddings exported offline, keyed by (sentence id, token position).
//
// File format: first line "e <width>"; each further line
// "<sentence_id> <position> <v1> ... <ve>".
class PrecomputedEmbeddings {
 public:
  explicit PrecomputedEmbeddings(int width = 0) : width_(width) {}

  int width() const { return width_; }
  std::size_t size() const { return table_.size(); }
  void insert(const std::string& sentence_id, int position, Eigen::VectorXd v);
  bool contains(const std::string& sentence_id, int position) const;
  // Throws EmbeddingError(missing_token).
  const Eigen::VectorXd& at(const std::string& sentence_id, int position) const;
  // Merges another table of the same width.
  void merge(const PrecomputedEmbeddings& other);

  auto begin() const { return table_.begin(); }
  auto end() const { return table_.end(); }

 private:
  int width_;
  std::map<std::pair<std::string, int>, Eigen::VectorXd> table_;
};

PrecomputedEmbeddings load_precomputed(const std::string& path);
void write_precomputed(const PrecomputedEmbeddings& table, const std::string& path);

// Produces the n x e embedding matrix of a sentence from either source.
class Embedder {
 public:
  static Embedder from_featurizer(FeaturizerConfig config);
  static Embedder from_table(PrecomputedEmbeddings table);

  int width() const;
  Eigen::MatrixXd embed(const std::string& sentence_id, const std::vector<std::string>& tokens) const;

 private:
  std::optional<FeaturizerConfig> featurizer_;
  std::optional<PrecomputedEmbeddings> table_;
};

}  // namespace psf
