#include "psf/encoder.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "psf/rng.hpp"

namespace psf {

void FeaturizerConfig::validate() const {
  if (e < 8) throw ConfigError("featurizer: e must be >= 8");
  if (ngram_orders.empty()) throw ConfigError("featurizer: ngram_orders must be non-empty");
  for (int n : ngram_orders) {
    if (n < 1) throw ConfigError("featurizer: n-gram orders must be >= 1");
  }
  if (window < 0) throw ConfigError("featurizer: window must be >= 0");
}

namespace {

void add_feature(Eigen::VectorXd& v, std::uint64_t basis, const std::string& key) {
  const std::uint64_t h = fnv1a(key, basis);
  const std::uint64_t bucket_hash = mix64(h);
  const std::uint64_t sign_hash = mix64(h ^ 0x5bd1e9955bd1e995ULL);
  const auto bucket = static_cast<Eigen::Index>(bucket_hash % static_cast<std::uint64_t>(v.size()));
  v[bucket] += (sign_hash >> 63) ? -1.0 : 1.0;
}

}  // namespace

Eigen::VectorXd featurize(const FeaturizerConfig& config, const std::vector<std::string>& sentence,
                          std::size_t index) {
  if (index >= sentence.size()) throw ConfigError("featurize: index out of range");
  Eigen::VectorXd v = Eigen::VectorXd::Zero(config.e);
  const std::uint64_t basis = derive_seed(config.hash_seed, "featurizer");
  const auto lo = static_cast<long>(index) - config.window;
  const auto hi = static_cast<long>(index) + config.window;
  for (long pos = std::max(0L, lo); pos <= hi && pos < static_cast<long>(sentence.size()); ++pos) {
    const std::string prefix = std::to_string(pos - static_cast<long>(index)) + '\x1f';
    const std::string padded = "<" + sentence[static_cast<std::size_t>(pos)] + ">";
    add_feature(v, basis, prefix + "w" + padded);
    for (int n : config.ngram_orders) {
      const auto len = static_cast<std::size_t>(n);
      if (padded.size() <= len) {
        add_feature(v, basis, prefix + std::to_string(n) + padded);
        continue;
      }
      for (std::size_t i = 0; i + len <= padded.size(); ++i) {
        add_feature(v, basis, prefix + std::to_string(n) + padded.substr(i, len));
      }
    }
  }
  const double norm = v.norm();
  if (norm > 0.0) v /= norm;
  return v;
}

void PrecomputedEmbeddings::insert(const std::string& sentence_id, int position, Eigen::VectorXd v) {
  if (width_ == 0) width_ = static_cast<int>(v.size());
  if (v.size() != width_) {
    throw EmbeddingError(EmbeddingError::Kind::width_mismatch,
                         "embedding for (" + sentence_id + ", " + std::to_string(position) +
                             ") has width " + std::to_string(v.size()) + ", expected " +
                             std::to_string(width_));
  }
  table_[{sentence_id, position}] = std::move(v);
}

bool PrecomputedEmbeddings::contains(const std::string& sentence_id, int position) const {
  return table_.count({sentence_id, position}) != 0;
}

const Eigen::VectorXd& PrecomputedEmbeddings::at(const std::string& sentence_id, int position) const {
  auto it = table_.find({sentence_id, position});
  if (it == table_.end()) {
    throw EmbeddingError(EmbeddingError::Kind::missing_token,
                         "no embedding for sentence '" + sentence_id + "' position " +
                             std::to_string(position));
  }
  return it->second;
}

void PrecomputedEmbeddings::merge(const PrecomputedEmbeddings& other) {
  for (const auto& [key, v] : other.table_) insert(key.first, key.second, v);
}

PrecomputedEmbeddings load_precomputed(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw EmbeddingError(EmbeddingError::Kind::malformed, "cannot open embedding file " + path);
  std::string line;
  std::size_t line_no = 1;
  auto fail = [&](const std::string& why) {
    throw EmbeddingError(EmbeddingError::Kind::malformed,
                         path + ":" + std::to_string(line_no) + ": " + why);
  };
  if (!std::getline(in, line)) fail("empty file");
  int width = 0;
  {
    std::istringstream ss(line);
    std::string tag;
    if (!(ss >> tag >> width) || tag != "e" || width < 1) fail("expected header 'e <width>'");
    std::string extra;
    if (ss >> extra) fail("trailing data in header");
  }
  PrecomputedEmbeddings table(width);
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string id;
    int position = 0;
    if (!(ss >> id >> position) || position < 0) fail("expected '<sentence_id> <position> <values...>'");
    std::vector<double> values;
    std::string tok;
    while (ss >> tok) {
      char* end = nullptr;
      const double x = std::strtod(tok.c_str(), &end);
      if (end == tok.c_str() || *end != '\0') fail("invalid number '" + tok + "'");
      values.push_back(x);
    }
    if (static_cast<int>(values.size()) != width) {
      throw EmbeddingError(EmbeddingError::Kind::width_mismatch,
                           path + ":" + std::to_string(line_no) + ": " + std::to_string(values.size()) +
                               " values, expected " + std::to_string(width));
    }
    table.insert(id, position, Eigen::Map<Eigen::VectorXd>(values.data(), width));
  }
  return table;
}

void write_precomputed(const PrecomputedEmbeddings& table, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write embedding file " + path);
  out << "e " << table.width() << '\n';
  char buf[32];
  for (const auto& [key, v] : table) {
    out << key.first << ' ' << key.second;
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      std::snprintf(buf, sizeof buf, " %.17g", v[i]);
      out << buf;
    }
    out << '\n';
  }
  if (!out) throw DataError("failed writing embedding file " + path);
}

Embedder Embedder::from_featurizer(FeaturizerConfig config) {
  config.validate();
  Embedder e;
  e.featurizer_ = std::move(config);
  return e;
}

Embedder Embedder::from_table(PrecomputedEmbeddings table) {
  Embedder e;
  e.table_ = std::move(table);
  return e;
}

int Embedder::width() const { return featurizer_ ? featurizer_->e : table_->width(); }

Eigen::MatrixXd Embedder::embed(const std::string& sentence_id,
                                const std::vector<std::string>& tokens) const {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(tokens.size()), width());
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    if (featurizer_) {
      out.row(row) = featurize(*featurizer_, tokens, i).transpose();
    } else {
      out.row(row) = table_->at(sentence_id, static_cast<int>(i)).transpose();
    }
  }
  return out;
}

}  // namespace psf
