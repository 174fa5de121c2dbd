#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "psf/encoder.hpp"
#include "psf/error.hpp"
#include "psf/latents.hpp"
#include "psf/likelihood.hpp"

namespace psf {

struct Cell {
  TaskId task;
  LangId lang;

  std::string key() const { return task + "-" + lang; }
  auto operator<=>(const Cell&) const = default;
};

struct Sentence {
  std::vector<std::string> tokens;
  std::vector<std::string> labels;
  bool operator==(const Sentence&) const = default;
};

struct Corpus {
  Cell cell;
  std::vector<Sentence> sentences;
  TaskSchema schema;
};

// Stable sentence identifier used to key precomputed embeddings:
// "<task>:<lang>:<index>".
std::string sentence_id(const Cell& cell, std::size_t index);

// Two-column corpus: "token<TAB>label" per line, blank line between
// sentences. Without a schema the label inventory is collected in order of
// first appearance; with one, unknown labels are rejected.
Corpus load_conll(const std::string& path, const TaskId& task, const LangId& lang,
                  const TaskSchema* schema = nullptr);
void write_conll(const Corpus& corpus, const std::string& path);

// One label per line.
std::vector<std::string> load_schema_file(const std::string& path);
void write_schema_file(const TaskSchema& schema, const std::string& path);

// Grid manifest. Each non-comment line is "<task> <lang> <corpus> [<embeddings>]";
// a line "@schema <task> <path>" pins a task's label inventory. Relative
// paths resolve against the manifest's directory.
struct ManifestEntry {
  Cell cell;
  std::string corpus_path;
  std::string embeddings_path;  // empty: use the featurizer
};
struct Manifest {
  std::vector<ManifestEntry> entries;
  std::map<TaskId, std::string> schema_paths;
};
Manifest load_manifest(const std::string& path);
void write_manifest(const Manifest& manifest, const std::string& path);

// All corpora of a grid with per-task schemas shared across languages.
struct Grid {
  std::vector<Corpus> corpora;  // manifest order
  std::map<TaskId, TaskSchema> schemas;

  std::vector<Cell> cells() const;
  std::vector<TaskId> tasks() const;  // first-appearance order
  std::vector<LangId> langs() const;  // first-appearance order
  const Corpus& corpus(const Cell& cell) const;
  int max_class_count() const;
};

// Loads every corpus of a manifest. Schemas come from @schema files when
// given; `fixed` (e.g. from a checkpoint) overrides both.
Grid load_grid(const Manifest& manifest, const std::map<TaskId, TaskSchema>* fixed = nullptr);

struct Split {
  std::vector<int> train;
  std::vector<int> dev;
  std::vector<int> test;
};

// Shuffle by seed, then cut at floor(0.8 n), floor(0.1 n), remainder.
Split split_cell(const Corpus& corpus, std::uint64_t seed);
Split split_indices(std::size_t n, double train_ratio, double dev_ratio, std::uint64_t seed);

struct CellPartition {
  std::vector<Cell> grid;
  std::set<Cell> seen;
  std::set<Cell> unseen;
  std::map<Cell, Split> splits;  // seen cells only

  bool is_seen(const Cell& c) const { return seen.count(c) != 0; }
};

// Unseen cells whose task has no other seen language or whose language has
// no other seen task.
std::vector<Cell> partition_violations(const std::vector<Cell>& grid, const std::set<Cell>& unseen);

class InfeasiblePartition : public DataError {
 public:
  InfeasiblePartition(const std::string& what, std::vector<Cell> violations)
      : DataError(what), violations_(std::move(violations)) {}
  const std::vector<Cell>& violations() const { return violations_; }

 private:
  std::vector<Cell> violations_;
};

inline constexpr int kPartitionRetryBudget = 10000;

// Holds out round(fraction * |grid|) cells at random such that every unseen
// cell shares its task with some seen cell and its language with another.
// Rejection sampling; throws InfeasiblePartition after the retry budget.
CellPartition partition(const std::vector<Cell>& grid, double hold_out_fraction, std::uint64_t seed);

// Fills partition.splits for every seen cell (seed derived per cell).
void assign_splits(CellPartition& partition, const Grid& grid, std::uint64_t seed);

void write_partition(const CellPartition& partition, const std::string& path);
CellPartition load_partition(const std::string& path);

// A sentence with its token embeddings and gold class indices (-1 when the
// label is unknown).
struct EncodedSentence {
  std::string id;
  Eigen::MatrixXd embeddings;  // n x e
  std::vector<int> gold;
};

std::vector<EncodedSentence> encode(const Corpus& corpus, const Embedder& embedder,
                                    const std::vector<int>& indices);
std::vector<EncodedSentence> encode_all(const Corpus& corpus, const Embedder& embedder);

}  // namespace psf
