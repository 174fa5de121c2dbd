#include "psf/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "psf/rng.hpp"

namespace psf {

namespace fs = std::filesystem;

std::string sentence_id(const Cell& cell, std::size_t index) {
  return cell.task + ":" + cell.lang + ":" + std::to_string(index);
}

namespace {

std::string strip_cr(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

struct RawCorpus {
  std::vector<Sentence> sentences;
  std::vector<std::string> label_order;  // first appearance
  std::vector<std::size_t> label_lines;  // line of each first appearance
};

RawCorpus read_two_column(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open corpus " + path);
  RawCorpus raw;
  Sentence current;
  std::string line;
  std::size_t line_no = 0;
  auto flush = [&] {
    if (!current.tokens.empty()) raw.sentences.push_back(std::move(current));
    current = Sentence{};
  };
  while (std::getline(in, line)) {
    ++line_no;
    line = strip_cr(std::move(line));
    if (line.find_first_not_of(" \t") == std::string::npos) {
      flush();
      continue;
    }
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw DataError(path + ":" + std::to_string(line_no) + ": expected 'token<TAB>label', got '" + line + "'");
    }
    if (line.find('\t', tab + 1) != std::string::npos) {
      throw DataError(path + ":" + std::to_string(line_no) + ": ragged line (more than two columns)");
    }
    std::string token = line.substr(0, tab);
    std::string label = line.substr(tab + 1);
    if (token.empty() || label.empty()) {
      throw DataError(path + ":" + std::to_string(line_no) + ": empty token or label");
    }
    if (std::find(raw.label_order.begin(), raw.label_order.end(), label) == raw.label_order.end()) {
      raw.label_order.push_back(label);
      raw.label_lines.push_back(line_no);
    }
    current.tokens.push_back(std::move(token));
    current.labels.push_back(std::move(label));
  }
  flush();
  if (raw.sentences.empty()) throw DataError("corpus " + path + " is empty");
  return raw;
}

void check_labels(const RawCorpus& raw, const TaskSchema& schema, const std::string& path) {
  for (std::size_t i = 0; i < raw.label_order.size(); ++i) {
    if (schema.find(raw.label_order[i]) < 0) {
      throw DataError(path + ":" + std::to_string(raw.label_lines[i]) + ": label '" +
                      raw.label_order[i] + "' is not in the schema of task '" + schema.task + "'");
    }
  }
}

std::string resolve(const fs::path& base, const std::string& p) {
  if (p.empty()) return p;
  const fs::path path(p);
  return path.is_absolute() ? p : (base / path).lexically_normal().string();
}

}  // namespace

Corpus load_conll(const std::string& path, const TaskId& task, const LangId& lang,
                  const TaskSchema* schema) {
  RawCorpus raw = read_two_column(path);
  Corpus corpus;
  corpus.cell = {task, lang};
  if (schema) {
    check_labels(raw, *schema, path);
    corpus.schema = *schema;
  } else {
    corpus.schema = make_schema(task, raw.label_order);
  }
  corpus.sentences = std::move(raw.sentences);
  return corpus;
}

void write_conll(const Corpus& corpus, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write corpus " + path);
  for (std::size_t s = 0; s < corpus.sentences.size(); ++s) {
    if (s > 0) out << '\n';
    const auto& sent = corpus.sentences[s];
    for (std::size_t i = 0; i < sent.tokens.size(); ++i) out << sent.tokens[i] << '\t' << sent.labels[i] << '\n';
  }
  if (!out) throw DataError("failed writing corpus " + path);
}

std::vector<std::string> load_schema_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open schema file " + path);
  std::vector<std::string> labels;
  std::string line;
  while (std::getline(in, line)) {
    line = strip_cr(std::move(line));
    if (line.empty()) continue;
    labels.push_back(line);
  }
  if (labels.empty()) throw DataError("schema file " + path + " is empty");
  return labels;
}

void write_schema_file(const TaskSchema& schema, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write schema file " + path);
  for (const auto& l : schema.labels) out << l << '\n';
}

Manifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open grid manifest " + path);
  const fs::path base = fs::path(path).parent_path();
  Manifest m;
  std::set<Cell> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = strip_cr(std::move(line));
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    std::vector<std::string> fields;
    for (std::string f; ss >> f;) fields.push_back(f);
    auto where = path + ":" + std::to_string(line_no) + ": ";
    if (fields.empty()) continue;
    if (fields[0] == "@schema") {
      if (fields.size() != 3) throw DataError(where + "expected '@schema <task> <path>'");
      m.schema_paths[fields[1]] = resolve(base, fields[2]);
      continue;
    }
    if (fields.size() < 3 || fields.size() > 4) {
      throw DataError(where + "expected '<task> <lang> <corpus> [<embeddings>]'");
    }
    ManifestEntry e{{fields[0], fields[1]}, resolve(base, fields[2]),
                    fields.size() == 4 ? resolve(base, fields[3]) : std::string()};
    if (!seen.insert(e.cell).second) throw DataError(where + "duplicate cell " + e.cell.key());
    m.entries.push_back(std::move(e));
  }
  if (m.entries.empty()) throw DataError("grid manifest " + path + " lists no cells");
  return m;
}

void write_manifest(const Manifest& manifest, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write manifest " + path);
  out << "# task\tlang\tcorpus\tembeddings\n";
  for (const auto& [task, p] : manifest.schema_paths) out << "@schema\t" << task << '\t' << p << '\n';
  for (const auto& e : manifest.entries) {
    out << e.cell.task << '\t' << e.cell.lang << '\t' << e.corpus_path;
    if (!e.embeddings_path.empty()) out << '\t' << e.embeddings_path;
    out << '\n';
  }
}

std::vector<Cell> Grid::cells() const {
  std::vector<Cell> out;
  for (const auto& c : corpora) out.push_back(c.cell);
  return out;
}

std::vector<TaskId> Grid::tasks() const {
  std::vector<TaskId> out;
  for (const auto& c : corpora) {
    if (std::find(out.begin(), out.end(), c.cell.task) == out.end()) out.push_back(c.cell.task);
  }
  return out;
}

std::vector<LangId> Grid::langs() const {
  std::vector<LangId> out;
  for (const auto& c : corpora) {
    if (std::find(out.begin(), out.end(), c.cell.lang) == out.end()) out.push_back(c.cell.lang);
  }
  return out;
}

const Corpus& Grid::corpus(const Cell& cell) const {
  for (const auto& c : corpora) {
    if (c.cell == cell) return c;
  }
  throw DataError("no corpus for cell " + cell.key());
}

int Grid::max_class_count() const {
  int c = 0;
  for (const auto& [task, s] : schemas) c = std::max(c, s.class_count());
  return c;
}

Grid load_grid(const Manifest& manifest, const std::map<TaskId, TaskSchema>* fixed) {
  Grid grid;
  if (fixed) grid.schemas = *fixed;
  for (const auto& [task, p] : manifest.schema_paths) {
    if (!grid.schemas.count(task)) grid.schemas[task] = make_schema(task, load_schema_file(p));
  }
  // Tasks without a pinned schema: labels in first-appearance order across
  // that task's corpora, in manifest order.
  std::map<TaskId, std::vector<std::string>> collected;
  std::vector<std::pair<const ManifestEntry*, RawCorpus>> raws;
  for (const auto& e : manifest.entries) {
    raws.emplace_back(&e, read_two_column(e.corpus_path));
    if (grid.schemas.count(e.cell.task)) continue;
    auto& labels = collected[e.cell.task];
    for (const auto& l : raws.back().second.label_order) {
      if (std::find(labels.begin(), labels.end(), l) == labels.end()) labels.push_back(l);
    }
  }
  for (auto& [task, labels] : collected) grid.schemas[task] = make_schema(task, std::move(labels));
  for (auto& [entry, raw] : raws) {
    const TaskSchema& schema = grid.schemas.at(entry->cell.task);
    check_labels(raw, schema, entry->corpus_path);
    grid.corpora.push_back(Corpus{entry->cell, std::move(raw.sentences), schema});
  }
  return grid;
}

Split split_indices(std::size_t n, double train_ratio, double dev_ratio, std::uint64_t seed) {
  if (n < 10) throw DataError("cannot split " + std::to_string(n) + " sentences (need at least 10)");
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Engine rng(seed);
  for (std::size_t i = n - 1; i > 0; --i) std::swap(idx[i], idx[uniform_index(rng, i + 1)]);
  const auto n_train = static_cast<std::size_t>(std::floor(train_ratio * static_cast<double>(n)));
  const auto n_dev = static_cast<std::size_t>(std::floor(dev_ratio * static_cast<double>(n)));
  Split s;
  s.train.assign(idx.begin(), idx.begin() + static_cast<long>(n_train));
  s.dev.assign(idx.begin() + static_cast<long>(n_train), idx.begin() + static_cast<long>(n_train + n_dev));
  s.test.assign(idx.begin() + static_cast<long>(n_train + n_dev), idx.end());
  return s;
}

Split split_cell(const Corpus& corpus, std::uint64_t seed) {
  return split_indices(corpus.sentences.size(), 0.8, 0.1, seed);
}

std::vector<Cell> partition_violations(const std::vector<Cell>& grid, const std::set<Cell>& unseen) {
  std::vector<Cell> bad;
  for (const auto& u : unseen) {
    bool same_task = false;
    bool same_lang = false;
    for (const auto& c : grid) {
      if (unseen.count(c)) continue;
      if (c.task == u.task && c.lang != u.lang) same_task = true;
      if (c.lang == u.lang && c.task != u.task) same_lang = true;
    }
    if (!same_task || !same_lang) bad.push_back(u);
  }
  return bad;
}

CellPartition partition(const std::vector<Cell>& grid, double hold_out_fraction, std::uint64_t seed) {
  if (!(hold_out_fraction > 0.0 && hold_out_fraction < 1.0)) {
    throw ConfigError("hold-out fraction must lie in (0, 1)");
  }
  std::set<Cell> unique(grid.begin(), grid.end());
  if (unique.size() != grid.size()) throw DataError("partition: duplicate cells in grid");
  std::set<TaskId> tasks;
  std::set<LangId> langs;
  for (const auto& c : grid) {
    tasks.insert(c.task);
    langs.insert(c.lang);
  }
  const auto n = grid.size();
  auto n_unseen = static_cast<std::size_t>(std::llround(hold_out_fraction * static_cast<double>(n)));
  n_unseen = std::clamp<std::size_t>(n_unseen, 1, n > 1 ? n - 1 : 1);

  Engine rng = make_engine(seed, "partition");
  std::vector<Cell> order = grid;
  std::vector<Cell> last_violations;
  for (int attempt = 0; attempt < kPartitionRetryBudget; ++attempt) {
    for (std::size_t i = order.size() - 1; i > 0; --i) std::swap(order[i], order[uniform_index(rng, i + 1)]);
    std::set<Cell> unseen(order.begin(), order.begin() + static_cast<long>(n_unseen));
    last_violations = partition_violations(grid, unseen);
    if (!last_violations.empty()) continue;
    CellPartition p;
    p.grid = grid;
    p.unseen = std::move(unseen);
    for (const auto& c : grid) {
      if (!p.unseen.count(c)) p.seen.insert(c);
    }
    return p;
  }
  std::string msg = "no partition of " + std::to_string(n) + " cells (" + std::to_string(tasks.size()) +
                    " tasks x " + std::to_string(langs.size()) + " languages) satisfies the hold-out "
                    "constraint after " + std::to_string(kPartitionRetryBudget) + " attempts; violating cells:";
  for (const auto& c : last_violations) msg += " " + c.key();
  throw InfeasiblePartition(msg, last_violations);
}

void assign_splits(CellPartition& partition, const Grid& grid, std::uint64_t seed) {
  partition.splits.clear();
  for (const auto& c : partition.seen) {
    partition.splits[c] = split_cell(grid.corpus(c), derive_seed(seed, "split/" + c.key()));
  }
}

namespace {

std::string join_indices(const std::vector<int>& v) {
  if (v.empty()) return "-";
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(v[i]);
  }
  return s;
}

std::vector<int> parse_indices(const std::string& s, const std::string& where) {
  std::vector<int> out;
  if (s == "-") return out;
  std::istringstream ss(s);
  for (std::string tok; std::getline(ss, tok, ',');) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoi(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw DataError(where + "invalid sentence index '" + tok + "'");
    }
  }
  return out;
}

}  // namespace

void write_partition(const CellPartition& partition, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write partition file " + path);
  out << "# task\tlang\tstatus\ttrain\tdev\ttest\n";
  for (const auto& c : partition.grid) {
    out << c.task << '\t' << c.lang << '\t';
    if (partition.is_seen(c)) {
      auto it = partition.splits.find(c);
      const Split empty;
      const Split& s = it == partition.splits.end() ? empty : it->second;
      out << "seen\t" << join_indices(s.train) << '\t' << join_indices(s.dev) << '\t' << join_indices(s.test);
    } else {
      out << "unseen\t-\t-\t-";
    }
    out << '\n';
  }
}

CellPartition load_partition(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open partition file " + path);
  CellPartition p;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = strip_cr(std::move(line));
    if (line.empty() || line[0] == '#') continue;
    const std::string where = path + ":" + std::to_string(line_no) + ": ";
    std::istringstream ss(line);
    std::vector<std::string> f;
    for (std::string x; std::getline(ss, x, '\t');) f.push_back(x);
    if (f.size() != 6) throw DataError(where + "expected 6 tab-separated fields");
    Cell c{f[0], f[1]};
    p.grid.push_back(c);
    if (f[2] == "seen") {
      p.seen.insert(c);
      p.splits[c] = Split{parse_indices(f[3], where), parse_indices(f[4], where), parse_indices(f[5], where)};
    } else if (f[2] == "unseen") {
      p.unseen.insert(c);
    } else {
      throw DataError(where + "status must be 'seen' or 'unseen'");
    }
  }
  if (p.grid.empty()) throw DataError("partition file " + path + " is empty");
  return p;
}

std::vector<EncodedSentence> encode(const Corpus& corpus, const Embedder& embedder,
                                    const std::vector<int>& indices) {
  std::vector<EncodedSentence> out;
  out.reserve(indices.size());
  for (int i : indices) {
    if (i < 0 || static_cast<std::size_t>(i) >= corpus.sentences.size()) {
      throw DataError("sentence index " + std::to_string(i) + " out of range for cell " + corpus.cell.key());
    }
    const Sentence& s = corpus.sentences[static_cast<std::size_t>(i)];
    EncodedSentence enc;
    enc.id = sentence_id(corpus.cell, static_cast<std::size_t>(i));
    enc.embeddings = embedder.embed(enc.id, s.tokens);
    enc.gold.reserve(s.labels.size());
    for (const auto& l : s.labels) enc.gold.push_back(corpus.schema.find(l));
    out.push_back(std::move(enc));
  }
  return out;
}

std::vector<EncodedSentence> encode_all(const Corpus& corpus, const Embedder& embedder) {
  std::vector<int> idx(corpus.sentences.size());
  std::iota(idx.begin(), idx.end(), 0);
  return encode(corpus, embedder, idx);
}

}  // namespace psf
