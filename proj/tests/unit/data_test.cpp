#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>

#include <gtest/gtest.h>

#include "psf/data.hpp"
#include "unit/test_util.hpp"

namespace psf {
namespace {

namespace fs = std::filesystem;

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << text;
}

std::vector<Cell> full_grid(int tasks, int langs) {
  std::vector<Cell> cells;
  for (int t = 0; t < tasks; ++t)
    for (int l = 0; l < langs; ++l) cells.push_back({"t" + std::to_string(t), "l" + std::to_string(l)});
  return cells;
}

TEST(LoadConll, SentencesAndLabelOrder) {
  const fs::path dir = test::temp_dir("conll_basic");
  write_text(dir / "a.conll", "The\tDET\ncat\tNOUN\r\n\n\nsat\tVERB\n.\tPUNCT\n\n");
  const Corpus c = load_conll((dir / "a.conll").string(), "pos", "en");
  ASSERT_EQ(c.sentences.size(), 2u);
  EXPECT_EQ(c.sentences[0].tokens, (std::vector<std::string>{"The", "cat"}));
  EXPECT_EQ(c.sentences[1].labels, (std::vector<std::string>{"VERB", "PUNCT"}));
  EXPECT_EQ(c.schema.labels, (std::vector<std::string>{"DET", "NOUN", "VERB", "PUNCT"}));
}

TEST(LoadConll, MalformedLineNamesLineNumber) {
  const fs::path dir = test::temp_dir("conll_bad");
  write_text(dir / "a.conll", "a\tX\nb X\n");
  try {
    load_conll((dir / "a.conll").string(), "pos", "en");
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find(":2:"), std::string::npos) << e.what();
  }
  write_text(dir / "b.conll", "a\tX\tY\n");
  EXPECT_THROW(load_conll((dir / "b.conll").string(), "pos", "en"), DataError);
  write_text(dir / "c.conll", "\n\n");
  EXPECT_THROW(load_conll((dir / "c.conll").string(), "pos", "en"), DataError);
  EXPECT_THROW(load_conll((dir / "missing.conll").string(), "pos", "en"), DataError);
}

TEST(LoadConll, SchemaRejectsUnknownLabelAndKeepsOrder) {
  const fs::path dir = test::temp_dir("conll_schema");
  std::vector<std::string> ud = {"ADJ", "ADP", "ADV", "AUX", "CCONJ", "DET", "INTJ", "NOUN", "NUM",
                                 "PART", "PRON", "PROPN", "PUNCT", "SCONJ", "SYM", "VERB", "X"};
  const TaskSchema schema = make_schema("pos", ud);
  EXPECT_EQ(schema.class_count(), 17);
  write_text(dir / "a.conll", "run\tVERB\nfast\tADV\n");
  const Corpus c = load_conll((dir / "a.conll").string(), "pos", "en", &schema);
  EXPECT_EQ(c.schema.labels, ud);
  write_text(dir / "b.conll", "run\tVERBS\n");
  EXPECT_THROW(load_conll((dir / "b.conll").string(), "pos", "en", &schema), DataError);
}

TEST(WriteConll, RoundTrip) {
  const fs::path dir = test::temp_dir("conll_rt");
  write_text(dir / "a.conll", "x\tA\ny\tB\n\nz\tA\n");
  const Corpus c = load_conll((dir / "a.conll").string(), "t", "l");
  write_conll(c, (dir / "b.conll").string());
  const Corpus d = load_conll((dir / "b.conll").string(), "t", "l");
  EXPECT_EQ(c.sentences, d.sentences);
}

TEST(Manifest, ResolvesRelativePathsAndSchemas) {
  const fs::path dir = test::temp_dir("manifest");
  fs::create_directories(dir / "sub");
  write_text(dir / "sub" / "pos.labels", "N\nV\n");
  write_text(dir / "sub" / "en.conll", "a\tN\n");
  write_text(dir / "sub" / "de.conll", "b\tV\n");
  write_text(dir / "sub" / "m.txt", "# grid\n@schema pos pos.labels\npos en en.conll\npos de de.conll\n");
  const Manifest m = load_manifest((dir / "sub" / "m.txt").string());
  ASSERT_EQ(m.entries.size(), 2u);
  EXPECT_EQ(fs::path(m.entries[0].corpus_path), dir / "sub" / "en.conll");
  const Grid g = load_grid(m);
  EXPECT_EQ(g.schemas.at("pos").labels, (std::vector<std::string>{"N", "V"}));
  EXPECT_EQ(g.langs(), (std::vector<LangId>{"en", "de"}));
  EXPECT_EQ(g.max_class_count(), 2);
  write_text(dir / "sub" / "dup.txt", "pos en en.conll\npos en de.conll\n");
  EXPECT_THROW(load_manifest((dir / "sub" / "dup.txt").string()), DataError);
}

TEST(Split, SizesFollowFloorRule) {
  auto sizes = [](std::size_t n) {
    const Split s = split_indices(n, 0.8, 0.1, 1);
    return std::array<std::size_t, 3>{s.train.size(), s.dev.size(), s.test.size()};
  };
  EXPECT_EQ(sizes(10), (std::array<std::size_t, 3>{8, 1, 1}));
  EXPECT_EQ(sizes(95), (std::array<std::size_t, 3>{76, 9, 10}));
  EXPECT_THROW(split_indices(9, 0.8, 0.1, 1), DataError);
}

TEST(Split, DisjointCoverAndSeedDependent) {
  const Split a = split_indices(50, 0.8, 0.1, 3), b = split_indices(50, 0.8, 0.1, 3), c = split_indices(50, 0.8, 0.1, 4);
  std::vector<int> all = a.train;
  all.insert(all.end(), a.dev.begin(), a.dev.end());
  all.insert(all.end(), a.test.begin(), a.test.end());
  std::sort(all.begin(), all.end());
  std::vector<int> want(50);
  std::iota(want.begin(), want.end(), 0);
  EXPECT_EQ(all, want);
  EXPECT_EQ(a.train, b.train);
  EXPECT_NE(a.train, c.train);
}

TEST(Partition, TwoByTwoHoldsOutADiagonal) {
  const auto grid = full_grid(2, 2);
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const CellPartition p = partition(grid, 0.5, seed);
    ASSERT_EQ(p.unseen.size(), 2u);
    const Cell& a = *p.unseen.begin();
    const Cell& b = *std::next(p.unseen.begin());
    EXPECT_NE(a.task, b.task);
    EXPECT_NE(a.lang, b.lang);
  }
}

TEST(Partition, SingleTaskIsInfeasible) {
  const auto grid = full_grid(1, 4);
  try {
    partition(grid, 0.5, 1);
    FAIL() << "expected InfeasiblePartition";
  } catch (const InfeasiblePartition& e) {
    EXPECT_FALSE(e.violations().empty());
  }
}

TEST(Partition, EveryUnseenCellIsSupportedAcrossSeeds) {
  const auto grid = full_grid(2, 6);
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    const CellPartition p = partition(grid, 0.5, seed);
    ASSERT_EQ(p.unseen.size(), 6u);
    ASSERT_EQ(p.seen.size() + p.unseen.size(), grid.size());
    ASSERT_TRUE(partition_violations(grid, p.unseen).empty()) << "seed " << seed;
    for (const Cell& u : p.unseen) {
      bool task_ok = false, lang_ok = false;
      for (const Cell& s : p.seen) {
        task_ok |= s.task == u.task;
        lang_ok |= s.lang == u.lang;
      }
      ASSERT_TRUE(task_ok && lang_ok) << u.key() << " seed " << seed;
    }
  }
}

TEST(Partition, FileRoundTrip) {
  const fs::path dir = test::temp_dir("partition_rt");
  Grid g;
  for (const Cell& c : full_grid(2, 3)) {
    Corpus corpus{c, {}, make_schema(c.task, {"A"})};
    for (int i = 0; i < 12; ++i) corpus.sentences.push_back({{"w"}, {"A"}});
    g.corpora.push_back(corpus);
    g.schemas[c.task] = corpus.schema;
  }
  CellPartition p = partition(g.cells(), 1.0 / 3.0, 7);
  assign_splits(p, g, 7);
  EXPECT_EQ(p.splits.size(), p.seen.size());
  write_partition(p, (dir / "p.tsv").string());
  const CellPartition q = load_partition((dir / "p.tsv").string());
  EXPECT_EQ(q.grid, p.grid);
  EXPECT_EQ(q.seen, p.seen);
  EXPECT_EQ(q.unseen, p.unseen);
  for (const auto& [cell, split] : p.splits) {
    EXPECT_EQ(q.splits.at(cell).train, split.train);
    EXPECT_EQ(q.splits.at(cell).dev, split.dev);
    EXPECT_EQ(q.splits.at(cell).test, split.test);
  }
}

TEST(Data, SentenceIds) { EXPECT_EQ(sentence_id({"pos", "en"}, 12), "pos:en:12"); }

}  // namespace
}  // namespace psf
