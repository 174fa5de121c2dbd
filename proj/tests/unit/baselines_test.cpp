#include <filesystem>
#include <random>

#include <gtest/gtest.h>

#include "psf/baselines.hpp"
#include "psf/error.hpp"
#include "unit/test_util.hpp"

namespace psf {
namespace {

// Sentences labelled by a fixed linear rule plus noise.
std::vector<EncodedSentence> rule_examples(const std::string& prefix, int n, int e, int classes,
                                           std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const Eigen::MatrixXd w = test::random_matrix(rng, e, classes, -2, 2);
  std::vector<EncodedSentence> out;
  for (int i = 0; i < n; ++i) {
    EncodedSentence s;
    s.id = prefix + ":" + std::to_string(i);
    s.embeddings = test::random_matrix(rng, 4, e, -1, 1);
    const Eigen::MatrixXd logits = s.embeddings * w;
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
      Eigen::Index best;
      logits.row(r).maxCoeff(&best);
      s.gold.push_back(static_cast<int>(best));
    }
    out.push_back(s);
  }
  return out;
}

TrainCell make_cell(const std::string& task, const std::string& lang, int classes, int n, std::uint64_t seed) {
  std::vector<std::string> labels;
  for (int i = 0; i < classes; ++i) labels.push_back("c" + std::to_string(i));
  TrainCell c;
  c.cell = {task, lang};
  c.schema = make_schema(task, labels);
  c.train = rule_examples(task + ":" + lang + ":tr", n, 5, classes, seed);
  c.dev = rule_examples(task + ":" + lang + ":dv", n / 4, 5, classes, seed);
  // Same rule for train and dev: regenerate dev with the train weights.
  std::mt19937_64 rng(seed);
  const Eigen::MatrixXd w = test::random_matrix(rng, 5, classes, -2, 2);
  for (auto& s : c.dev) {
    const Eigen::MatrixXd logits = s.embeddings * w;
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
      Eigen::Index best;
      logits.row(r).maxCoeff(&best);
      s.gold[static_cast<std::size_t>(r)] = static_cast<int>(best);
    }
  }
  return c;
}

HeadTrainConfig quick() {
  HeadTrainConfig c;
  c.max_steps = 600;
  c.validation_every = 20;
  c.seed = 3;
  return c;
}

ClassifierMap sized(std::vector<std::pair<std::string, long long>> sources) {
  ClassifierMap m;
  for (const auto& [lang, tokens] : sources) m[{"pos", lang}] = CellClassifier{{"pos", lang}, {}, tokens};
  return m;
}

LangFeatures features(std::map<LangId, Eigen::VectorXd> v) { return LangFeatures{std::move(v)}; }

TEST(TrainHead, LearnsALinearRuleAndIsDeterministic) {
  const TrainCell c = make_cell("pos", "en", 3, 80, 1);
  const HeadFit a = train_head(c.train, c.dev, 5, 4, 3, quick(), "x");
  const HeadFit b = train_head(c.train, c.dev, 5, 4, 3, quick(), "x");
  EXPECT_EQ(a.head.weight, b.head.weight);
  EXPECT_EQ(a.head.bias, b.head.bias);
  const PredictiveReport r = head_predict(a.head, c.cell, c.schema, c.dev);
  EXPECT_GT(r.aggregates.accuracy, 0.8);
  // Masked columns never move from zero.
  EXPECT_EQ(a.head.weight.col(3).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(a.head.bias(3), 0.0);
}

TEST(TrainHead, SingleClassCellIsPerfect) {
  TrainCell c = make_cell("pos", "en", 1, 20, 2);
  const HeadFit fit = train_head(c.train, c.dev, 5, 3, 1, quick(), "y");
  EXPECT_EQ(head_predict(fit.head, c.cell, c.schema, c.train).aggregates.accuracy, 1.0);
}

TEST(TrainHead, RejectsEmptyTraining) {
  EXPECT_THROW(train_head({}, {}, 5, 3, 3, quick(), "z"), DataError);
}

TEST(NearestSource, IdenticalFeaturesWin) {
  const ClassifierMap m = sized({{"de", 1}, {"fr", 1}, {"es", 1}});
  const LangFeatures f = features({{"de", Eigen::Vector2d(1, 0)},
                                   {"fr", Eigen::Vector2d(0.3, 0.7)},
                                   {"es", Eigen::Vector2d(0, 1)},
                                   {"it", Eigen::Vector2d(0.3, 0.7)}});
  EXPECT_EQ(nearest_source(m, f, {"pos", "it"}).lang, "fr");
}

TEST(NearestSource, HigherCosineWinsAndScaleInvariant) {
  const ClassifierMap m = sized({{"a", 1}, {"b", 1}});
  // "a" is orthogonal to the target, "b" sits at cosine 0.5.
  const Eigen::Vector2d target(1, 0);
  const Eigen::Vector2d b(0.5, std::sqrt(3.0) / 2.0);
  LangFeatures f = features({{"a", Eigen::Vector2d(0, 1)}, {"b", b}, {"t", target}});
  EXPECT_EQ(nearest_source(m, f, {"pos", "t"}).lang, "b");
  for (auto& [lang, v] : f.vectors) v *= 3.0;
  EXPECT_EQ(nearest_source(m, f, {"pos", "t"}).lang, "b");
}

TEST(NearestSource, TiesGoToFirstIdAndOtherTasksIgnored) {
  ClassifierMap m = sized({{"zz", 1}, {"aa", 1}});
  m[{"ner", "tt"}] = CellClassifier{{"ner", "tt"}, {}, 1};
  const LangFeatures f = features({{"zz", Eigen::Vector2d(1, 1)},
                                   {"aa", Eigen::Vector2d(2, 2)},
                                   {"tt", Eigen::Vector2d(1, 1)},
                                   {"t", Eigen::Vector2d(1, 1)}});
  EXPECT_EQ(nearest_source(m, f, {"pos", "t"}).lang, "aa");
  EXPECT_THROW(nearest_source(m, f, {"dep", "t"}), DataError);
}

TEST(LargestSource, SelectionRules) {
  EXPECT_EQ(largest_source(sized({{"a", 100}, {"b", 200}, {"c", 150}}), {"pos", "x"}).lang, "b");
  EXPECT_EQ(largest_source(sized({{"b", 100}, {"a", 100}}), {"pos", "x"}).lang, "a");
  EXPECT_EQ(largest_source(sized({{"a", 100}, {"c", 150}}), {"pos", "x"}).lang, "c");
  EXPECT_THROW(largest_source(sized({{"a", 1}}), {"ner", "x"}), DataError);
}

TEST(LangFeatures, Validation) {
  EXPECT_THROW(features({{"a", Eigen::Vector2d(0, 0)}}).validate(), DataError);
  EXPECT_THROW(features({{"a", Eigen::Vector2d(1, 0)}, {"b", Eigen::Vector3d(1, 0, 0)}}).validate(), DataError);
  const auto dir = test::temp_dir("features");
  const LangFeatures f = features({{"a", Eigen::Vector2d(1, 0.25)}, {"b", Eigen::Vector2d(-3, 1e-7)}});
  write_lang_features(f, (dir / "f.txt").string());
  EXPECT_EQ(load_lang_features((dir / "f.txt").string()).at("b"), f.at("b"));
}

TEST(CellClassifiers, OnePerSeenCell) {
  const std::vector<TrainCell> seen{make_cell("pos", "en", 3, 40, 1), make_cell("pos", "de", 3, 60, 1)};
  const ClassifierMap m = train_cell_classifiers(seen, 5, 3, quick());
  ASSERT_EQ(m.size(), 2u);
  EXPECT_EQ(m.at({"pos", "de"}).train_tokens, 240);
  const HeadFit direct = train_head(seen[0].train, seen[0].dev, 5, 3, 3, quick(), cell_stream_tag(seen[0].cell));
  EXPECT_EQ(m.at({"pos", "en"}).head.weight, direct.head.weight);
  // LS picks the larger cell and applies its head.
  const PredictiveReport r = largest_source_predict(m, seen[0].schema, {"pos", "fr"}, seen[0].dev);
  const PredictiveReport want = head_predict(m.at({"pos", "de"}).head, {"pos", "fr"}, seen[0].schema, seen[0].dev);
  EXPECT_EQ(r.aggregates.accuracy, want.aggregates.accuracy);
}

TEST(JointMultilingual, SingleLanguageMatchesCellClassifierOnSameSeedPath) {
  const TrainCell c = make_cell("pos", "en", 3, 40, 4);
  const auto heads = joint_multilingual({c}, 5, 3, quick());
  const ClassifierMap cells = train_cell_classifiers({c}, 5, 3, quick());
  const HeadParams& cell = cells.at(c.cell).head;
  EXPECT_EQ(joint_stream_tag("pos", {"en"}), cell_stream_tag(c.cell));
  EXPECT_EQ(heads.at("pos").weight, cell.weight);
  const double a = head_predict(heads.at("pos"), c.cell, c.schema, c.dev).aggregates.accuracy;
  const double b = head_predict(cell, c.cell, c.schema, c.dev).aggregates.accuracy;
  EXPECT_NEAR(a, b, 1e-9);
}

TEST(JointMultilingual, TrainsOnTheUnionOfSeenCells) {
  const TrainCell en = make_cell("pos", "en", 3, 40, 5), de = make_cell("pos", "de", 3, 24, 6);
  const TrainCell ner = make_cell("ner", "en", 2, 20, 7);
  const auto heads = joint_multilingual({en, ner, de}, 5, 3, quick());
  ASSERT_EQ(heads.size(), 2u);
  std::vector<EncodedSentence> train = en.train, dev = en.dev;
  train.insert(train.end(), de.train.begin(), de.train.end());
  dev.insert(dev.end(), de.dev.begin(), de.dev.end());
  EXPECT_EQ(train.size(), en.train.size() + de.train.size());
  const HeadFit u = train_head(train, dev, 5, 3, 3, quick(), joint_stream_tag("pos", {"en", "de"}));
  EXPECT_EQ(heads.at("pos").weight, u.head.weight);
  EXPECT_THROW(joint_predict(heads, en.schema, {"dep", "en"}, en.dev), DataError);
}

}  // namespace
}  // namespace psf
