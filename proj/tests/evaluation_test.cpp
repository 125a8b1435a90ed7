#include <gtest/gtest.h>

#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "oracles.hpp"
#include "pseudoseg/evaluation.hpp"

using namespace pseudoseg;
using namespace pseudoseg::testing;

namespace {

const Dataset& dataset() {
  static const Dataset ds = synthetic_dataset({80, 8, 32, 4, 21});
  return ds;
}

FoldConfig fold0() { return default_fold(dataset().index.classes, 0); }

EvalConfig eval_config(int episodes, std::uint64_t seed = 3) {
  EvalConfig c;
  c.episodes = episodes;
  c.seed = seed;
  return c;
}

ProbMask as_prob(const BinaryMask& m) {
  ProbMask p(m.width(), m.height(), 1, 0.0);
  for (std::size_t i = 0; i < m.pixel_count(); ++i) p[i] = m[i];
  return p;
}

int count_lines(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::string line;
  int n = 0;
  while (std::getline(in, line)) ++n;
  return n;
}

}  // namespace

TEST(Binarize, ThresholdTiesGoToBackground) {
  const ProbMask p(4, 1, 1, std::vector<double>{0.2, 0.5, 0.50001, 1.0});
  EXPECT_EQ(binarize(p), BinaryMask(4, 1, 1, std::vector<std::uint8_t>{0, 0, 1, 1}));
  EXPECT_EQ(binarize(p, 0.1), make_mask(4, 1, 1));
  EXPECT_THROW(binarize(p, 1.0), InvalidArgument);
}

TEST(Iou, HandCases) {
  const BinaryMask gt(4, 2, 1, std::vector<std::uint8_t>{1, 1, 1, 1, 0, 0, 0, 0});
  const BinaryMask pred(4, 2, 1, std::vector<std::uint8_t>{0, 0, 1, 1, 1, 1, 0, 0});
  EXPECT_DOUBLE_EQ(iou(gt, pred), 2.0 / 6.0);
  EXPECT_EQ(iou(gt, pred), iou(pred, gt));
  EXPECT_EQ(iou(gt, gt), 1.0);
  EXPECT_EQ(iou(gt, invert(gt)), 0.0);
  EXPECT_EQ(iou(make_mask(3, 3), make_mask(3, 3)), 1.0);
  EXPECT_THROW(iou(gt, make_mask(2, 2)), InvalidArgument);
}

TEST(Evaluate, OraclePredictorScoresOne) {
  const Predictor oracle = [](const Episode& ep) { return as_prob(ep.query.mask); };
  const MetricsReport r = evaluate(oracle, dataset(), fold0(), eval_config(200));
  EXPECT_EQ(r.mean_iou, 1.0);
  for (const auto& [cls, c] : r.per_class) EXPECT_EQ(c.iou, 1.0) << cls;
  for (const auto& [n, b] : r.by_num_classes) EXPECT_EQ(b.mean_iou, 1.0) << n;
}

TEST(Evaluate, AllBackgroundScoresZero) {
  const Predictor nothing = [](const Episode& ep) {
    return ProbMask(ep.query.image.width(), ep.query.image.height(), 1, 0.0);
  };
  const MetricsReport r = evaluate(nothing, dataset(), fold0(), eval_config(100));
  EXPECT_EQ(r.mean_iou, 0.0);
  for (const auto& [cls, c] : r.per_class) {
    EXPECT_EQ(c.iou, 0.0);
    EXPECT_EQ(c.intersection, 0u);
    EXPECT_GT(c.union_, 0u);
  }
}

TEST(Evaluate, BookkeepingIsConsistent) {
  const ModelParams params = initialize_model(1, 8, 20.0, 4);
  const MetricsReport r = evaluate(params, dataset(), fold0(), eval_config(150));
  ASSERT_EQ(r.episodes.size(), 150u);
  EXPECT_EQ(r.episode_count, 150);

  // Per-class sums recomputed from the raw records.
  std::map<std::int32_t, std::pair<std::uint64_t, std::uint64_t>> sums;
  for (const auto& e : r.episodes) {
    sums[e.target_class].first += e.intersection;
    sums[e.target_class].second += e.union_;
  }
  ASSERT_EQ(sums.size(), r.per_class.size());
  double mean = 0.0;
  for (const auto& [cls, s] : sums) {
    const ClassStats& c = r.per_class.at(cls);
    EXPECT_EQ(c.intersection, s.first);
    EXPECT_EQ(c.union_, s.second);
    EXPECT_EQ(c.iou, static_cast<double>(s.first) / static_cast<double>(s.second));
    mean += c.iou;
  }
  EXPECT_DOUBLE_EQ(r.mean_iou, mean / static_cast<double>(sums.size()));
  EXPECT_EQ(r.mean_iou, accumulated_mean_iou(r.episodes));

  int bucket_total = 0;
  for (const auto& [n, b] : r.by_num_classes) {
    bucket_total += b.episodes;
    std::vector<EpisodeRecord> subset;
    for (const auto& e : r.episodes) {
      if (e.num_classes == n) subset.push_back(e);
    }
    EXPECT_EQ(b.episodes, static_cast<int>(subset.size()));
    EXPECT_EQ(b.mean_iou, accumulated_mean_iou(subset));
    EXPECT_GE(n, 1);
  }
  EXPECT_EQ(bucket_total, 150);

  int class_total = 0;
  for (const auto& [cls, c] : r.per_class) class_total += c.episodes;
  EXPECT_EQ(class_total, 150);

  // The recorded class count is the number of classes in the query labels.
  Rng rng(derive_seed(3, 3));
  const EpisodeSampler sampler(dataset(), fold0(), Split::Novel, 1);
  for (int i = 0; i < 20; ++i) {
    const Episode ep = sampler.sample(rng);
    EXPECT_EQ(r.episodes[i].target_class, ep.target_class);
    EXPECT_EQ(r.episodes[i].num_classes, count_classes(ep.query_labels));
    const auto pred = binarize(predict(ep.support, ep.query.image, params));
    std::uint64_t inter = 0;
    for (std::size_t p = 0; p < pred.pixel_count(); ++p) inter += pred[p] && ep.query.mask[p];
    EXPECT_EQ(r.episodes[i].intersection, inter);
  }
}

TEST(Evaluate, IndependentOfThreadCount) {
  const ModelParams params = initialize_model(1, 6, 20.0, 9);
  const auto one = evaluate(params, dataset(), fold0(), eval_config(130), 1);
  const auto four = evaluate(params, dataset(), fold0(), eval_config(130), 4);
  EXPECT_EQ(one, four);
  EXPECT_NE(one.episodes, evaluate(params, dataset(), fold0(), eval_config(130, 4), 1).episodes);
}

TEST(Summarize, HandRecords) {
  const std::vector<EpisodeRecord> records = {
      {1, 1, 2, 4}, {1, 2, 1, 4}, {2, 2, 0, 5}, {2, 3, 5, 5}};
  const MetricsReport r = summarize(records, {});
  EXPECT_EQ(r.per_class.at(1).iou, 3.0 / 8.0);
  EXPECT_EQ(r.per_class.at(2).iou, 0.5);
  EXPECT_EQ(r.mean_iou, (3.0 / 8.0 + 0.5) / 2.0);
  EXPECT_EQ(r.by_num_classes.at(1).mean_iou, 0.5);
  EXPECT_EQ(r.by_num_classes.at(2).mean_iou, (0.25 + 0.0) / 2.0);
  EXPECT_EQ(r.by_num_classes.at(3).mean_iou, 1.0);
  EXPECT_EQ(r.by_num_classes.at(2).episodes, 2);
}

TEST(Report, RoundTripAndCsvShapes) {
  const ModelParams params = initialize_model(1, 4, 20.0, 2);
  EvalConfig cfg = eval_config(60);
  cfg.checkpoint = "model.ckpt";
  const MetricsReport r = evaluate(params, dataset(), fold0(), cfg);
  TempDir dir("report");
  write_report(r, dir.path() / "report");
  EXPECT_EQ(read_report(dir.path() / "report.json"), r);
  EXPECT_EQ(count_lines(dir.path() / "report_per_class.csv"), 1 + static_cast<int>(r.per_class.size()));
  EXPECT_EQ(count_lines(dir.path() / "report_by_num_classes.csv"),
            1 + static_cast<int>(r.by_num_classes.size()));
  std::ifstream in(dir.path() / "report.json");
  const auto doc = nlohmann::json::parse(in);
  EXPECT_EQ(doc.at("config").at("checkpoint"), "model.ckpt");
  EXPECT_EQ(doc.at("episodes").size(), 60u);
  EXPECT_THROW(read_report(dir.path() / "missing.json"), DataError);
}

TEST(Embeddings, RowsMatchRecomputation) {
  const ModelParams params = initialize_model(1, 5, 20.0, 6);
  const auto rows = dump_embeddings(params, dataset(), fold0(), 1, 12, 8);
  ASSERT_EQ(rows.size(), 12u);
  Rng rng(derive_seed(8, 3));
  const EpisodeSampler sampler(dataset(), fold0(), Split::Novel, 1);
  for (const auto& row : rows) {
    const Episode ep = sampler.sample(rng);
    EXPECT_EQ(row.class_id, ep.target_class);
    EXPECT_EQ(row.values, masked_mean(extract_features(ep.query.image, params), ep.query.mask));
  }
  TempDir dir("emb");
  write_embeddings_csv(dir.path() / "e.csv", rows);
  EXPECT_EQ(count_lines(dir.path() / "e.csv"), 13);
}
