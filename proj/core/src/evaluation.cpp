#include "pseudoseg/evaluation.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "pseudoseg/parallel.hpp"
#include "pseudoseg/random.hpp"

namespace pseudoseg {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

BinaryMask binarize(const ProbMask& pred, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) throw InvalidArgument("threshold must be in (0, 1)");
  BinaryMask out = make_mask(pred.width(), pred.height());
  for (std::size_t i = 0; i < pred.pixel_count(); ++i) out[i] = pred[i] > threshold ? 1 : 0;
  return out;
}

namespace {

std::pair<std::uint64_t, std::uint64_t> overlap(const BinaryMask& gt, const BinaryMask& pred) {
  require_same_size(gt, pred, "iou");
  std::uint64_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < gt.pixel_count(); ++i) {
    inter += gt[i] && pred[i];
    uni += gt[i] || pred[i];
  }
  return {inter, uni};
}

double ratio(std::uint64_t inter, std::uint64_t uni) {
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace

double iou(const BinaryMask& gt, const BinaryMask& pred) {
  const auto [inter, uni] = overlap(gt, pred);
  return ratio(inter, uni);
}

double accumulated_mean_iou(std::span<const EpisodeRecord> records) {
  std::map<std::int32_t, std::pair<std::uint64_t, std::uint64_t>> sums;
  for (const EpisodeRecord& r : records) {
    auto& s = sums[r.target_class];
    s.first += r.intersection;
    s.second += r.union_;
  }
  if (sums.empty()) return 0.0;
  double total = 0.0;
  for (const auto& [cls, s] : sums) total += ratio(s.first, s.second);
  return total / static_cast<double>(sums.size());
}

MetricsReport summarize(std::vector<EpisodeRecord> records, const EvalConfig& config) {
  MetricsReport report;
  report.config = config;
  report.episode_count = static_cast<int>(records.size());
  for (const EpisodeRecord& r : records) {
    ClassStats& c = report.per_class[r.target_class];
    c.intersection += r.intersection;
    c.union_ += r.union_;
    ++c.episodes;
  }
  double total = 0.0;
  for (auto& [cls, c] : report.per_class) {
    c.iou = ratio(c.intersection, c.union_);
    total += c.iou;
  }
  report.mean_iou = report.per_class.empty() ? 0.0 : total / report.per_class.size();

  std::map<int, std::vector<EpisodeRecord>> buckets;
  for (const EpisodeRecord& r : records) buckets[r.num_classes].push_back(r);
  for (const auto& [count, rs] : buckets) {
    report.by_num_classes[count] = {static_cast<int>(rs.size()), accumulated_mean_iou(rs)};
  }
  report.episodes = std::move(records);
  return report;
}

MetricsReport evaluate(const Predictor& predictor, const Dataset& dataset, const FoldConfig& fold,
                       const EvalConfig& config, int threads) {
  if (config.episodes < 0) throw InvalidArgument("episode count must be >= 0");
  const EpisodeSampler sampler(dataset, fold, Split::Novel, config.shots);
  // Episodes are drawn sequentially so the stream is thread-independent.
  Rng rng(derive_seed(config.seed, 3));
  // Batches keep memory bounded; each batch is predicted in parallel.
  constexpr std::size_t kBatch = 64;
  const auto total = static_cast<std::size_t>(config.episodes);
  std::vector<EpisodeRecord> records(total);
  std::vector<Episode> batch;
  for (std::size_t start = 0; start < total; start += kBatch) {
    batch.clear();
    for (std::size_t e = start; e < std::min(total, start + kBatch); ++e) {
      batch.push_back(sampler.sample(rng));
    }
    parallel_for(batch.size(), threads, [&](std::size_t i) {
      const Episode& ep = batch[i];
      const BinaryMask pred = binarize(predictor(ep), config.threshold);
      const auto [inter, uni] = overlap(ep.query.mask, pred);
      records[start + i] = {ep.target_class, count_classes(ep.query_labels), inter, uni};
    });
  }
  return summarize(std::move(records), config);
}

MetricsReport evaluate(const ModelParams& params, const Dataset& dataset, const FoldConfig& fold,
                       const EvalConfig& config, int threads) {
  params.validate();
  return evaluate(
      [&params](const Episode& ep) { return predict(ep.support, ep.query.image, params); },
      dataset, fold, config, threads);
}

std::vector<EmbeddingRow> dump_embeddings(const ModelParams& params, const Dataset& dataset,
                                          const FoldConfig& fold, int shots, int episodes,
                                          std::uint64_t seed) {
  params.validate();
  const EpisodeSampler sampler(dataset, fold, Split::Novel, shots);
  Rng rng(derive_seed(seed, 3));
  std::vector<EmbeddingRow> rows;
  rows.reserve(episodes);
  for (int e = 0; e < episodes; ++e) {
    const Episode ep = sampler.sample(rng);
    rows.push_back(
        {ep.target_class, masked_mean(extract_features(ep.query.image, params), ep.query.mask)});
  }
  return rows;
}

void write_embeddings_csv(const fs::path& path, std::span<const EmbeddingRow> rows) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  const std::size_t d = rows.empty() ? 0 : rows.front().values.size();
  out << "class_id";
  for (std::size_t z = 0; z < d; ++z) out << ",f" << z;
  out << '\n';
  char buf[40];
  for (const EmbeddingRow& r : rows) {
    out << r.class_id;
    for (double v : r.values) {
      std::snprintf(buf, sizeof(buf), ",%.17g", v);
      out << buf;
    }
    out << '\n';
  }
  if (!out) throw DataError("failed writing " + path.string());
}

namespace {

ordered_json config_json(const EvalConfig& c) {
  ordered_json j;
  j["fold"] = c.fold;
  j["shots"] = c.shots;
  j["episodes"] = c.episodes;
  j["seed"] = c.seed;
  j["threshold"] = c.threshold;
  j["checkpoint"] = c.checkpoint;
  return j;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void write_report(const MetricsReport& report, const fs::path& prefix) {
  ordered_json doc;
  doc["mean_iou"] = report.mean_iou;
  doc["episode_count"] = report.episode_count;
  doc["config"] = config_json(report.config);
  ordered_json per_class = ordered_json::array();
  for (const auto& [cls, c] : report.per_class) {
    ordered_json row;
    row["class_id"] = cls;
    row["intersection"] = c.intersection;
    row["union"] = c.union_;
    row["iou"] = c.iou;
    row["episodes"] = c.episodes;
    per_class.push_back(std::move(row));
  }
  doc["per_class"] = std::move(per_class);
  ordered_json buckets = ordered_json::array();
  for (const auto& [count, b] : report.by_num_classes) {
    ordered_json row;
    row["num_classes"] = count;
    row["episodes"] = b.episodes;
    row["mean_iou"] = b.mean_iou;
    buckets.push_back(std::move(row));
  }
  doc["by_num_classes"] = std::move(buckets);
  ordered_json episodes = ordered_json::array();
  for (const EpisodeRecord& r : report.episodes) {
    episodes.push_back({r.target_class, r.num_classes, r.intersection, r.union_});
  }
  doc["episodes"] = std::move(episodes);

  auto open = [](const fs::path& p) {
    std::ofstream out(p);
    if (!out) throw DataError("cannot write " + p.string());
    return out;
  };
  {
    auto out = open(fs::path(prefix.string() + ".json"));
    out << doc.dump(2) << '\n';
    if (!out) throw DataError("failed writing report JSON");
  }
  {
    auto out = open(fs::path(prefix.string() + "_per_class.csv"));
    out << "class_id,intersection,union,iou,episodes\n";
    for (const auto& [cls, c] : report.per_class) {
      out << cls << ',' << c.intersection << ',' << c.union_ << ',' << fmt(c.iou) << ','
          << c.episodes << '\n';
    }
    if (!out) throw DataError("failed writing per-class CSV");
  }
  {
    auto out = open(fs::path(prefix.string() + "_by_num_classes.csv"));
    out << "num_classes,episodes,mean_iou\n";
    for (const auto& [count, b] : report.by_num_classes) {
      out << count << ',' << b.episodes << ',' << fmt(b.mean_iou) << '\n';
    }
    if (!out) throw DataError("failed writing by-num-classes CSV");
  }
}

MetricsReport read_report(const fs::path& json_path) {
  std::ifstream in(json_path);
  if (!in) throw DataError("cannot open report " + json_path.string());
  MetricsReport report;
  try {
    const json doc = json::parse(in);
    report.mean_iou = doc.at("mean_iou").get<double>();
    report.episode_count = doc.at("episode_count").get<int>();
    const json& c = doc.at("config");
    report.config.fold = c.at("fold").get<int>();
    report.config.shots = c.at("shots").get<int>();
    report.config.episodes = c.at("episodes").get<int>();
    report.config.seed = c.at("seed").get<std::uint64_t>();
    report.config.threshold = c.at("threshold").get<double>();
    report.config.checkpoint = c.at("checkpoint").get<std::string>();
    for (const json& row : doc.at("per_class")) {
      report.per_class[row.at("class_id").get<std::int32_t>()] = {
          row.at("intersection").get<std::uint64_t>(), row.at("union").get<std::uint64_t>(),
          row.at("iou").get<double>(), row.at("episodes").get<int>()};
    }
    for (const json& row : doc.at("by_num_classes")) {
      report.by_num_classes[row.at("num_classes").get<int>()] = {
          row.at("episodes").get<int>(), row.at("mean_iou").get<double>()};
    }
    for (const json& row : doc.at("episodes")) {
      report.episodes.push_back({row.at(0).get<std::int32_t>(), row.at(1).get<int>(),
                                 row.at(2).get<std::uint64_t>(), row.at(3).get<std::uint64_t>()});
    }
  } catch (const json::exception& e) {
    throw DataError(json_path.string() + ": " + e.what());
  }
  return report;
}

}  // namespace pseudoseg
