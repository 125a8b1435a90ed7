#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "pseudoseg/data.hpp"
#include "pseudoseg/grid.hpp"
#include "pseudoseg/model.hpp"

namespace pseudoseg {

// 1 where prob > threshold (ties go to background).
BinaryMask binarize(const ProbMask& pred, double threshold = 0.5);

// |gt & pred| / |gt | pred|, or 1 when both are empty.
double iou(const BinaryMask& gt, const BinaryMask& pred);

struct ClassStats {
  std::uint64_t intersection = 0;
  std::uint64_t union_ = 0;
  double iou = 0.0;
  int episodes = 0;
  friend bool operator==(const ClassStats&, const ClassStats&) = default;
};

struct BucketStats {
  int episodes = 0;
  double mean_iou = 0.0;
  friend bool operator==(const BucketStats&, const BucketStats&) = default;
};

struct EpisodeRecord {
  std::int32_t target_class = 0;
  int num_classes = 0;  // distinct ground-truth classes in the query
  std::uint64_t intersection = 0;
  std::uint64_t union_ = 0;
  friend bool operator==(const EpisodeRecord&, const EpisodeRecord&) = default;
};

struct EvalConfig {
  int fold = 0;
  int shots = 1;
  int episodes = 1000;
  std::uint64_t seed = 0;
  double threshold = 0.5;
  std::string checkpoint;  // echoed into the report only
  friend bool operator==(const EvalConfig&, const EvalConfig&) = default;
};

struct MetricsReport {
  std::map<std::int32_t, ClassStats> per_class;
  double mean_iou = 0.0;
  std::map<int, BucketStats> by_num_classes;
  int episode_count = 0;
  EvalConfig config;
  std::vector<EpisodeRecord> episodes;
  friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

// Per-class IoU from intersections and unions summed over the records, and the
// unweighted mean over classes that occur.
double accumulated_mean_iou(std::span<const EpisodeRecord> records);

// Aggregates per-episode records into a full report (per-class sums, mean,
// by-number-of-classes buckets).
MetricsReport summarize(std::vector<EpisodeRecord> records, const EvalConfig& config);

// Predicts the query foreground probability for an episode.
using Predictor = std::function<ProbMask(const Episode&)>;

// Samples config.episodes novel-split episodes from config.seed, predicts them
// on up to `threads` workers and accumulates per-class intersection/union.
// The report does not depend on the thread count.
MetricsReport evaluate(const Predictor& predictor, const Dataset& dataset, const FoldConfig& fold,
                       const EvalConfig& config, int threads = 1);
MetricsReport evaluate(const ModelParams& params, const Dataset& dataset, const FoldConfig& fold,
                       const EvalConfig& config, int threads = 1);

struct EmbeddingRow {
  std::int32_t class_id = 0;
  std::vector<double> values;
};

// Masked mean of query features over the ground-truth foreground, one row per
// sampled novel episode.
std::vector<EmbeddingRow> dump_embeddings(const ModelParams& params, const Dataset& dataset,
                                          const FoldConfig& fold, int shots, int episodes,
                                          std::uint64_t seed);
void write_embeddings_csv(const std::filesystem::path& path, std::span<const EmbeddingRow> rows);

// Writes <prefix>.json (full report), <prefix>_per_class.csv and
// <prefix>_by_num_classes.csv.
void write_report(const MetricsReport& report, const std::filesystem::path& prefix);
MetricsReport read_report(const std::filesystem::path& json_path);

}  // namespace pseudoseg
