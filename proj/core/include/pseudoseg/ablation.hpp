#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "pseudoseg/data.hpp"
#include "pseudoseg/evaluation.hpp"
#include "pseudoseg/training.hpp"

namespace pseudoseg {

enum class AblationAxis { SuperpixelAlgo, SamplingStrategy, ExclusionPolicy, Alpha, Baseline };

std::string to_string(AblationAxis axis);
AblationAxis parse_ablation_axis(const std::string& name);

// Values swept when none are given on the command line.
std::vector<std::string> default_axis_values(AblationAxis axis);

// The base training config with one axis overridden. Baseline values are
// "baseline" (no self-supervision) and "ss" (self-supervision at the base alpha).
TrainConfig apply_axis_value(const TrainConfig& base, AblationAxis axis,
                             const std::string& value);

struct AblationSpec {
  AblationAxis axis = AblationAxis::Baseline;
  std::vector<std::string> values;
  TrainConfig train;
  EvalConfig eval;  // fold and seed are overridden per cell
  std::vector<std::uint64_t> seeds = {0, 1, 2};

  void validate() const;
};

struct NamedFold {
  int id = 0;
  FoldConfig config;
};

struct AblationCell {
  std::string value;
  int fold = 0;
  std::uint64_t seed = 0;
  std::optional<MetricsReport> report;  // absent when the run failed
  std::string error;
  std::filesystem::path checkpoint;  // empty unless checkpoints were written
};

struct AblationTable {
  AblationAxis axis = AblationAxis::Baseline;
  std::vector<std::string> values;
  std::vector<int> folds;
  std::vector<std::uint64_t> seeds;
  std::vector<AblationCell> cells;  // value-major, then fold, then seed

  const AblationCell& cell(std::size_t value, std::size_t fold, std::size_t seed) const;
  // meanIoU over the seeds of one (value, fold); nullopt if every run failed.
  std::vector<double> fold_scores(std::size_t value, std::size_t fold) const;
};

struct AblationRunOptions {
  std::filesystem::path out_dir;  // when set, checkpoints and reports land here
  int threads = 1;
};

// Trains and evaluates every value x fold x seed. Seeds drive both training and
// evaluation, so cells sharing a seed see identical episode streams.
AblationTable run_ablation(const AblationSpec& spec, const Dataset& dataset,
                           const std::vector<NamedFold>& folds,
                           const AblationRunOptions& options = {});

double mean_of(const std::vector<double>& xs);
double stddev_of(const std::vector<double>& xs);  // sample standard deviation
double median_of(std::vector<double> xs);

void write_ablation_markdown(const AblationTable& table, const std::filesystem::path& path);
void write_ablation_csv(const AblationTable& table, const std::filesystem::path& path);

struct BucketComparison {
  int num_classes = 0;
  std::optional<double> mean_iou_a;
  std::optional<double> mean_iou_b;
  std::optional<double> delta;  // b - a, when both sides have the bucket
};

struct ComparisonTable {
  std::vector<BucketComparison> rows;  // union of both reports' buckets, ascending
  bool buckets_match = true;
};

// Throws InvalidArgument when the reports come from different folds, seeds or
// episode counts.
ComparisonTable compare_by_num_classes(const MetricsReport& a, const MetricsReport& b);

}  // namespace pseudoseg
