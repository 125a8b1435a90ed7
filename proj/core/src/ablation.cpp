#include "pseudoseg/ablation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>

#include "pseudoseg/parallel.hpp"

namespace pseudoseg {

namespace fs = std::filesystem;

std::string to_string(AblationAxis axis) {
  switch (axis) {
    case AblationAxis::SuperpixelAlgo: return "superpixel";
    case AblationAxis::SamplingStrategy: return "sampling";
    case AblationAxis::ExclusionPolicy: return "policy";
    case AblationAxis::Alpha: return "alpha";
    case AblationAxis::Baseline: return "baseline";
  }
  return "unknown";
}

AblationAxis parse_ablation_axis(const std::string& name) {
  if (name == "superpixel") return AblationAxis::SuperpixelAlgo;
  if (name == "sampling") return AblationAxis::SamplingStrategy;
  if (name == "policy") return AblationAxis::ExclusionPolicy;
  if (name == "alpha") return AblationAxis::Alpha;
  if (name == "baseline") return AblationAxis::Baseline;
  throw InvalidArgument("unknown ablation axis: " + name +
                        " (expected superpixel, sampling, policy, alpha or baseline)");
}

std::vector<std::string> default_axis_values(AblationAxis axis) {
  switch (axis) {
    case AblationAxis::SuperpixelAlgo: return {"felzenszwalb", "slic", "grid"};
    case AblationAxis::SamplingStrategy: return {"top1", "top5", "uniform"};
    case AblationAxis::ExclusionPolicy: return {"base", "base+novel"};
    case AblationAxis::Alpha: return {"0.1", "0.25", "0.5", "0.75", "1.0"};
    case AblationAxis::Baseline: return {"baseline", "ss"};
  }
  return {};
}

TrainConfig apply_axis_value(const TrainConfig& base, AblationAxis axis,
                             const std::string& value) {
  TrainConfig cfg = base;
  switch (axis) {
    case AblationAxis::SuperpixelAlgo:
      cfg.pseudo.superpixel.algo = parse_superpixel_algo(value);
      break;
    case AblationAxis::SamplingStrategy:
      cfg.pseudo.strategy = parse_sampling_strategy(value);
      break;
    case AblationAxis::ExclusionPolicy:
      cfg.pseudo.policy = parse_exclusion_policy(value);
      break;
    case AblationAxis::Alpha: {
      std::size_t used = 0;
      double alpha = 0.0;
      try {
        alpha = std::stod(value, &used);
      } catch (const std::logic_error&) {
        used = 0;
      }
      if (used != value.size() || !(alpha >= 0.0)) {
        throw InvalidArgument("alpha value must be a non-negative number: " + value);
      }
      cfg.alpha = alpha;
      break;
    }
    case AblationAxis::Baseline:
      if (value == "baseline") {
        cfg.self_supervision = false;
      } else if (value == "ss") {
        cfg.self_supervision = true;
      } else {
        throw InvalidArgument("baseline axis values are 'baseline' and 'ss', got " + value);
      }
      break;
  }
  cfg.validate();
  return cfg;
}

void AblationSpec::validate() const {
  if (values.empty()) throw InvalidArgument("ablation needs at least one value");
  if (seeds.empty()) throw InvalidArgument("ablation needs at least one seed");
  for (const auto& v : values) apply_axis_value(train, axis, v);
}

const AblationCell& AblationTable::cell(std::size_t value, std::size_t fold,
                                        std::size_t seed) const {
  return cells.at((value * folds.size() + fold) * seeds.size() + seed);
}

std::vector<double> AblationTable::fold_scores(std::size_t value, std::size_t fold) const {
  std::vector<double> scores;
  for (std::size_t s = 0; s < seeds.size(); ++s) {
    const AblationCell& c = cell(value, fold, s);
    if (c.report) scores.push_back(c.report->mean_iou);
  }
  return scores;
}

AblationTable run_ablation(const AblationSpec& spec, const Dataset& dataset,
                           const std::vector<NamedFold>& folds,
                           const AblationRunOptions& options) {
  spec.validate();
  if (folds.empty()) throw InvalidArgument("ablation needs at least one fold");
  AblationTable table;
  table.axis = spec.axis;
  table.values = spec.values;
  table.seeds = spec.seeds;
  for (const NamedFold& f : folds) table.folds.push_back(f.id);
  for (const auto& value : spec.values) {
    for (const NamedFold& f : folds) {
      for (auto seed : spec.seeds) table.cells.push_back({value, f.id, seed, {}, {}, {}});
    }
  }
  if (!options.out_dir.empty()) fs::create_directories(options.out_dir);

  parallel_for(table.cells.size(), options.threads, [&](std::size_t i) {
    AblationCell& cell = table.cells[i];
    const std::size_t fold_index = (i / spec.seeds.size()) % folds.size();
    try {
      TrainConfig cfg = apply_axis_value(spec.train, spec.axis, cell.value);
      cfg.seed = cell.seed;
      const TrainResult trained = train(dataset, folds[fold_index].config, cfg);
      EvalConfig eval = spec.eval;
      eval.fold = cell.fold;
      eval.seed = cell.seed;
      eval.shots = spec.eval.shots;
      if (!options.out_dir.empty()) {
        std::string stem = to_string(spec.axis) + "_" + cell.value + "_fold" +
                           std::to_string(cell.fold) + "_seed" + std::to_string(cell.seed);
        std::replace(stem.begin(), stem.end(), '+', '-');
        cell.checkpoint = options.out_dir / (stem + ".ckpt");
        save_checkpoint(cell.checkpoint, trained.params);
        eval.checkpoint = cell.checkpoint.filename().string();
        cell.report = evaluate(trained.params, dataset, folds[fold_index].config, eval, 1);
        write_report(*cell.report, options.out_dir / stem);
      } else {
        cell.report = evaluate(trained.params, dataset, folds[fold_index].config, eval, 1);
      }
    } catch (const std::exception& e) {
      cell.report.reset();
      cell.error = e.what();
    }
  });
  return table;
}

double mean_of(const std::vector<double>& xs) {
  if (xs.empty()) return std::nan("");
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

double stddev_of(const std::vector<double>& xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean_of(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

double median_of(std::vector<double> xs) {
  if (xs.empty()) return std::nan("");
  std::sort(xs.begin(), xs.end());
  const std::size_t n = xs.size();
  return n % 2 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

namespace {

std::string percent_cell(const std::vector<double>& scores) {
  if (scores.empty()) return "n/a";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.1f ± %.1f", 100.0 * mean_of(scores),
                100.0 * stddev_of(scores));
  return buf;
}

// Mean over folds of the per-fold seed means; nullopt if any fold is empty.
std::optional<double> overall_mean(const AblationTable& t, std::size_t v) {
  std::vector<double> per_fold;
  for (std::size_t f = 0; f < t.folds.size(); ++f) {
    const auto scores = t.fold_scores(v, f);
    if (scores.empty()) return std::nullopt;
    per_fold.push_back(mean_of(scores));
  }
  return mean_of(per_fold);
}

}  // namespace

void write_ablation_markdown(const AblationTable& t, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "| " << to_string(t.axis);
  for (int f : t.folds) out << " | fold" << f;
  out << " | mean |\n|---";
  for (std::size_t f = 0; f <= t.folds.size(); ++f) out << "|---";
  out << "|\n";
  for (std::size_t v = 0; v < t.values.size(); ++v) {
    out << "| " << t.values[v];
    for (std::size_t f = 0; f < t.folds.size(); ++f) out << " | " << percent_cell(t.fold_scores(v, f));
    const auto overall = overall_mean(t, v);
    char buf[32];
    if (overall) std::snprintf(buf, sizeof(buf), "%.1f", 100.0 * *overall);
    out << " | " << (overall ? buf : "n/a") << " |\n";
  }
  out << "\nmeanIoU (%) as mean ± stddev over seeds";
  for (auto s : t.seeds) out << ' ' << s;
  out << ".\n";
  for (const AblationCell& c : t.cells) {
    if (!c.report) {
      out << "\nfailed: " << c.value << " fold" << c.fold << " seed" << c.seed << ": " << c.error;
    }
  }
  if (!out) throw DataError("failed writing " + path.string());
}

void write_ablation_csv(const AblationTable& t, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "value,fold,seed,mean_iou,error\n";
  char buf[40];
  for (const AblationCell& c : t.cells) {
    out << c.value << ',' << c.fold << ',' << c.seed << ',';
    if (c.report) {
      std::snprintf(buf, sizeof(buf), "%.17g", c.report->mean_iou);
      out << buf;
    }
    std::string err = c.error;
    std::replace(err.begin(), err.end(), ',', ';');
    std::replace(err.begin(), err.end(), '\n', ' ');
    out << ',' << err << '\n';
  }
  if (!out) throw DataError("failed writing " + path.string());
}

ComparisonTable compare_by_num_classes(const MetricsReport& a, const MetricsReport& b) {
  if (a.config.fold != b.config.fold || a.config.seed != b.config.seed ||
      a.config.episodes != b.config.episodes || a.config.shots != b.config.shots) {
    throw InvalidArgument("compare_by_num_classes: reports differ in fold, seed, shots or episodes");
  }
  ComparisonTable table;
  std::set<int> counts;
  for (const auto& [k, _] : a.by_num_classes) counts.insert(k);
  for (const auto& [k, _] : b.by_num_classes) counts.insert(k);
  for (int k : counts) {
    BucketComparison row;
    row.num_classes = k;
    if (auto it = a.by_num_classes.find(k); it != a.by_num_classes.end()) {
      row.mean_iou_a = it->second.mean_iou;
    }
    if (auto it = b.by_num_classes.find(k); it != b.by_num_classes.end()) {
      row.mean_iou_b = it->second.mean_iou;
    }
    if (row.mean_iou_a && row.mean_iou_b) {
      row.delta = *row.mean_iou_b - *row.mean_iou_a;
    } else {
      table.buckets_match = false;
    }
    table.rows.push_back(row);
  }
  return table;
}

}  // namespace pseudoseg
