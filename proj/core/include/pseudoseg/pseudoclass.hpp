#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pseudoseg/grid.hpp"
#include "pseudoseg/random.hpp"
#include "pseudoseg/superpixel.hpp"

namespace pseudoseg {

// Which annotated pixels are removed from candidate pseudo-masks.
enum class ExclusionPolicy {
  TargetOnly,       // only the episode's target class
  AllBaseClasses,   // every base (training) class
  AllBaseAndNovel,  // base classes plus the held-out novel classes
};

std::string to_string(ExclusionPolicy policy);
ExclusionPolicy parse_exclusion_policy(const std::string& name);

struct SamplingStrategy {
  enum class Mode { TopK, UniformAll };

  Mode mode = Mode::TopK;
  int k = 5;

  static SamplingStrategy top_k(int k) { return {Mode::TopK, k}; }
  static SamplingStrategy uniform_all() { return {Mode::UniformAll, 1}; }

  void validate() const;
  friend bool operator==(const SamplingStrategy&, const SamplingStrategy&) = default;
};

std::string to_string(const SamplingStrategy& strategy);
// Accepts "top<k>" (e.g. "top5") or "uniform".
SamplingStrategy parse_sampling_strategy(const std::string& name);

struct ScoredCandidate {
  BinaryMask refined_mask;
  double score = 0.0;
  int region = 0;  // superpixel id the candidate came from
};

struct PseudoClassConfig {
  SuperpixelConfig superpixel;
  ExclusionPolicy policy = ExclusionPolicy::AllBaseClasses;
  SamplingStrategy strategy = SamplingStrategy::top_k(5);
  int min_area = 16;
};

// Default candidate area floor for a given Felzenszwalb min_size.
int default_min_area(int min_size);

struct PseudoEpisode {
  Image image;       // the query image, reused as pseudo support and query
  BinaryMask mask;   // selected refined pseudo-mask
  double score = 0.0;
  int region = 0;
  int region_count = 0;
  int candidate_count = 0;
};

// 1 wherever a pixel must be removed from pseudo-masks under `policy`.
// Throws InvalidArgument for non-positive class ids, overlapping base/novel
// sets, or (TargetOnly) a target class absent from `labels`.
BinaryMask build_exclusion_mask(const LabelMap& labels, std::int32_t target_class,
                                std::span<const std::int32_t> base_classes,
                                std::span<const std::int32_t> novel_classes,
                                ExclusionPolicy policy);

// pseudo * (1 - exclusion).
BinaryMask refine_pseudo_mask(const BinaryMask& pseudo, const BinaryMask& exclusion);

// Mean of f over the masked pixels and all channels. Throws on an empty mask.
double activation_score(const FeatureMap& f, const BinaryMask& m);

// Index of the chosen candidate, or nullopt when there are none.
// TopK picks uniformly among the min(k, n) best scores, ties by lower index.
std::optional<std::size_t> sample_pseudo_class(std::span<const ScoredCandidate> candidates,
                                               const SamplingStrategy& strategy, Rng& rng);

// Refined, area-filtered and scored candidates for one query, in region order.
struct CandidateSet {
  std::vector<ScoredCandidate> candidates;
  int region_count = 0;
};
CandidateSet score_candidates(const Image& query, const BinaryMask& exclusion,
                              const FeatureMap& features, const PseudoClassConfig& config);

// Full pseudo-class pipeline on one query. Returns nullopt when no candidate
// survives exclusion and the area filter.
std::optional<PseudoEpisode> generate_pseudo_episode(
    const Image& query, const LabelMap& labels, std::int32_t target_class,
    std::span<const std::int32_t> base_classes, std::span<const std::int32_t> novel_classes,
    const FeatureMap& features, const PseudoClassConfig& config, Rng& rng);

}  // namespace pseudoseg
