#include "pseudoseg/pseudoclass.hpp"

#include <algorithm>
#include <numeric>

namespace pseudoseg {

std::string to_string(ExclusionPolicy policy) {
  switch (policy) {
    case ExclusionPolicy::TargetOnly: return "target";
    case ExclusionPolicy::AllBaseClasses: return "base";
    case ExclusionPolicy::AllBaseAndNovel: return "base+novel";
  }
  return "unknown";
}

ExclusionPolicy parse_exclusion_policy(const std::string& name) {
  if (name == "target") return ExclusionPolicy::TargetOnly;
  if (name == "base") return ExclusionPolicy::AllBaseClasses;
  if (name == "base+novel") return ExclusionPolicy::AllBaseAndNovel;
  throw InvalidArgument("unknown exclusion policy: " + name +
                        " (expected target, base or base+novel)");
}

void SamplingStrategy::validate() const {
  if (mode == Mode::TopK && k < 1) throw InvalidArgument("top-k sampling needs k >= 1");
}

std::string to_string(const SamplingStrategy& strategy) {
  if (strategy.mode == SamplingStrategy::Mode::UniformAll) return "uniform";
  return "top" + std::to_string(strategy.k);
}

SamplingStrategy parse_sampling_strategy(const std::string& name) {
  if (name == "uniform") return SamplingStrategy::uniform_all();
  if (name.rfind("top", 0) == 0 && name.size() > 3) {
    try {
      std::size_t used = 0;
      const int k = std::stoi(name.substr(3), &used);
      if (used == name.size() - 3) {
        SamplingStrategy s = SamplingStrategy::top_k(k);
        s.validate();
        return s;
      }
    } catch (const std::logic_error&) {
    }
  }
  throw InvalidArgument("unknown sampling strategy: " + name + " (expected top<k> or uniform)");
}

int default_min_area(int min_size) { return std::clamp(min_size / 4, 1, 16); }

BinaryMask build_exclusion_mask(const LabelMap& labels, std::int32_t target_class,
                                std::span<const std::int32_t> base_classes,
                                std::span<const std::int32_t> novel_classes,
                                ExclusionPolicy policy) {
  if (target_class <= 0) throw InvalidArgument("target class id must be positive");
  for (auto c : base_classes) {
    if (c <= 0) throw InvalidArgument("base class ids must be positive");
    if (std::find(novel_classes.begin(), novel_classes.end(), c) != novel_classes.end()) {
      throw InvalidArgument("class " + std::to_string(c) + " is both base and novel");
    }
  }
  for (auto c : novel_classes) {
    if (c <= 0) throw InvalidArgument("novel class ids must be positive");
  }

  std::vector<std::int32_t> excluded;
  switch (policy) {
    case ExclusionPolicy::TargetOnly: {
      const auto values = labels.values();
      if (std::find(values.begin(), values.end(), target_class) == values.end()) {
        throw InvalidArgument("target class " + std::to_string(target_class) +
                              " not present in label map");
      }
      excluded.push_back(target_class);
      break;
    }
    case ExclusionPolicy::AllBaseAndNovel:
      excluded.assign(novel_classes.begin(), novel_classes.end());
      [[fallthrough]];
    case ExclusionPolicy::AllBaseClasses:
      excluded.insert(excluded.end(), base_classes.begin(), base_classes.end());
      break;
  }
  std::sort(excluded.begin(), excluded.end());

  BinaryMask out = make_mask(labels.width(), labels.height());
  for (std::size_t i = 0; i < labels.pixel_count(); ++i) {
    out[i] = std::binary_search(excluded.begin(), excluded.end(), labels[i]) ? 1 : 0;
  }
  return out;
}

BinaryMask refine_pseudo_mask(const BinaryMask& pseudo, const BinaryMask& exclusion) {
  require_same_size(pseudo, exclusion, "refine_pseudo_mask");
  BinaryMask out = make_mask(pseudo.width(), pseudo.height());
  for (std::size_t i = 0; i < pseudo.pixel_count(); ++i) {
    out[i] = static_cast<std::uint8_t>(pseudo[i] * (1 - exclusion[i]));
  }
  return out;
}

double activation_score(const FeatureMap& f, const BinaryMask& m) {
  require_same_size(f, m, "activation_score");
  double sum = 0.0;
  std::size_t area = 0;
  for (std::size_t i = 0; i < m.pixel_count(); ++i) {
    if (!m[i]) continue;
    for (double v : f.pixel(i)) sum += v;
    ++area;
  }
  if (area == 0) throw InvalidArgument("activation_score: empty mask");
  return sum / (static_cast<double>(area) * f.channels());
}

std::optional<std::size_t> sample_pseudo_class(std::span<const ScoredCandidate> candidates,
                                               const SamplingStrategy& strategy, Rng& rng) {
  strategy.validate();
  if (candidates.empty()) return std::nullopt;
  if (strategy.mode == SamplingStrategy::Mode::UniformAll) {
    return uniform_index(rng, candidates.size());
  }
  std::vector<std::size_t> order(candidates.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return candidates[a].score > candidates[b].score;
  });
  const std::size_t pool = std::min<std::size_t>(strategy.k, order.size());
  // Draw within the top set in candidate order, so TopK(k) with n <= k makes
  // exactly the same pick as UniformAll from the same rng state.
  order.resize(pool);
  std::sort(order.begin(), order.end());
  return order[uniform_index(rng, pool)];
}

CandidateSet score_candidates(const Image& query, const BinaryMask& exclusion,
                              const FeatureMap& features, const PseudoClassConfig& config) {
  require_same_size(query, features, "score_candidates");
  const SuperpixelMap sp = segment(query, config.superpixel);
  CandidateSet set;
  set.region_count = sp.num_regions;

  // Region areas after exclusion, without materializing every mask.
  std::vector<std::size_t> area(sp.num_regions, 0);
  for (std::size_t i = 0; i < sp.region_id.pixel_count(); ++i) {
    if (!exclusion[i]) ++area[sp.region_id[i]];
  }
  for (int r = 0; r < sp.num_regions; ++r) {
    if (area[r] == 0 || area[r] < static_cast<std::size_t>(config.min_area)) continue;
    BinaryMask region = make_mask(query.width(), query.height());
    for (std::size_t i = 0; i < region.pixel_count(); ++i) region[i] = sp.region_id[i] == r;
    BinaryMask refined = refine_pseudo_mask(region, exclusion);
    const double score = activation_score(features, refined);
    set.candidates.push_back({std::move(refined), score, r});
  }
  return set;
}

std::optional<PseudoEpisode> generate_pseudo_episode(
    const Image& query, const LabelMap& labels, std::int32_t target_class,
    std::span<const std::int32_t> base_classes, std::span<const std::int32_t> novel_classes,
    const FeatureMap& features, const PseudoClassConfig& config, Rng& rng) {
  require_same_size(query, labels, "generate_pseudo_episode");
  const BinaryMask exclusion =
      build_exclusion_mask(labels, target_class, base_classes, novel_classes, config.policy);
  // The target class is always removed, whatever the policy.
  BinaryMask removed = exclusion;
  for (std::size_t i = 0; i < removed.pixel_count(); ++i) {
    if (labels[i] == target_class) removed[i] = 1;
  }

  CandidateSet set = score_candidates(query, removed, features, config);
  const auto chosen = sample_pseudo_class(set.candidates, config.strategy, rng);
  if (!chosen) return std::nullopt;
  ScoredCandidate& pick = set.candidates[*chosen];
  return PseudoEpisode{query,
                       std::move(pick.refined_mask),
                       pick.score,
                       pick.region,
                       set.region_count,
                       static_cast<int>(set.candidates.size())};
}

}  // namespace pseudoseg
