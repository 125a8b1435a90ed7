#include "suites.hpp"

#include <algorithm>
#include <functional>
#include <numeric>

#include "oracles.hpp"
#include "pseudoseg/parallel.hpp"
#include "pseudoseg/pseudoclass.hpp"
#include "pseudoseg/superpixel.hpp"

namespace pseudoseg::testing {

namespace {

// Smooth random blobs plus noise: a few coherent regions, like real images.
Image structured_image(int w, int h, Rng& rng) {
  Image img = random_image(w, h, rng);
  const int blobs = 1 + static_cast<int>(uniform_index(rng, 5));
  for (int b = 0; b < blobs; ++b) {
    const double cx = uniform_real(rng, 0, w), cy = uniform_real(rng, 0, h);
    const double rad = uniform_real(rng, 2, std::max(w, h) / 2.0);
    const double col[3] = {uniform_unit(rng), uniform_unit(rng), uniform_unit(rng)};
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        if ((x - cx) * (x - cx) + (y - cy) * (y - cy) > rad * rad) continue;
        for (int c = 0; c < 3; ++c) img(x, y, c) = 0.85 * col[c] + 0.15 * img(x, y, c);
      }
    }
  }
  return img;
}

std::string where(const char* what, int trial) {
  return std::string(what) + " (trial " + std::to_string(trial) + ")";
}

}  // namespace

std::vector<std::string> superpixel_properties(int trials, std::uint64_t seed) {
  std::vector<std::string> failures;
  Rng rng(seed);
  std::vector<Image> images;
  std::vector<SuperpixelConfig> configs;
  for (int t = 0; t < trials; ++t) {
    const int w = 8 + static_cast<int>(uniform_index(rng, 33));
    const int h = 8 + static_cast<int>(uniform_index(rng, 33));
    images.push_back(structured_image(w, h, rng));
    SuperpixelConfig cfg;
    cfg.algo = static_cast<SuperpixelAlgo>(t % 3);
    cfg.felzenszwalb.scale = uniform_real(rng, 5, 500);
    cfg.felzenszwalb.sigma = uniform_real(rng, 0, 1.5);
    cfg.felzenszwalb.min_size = 1 + static_cast<int>(uniform_index(rng, 120));
    cfg.slic.n_segments = 1 + static_cast<int>(uniform_index(rng, std::min<std::size_t>(60, w * h)));
    cfg.slic.compactness = uniform_real(rng, 1, 40);
    cfg.grid.rows = 1 + static_cast<int>(uniform_index(rng, h));
    cfg.grid.cols = 1 + static_cast<int>(uniform_index(rng, w));
    configs.push_back(cfg);
  }

  std::vector<SuperpixelMap> serial(trials), threaded(trials);
  parallel_for(trials, 1, [&](std::size_t i) { serial[i] = segment(images[i], configs[i]); });
  parallel_for(trials, 4, [&](std::size_t i) { threaded[i] = segment(images[i], configs[i]); });

  for (int t = 0; t < trials; ++t) {
    const SuperpixelMap& sp = serial[t];
    const SuperpixelConfig& cfg = configs[t];
    if (!(sp.region_id == threaded[t].region_id) || sp.num_regions != threaded[t].num_regions) {
      failures.push_back(where("thread count changed the map", t));
    }
    if (!sp.region_id.same_size(images[t])) failures.push_back(where("map size", t));
    // Partition: ids cover exactly 0..n-1, so each pixel has one region.
    std::vector<long> area(sp.num_regions, 0);
    bool in_range = true;
    for (std::size_t i = 0; i < sp.region_id.pixel_count(); ++i) {
      const auto id = sp.region_id[i];
      if (id < 0 || id >= sp.num_regions) {
        in_range = false;
        break;
      }
      ++area[id];
    }
    if (!in_range || std::count(area.begin(), area.end(), 0L) > 0) {
      failures.push_back(where("not a partition", t));
      continue;
    }
    const auto masks = regions_to_masks(sp);
    std::size_t covered = 0;
    for (const auto& m : masks) covered += mask_area(m);
    if (covered != images[t].pixel_count()) failures.push_back(where("masks do not tile", t));

    switch (cfg.algo) {
      case SuperpixelAlgo::Felzenszwalb:
        for (int r = 0; r < sp.num_regions; ++r) {
          if (sp.num_regions > 1 && area[r] < cfg.felzenszwalb.min_size) {
            failures.push_back(where("region below min_size", t));
          }
          if (components_8(sp.region_id, r) != 1) {
            failures.push_back(where("region not 8-connected", t));
          }
        }
        break;
      case SuperpixelAlgo::Slic: {
        for (std::int32_t r = 0; r < sp.num_regions; ++r) {
          if (components_8(sp.region_id, r) != 1) failures.push_back(where("SLIC region not connected", t));
        }
        SlicParams raw = cfg.slic;
        raw.enforce_connectivity = false;
        if (slic(images[t], raw).num_regions > cfg.slic.n_segments) {
          failures.push_back(where("SLIC clusters exceed n_segments", t));
        }
        break;
      }
      case SuperpixelAlgo::Grid:
        if (sp.num_regions != cfg.grid.rows * cfg.grid.cols) failures.push_back(where("grid cell count", t));
        break;
    }
  }
  return failures;
}

std::vector<std::string> pseudoclass_properties(int trials, std::uint64_t seed) {
  std::vector<std::string> failures;
  Rng rng(seed);
  for (int t = 0; t < trials; ++t) {
    const int w = 4 + static_cast<int>(uniform_index(rng, 20));
    const int h = 4 + static_cast<int>(uniform_index(rng, 20));

    BinaryMask pseudo = make_mask(w, h), exclusion = make_mask(w, h);
    for (std::size_t i = 0; i < pseudo.pixel_count(); ++i) {
      pseudo[i] = uniform_unit(rng) < 0.5;
      exclusion[i] = uniform_unit(rng) < 0.3;
    }
    const BinaryMask refined = refine_pseudo_mask(pseudo, exclusion);
    for (std::size_t i = 0; i < refined.pixel_count(); ++i) {
      if (refined[i] && !pseudo[i]) failures.push_back(where("refined not within pseudo", t));
      if (refined[i] && exclusion[i]) failures.push_back(where("refined meets exclusion", t));
      if (pseudo[i] && !exclusion[i] && !refined[i]) failures.push_back(where("refined lost pixels", t));
    }

    const int d = 1 + static_cast<int>(uniform_index(rng, 8));
    FeatureMap f(w, h, d, 0.0);
    for (double& v : f.values()) v = uniform_real(rng, -3, 3);
    BinaryMask m = make_mask(w, h);
    for (std::size_t i = 0; i < m.pixel_count(); ++i) m[i] = uniform_unit(rng) < 0.4;
    m[uniform_index(rng, m.pixel_count())] = 1;
    const double score = activation_score(f, m);
    double lo = 1e300, hi = -1e300;
    for (std::size_t i = 0; i < m.pixel_count(); ++i) {
      if (!m[i]) continue;
      for (double v : f.pixel(i)) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    }
    if (score < lo - 1e-12 || score > hi + 1e-12) failures.push_back(where("score out of bounds", t));
    FeatureMap perturbed = f;
    for (std::size_t i = 0; i < m.pixel_count(); ++i) {
      if (m[i]) continue;
      for (double& v : perturbed.pixel(i)) v += uniform_real(rng, -100, 100);
    }
    if (activation_score(perturbed, m) != score) failures.push_back(where("score saw unmasked pixels", t));

    const int n = 1 + static_cast<int>(uniform_index(rng, 12));
    std::vector<ScoredCandidate> cands(n);
    // Coarse scores so ties are common.
    for (auto& c : cands) c.score = static_cast<double>(uniform_index(rng, 6));
    std::vector<double> sorted;
    for (const auto& c : cands) sorted.push_back(c.score);
    std::sort(sorted.rbegin(), sorted.rend());
    const double kth = sorted[std::min<std::size_t>(5, n) - 1];
    for (int draw = 0; draw < 20; ++draw) {
      const auto pick = sample_pseudo_class(cands, SamplingStrategy::top_k(5), rng);
      if (!pick || cands[*pick].score < kth) failures.push_back(where("TopK(5) picked below the 5th score", t));
    }
  }
  return failures;
}

bool topk_uniformity(int candidates, int k, int draws, std::uint64_t seed) {
  std::vector<ScoredCandidate> cands(candidates);
  for (int i = 0; i < candidates; ++i) cands[i].score = 1.0;
  const int pool = std::min(k, candidates);
  std::vector<long> counts(pool, 0);
  Rng rng(seed);
  for (int i = 0; i < draws; ++i) {
    const auto pick = sample_pseudo_class(cands, SamplingStrategy::top_k(k), rng);
    if (!pick || static_cast<int>(*pick) >= pool) return false;
    ++counts[*pick];
  }
  return within_three_sigma(counts);
}

}  // namespace pseudoseg::testing
