#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <fstream>

#include "oracles.hpp"
#include "pseudoseg/model.hpp"

using namespace pseudoseg;
using namespace pseudoseg::testing;

namespace {

ModelParams zero_model(int r, int d, double bias) {
  ModelParams p = initialize_model(r, d, 20.0, 0);
  std::fill(p.weights.begin(), p.weights.end(), 0.0);
  std::fill(p.bias.begin(), p.bias.end(), bias);
  return p;
}

FeatureMap random_features(int w, int h, int d, Rng& rng) {
  FeatureMap f(w, h, d, 0.0);
  for (double& v : f.values()) v = uniform_real(rng, 0.01, 2.0);
  return f;
}

}  // namespace

TEST(Extractor, ZeroWeightsGiveSoftplusOfBias) {
  Rng rng(1);
  const auto f = extract_features(random_image(6, 5, rng), zero_model(2, 4, 0.7));
  for (double v : f.values()) EXPECT_EQ(v, softplus(0.7));
}

TEST(Extractor, IdentityWeightsOnWhitePixel) {
  ModelParams p = zero_model(0, 3, 0.0);
  for (int c = 0; c < 3; ++c) p.weights[c * 3 + c] = 1.0;
  const auto f = extract_features(flat_image(1, 1, 1, 1, 1), p);
  for (double v : f.values()) EXPECT_NEAR(v, 1.3133, 1e-4);
  EXPECT_NEAR(softplus(1.0), std::log1p(std::exp(1.0)), 1e-15);
}

TEST(Extractor, TranslationCovariance) {
  Rng rng(2);
  const ModelParams p = initialize_model(1, 5, 20.0, 3);
  Image img = make_image(12, 10);
  for (int y = 2; y < 8; ++y) {
    for (int x = 2; x < 8; ++x) {
      for (int c = 0; c < 3; ++c) img(x, y, c) = uniform_unit(rng);
    }
  }
  Image shifted = make_image(12, 10);
  for (int y = 0; y < 10; ++y) {
    for (int x = 0; x + 2 < 12; ++x) {
      for (int c = 0; c < 3; ++c) shifted(x + 2, y, c) = img(x, y, c);
    }
  }
  const auto f = extract_features(img, p);
  const auto g = extract_features(shifted, p);
  for (int y = 1; y < 9; ++y) {
    for (int x = 1; x < 9; ++x) {
      for (int z = 0; z < 5; ++z) EXPECT_DOUBLE_EQ(f(x, y, z), g(x + 2, y, z));
    }
  }
}

TEST(Extractor, MatchesPatchDotProduct) {
  Rng rng(3);
  const ModelParams p = initialize_model(2, 6, 20.0, 4);
  const Image img = random_image(7, 6, rng);
  const auto pre = extract_preactivations(img, p);
  std::vector<double> patch(p.patch_size());
  for (int y = 0; y < 6; ++y) {
    for (int x = 0; x < 7; ++x) {
      gather_patch(img, 2, x, y, patch);
      for (int z = 0; z < 6; ++z) {
        double acc = p.bias[z];
        for (int j = 0; j < p.patch_size(); ++j) acc += p.weights[z * p.patch_size() + j] * patch[j];
        EXPECT_NEAR(pre(x, y, z), acc, 1e-12);
      }
    }
  }
}

TEST(Prototypes, ConstantField) {
  FeatureMap f(4, 4, 3, 1.5);
  BinaryMask m = make_mask(4, 4);
  m(0, 0) = m(2, 3) = 1;
  const auto pair = make_prototypes(f, m);
  EXPECT_EQ(pair.fg.values, std::vector<double>(3, 1.5));
  EXPECT_EQ(pair.bg.values, std::vector<double>(3, 1.5));
}

TEST(Prototypes, SeparatesForegroundAndBackground) {
  FeatureMap f(3, 2, 2, 0.0);
  BinaryMask m = make_mask(3, 2);
  for (std::size_t i = 0; i < 6; ++i) {
    m[i] = i % 2;
    f.pixel(i)[0] = m[i] ? 4.0 : 1.0;
    f.pixel(i)[1] = m[i] ? -2.0 : 3.0;
  }
  const auto pair = make_prototypes(f, m);
  EXPECT_EQ(pair.fg.values, (std::vector<double>{4.0, -2.0}));
  EXPECT_EQ(pair.bg.values, (std::vector<double>{1.0, 3.0}));
}

TEST(Prototypes, CheckerboardMatchesDirectSum) {
  Rng rng(4);
  const FeatureMap f = random_features(3, 3, 4, rng);
  BinaryMask m = make_mask(3, 3);
  for (int y = 0; y < 3; ++y) {
    for (int x = 0; x < 3; ++x) m(x, y) = (x + y) % 2;
  }
  const auto pair = make_prototypes(f, m);
  for (int z = 0; z < 4; ++z) {
    double fg = 0, bg = 0;
    for (int y = 0; y < 3; ++y) {
      for (int x = 0; x < 3; ++x) ((x + y) % 2 ? fg : bg) += f(x, y, z);
    }
    EXPECT_NEAR(pair.fg.values[z], fg / 4.0, 1e-12);
    EXPECT_NEAR(pair.bg.values[z], bg / 5.0, 1e-12);
  }
}

TEST(Prototypes, DegenerateMasksThrow) {
  const FeatureMap f(3, 3, 2, 1.0);
  EXPECT_THROW(make_prototypes(f, make_mask(3, 3)), DegenerateSupport);
  EXPECT_THROW(make_prototypes(f, make_mask(3, 3, 1)), DegenerateSupport);
}

TEST(MergePrototypes, IdenticalCopiesAreExact) {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    Prototype v;
    for (int z = 0; z < 7; ++z) v.values.push_back(uniform_real(rng, -10, 10));
    for (int k = 1; k <= 6; ++k) {
      EXPECT_EQ(merge_prototypes(std::vector<Prototype>(k, v)), v);
    }
  }
}

TEST(MergePrototypes, HandCaseAndSummationOracle) {
  EXPECT_EQ(merge_prototypes(std::vector<Prototype>{{{0, 0}}, {{2, 4}}}).values,
            (std::vector<double>{1, 2}));
  Rng rng(6);
  std::vector<Prototype> ps(5);
  for (auto& p : ps) {
    for (int z = 0; z < 4; ++z) p.values.push_back(uniform_real(rng, -1, 1));
  }
  const auto mean = merge_prototypes(ps);
  for (int z = 0; z < 4; ++z) {
    double s = 0;
    for (const auto& p : ps) s += p.values[z];
    EXPECT_NEAR(mean.values[z], s / 5.0, 1e-12);
  }
}

TEST(MergePrototypes, PermutationInvariant) {
  Rng rng(7);
  std::vector<Prototype> ps(5);
  for (auto& p : ps) {
    for (int z = 0; z < 3; ++z) p.values.push_back(uniform_real(rng, -1, 1));
  }
  const auto reference = merge_prototypes(ps);
  std::sort(ps.begin(), ps.end(), [](const auto& a, const auto& b) { return a.values > b.values; });
  do {
    EXPECT_EQ(merge_prototypes(ps), reference);
  } while (std::next_permutation(ps.begin(), ps.end(),
                                 [](const auto& a, const auto& b) { return a.values > b.values; }));
}

TEST(MergePrototypes, RejectsEmptyAndMismatched) {
  EXPECT_THROW(merge_prototypes({}), InvalidArgument);
  EXPECT_THROW(merge_prototypes(std::vector<Prototype>{{{1.0}}, {{1.0, 2.0}}}), InvalidArgument);
}

TEST(CosineCompare, AlignedWithForegroundOrthogonalBackground) {
  const Prototype fg{{1, 0, 0}}, bg{{0, 1, 0}};
  const FeatureMap f(2, 2, 3, std::vector<double>{1, 0, 0, 1, 0, 0, 1, 0, 0, 1, 0, 0});
  const auto p = cosine_compare(f, fg, bg, 20.0);
  for (double v : p.values()) {
    EXPECT_GT(v, 1.0 - 1e-8);
    EXPECT_NEAR(v, std::exp(20.0) / (std::exp(20.0) + 1.0), 1e-12);
  }
}

TEST(CosineCompare, EqualPrototypesGiveHalf) {
  Rng rng(8);
  const auto f = random_features(5, 4, 3, rng);
  const Prototype proto{{0.3, 0.2, 0.9}};
  const ProbMask p = cosine_compare(f, proto, proto, 20.0);
  for (double v : p.values()) EXPECT_EQ(v, 0.5);
}

TEST(CosineCompare, ApproachesHalfAsTemperatureShrinks) {
  const Prototype fg{{1, 0.2}}, bg{{0.1, 1}};
  const FeatureMap f(1, 1, 2, std::vector<double>{0.9, 0.3});
  double previous = 1.0;
  for (double t : {20.0, 5.0, 1.0, 0.1, 0.01}) {
    const double p = cosine_compare(f, fg, bg, t)[0];
    EXPECT_GT(p, 0.5);
    EXPECT_LT(p, previous);
    previous = p;
  }
  EXPECT_NEAR(previous, 0.5, 1e-2);
  EXPECT_THROW(cosine_compare(f, fg, bg, 0.0), InvalidArgument);
}

TEST(CosineCompare, ScaleInvariant) {
  Rng rng(9);
  const auto f = random_features(6, 6, 4, rng);
  const Prototype fg{{0.5, 1.0, 0.1, 0.7}}, bg{{1.1, 0.2, 0.6, 0.3}};
  const auto base = cosine_compare(f, fg, bg, 20.0);
  for (double s : {0.5, 3.0, 17.0}) {
    FeatureMap g = f;
    for (double& v : g.values()) v *= s;
    Prototype sfg = fg, sbg = bg;
    for (double& v : sfg.values) v *= s;
    for (double& v : sbg.values) v *= s;
    const auto scaled = cosine_compare(g, sfg, sbg, 20.0);
    // Exact up to the epsilon in the cosine denominator.
    for (std::size_t i = 0; i < base.pixel_count(); ++i) EXPECT_NEAR(scaled[i], base[i], 1e-6);
  }
}

TEST(CosineCompare, TwoWayProbabilitiesSumToOne) {
  Rng rng(10);
  const auto f = random_features(8, 8, 3, rng);
  const auto p = cosine_compare(f, Prototype{{1, 2, 3}}, Prototype{{3, 1, 0.5}}, 20.0);
  for (double v : p.values()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
    EXPECT_EQ(v + (1.0 - v), 1.0);
  }
}

TEST(CosineCompare, RejectsZeroPrototypes) {
  const FeatureMap f(1, 1, 2, 1.0);
  EXPECT_THROW(cosine_compare(f, Prototype{{0, 0}}, Prototype{{1, 0}}, 20.0), InvalidArgument);
}

TEST(Predict, FiveIdenticalSupportsEqualOneShot) {
  Rng rng(11);
  const ModelParams p = initialize_model(2, 8, 20.0, 12);
  const Image img = random_image(16, 12, rng);
  BinaryMask m = make_mask(16, 12);
  for (int y = 3; y < 9; ++y) {
    for (int x = 4; x < 11; ++x) m(x, y) = 1;
  }
  const Image query = random_image(16, 12, rng);
  const std::vector<SupportExample> one = {{img, m}};
  const std::vector<SupportExample> five(5, SupportExample{img, m});
  const ProbMask a = predict(one, query, p);
  const ProbMask b = predict(five, query, p);
  EXPECT_EQ(a, b);
  EXPECT_TRUE(a.same_size(query));
  for (double v : a.values()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(Checkpoint, RoundTripAndFormat) {
  TempDir dir("ckpt");
  const ModelParams p = initialize_model(1, 3, 12.5, 77);
  save_checkpoint(dir.path() / "m.ckpt", p);
  EXPECT_EQ(load_checkpoint(dir.path() / "m.ckpt"), p);
  const std::string bytes = serialize_checkpoint(p);
  const auto nl = bytes.find('\n');
  EXPECT_EQ(bytes.substr(0, nl),
            R"({"patch_radius":1,"embed_dim":3,"temperature":12.5,"seed":77,"version":1})");
  EXPECT_EQ(bytes.size() - nl - 1, 8 * (3 * 27 + 3));
}

TEST(Checkpoint, CorruptionIsDataError) {
  const std::string bytes = serialize_checkpoint(initialize_model(1, 3, 20.0, 1));
  EXPECT_THROW(deserialize_checkpoint(bytes.substr(0, bytes.size() - 8)), DataError);
  EXPECT_THROW(deserialize_checkpoint("not json\n"), DataError);
  EXPECT_THROW(deserialize_checkpoint("no newline"), DataError);
  EXPECT_THROW(load_checkpoint("/nonexistent/model.ckpt"), DataError);
}

TEST(ModelParams, Validation) {
  ModelParams p = initialize_model(1, 2, 20.0, 0);
  p.weights.pop_back();
  EXPECT_THROW(p.validate(), InvalidArgument);
  EXPECT_THROW(initialize_model(-1, 2, 20.0, 0), InvalidArgument);
  EXPECT_EQ(initialize_model(2, 4, 20.0, 9), initialize_model(2, 4, 20.0, 9));
  const ModelParams q = initialize_model(2, 4, 20.0, 9);
  const double bound = 1.0 / std::sqrt(75.0);
  for (double w : q.weights) EXPECT_LE(std::abs(w), bound);
}
